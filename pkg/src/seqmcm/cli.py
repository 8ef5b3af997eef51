"""Command-line front end.

Subcommands::

    seqmcm mcm      solve one maximum-confidence problem, report weights + KKT
    seqmcm sequence run a sequential chain, emit trace JSON + per-party CSV
    seqmcm sweep    evaluate oracle-vs-engine residuals over a parameter grid
    seqmcm verify   run randomized invariant suites, machine-readable report
    seqmcm family   print a family's closed-form values

Ensembles come either from ``--ensemble file.json`` or from
``--family NAME --params JSON``.  Family parameters are radians; a string
value with a ``deg`` suffix (``{"theta": "120deg"}``) is converted.

Exit codes: 0 success; 1 verification failure; 2 malformed input;
3 KKT check failure; 4 infeasible strategy (message names the party).

Outputs are deterministic for a fixed command line + seed: dictionaries
are serialized with sorted keys and floats with ``repr`` precision, so
reruns are byte-identical.  ``SEQMCM_THREADS`` caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import families as fam_mod
from . import mcm as mcm_mod
from . import optim as optim_mod
from . import qcore
from . import seqchan
from .qcore import Ensemble, FeasibilityError

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_INPUT = 2
EXIT_KKT = 3
EXIT_INFEASIBLE = 4

GRID_CAP = 100_000


class CliError(Exception):
    """Carries the exit code for a user-facing failure."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# input parsing
# ---------------------------------------------------------------------------


def _parse_angle(value: Any, name: str) -> float:
    """Radians by default; strings like '120deg' are degrees."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text.endswith("deg"):
            try:
                return math.radians(float(text[:-3]))
            except ValueError:
                raise CliError(EXIT_INPUT, f"cannot parse angle {value!r} for {name}")
        try:
            return float(text)
        except ValueError:
            raise CliError(EXIT_INPUT, f"cannot parse {value!r} for {name}")
    if isinstance(value, (int, float)):
        return float(value)
    raise CliError(EXIT_INPUT, f"cannot parse {value!r} for {name}")


def _parse_params(text: str | None) -> dict[str, Any]:
    if not text:
        return {}
    try:
        params = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, f"--params is not valid JSON: {exc}")
    if not isinstance(params, dict):
        raise CliError(EXIT_INPUT, "--params must be a JSON object")
    return params


def _parse_rates(text: str | None, parties: int) -> list[float]:
    """Comma-separated per-party rates; one value broadcasts to all."""
    if text is None:
        raise CliError(EXIT_INPUT, "this command needs --eta0 (per-party rates)")
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise CliError(EXIT_INPUT, f"cannot parse --eta0 {text!r}")
    if not values:
        raise CliError(EXIT_INPUT, "--eta0 is empty")
    if len(values) == 1:
        values = values * parties
    if len(values) != parties:
        raise CliError(
            EXIT_INPUT,
            f"--eta0 lists {len(values)} rates but --parties is {parties}",
        )
    for v in values:
        if not (0.0 <= v <= 1.0):
            raise CliError(EXIT_INPUT, f"inconclusive rate {v!r} outside [0, 1]")
    return values


FAMILY_NAMES = ("two_mixed", "gu", "lifted_gu", "mirror")


def _build_family(name: str, params: dict[str, Any]):
    try:
        if name == "two_mixed":
            return fam_mod.two_mixed(
                p=float(params.get("p", 1.0)),
                theta=_parse_angle(params.get("theta", math.pi / 2), "theta"),
            )
        if name == "gu":
            return fam_mod.gu(n=int(params.get("n", params.get("N", 3))))
        if name == "lifted_gu":
            lam = params.get("lam", params.get("lambda", 1.0))
            return fam_mod.lifted_gu(
                n=int(params.get("n", params.get("N", 3))),
                theta=_parse_angle(params.get("theta", math.pi / 2), "theta"),
                lam=float(lam),
            )
        if name == "mirror":
            return fam_mod.mirror(
                theta=_parse_angle(params.get("theta", 2 * math.pi / 3), "theta")
            )
    except (ValueError, TypeError) as exc:
        raise CliError(EXIT_INPUT, f"bad parameters for family {name}: {exc}")
    raise CliError(
        EXIT_INPUT, f"unknown family {name!r}; choose one of {', '.join(FAMILY_NAMES)}"
    )


def _load_source(args: argparse.Namespace) -> tuple[Ensemble, Any]:
    """Resolve (ensemble, family-or-None) from --ensemble/--family."""
    if args.ensemble and args.family:
        raise CliError(EXIT_INPUT, "give either --ensemble or --family, not both")
    if args.ensemble:
        try:
            return qcore.load_ensemble(args.ensemble), None
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CliError(EXIT_INPUT, f"cannot load ensemble {args.ensemble}: {exc}")
    if args.family:
        fam = _build_family(args.family, _parse_params(args.params))
        return fam.ensemble(), fam
    raise CliError(EXIT_INPUT, "an ensemble source is required: --ensemble or --family")


def _thread_count() -> int:
    raw = os.environ.get("SEQMCM_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise CliError(EXIT_INPUT, f"SEQMCM_THREADS={raw!r} is not an integer")
    return min(8, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(out_dir: str | None, name: str, text: str, quiet_path: bool = False) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        target = path / name
        target.write_text(text)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot write {name} under {out_dir}: {exc}")
    if not quiet_path:
        print(target)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _fmt(value: Any) -> str:
    """Deterministic cell text: repr for floats, str otherwise."""
    if isinstance(value, float):
        return repr(float(value))  # numpy scalars repr differently; unify
    return str(value)


# ---------------------------------------------------------------------------
# mcm
# ---------------------------------------------------------------------------


def cmd_mcm(args: argparse.Namespace) -> int:
    e, _ = _load_source(args)
    entries = mcm_mod.solve_mcm(e)
    projectors = mcm_mod.optimal_projectors(entries)
    if projectors:
        weights = optim_mod.min_inconclusive_rate(e, projectors)
        povm = mcm_mod.mcm_povm(e, weights.weights)
        report = mcm_mod.verify_kkt(e, povm, entries)
        weight_doc: dict[str, Any] = {
            "weights": {str(x): w for x, w in sorted(weights.weights.items())},
            "eta0": weights.eta0,
            "psd_margin": weights.psd_margin,
        }
        kkt_doc: dict[str, Any] = {
            "stability": {str(x): v for x, v in sorted(report.stability.items())},
            "slackness": {str(x): v for x, v in sorted(report.slackness.items())},
            "tol": report.tol,
            "ok": report.ok,
        }
        kkt_ok = report.ok
    else:
        weight_doc = {"weights": {}, "eta0": 1.0, "psd_margin": 0.0}
        kkt_doc = {"stability": {}, "slackness": {}, "tol": 1e-9, "ok": True}
        kkt_ok = True

    try:
        p_guess, h_min = mcm_mod.guessing_probability(e)
        guess_doc: dict[str, Any] | None = {"p_guess": p_guess, "h_min_bits": h_min}
    except optim_mod.UnsupportedScaleError:
        guess_doc = None

    doc = {
        "solution": mcm_mod.solution_to_json(entries),
        "rate_optimal": weight_doc,
        "kkt": kkt_doc,
        "guessing": guess_doc,
    }
    _emit(args.out, "mcm.json", _dumps(doc))
    if not kkt_ok:
        print("KKT verification failed", file=sys.stderr)
        return EXIT_KKT
    return EXIT_OK


# ---------------------------------------------------------------------------
# sequence
# ---------------------------------------------------------------------------


def _generic_strategies(parties: int, rates: list[float]) -> list[seqchan.Strategy]:
    """Family-free chain policy: each party plays the rate-optimal
    measurement weakened uniformly to its requested inconclusive rate,
    collapsing conclusive outcomes onto the measurement vectors."""

    def strat(e: Ensemble, j: int):
        eta0 = rates[j - 1]
        entries = mcm_mod.solve_mcm(e)
        projectors = mcm_mod.optimal_projectors(entries)
        if not projectors:
            raise FeasibilityError("no label has a nonempty optimal subspace")
        sol = optim_mod.min_inconclusive_rate(e, projectors)
        floor = max(sol.eta0, 0.0)
        if eta0 < floor - 1e-9:
            raise FeasibilityError(
                f"inconclusive rate {eta0!r} below this ensemble's floor {floor!r}"
            )
        denom = 1.0 - floor
        alpha = 1.0 if denom <= 1e-15 else min((1.0 - eta0) / denom, 1.0)
        povm = mcm_mod.mcm_povm(e, sol.weights)
        weak = seqchan.WeakMcm(povm=povm, alphas={x: alpha for x in povm.labels})
        return seqchan.PartyPlan(
            povm=weak.weakened(),
            channel=seqchan.kraus_from_weak(weak),
            extras={"eta0_target": eta0, "alpha": alpha},
        )

    return [strat] * parties


def _family_strategies(fam: Any, args: argparse.Namespace, parties: int) -> list:
    explicit = args.retarget == "explicit"
    if explicit and args.retarget_angle is None:
        raise CliError(EXIT_INPUT, "--retarget explicit needs --retarget-angle")
    angle = (
        _parse_angle(args.retarget_angle, "--retarget-angle")
        if args.retarget_angle is not None
        else None
    )

    if isinstance(fam, fam_mod.TwoMixedFamily):
        if explicit:
            raise CliError(
                EXIT_INPUT, "two_mixed chains have no retarget angle; use --gains"
            )
        if args.gains:
            try:
                gains = [float(tok) for tok in args.gains.split(",") if tok.strip()]
            except ValueError:
                raise CliError(EXIT_INPUT, f"cannot parse --gains {args.gains!r}")
            if len(gains) == 1:
                gains = gains * parties
            if len(gains) != parties:
                raise CliError(
                    EXIT_INPUT,
                    f"--gains lists {len(gains)} gains but --parties is {parties}",
                )
            return fam.strategies_for_gains(gains)
        return fam.chain_strategies(parties)

    rates = _parse_rates(args.eta0, parties)
    if isinstance(fam, fam_mod.GuFamily):
        if explicit:
            raise CliError(EXIT_INPUT, "gu chains collapse onto the states themselves")
        return fam.strategies(rates)
    if isinstance(fam, fam_mod.LiftedGuFamily):
        if explicit:
            return fam.strategies(rates, retarget_polar=angle)
        return fam.strategies(rates)
    if isinstance(fam, fam_mod.MirrorFamily):
        return fam.strategies(rates, retarget_azimuth=angle if explicit else None)
    raise CliError(EXIT_INPUT, f"no chain strategy for family {type(fam).__name__}")


def cmd_sequence(args: argparse.Namespace) -> int:
    e, fam = _load_source(args)
    parties = args.parties
    if parties is None or parties < 1:
        raise CliError(EXIT_INPUT, "--parties must be a positive integer")
    if fam is None:
        strategies = _generic_strategies(parties, _parse_rates(args.eta0, parties))
    else:
        strategies = _family_strategies(fam, args, parties)

    try:
        trace = seqchan.run_sequence(e, strategies)
    except seqchan.StrategyInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    json_text = _dumps(seqchan.trace_to_json(trace))
    csv_text = seqchan.trace_to_csv(trace)
    if args.out is None:
        sys.stdout.write(csv_text if args.format == "csv" else json_text)
    else:
        _emit(args.out, "trace.json", json_text)
        _emit(args.out, "trace.csv", csv_text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _parse_grid(text: str | None) -> dict[str, list[Any]]:
    if not text:
        return {}
    try:
        grid = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, f"--grid is not valid JSON: {exc}")
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise CliError(EXIT_INPUT, "--grid must be a JSON object of lists")
    return grid


def _map_points(points: list, fn: Callable[[Any], list[Any]]) -> list[list[Any]]:
    threads = _thread_count()
    if threads <= 1 or len(points) < 2:
        return [fn(p) for p in points]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, points))


def _guard_grid(n_points: int) -> None:
    if n_points > GRID_CAP:
        raise CliError(EXIT_INPUT, f"grid has {n_points} points; the cap is {GRID_CAP}")
    if n_points == 0:
        raise CliError(EXIT_INPUT, "grid is empty")


def _sweep_two_mixed(args: argparse.Namespace) -> tuple[list[str], list[list[Any]]]:
    grid = _parse_grid(args.grid)
    ps = [float(v) for v in grid.get("p", np.linspace(0.05, 1.0, 10))]
    thetas = [
        _parse_angle(v, "theta")
        for v in grid.get("theta", np.linspace(0.1 * math.pi, 0.9 * math.pi, 10))
    ]
    parties = args.parties
    points = [(p, th) for p in ps for th in thetas]
    _guard_grid(len(points))

    header = [
        "p",
        "theta",
        "confidence_oracle",
        "confidence_engine",
        "confidence_residual",
        "p_joint_oracle",
        "p_joint_engine",
        "p_joint_residual",
        "error",
    ]

    def one(point: tuple[float, float]) -> list[Any]:
        p, th = point
        try:
            fam = fam_mod.two_mixed(p, th)
            engine = mcm_mod.solve_mcm(fam.ensemble())[1].confidence
            row: list[Any] = [
                _fmt(p),
                _fmt(th),
                _fmt(fam.confidence),
                _fmt(engine),
                _fmt(abs(engine - fam.confidence)),
            ]
            if parties:
                sched = fam.schedule(parties)
                trace = seqchan.run_sequence(fam.ensemble(), fam.chain_strategies(parties))
                pj = trace.p_joint if trace.p_joint is not None else math.nan
                row += [
                    _fmt(sched.p_joint),
                    _fmt(pj),
                    _fmt(abs(pj - sched.p_joint)),
                ]
            else:
                row += [None, None, None]
            return row + [None]
        except Exception as exc:  # recorded per-point, sweep continues
            return [_fmt(p), _fmt(th)] + [None] * 6 + [str(exc)]

    return header, _map_points(points, one)


def _sweep_gu(args: argparse.Namespace) -> tuple[list[str], list[list[Any]]]:
    params = _parse_params(args.params)
    n = int(params.get("n", params.get("N", 3)))
    parties = args.parties or 10
    rates = (
        [float(tok) for tok in args.eta0.split(",") if tok.strip()]
        if args.eta0
        else [0.1, 0.5, 0.9]
    )
    _guard_grid(len(rates) * parties)
    fam = fam_mod.gu(n)

    def chain(eta0: float) -> list[list[Any]]:
        rows: list[list[Any]] = []
        try:
            schedule = [eta0] * parties
            trace = seqchan.run_sequence(fam.ensemble(), fam.strategies(schedule))
            for j in range(1, parties + 1):
                oracle = fam.confidence_at(j, schedule)
                engine = trace.records[j - 1].confidences[1]
                rows.append(
                    [
                        n,
                        _fmt(eta0),
                        j,
                        _fmt(oracle),
                        _fmt(engine),
                        _fmt(abs(engine - oracle)),
                        None,
                    ]
                )
        except Exception as exc:
            rows.append([n, _fmt(eta0), None, None, None, None, str(exc)])
        return rows

    header = ["n", "eta0", "party", "confidence_oracle", "confidence_engine", "residual", "error"]
    nested = _map_points(rates, chain)
    return header, [row for rows in nested for row in rows]


def _sweep_lifted(args: argparse.Namespace) -> tuple[list[str], list[list[Any]]]:
    params = _parse_params(args.params)
    fam = _build_family("lifted_gu", params)
    parties = args.parties or 8
    threshold = args.threshold if args.threshold is not None else 0.4
    rates = (
        [float(tok) for tok in args.eta0.split(",") if tok.strip()] if args.eta0 else [0.5]
    )
    eta0 = rates[0]
    _guard_grid(parties)

    bound = fam.party_bound(threshold, eta0)
    max_r = fam.max_parties(threshold, eta0) if math.isfinite(bound) else None
    schedule = [eta0] * parties
    trace = seqchan.run_sequence(fam.ensemble(), fam.strategies(schedule))

    header = [
        "parties",
        "eta0",
        "threshold",
        "bound",
        "max_parties",
        "confidence_oracle",
        "confidence_engine",
        "residual",
        "feasible_oracle",
        "feasible_engine",
        "error",
    ]
    rows = []
    for r in range(1, parties + 1):
        oracle = fam.confidence_at(r, schedule)
        engine = trace.records[r - 1].confidences[1]
        rows.append(
            [
                r,
                _fmt(eta0),
                _fmt(threshold),
                _fmt(bound),
                max_r,
                _fmt(oracle),
                _fmt(engine),
                _fmt(abs(engine - oracle)),
                int(oracle >= threshold),
                int(engine >= threshold),
                None,
            ]
        )
    return header, rows


def _sweep_mirror(args: argparse.Namespace) -> tuple[list[str], list[list[Any]]]:
    grid = _parse_grid(args.grid)
    if "theta" in grid:
        thetas = [_parse_angle(v, "theta") for v in grid["theta"]]
    else:
        thetas = sorted(set(np.linspace(5 * math.pi / 9, 7 * math.pi / 9, 13)) | {2 * math.pi / 3})
    rates = (
        [float(tok) for tok in args.eta0.split(",") if tok.strip()] if args.eta0 else [0.5]
    )
    eta0 = rates[0]
    _guard_grid(len(thetas))

    header = [
        "theta",
        "eta0",
        "theta_next_oracle",
        "theta_next_engine",
        "residual",
        "dtheta",
        "sign",
        "error",
    ]

    def one(theta: float) -> list[Any]:
        try:
            fam = fam_mod.mirror(theta)
            oracle = fam_mod.mirror_step(fam.initial(), eta0).theta
            trace = seqchan.run_sequence(fam.ensemble(), fam.strategies([eta0]))
            engine = fam_mod.mirror_state_of(trace.final_ensemble).theta
            d = oracle - theta
            sign = "0" if abs(d) < 1e-9 else ("+" if d > 0 else "-")
            return [
                _fmt(theta),
                _fmt(eta0),
                _fmt(oracle),
                _fmt(engine),
                _fmt(abs(engine - oracle)),
                _fmt(d),
                sign,
                None,
            ]
        except Exception as exc:
            return [_fmt(theta), _fmt(eta0)] + [None] * 5 + [str(exc)]

    return header, _map_points(list(thetas), one)


def cmd_sweep(args: argparse.Namespace) -> int:
    if not args.family:
        raise CliError(EXIT_INPUT, "sweep needs --family")
    if args.family == "two_mixed":
        header, rows = _sweep_two_mixed(args)
    elif args.family == "gu":
        header, rows = _sweep_gu(args)
    elif args.family == "lifted_gu":
        header, rows = _sweep_lifted(args)
    elif args.family == "mirror":
        header, rows = _sweep_mirror(args)
    else:
        raise CliError(EXIT_INPUT, f"unknown family {args.family!r}")
    _emit(args.out, "sweep.csv", _csv_text(header, rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _suite_duality(count: int, rng: np.random.Generator) -> dict[str, Any]:
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 6))
        e = qcore.random_ensemble(rng, 2, n)
        rho = e.average()
        for x, entry in mcm_mod.solve_mcm(e).items():
            if e.prior(x) == 0.0:
                continue
            dmax = mcm_mod.max_relative_entropy(e.state(x).mat, rho.mat)
            worst = max(worst, abs(entry.confidence - e.prior(x) * 2.0**dmax))
    return {
        "module": "mcm",
        "invariant": "confidence equals prior times 2^(max relative entropy)",
        "instances": count,
        "worst": worst,
        "tol": 1e-9,
        "pass": worst <= 1e-9,
    }


def _suite_kkt(count: int, rng: np.random.Generator) -> dict[str, Any]:
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 6))
        e = qcore.random_ensemble(rng, 2, n)
        entries = mcm_mod.solve_mcm(e)
        sol = optim_mod.min_inconclusive_rate(e, mcm_mod.optimal_projectors(entries))
        povm = mcm_mod.mcm_povm(e, sol.weights)
        report = mcm_mod.verify_kkt(e, povm, entries)
        worst = max(
            worst,
            max(report.stability.values(), default=0.0),
            max(report.slackness.values(), default=0.0),
        )
    return {
        "module": "mcm",
        "invariant": "KKT stability and complementary slackness",
        "instances": count,
        "worst": worst,
        "tol": 1e-9,
        "pass": worst <= 1e-9,
    }


def _suite_povm(count: int, rng: np.random.Generator) -> dict[str, Any]:
    worst = 0.0
    failures = 0
    for _ in range(count):
        n = int(rng.integers(2, 5))
        e = qcore.random_ensemble(rng, 2, n)
        projectors = mcm_mod.optimal_projectors(mcm_mod.solve_mcm(e))
        weights = optim_mod.random_feasible_weights(rng, projectors)
        povm = mcm_mod.mcm_povm(e, weights)
        report = qcore.validate_povm(povm)
        worst = max(worst, report.completeness_residual, -min(report.psd_margins.values()))
        if not report.ok:
            failures += 1
    return {
        "module": "qcore",
        "invariant": "feasibly weighted measurements validate as POVMs",
        "instances": count,
        "worst": worst,
        "tol": qcore.POVM_TOL,
        "pass": failures == 0,
    }


def _suite_trace_preservation(count: int, rng: np.random.Generator) -> dict[str, Any]:
    worst = 0.0
    for _ in range(count):
        if rng.random() < 0.5:
            ch = seqchan.random_channel(rng, 2, int(rng.integers(2, 5)))
        else:
            n = int(rng.integers(2, 5))
            e = qcore.random_ensemble(rng, 2, n)
            projectors = mcm_mod.optimal_projectors(mcm_mod.solve_mcm(e))
            weights = optim_mod.random_feasible_weights(rng, projectors)
            povm = mcm_mod.mcm_povm(e, weights)
            alpha = float(rng.uniform(0.2, 1.0))
            weak = seqchan.WeakMcm(povm=povm, alphas={x: alpha for x in povm.labels})
            try:
                ch = seqchan.kraus_from_weak(weak)
            except seqchan.ChannelConstructionError:
                continue  # degenerate (non-rank-one) draw; not this suite's target
        rho = qcore.random_density(rng, 2)
        out = ch.apply(rho)
        worst = max(worst, abs(float(np.real(np.trace(out.mat))) - 1.0))
    return {
        "module": "seqchan",
        "invariant": "channels preserve trace",
        "instances": count,
        "worst": worst,
        "tol": 1e-10,
        "pass": worst <= 1e-10,
    }


def _suite_monotonicity(count: int, rng: np.random.Generator) -> dict[str, Any]:
    violations = 0
    witness = None
    for _ in range(count):
        n = int(rng.integers(2, 5))
        e = qcore.random_ensemble(rng, 2, n)
        sol = optim_mod.min_inconclusive_rate(e)
        floor = max(sol.eta0, 0.0)
        eta0 = floor + float(rng.uniform(0.1, 0.8)) * (1.0 - floor)
        try:
            seqchan.run_sequence(e, _generic_strategies(2, [eta0, eta0]))
        except seqchan.StrategyInfeasibleError:
            continue  # non-rank-one optimal subspace; outside this policy
        except ValueError as exc:
            violations += 1
            witness = str(exc)
    return {
        "module": "seqchan",
        "invariant": "confidences never increase along a chain",
        "instances": count,
        "worst": violations,
        "tol": 0,
        "pass": violations == 0,
        "witness": witness,
    }


def _suite_distance(count: int, rng: np.random.Generator) -> dict[str, Any]:
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 5))
        e = qcore.random_ensemble(rng, 2, n)
        ch = seqchan.random_channel(rng, 2, int(rng.integers(2, 5)))
        d, lower = seqchan.ensemble_distance(e, ch.apply_ensemble(e))
        worst = max(worst, lower - d)
    return {
        "module": "seqchan",
        "invariant": "average disturbance dominates the mean-state bound",
        "instances": count,
        "worst": worst,
        "tol": 1e-12,
        "pass": worst <= 1e-12,
    }


def _suite_proposition(count: int, rng: np.random.Generator) -> dict[str, Any]:
    del count, rng  # fixed check; randomness adds nothing
    trine = fam_mod.gu(3)
    eye = np.eye(2, dtype=complex)
    trine_ops = [m for _, m in trine.full_povm().all_operators() if np.trace(m).real > 1e-12]
    trine_dependent = not seqchan.linear_independence(trine_ops + [eye])

    two = fam_mod.two_mixed(0.8, math.pi / 3)
    entries = mcm_mod.solve_mcm(two.ensemble())
    two_ops = [np.outer(v, v.conj()) for x in (1, 2) for v in entries[x].basis]
    two_independent = seqchan.linear_independence(two_ops + [eye])

    # operational side: a two-state chain keeps its confidence exactly,
    # the trine family drops strictly under any weakening
    chain = seqchan.run_sequence(two.ensemble(), two.chain_strategies(2))
    c_two = [rec.confidences[1] for rec in chain.records]
    keep = abs(c_two[0] - c_two[1])

    tri = seqchan.run_sequence(trine.ensemble(), trine.strategies([0.5, 0.5]))
    c_tri = [rec.confidences[1] for rec in tri.records]
    drop = c_tri[0] - c_tri[1]

    ok = trine_dependent and two_independent and keep <= 1e-10 and drop >= 1e-6
    return {
        "module": "seqchan",
        "invariant": "equal-confidence chains exist iff the measurement "
        "operators with identity are linearly independent",
        "instances": 2,
        "worst": max(keep, 0.0 if drop >= 1e-6 else 1.0),
        "tol": 1e-10,
        "pass": ok,
        "witness": {
            "trine_dependent": trine_dependent,
            "two_state_independent": two_independent,
            "two_state_confidence_change": keep,
            "trine_confidence_drop": drop,
        },
    }


SUITES: dict[str, Callable[[int, np.random.Generator], dict[str, Any]]] = {
    "duality": _suite_duality,
    "kkt": _suite_kkt,
    "povm": _suite_povm,
    "trace-preservation": _suite_trace_preservation,
    "monotonicity": _suite_monotonicity,
    "distance": _suite_distance,
    "proposition": _suite_proposition,
}


def cmd_verify(args: argparse.Namespace) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    for name in names:
        if name not in SUITES:
            raise CliError(
                EXIT_INPUT,
                f"unknown suite {name!r}; choose from {', '.join(SUITES)} or all",
            )
    checks = []
    for name in names:
        rng = np.random.default_rng(args.seed)
        checks.append({"suite": name, **SUITES[name](args.count, rng)})
    ok = all(c["pass"] for c in checks)
    doc = {"suites": names, "count": args.count, "seed": args.seed, "checks": checks, "pass": ok}
    text = _dumps(doc)
    if args.out is not None:
        _emit(args.out, "verify.json", text, quiet_path=True)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# family
# ---------------------------------------------------------------------------


def cmd_family(args: argparse.Namespace) -> int:
    if not args.family:
        raise CliError(EXIT_INPUT, "family needs --family")
    fam = _build_family(args.family, _parse_params(args.params))
    doc: dict[str, Any]
    if isinstance(fam, fam_mod.TwoMixedFamily):
        doc = {
            "family": "two_mixed",
            "p": fam.p,
            "theta": fam.theta,
            "confidence": fam.confidence,
            "signed_overlap": fam.signed_overlap,
            "overlap": fam.overlap,
            "helstrom": fam.helstrom,
            "projectors": [qcore.vector_to_json(v) for v in fam.projector_vectors()],
        }
    elif isinstance(fam, fam_mod.GuFamily):
        doc = {
            "family": "gu",
            "n": fam.n,
            "confidence": fam.confidence,
            "weights": {str(x): w for x, w in sorted(fam.weights.items())},
            "eta0_floor": 0.0,
            "states": [
                qcore.vector_to_json(fam.state_vector(x)) for x in range(1, fam.n + 1)
            ],
        }
    elif isinstance(fam, fam_mod.LiftedGuFamily):
        doc = {
            "family": "lifted_gu",
            "n": fam.n,
            "theta": fam.theta,
            "lam": fam.lam,
            "confidence": fam.confidence,
            "full_weight": fam.full_weight,
            "eta0_floor": fam.eta0_floor,
            "purity": fam.purity(),
            "measurement_vectors": [
                qcore.vector_to_json(
                    fam.measurement_vector(x) / np.linalg.norm(fam.measurement_vector(x))
                )
                for x in range(1, fam.n + 1)
            ],
        }
    else:
        ms = fam.initial()
        sol = fam_mod.mirror_mcm(ms)
        doc = {
            "family": "mirror",
            "theta": fam.theta,
            "phi": sol.phi,
            "phi_closed_form_pure": fam_mod.pure_mirror_phi(fam.theta),
            "c1": sol.c1,
            "c2": sol.c2,
            "weights": {"1": sol.a1, "2": sol.a2, "3": sol.a2},
            "retarget": fam_mod.mirror_retarget(ms, sol.phi),
            "trichotomy": "sign(theta_next - theta) = sign(theta - 2*pi/3)",
        }
    _emit(args.out, "family.json", _dumps(doc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _add_source_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ensemble", help="path to an ensemble JSON file")
    p.add_argument("--family", help=f"one of {', '.join(FAMILY_NAMES)}")
    p.add_argument("--params", help='family parameters as JSON, e.g. \'{"n": 3}\'')
    p.add_argument("--out", help="output directory (default: print to stdout)")
    p.add_argument("--seed", type=int, default=7, help="RNG seed (default 7)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqmcm",
        description="Maximum-confidence discrimination and sequential measurement chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_mcm = sub.add_parser("mcm", help="solve one maximum-confidence problem")
    _add_source_flags(p_mcm)

    p_seq = sub.add_parser("sequence", help="run a sequential chain")
    _add_source_flags(p_seq)
    p_seq.add_argument("--parties", type=int, help="number of parties R")
    p_seq.add_argument("--eta0", help="per-party inconclusive rates, comma separated")
    p_seq.add_argument("--gains", help="two_mixed only: per-party gains, comma separated")
    p_seq.add_argument(
        "--retarget",
        choices=("optimal", "explicit"),
        default="optimal",
        help="collapse-target policy (default optimal)",
    )
    p_seq.add_argument(
        "--retarget-angle",
        help="explicit retarget angle (radians, or e.g. '90deg')",
    )
    p_seq.add_argument(
        "--format",
        choices=("json", "csv"),
        default="json",
        help="stdout format when --out is not given",
    )

    p_sweep = sub.add_parser("sweep", help="oracle-vs-engine residuals over a grid")
    _add_source_flags(p_sweep)
    p_sweep.add_argument("--grid", help="JSON object of parameter lists")
    p_sweep.add_argument("--parties", type=int, help="chain length (family dependent)")
    p_sweep.add_argument("--eta0", help="inconclusive rates, comma separated")
    p_sweep.add_argument(
        "--threshold", type=float, help="lifted_gu: confidence threshold (default 0.4)"
    )

    p_verify = sub.add_parser("verify", help="randomized invariant suites")
    p_verify.add_argument(
        "--suite", default="all", help=f"one of {', '.join(SUITES)} or all (default)"
    )
    p_verify.add_argument(
        "--count", type=int, default=500, help="instances per suite (default 500)"
    )
    p_verify.add_argument("--seed", type=int, default=7, help="RNG seed (default 7)")
    p_verify.add_argument("--out", help="also write verify.json here")

    p_family = sub.add_parser("family", help="print a family's closed-form values")
    _add_source_flags(p_family)

    return parser


COMMANDS = {
    "mcm": cmd_mcm,
    "sequence": cmd_sequence,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "family": cmd_family,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except qcore.DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
