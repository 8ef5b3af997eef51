"""Optimization-layer tests: inconclusive-rate minimization over scaled
optimal projectors, the min-error guessing dual, equal-confidence gain
schedules, and the bounded numeric minimizers.

Run with:  pytest tests/test_optim.py -v
"""

import math

import numpy as np
import pytest

from seqmcm import mcm, optim, qcore
from seqmcm.optim import (
    GainSchedule,
    InfeasibleGainError,
    UnsupportedScaleError,
    golden_section,
    min_error_guessing,
    min_inconclusive_rate,
    minimize_disturbance_numeric,
    optimal_joint_schedule,
    random_feasible_weights,
    two_state_least_disturbing,
)
from seqmcm.qcore import Ensemble, random_ensemble, validate_povm


def _projector(v):
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def ring_ensemble(n: int) -> Ensemble:
    """n equal-prior pure states (|0> + e^(i 2 pi x / n)|1>)/sqrt(2)."""
    states = []
    for x in range(1, n + 1):
        beta = 2 * math.pi * x / n
        states.append(_projector(np.array([1.0, np.exp(1j * beta)]) / math.sqrt(2)))
    return Ensemble(priors=(1.0 / n,) * n, states=tuple(states))


def trine_ensemble() -> Ensemble:
    states = tuple(
        _projector([math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)])
        for k in range(3)
    )
    return Ensemble(priors=(1 / 3, 1 / 3, 1 / 3), states=states)


# ---------------------------------------------------------------------------
# inconclusive-rate minimization
# ---------------------------------------------------------------------------


class TestMinInconclusiveRate:
    def test_ring_states_complete_povm(self):
        """Symmetric phase states admit a complete MCM POVM: weights 2/n,
        inconclusive rate 0."""
        for n in (3, 4, 5):
            sol = min_inconclusive_rate(ring_ensemble(n))
            for a in sol.weights.values():
                np.testing.assert_allclose(a, 2.0 / n, atol=1e-9)
            np.testing.assert_allclose(sol.eta0, 0.0, atol=1e-9)
            assert sol.psd_margin >= -1e-9

    def test_orthogonal_pair_full_weights(self):
        e = Ensemble(
            priors=(0.5, 0.5), states=(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        )
        sol = min_inconclusive_rate(e)
        np.testing.assert_allclose(sorted(sol.weights.values()), [1.0, 1.0], atol=1e-9)
        np.testing.assert_allclose(sol.eta0, 0.0, atol=1e-9)

    def test_shrunk_ring_floor(self):
        """Mixing each ring state with white noise while keeping the same
        average forces a residual inconclusive rate: for states
        lam |psi_x><psi_x| + (1 - lam) 1/2 tilted to polar angle theta the
        optimum is a_x = 2 / (n (1 + cos theta)) with eta0 = cos theta."""
        n, theta, lam = 4, 0.9, 0.7
        states = []
        for x in range(1, n + 1):
            beta = 2 * math.pi * x / n
            off = lam * math.sin(theta) * np.exp(-1j * beta)
            mat = 0.5 * np.array(
                [[1 + math.cos(theta), off], [np.conj(off), 1 - math.cos(theta)]]
            )
            states.append(mat)
        e = Ensemble(priors=(1.0 / n,) * n, states=tuple(states))
        sol = min_inconclusive_rate(e)
        want = 2.0 / (n * (1 + math.cos(theta)))
        for a in sol.weights.values():
            np.testing.assert_allclose(a, want, atol=1e-9)
        np.testing.assert_allclose(sol.eta0, math.cos(theta), atol=1e-9)

    def test_symmetric_problem_symmetric_weights(self):
        """On the trine the optimum is unique up to the symmetric face;
        the solver must return identical weights, not an asymmetric
        vertex of the degenerate optimal face."""
        sol = min_inconclusive_rate(trine_ensemble())
        vals = list(sol.weights.values())
        np.testing.assert_allclose(vals, [vals[0]] * 3, atol=1e-12)
        np.testing.assert_allclose(vals[0], 2.0 / 3.0, atol=1e-9)

    def test_povm_validates(self):
        rng = np.random.default_rng(61)
        for _ in range(15):
            e = random_ensemble(rng, 2, int(rng.integers(2, 5)))
            sol = min_inconclusive_rate(e)
            povm = mcm.mcm_povm(e, sol.weights)
            assert validate_povm(povm, tol=1e-8).ok

    def test_dominates_random_feasible_points(self):
        """Certificate: no random feasible weight vector achieves a lower
        inconclusive rate (1000+ samples across several ensembles)."""
        rng = np.random.default_rng(62)
        total = 0
        for _ in range(4):
            e = random_ensemble(rng, 2, int(rng.integers(2, 5)))
            entries = mcm.solve_mcm(e)
            projectors = mcm.optimal_projectors(entries)
            sol = min_inconclusive_rate(e, projectors)
            rho = e.average().mat
            for _ in range(300):
                w = random_feasible_weights(rng, projectors)
                eta = 1.0 - sum(
                    w[x] * float(np.real(np.trace(projectors[x] @ rho))) for x in w
                )
                assert eta >= sol.eta0 - 1e-9
                total += 1
        assert total >= 1000

    def test_local_perturbations_do_not_improve(self):
        """+-1e-3 coordinate perturbations that stay feasible never lower
        the objective beyond solver precision."""
        rng = np.random.default_rng(63)
        e = random_ensemble(rng, 2, 3)
        projectors = mcm.optimal_projectors(mcm.solve_mcm(e))
        sol = min_inconclusive_rate(e, projectors)
        labels = sorted(projectors)
        rho = e.average().mat
        base = np.array([sol.weights[x] for x in labels])
        mats = np.stack([projectors[x] for x in labels])

        def eta(w):
            total = np.tensordot(w, mats, axes=1)
            if np.any(w < 0):
                return None
            if float(np.linalg.eigvalsh(np.eye(2) - total)[0]) < -1e-12:
                return None
            return 1.0 - float(np.real(np.trace(total @ rho)))

        tried = 0
        for _ in range(500):
            delta = rng.choice([-1e-3, 0.0, 1e-3], size=len(labels))
            if not np.any(delta):
                continue
            val = eta(base + delta)
            if val is None:
                continue
            assert val >= sol.eta0 - 1e-9
            tried += 1
        assert tried >= 50

    def test_rejects_all_zero_prior(self):
        e = Ensemble(
            priors=(1.0, 0.0), states=(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        )
        # label 2 has an empty basis; only label 1 should carry weight
        sol = min_inconclusive_rate(e)
        assert sorted(sol.weights) == [1]


class TestRandomFeasibleWeights:
    def test_always_feasible(self):
        rng = np.random.default_rng(71)
        e = random_ensemble(rng, 2, 3)
        projectors = mcm.optimal_projectors(mcm.solve_mcm(e))
        labels = sorted(projectors)
        mats = np.stack([projectors[x] for x in labels])
        for _ in range(300):
            w = random_feasible_weights(rng, projectors)
            assert all(v >= 0 for v in w.values())
            total = np.tensordot([w[x] for x in labels], mats, axes=1)
            low = float(np.linalg.eigvalsh(np.eye(2) - total)[0])
            assert low >= -1e-12

    def test_seeded_reproducible(self):
        e = trine_ensemble()
        projectors = mcm.optimal_projectors(mcm.solve_mcm(e))
        w1 = random_feasible_weights(np.random.default_rng(5), projectors)
        w2 = random_feasible_weights(np.random.default_rng(5), projectors)
        assert w1 == w2


# ---------------------------------------------------------------------------
# min-error guessing
# ---------------------------------------------------------------------------


class TestMinErrorGuessing:
    def test_trine(self):
        np.testing.assert_allclose(
            min_error_guessing(trine_ensemble()), 2.0 / 3.0, atol=1e-5
        )

    def test_square(self):
        """Four symmetric equatorial states: P_guess = 1/2."""
        np.testing.assert_allclose(
            min_error_guessing(ring_ensemble(4)), 0.5, atol=1e-5
        )

    def test_two_state_short_circuit_exact(self):
        e = Ensemble(
            priors=(0.3, 0.7), states=(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        )
        np.testing.assert_allclose(min_error_guessing(e), 1.0, atol=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(81)
        for _ in range(3):
            e = random_ensemble(rng, 2, 3)
            p = min_error_guessing(e)
            assert max(e.priors) - 1e-6 <= p <= 1.0 + 1e-9

    def test_scale_guard(self):
        rng = np.random.default_rng(82)
        big_n = random_ensemble(rng, 2, 7)
        with pytest.raises(UnsupportedScaleError):
            min_error_guessing(big_n)
        big_d = random_ensemble(rng, 5, 3)
        with pytest.raises(UnsupportedScaleError):
            min_error_guessing(big_d)


# ---------------------------------------------------------------------------
# two-state gain machinery
# ---------------------------------------------------------------------------


class TestTwoStateLeastDisturbing:
    def test_worked_example(self):
        a1, a2, s_new = two_state_least_disturbing(0.75, 0.4, 0.15)
        np.testing.assert_allclose(a1, 0.15 / (0.75 * (1 - 0.16)), atol=1e-15)
        assert a1 == a2
        np.testing.assert_allclose(s_new, 0.5, atol=1e-15)

    def test_zero_gain_identity(self):
        a1, a2, s_new = two_state_least_disturbing(0.9, 0.3, 0.0)
        assert a1 == 0.0 and a2 == 0.0
        np.testing.assert_allclose(s_new, 0.3, atol=0.0)

    def test_full_gain_saturates(self):
        c, s = 0.8, 0.25
        a1, _, s_new = two_state_least_disturbing(c, s, c * (1 - s))
        assert s_new == 1.0
        np.testing.assert_allclose(a1, (1 - s) / (1 - s * s), atol=1e-12)

    def test_infeasible_gain(self):
        with pytest.raises(InfeasibleGainError):
            two_state_least_disturbing(0.5, 0.5, 0.3)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            two_state_least_disturbing(0.0, 0.5, 0.1)
        with pytest.raises(ValueError):
            two_state_least_disturbing(0.5, 1.0, 0.1)

    def test_overlap_update_composes(self):
        """Chaining two equal-gain steps reproduces a single combined
        step: s -> s/(1-G/C) applied twice."""
        c, s = 0.9, 0.36
        g = c * (1 - math.sqrt(s))  # two even steps land exactly at 1
        _, _, s1 = two_state_least_disturbing(c, s, g)
        np.testing.assert_allclose(s1, math.sqrt(s), atol=1e-12)
        _, _, s2 = two_state_least_disturbing(c, s1, g)
        np.testing.assert_allclose(s2, 1.0, atol=1e-12)


class TestOptimalJointSchedule:
    def test_worked_example(self):
        """C = 1, s = 1/2, R = 2: each party gains 1 - sqrt(1/2) and the
        joint conclusive probability is (1 - sqrt(1/2))^2 ~ 0.08579."""
        sched = optimal_joint_schedule(1.0, 0.5, 2)
        np.testing.assert_allclose(sched.p_joint, 0.08578643762690487, atol=1e-15)
        np.testing.assert_allclose(sched.p_inconclusive, 0.5, atol=0.0)
        np.testing.assert_allclose(sched.gains, [1 - math.sqrt(0.5)] * 2, atol=1e-15)
        np.testing.assert_allclose(
            sched.overlaps, [0.5, math.sqrt(0.5), 1.0], atol=1e-15
        )

    def test_constraint_product(self):
        """prod_j (1 - G_j / C) must equal the initial overlap."""
        for c, s, r in ((0.8, 0.3, 3), (0.6, 0.7, 4), (1.0, 0.05, 5)):
            sched = optimal_joint_schedule(c, s, r)
            prod = 1.0
            for g in sched.gains:
                prod *= 1.0 - g / c
            np.testing.assert_allclose(prod, s, atol=1e-12)

    def test_joint_probability_identity(self):
        """P_J = C^(1-R) prod_j G_j for the even split."""
        sched = optimal_joint_schedule(0.75, 0.4, 3)
        prod = 1.0
        for g in sched.gains:
            prod *= g
        np.testing.assert_allclose(
            sched.p_joint, 0.75 ** (1 - 3) * prod, atol=1e-15
        )

    def test_even_split_is_optimal(self):
        """Random uneven splits satisfying the same overlap constraint
        never beat the even split's joint probability."""
        rng = np.random.default_rng(91)
        c, s, r = 0.9, 0.2, 4
        best = optimal_joint_schedule(c, s, r).p_joint
        for _ in range(300):
            w = rng.random(r) + 1e-3
            w = w / w.sum()  # exponents of s: prod (1 - G_j/C) = s
            gains = c * (1.0 - s**w)
            p = c ** (1 - r) * float(np.prod(gains))
            assert p <= best + 1e-12

    def test_more_parties_less_joint_probability(self):
        vals = [optimal_joint_schedule(0.8, 0.3, r).p_joint for r in range(1, 7)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_zero_overlap_degenerate(self):
        sched = optimal_joint_schedule(0.7, 0.0, 3)
        assert sched.note is not None
        np.testing.assert_allclose(sched.p_joint, 0.7, atol=0.0)
        np.testing.assert_allclose(sched.p_inconclusive, 0.0, atol=0.0)
        assert sched.gains == (0.7, 0.7, 0.7)

    def test_single_party(self):
        sched = optimal_joint_schedule(0.9, 0.4, 1)
        np.testing.assert_allclose(sched.p_joint, 0.9 * 0.6, atol=1e-15)
        np.testing.assert_allclose(sched.gains[0], 0.9 * 0.6, atol=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            optimal_joint_schedule(0.0, 0.5, 2)
        with pytest.raises(ValueError):
            optimal_joint_schedule(0.5, 1.0, 2)
        with pytest.raises(ValueError):
            optimal_joint_schedule(0.5, 0.5, 0)


# ---------------------------------------------------------------------------
# numeric minimizers
# ---------------------------------------------------------------------------


class TestGoldenSection:
    def test_quadratic(self):
        x, v = golden_section(lambda t: (t - 1.3) ** 2, 0.0, 3.0)
        np.testing.assert_allclose(x, 1.3, atol=1e-8)
        assert v < 1e-15

    def test_nonsmooth_unimodal(self):
        x, _ = golden_section(lambda t: abs(t - math.pi), 2.0, 4.0)
        np.testing.assert_allclose(x, math.pi, atol=1e-8)

    def test_respects_bracket(self):
        x, _ = golden_section(lambda t: -t, 0.0, 1.0)  # minimum at the edge
        assert 0.0 <= x <= 1.0
        np.testing.assert_allclose(x, 1.0, atol=1e-6)


class TestMinimizeDisturbanceNumeric:
    def test_one_param_quartic(self):
        res = minimize_disturbance_numeric(
            lambda x: (x[0] ** 2 - 1.0) ** 2, [(0.0, 2.0)]
        )
        np.testing.assert_allclose(res.params[0], 1.0, atol=1e-7)
        assert res.converged and res.seed is None

    def test_one_param_deterministic(self):
        fun = lambda x: math.sin(3 * x[0]) + 0.1 * x[0] ** 2
        r1 = minimize_disturbance_numeric(fun, [(-2.0, 2.0)])
        r2 = minimize_disturbance_numeric(fun, [(-2.0, 2.0)])
        assert r1.params[0] == r2.params[0] and r1.value == r2.value

    def test_two_param_bowl(self):
        fun = lambda x: (x[0] - 0.3) ** 2 + 2.0 * (x[1] + 0.4) ** 2
        res = minimize_disturbance_numeric(fun, [(-1.0, 1.0), (-1.0, 1.0)])
        np.testing.assert_allclose(res.params, [0.3, -0.4], atol=1e-5)
        assert res.seed is not None

    def test_two_param_reproducible(self):
        fun = lambda x: (x[0] - 0.3) ** 2 + (x[1] - 0.1) ** 4
        r1 = minimize_disturbance_numeric(fun, [(-1.0, 1.0), (-1.0, 1.0)])
        r2 = minimize_disturbance_numeric(fun, [(-1.0, 1.0), (-1.0, 1.0)])
        np.testing.assert_allclose(r1.params, r2.params, atol=0.0)
        assert r1.seed == r2.seed

    def test_minimum_outside_box_clips(self):
        res = minimize_disturbance_numeric(
            lambda x: (x[0] - 5.0) ** 2, [(0.0, 1.0)]
        )
        np.testing.assert_allclose(res.params[0], 1.0, atol=1e-6)

    def test_parameter_cap(self):
        with pytest.raises(UnsupportedScaleError):
            minimize_disturbance_numeric(lambda x: 0.0, [(0, 1)] * 4)

    def test_three_param(self):
        fun = lambda x: float(np.sum((x - np.array([0.1, 0.2, 0.3])) ** 2))
        res = minimize_disturbance_numeric(fun, [(0.0, 1.0)] * 3)
        np.testing.assert_allclose(res.params, [0.1, 0.2, 0.3], atol=1e-4)
