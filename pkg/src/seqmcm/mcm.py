"""Maximum-confidence measurements for state discrimination.

Given an ensemble ``{q_x, rho_x}`` with average ``rho = sum_x q_x rho_x``,
the confidence of outcome ``x`` under a POVM element ``M_x`` is the
posterior probability that the state really was ``rho_x``:

    C(M_x) = q_x tr[rho_x M_x] / tr[rho M_x].

Maximizing over all valid elements gives the maximum confidence

    C_x = lambda_max( rho^(-1/2) q_x rho_x rho^(-1/2) ),

the largest eigenvalue of the "shaped" operator on the support of
``rho`` — equivalently the smallest ``lam`` with
``lam * 1 - rho^(-1/2) q_x rho_x rho^(-1/2) >= 0``, so the eigenvalue
form *is* the optimum and no iterative solver is involved.  Optimal
elements are supported on the top eigenspace, mapped back through
``rho^(-1/2)``.

Everything downstream rests on two exact identities:

* ``C_x = q_x * 2**Dmax(rho_x || rho)`` where ``Dmax`` is the max-relative
  entropy (in bits), and
* the stationarity condition ``C_x rho = q_x rho_x + r_x sigma_x`` with
  ``r_x = C_x - q_x >= 0`` and ``sigma_x`` a state orthogonal (under the
  shaping map) to every optimal element — taking the trace of the first
  identity is what pins ``r_x``, and ``mu_x = q_x / C_x`` rewrites it as
  the mixture ``rho = mu_x rho_x + (1 - mu_x) sigma_x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import qcore
from .qcore import (
    DensityMatrix,
    Ensemble,
    Povm,
    RANK_TOL,
    as_matrix,
    eig_hermitian,
    fix_phase,
    matrix_to_json,
    pinv_sqrt,
    require_hermitian,
    support_projector,
    trace_norm,
    vector_to_json,
)

DEGENERACY_TOL = 1e-9
"""Relative gap below the top eigenvalue that still counts as degenerate."""

SUPPORT_TOL = 1e-9
"""Allowed weight of a state outside the reference support before the
confidence is declared infinite."""

R_ZERO_TOL = 1e-12
"""Below this, the complement weight r_x is treated as exactly zero."""


class SupportError(ValueError):
    """Raised when a state has weight outside the reference support, which
    would make the confidence (or max-relative entropy) infinite."""


@dataclass(frozen=True)
class McmEntry:
    """Solution data for one label of a maximum-confidence measurement.

    Attributes
    ----------
    label:
        The ensemble label ``x`` (1-based).
    confidence:
        ``C_x``, in ``[q_x, 1]``.
    degeneracy:
        Dimension ``d_x`` of the top eigenspace of the shaped operator.
    basis:
        The ``d_x`` back-mapped unit vectors ``phi_x^i`` spanning the
        supports of all optimal POVM elements.  Not mutually orthogonal
        in general.  Empty when ``q_x = 0``.
    sigma:
        The complementary state, or ``None`` when ``r = 0`` (full
        degeneracy: the shaped operator is proportional to the support
        projector, e.g. any single-state ensemble).
    r:
        Complement weight ``C_x - q_x``.
    mu:
        Mixture weight ``q_x / C_x`` (0 when ``q_x = 0``).
    """

    label: int
    confidence: float
    degeneracy: int
    basis: tuple[np.ndarray, ...]
    sigma: DensityMatrix | None
    r: float
    mu: float


def _shaped_operator(e: Ensemble, x: int, rank_tol: float) -> tuple[np.ndarray, np.ndarray, int]:
    """The operator ``rho^(-1/2) q_x rho_x rho^(-1/2)`` plus the shaping map."""
    rho = e.average().mat
    s, rank = pinv_sqrt(rho, rank_tol)
    q = e.prior(x)
    op = s @ (q * e.state(x).mat) @ s
    return require_hermitian(op, "shaped operator"), s, rank


def _check_support(rho_x: np.ndarray, reference: np.ndarray, rank_tol: float) -> None:
    proj = support_projector(reference, rank_tol)
    leak = float(np.real(np.trace(rho_x @ (np.eye(rho_x.shape[0]) - proj))))
    if leak > SUPPORT_TOL:
        raise SupportError(
            f"state has weight {leak:.3e} outside the reference support; "
            "the confidence is infinite (no valid finite maximum exists)"
        )


def max_confidence(e: Ensemble, x: int, rank_tol: float = RANK_TOL) -> McmEntry:
    """Solve the maximum-confidence problem for label ``x``.

    Returns the full :class:`McmEntry`.  A zero-prior label gets
    ``C_x = 0`` with an empty basis.  If the state leaks outside the
    support of the ensemble average (possible only through aggressive
    rank truncation), :class:`SupportError` is raised rather than
    reporting a spuriously finite value.
    """
    if x not in e.labels:
        raise ValueError(f"label {x} not in 1..{e.n}")
    q = e.prior(x)
    rho = e.average().mat
    if q == 0.0:
        return McmEntry(
            label=x, confidence=0.0, degeneracy=0, basis=(), sigma=None, r=0.0, mu=0.0
        )
    _check_support(e.state(x).mat, rho, rank_tol)
    op, shaping, _ = _shaped_operator(e, x, rank_tol)
    vals, vecs = eig_hermitian(op, "shaped operator")
    c = float(vals[0])
    deg = int(np.sum(vals > c - DEGENERACY_TOL * c))
    basis = []
    for i in range(deg):
        phi = shaping @ vecs[:, i]
        norm = float(np.linalg.norm(phi))
        if norm <= 0.0:
            continue
        basis.append(qcore._frozen(fix_phase(phi / norm)))
    r = c - q
    sigma: DensityMatrix | None = None
    if r > R_ZERO_TOL:
        # c*rho - q*rho_x is PSD in exact arithmetic (c is the top eigenvalue
        # of the shaped operator); clip the float dust so a small r cannot
        # blow it up past the state validator.
        raw = c * rho - q * e.state(x).mat
        rvals, rvecs = eig_hermitian(raw, "complement")
        if float(rvals[-1]) < -1e-8 * max(c, 1.0):
            raise ValueError(
                f"complement operator has eigenvalue {float(rvals[-1]):.3e}; "
                "the confidence eigenvalue is inconsistent"
            )
        clipped = np.clip(rvals, 0.0, None)
        mat = (rvecs * clipped) @ rvecs.conj().T
        sigma = DensityMatrix(mat / float(np.real(np.trace(mat))))
    else:
        r = 0.0
    return McmEntry(
        label=x,
        confidence=c,
        degeneracy=deg,
        basis=tuple(basis),
        sigma=sigma,
        r=r,
        mu=q / c,
    )


def solve_mcm(e: Ensemble, rank_tol: float = RANK_TOL) -> dict[int, McmEntry]:
    """Maximum-confidence solutions for every label of the ensemble."""
    return {x: max_confidence(e, x, rank_tol) for x in e.labels}


def complementary_state(
    e: Ensemble, x: int, rank_tol: float = RANK_TOL
) -> tuple[DensityMatrix | None, float]:
    """The state ``sigma_x`` and weight ``r_x`` with
    ``C_x rho = q_x rho_x + r_x sigma_x``; ``sigma_x`` is ``None`` when
    ``r_x = 0`` (fully degenerate case)."""
    entry = max_confidence(e, x, rank_tol)
    return entry.sigma, entry.r


def optimal_projectors(entries: dict[int, McmEntry]) -> dict[int, np.ndarray]:
    """Orthogonal projectors onto each label's optimal subspace.

    Labels whose optimal basis is empty (zero prior) are omitted."""
    projectors: dict[int, np.ndarray] = {}
    for x, entry in entries.items():
        if not entry.basis:
            continue
        stacked = np.stack(entry.basis, axis=1)
        qmat, _ = np.linalg.qr(stacked)
        projectors[x] = qmat @ qmat.conj().T
    return projectors


def mcm_povm(e: Ensemble, weights: dict[int, float], rank_tol: float = RANK_TOL) -> Povm:
    """Assemble the POVM ``M_x = a_x P_x`` from per-label weights.

    ``P_x`` is the orthogonal projector onto the span of the optimal basis
    vectors for label ``x`` (rank one in the non-degenerate case).  The
    inconclusive element is ``M_0 = 1 - sum_x M_x``; callers are expected
    to validate the result, since arbitrary weights need not be feasible.
    """
    d = e.dim
    elements: dict[int, np.ndarray] = {}
    total = np.zeros((d, d), dtype=complex)
    for x, a in weights.items():
        entry = max_confidence(e, x, rank_tol)
        if not entry.basis:
            raise ValueError(f"label {x} has an empty optimal basis (zero prior?)")
        stacked = np.stack(entry.basis, axis=1)
        qmat, _ = np.linalg.qr(stacked)
        proj = qmat @ qmat.conj().T
        m = float(a) * proj
        elements[x] = m
        total += m
    return Povm(elements=elements, inconclusive=np.eye(d) - total)


@dataclass(frozen=True)
class KktReport:
    """Per-label optimality residuals for a candidate MCM POVM.

    ``stability[x]`` is ``|| C_x rho - q_x rho_x - r_x sigma_x ||_1`` and
    ``slackness[x]`` is ``| r_x tr[sigma_x M_x] |``; both must vanish at a
    true maximum-confidence solution."""

    stability: dict[int, float]
    slackness: dict[int, float]
    tol: float
    ok: bool


def verify_kkt(
    e: Ensemble,
    povm: Povm,
    entries: dict[int, McmEntry] | None = None,
    tol: float = 1e-9,
) -> KktReport:
    """Check both optimality conditions for each conclusive POVM label."""
    if entries is None:
        entries = solve_mcm(e)
    rho = e.average().mat
    stability: dict[int, float] = {}
    slackness: dict[int, float] = {}
    for x in povm.labels:
        entry = entries[x]
        comp = entry.r * entry.sigma.mat if entry.sigma is not None else 0.0
        residual = entry.confidence * rho - e.prior(x) * e.state(x).mat - comp
        stability[x] = trace_norm(residual)
        if entry.sigma is not None:
            overlap = float(np.real(np.trace(entry.sigma.mat @ povm.elements[x])))
            slackness[x] = abs(entry.r * overlap)
        else:
            slackness[x] = 0.0
    ok = all(v <= tol for v in stability.values()) and all(
        v <= tol for v in slackness.values()
    )
    return KktReport(stability=stability, slackness=slackness, tol=tol, ok=ok)


# ---------------------------------------------------------------------------
# entropy connections
# ---------------------------------------------------------------------------


def max_relative_entropy(rho: Any, sigma: Any, rank_tol: float = RANK_TOL) -> float:
    """Max-relative entropy ``Dmax(rho || sigma)`` in bits.

    ``Dmax = log2 lambda_max( sigma^(-1/2) rho sigma^(-1/2) )`` when the
    support of ``rho`` lies inside the support of ``sigma``; otherwise the
    divergence is infinite and ``math.inf`` is returned.
    """
    r = as_matrix(rho, "rho")
    s_mat = as_matrix(sigma, "sigma")
    proj = support_projector(s_mat, rank_tol)
    leak = float(np.real(np.trace(r @ (np.eye(r.shape[0]) - proj))))
    if leak > SUPPORT_TOL:
        return math.inf
    s, _ = pinv_sqrt(s_mat, rank_tol)
    shaped = require_hermitian(s @ r @ s, "shaped operator")
    top = float(np.linalg.eigvalsh(shaped)[-1])
    if top <= 0.0:
        return -math.inf
    return math.log2(top)


def confidence_entropy_identity(
    e: Ensemble, x: int, rank_tol: float = RANK_TOL
) -> tuple[float, float]:
    """Both sides of ``C_x = q_x 2**Dmax(rho_x || rho)``.

    Returns ``(eigenvalue side, entropy side)``; they agree to solver
    precision because both are the same top eigenvalue computed two ways.
    """
    lhs = max_confidence(e, x, rank_tol).confidence
    dmax = max_relative_entropy(e.state(x).mat, e.average().mat, rank_tol)
    q = e.prior(x)
    rhs = 0.0 if q == 0.0 else q * 2.0**dmax
    return lhs, rhs


def guessing_probability(e: Ensemble) -> tuple[float, float]:
    """Optimal guessing probability and min-entropy ``(P_guess, H_min)``.

    ``H_min = -log2 P_guess`` is the conditional min-entropy of the label
    given the quantum system.  For two states the optimum is the explicit
    ``P = (1 + || q_1 rho_1 - q_2 rho_2 ||_1) / 2`` (trace norm without the
    1/2 factor, so an orthogonal pair gives exactly 1); larger ensembles
    go through the semidefinite dual in :mod:`seqmcm.optim`.
    """
    if e.n == 1:
        return 1.0, 0.0
    if e.n == 2:
        gap = e.prior(1) * e.state(1).mat - e.prior(2) * e.state(2).mat
        p = 0.5 * (1.0 + trace_norm(gap))
    else:
        from . import optim

        p = optim.min_error_guessing(e)
    return p, -math.log2(p)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def entry_to_json(entry: McmEntry) -> dict[str, Any]:
    return {
        "label": entry.label,
        "confidence": entry.confidence,
        "degeneracy": entry.degeneracy,
        "basis": [vector_to_json(v) for v in entry.basis],
        "sigma": matrix_to_json(entry.sigma.mat) if entry.sigma is not None else None,
        "r": entry.r,
        "mu": entry.mu,
    }


def solution_to_json(entries: dict[int, McmEntry]) -> dict[str, Any]:
    """JSON object keyed by label; order-stable for deterministic output."""
    return {str(x): entry_to_json(entries[x]) for x in sorted(entries)}
