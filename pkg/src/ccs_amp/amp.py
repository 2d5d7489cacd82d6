"""Composite AMP iteration with PME denoising and the four decoder pipelines.

Case 1  block-diagonal operator, independent AMP per section, separable prior
Case 2  dense operator, separable prior
Case 3  dense operator, BP-driven prior every iteration
Case 4  block-diagonal operator, per-section residuals, BP-driven prior
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import pme_sections, pme_sections_flat, variance_sums
from .fwht import OperatorKind, SensingOperator, make_operator
from .outer import OuterGraph, bp_denoise, separable_prior, stitch
from .params import PowerProfile, SystemParams

TAU_FLOOR = 1e-12

CASES = (1, 2, 3, 4)


def pme(r, d, tau, q):
    """Posterior probability that an entry is active.

    Bernoulli(q) prior on amplitude ``d`` seen through Gaussian noise of
    scale ``tau``.  Evaluated as a logistic function of the log-odds, which
    keeps relative accuracy deep in the lower tail and saturates exactly.
    """
    r = np.asarray(r, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_odds = (d * r - 0.5 * d * d) / (tau * tau) + np.log(q) - np.log1p(-q)
    # log_odds is +inf for q == 1 and -inf for q == 0; both map exactly.
    out = np.empty(np.broadcast(log_odds, r).shape)
    out[...] = np.exp(-np.logaddexp(0.0, -log_odds))
    return out if out.ndim else float(out)


def onsager_coefficient(s, d_entry, tau_prev: float, n: int) -> float:
    """``(||D^2 s||_1 - ||D s||^2) / (n tau_prev^2)`` for ``s`` in ``[0, 1]``."""
    s = np.asarray(s, dtype=np.float64)
    d2 = np.asarray(d_entry, dtype=np.float64) ** 2
    return float(np.dot(d2, s - s * s) / (n * tau_prev * tau_prev))


def tau_update(z, n_rows: int) -> float:
    """Empirical noise scale ``sqrt(||z||^2 / n_rows)``, floored at ``TAU_FLOOR``."""
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    z = np.asarray(z, dtype=np.float64)
    return max(float(np.sqrt(np.dot(z, z) / n_rows)), TAU_FLOOR)


@dataclass
class AmpState:
    s: np.ndarray
    z: np.ndarray | None = None
    tau: np.ndarray | float | None = None
    r: np.ndarray | None = None
    t: int = 0
    trace: list = field(default_factory=list)

    @classmethod
    def initial(cls, width: int) -> "AmpState":
        return cls(s=np.zeros(width))


def _denoise(r, d, tau, denoiser) -> np.ndarray:
    """PME update of a section-major ``(L, M)`` effective observation."""
    out = np.empty_like(r)
    if isinstance(denoiser, tuple):
        graph, K = denoiser
        prior = bp_denoise(r, tau, d, K, graph).reshape(r.shape)
        pme_sections(r, d, tau, prior, out)
    else:
        q = float(denoiser)
        pme_sections_flat(r, d, tau, np.log(q) - np.log1p(-q), out)
    return out


def amp_step_dense(state: AmpState, y, op: SensingOperator, profile: PowerProfile,
                   denoiser, work: np.ndarray | None = None) -> AmpState:
    """One iteration on a dense operator.

    ``denoiser`` is either a float (separable prior) or a ``(graph, K)`` pair
    selecting the BP-driven prior.
    """
    if op.kind is not OperatorKind.DENSE:
        raise ValueError("amp_step_dense needs a dense operator")
    d = profile.d
    L = d.size
    s = state.s.reshape(L, -1)
    ds = (d[:, None] * s).reshape(-1)
    z = y - op.forward(ds, work)
    if state.z is not None:
        gamma = np.dot(d * d, variance_sums(s)) / (op.n * state.tau * state.tau)
        z += state.z * gamma
    tau = tau_update(z, op.n)
    r = op.adjoint(z, work)
    r += ds
    s_next = _denoise(r.reshape(L, -1), d, np.full(L, tau), denoiser)
    return AmpState(s=s_next.reshape(-1), z=z, tau=tau, r=r, t=state.t + 1,
                    trace=state.trace + [tau])


def amp_step_hybrid(state: AmpState, y, op: SensingOperator, profile: PowerProfile,
                    denoiser, work: np.ndarray | None = None) -> AmpState:
    """One iteration on a block-diagonal operator.

    Residuals, Onsager terms and noise scales are kept per section.  The
    denoiser is either a float (independent per-section AMP, as in Case 1)
    or ``(graph, K)`` for a joint BP prior across all sections.
    """
    if op.kind is not OperatorKind.BLOCK_DIAGONAL:
        raise ValueError("amp_step_hybrid needs a block-diagonal operator")
    L = op.num_blocks
    rows = op.rows_per_block
    d = profile.d
    s = state.s.reshape(L, -1)
    ds = (d[:, None] * s).reshape(-1)
    z = (y - op.forward(ds, work)).reshape(L, rows)
    if state.z is not None:
        gamma = d * d * variance_sums(s) / (rows * state.tau * state.tau)
        z += state.z.reshape(L, rows) * gamma[:, None]
    tau = np.sqrt(np.einsum("ij,ij->i", z, z) / rows)
    np.maximum(tau, TAU_FLOOR, out=tau)
    z = z.reshape(-1)
    r = op.adjoint(z, work)
    r += ds
    s_next = _denoise(r.reshape(L, -1), d, tau, denoiser)
    return AmpState(s=s_next.reshape(-1), z=z, tau=tau, r=r, t=state.t + 1,
                    trace=state.trace + [tau.copy()])


def run_amp(y, op: SensingOperator, profile: PowerProfile, denoiser, iters: int) -> AmpState:
    step = amp_step_dense if op.kind is OperatorKind.DENSE else amp_step_hybrid
    work = np.empty(op.plans[0].size * len(op.plans))
    state = AmpState.initial(op.width)
    for _ in range(iters):
        state = step(state, y, op, profile, denoiser, work)
    return state


def operator_kind(case: int) -> OperatorKind:
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
    return OperatorKind.DENSE if case in (2, 3) else OperatorKind.BLOCK_DIAGONAL


def case_denoiser(case: int, params: SystemParams, graph: OuterGraph):
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
    if case in (1, 2):
        return separable_prior(params.K, params.v)
    return (graph, params.K)


def decode(case: int, y, op: SensingOperator, params: SystemParams,
           graph: OuterGraph | None = None):
    """AMP followed by stitching; returns ``(shat, payloads, state)``."""
    if op.kind is not operator_kind(case):
        raise ValueError(f"case {case} needs a {operator_kind(case).value} operator")
    graph = OuterGraph.ring(params.L, params.v) if graph is None else graph
    profile = PowerProfile.uniform(params)
    state = run_amp(np.asarray(y, dtype=np.float64), op, profile,
                    case_denoiser(case, params, graph), params.iters)
    decoded = stitch(state.s, graph, params.K, params.effective_list_size,
                     params.effective_beam_cap)
    return state.s, decoded, state


def run_pipeline(case: int, y, params: SystemParams, seed: int,
                 graph: OuterGraph | None = None):
    """Build the case's operator from ``seed`` and decode ``y``."""
    op = make_operator(operator_kind(case), params, seed)
    shat, decoded, _ = decode(case, y, op, params, graph)
    return shat, decoded
