"""Trial generation over the AWGN multiple-access channel and error accounting."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .amp import decode, operator_kind
from .fwht import SensingOperator, make_operator
from .outer import OuterGraph, encode_info, info_to_payload
from .params import PowerProfile, SystemParams


@dataclass(frozen=True)
class Trial:
    payloads: list
    sections: np.ndarray
    x: np.ndarray
    y: np.ndarray
    seed: int


@dataclass(frozen=True)
class ErrorReport:
    pupe: float
    missed: int
    false_alarms: int
    decoded_count: int


@dataclass(frozen=True)
class PointResult:
    case: int
    ebno_db: float
    trials: int
    pupe: float
    stderr: float
    mean_seconds: float
    seed: int
    per_trial: tuple = ()


def draw_messages(params: SystemParams, rng: np.random.Generator) -> np.ndarray:
    """``(K, L/2)`` info values of ``K`` distinct uniform payloads."""
    half = params.L // 2
    if params.K > params.section_size ** half:
        raise ValueError(f"cannot draw {params.K} distinct payloads of {params.w} bits")
    info = rng.integers(0, params.section_size, size=(params.K, half), dtype=np.int64)
    while True:
        _, first = np.unique(info, axis=0, return_index=True)
        if first.size == params.K:
            return info
        dup = np.setdiff1d(np.arange(params.K), first)
        info[dup] = rng.integers(0, params.section_size, size=(dup.size, half), dtype=np.int64)


def aggregate(sections: np.ndarray, params: SystemParams, profile: PowerProfile) -> np.ndarray:
    """``sum_i D m_i``; users that share a section value add up."""
    graph_q = params.section_size
    counts = np.zeros(params.width)
    idx = np.arange(params.L, dtype=np.int64) * graph_q + sections
    np.add.at(counts, idx.ravel(), 1.0)
    return counts * profile.expand(graph_q)


def gen_trial(params: SystemParams, seed: int, op: SensingOperator,
              graph: OuterGraph | None = None, noiseless: bool = False) -> Trial:
    """Random payloads, their aggregate codeword image and AWGN.

    Payloads and noise depend only on ``(params, seed)``, so the same seed
    yields the same transmission under any operator.
    """
    graph = OuterGraph.ring(params.L, params.v) if graph is None else graph
    rng = np.random.default_rng(seed)
    info = draw_messages(params, rng)
    noise = rng.standard_normal(params.n)
    sections = encode_info(info, graph)
    x = aggregate(sections, params, PowerProfile.uniform(params))
    y = op.forward(x)
    if not noiseless:
        y += noise
    payloads = [info_to_payload(row, graph) for row in info]
    return Trial(payloads=payloads, sections=sections, x=x, y=y, seed=seed)


def pupe(tx, rx) -> ErrorReport:
    """Per-user error: fraction of transmitted payloads missing from ``rx``."""
    tx_set, rx_set = set(tx), set(rx)
    K = len(tx)
    if len(rx) > K:
        raise ValueError(f"decoded list has {len(rx)} entries, more than K={K}")
    missed = len(tx_set - rx_set)
    return ErrorReport(
        pupe=missed / K if K else 0.0,
        missed=missed,
        false_alarms=len(rx_set - tx_set),
        decoded_count=len(rx),
    )


def run_trial(case: int, params: SystemParams, seed: int, op: SensingOperator,
              graph: OuterGraph | None = None, noiseless: bool = False):
    """Generate, decode and score one trial; returns ``(ErrorReport, seconds)``."""
    graph = OuterGraph.ring(params.L, params.v) if graph is None else graph
    trial = gen_trial(params, seed, op, graph, noiseless)
    t0 = time.perf_counter()
    _, decoded, _ = decode(case, trial.y, op, params, graph)
    elapsed = time.perf_counter() - t0
    return pupe(trial.payloads, decoded), elapsed


def _trial_job(args):
    case, params, seed, op = args
    rep, secs = run_trial(case, params, seed, op)
    return rep.pupe, secs


def run_point(case: int, ebno_db: float, trials: int, base_seed: int,
              params: SystemParams | None = None, threads: int = 1,
              op: SensingOperator | None = None) -> PointResult:
    """Average PUPE and decode time over ``trials`` independent trials.

    Trial ``i`` uses seed ``base_seed + i``.  The operator is drawn once per
    point from ``base_seed`` unless supplied.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    params = (params or SystemParams()).with_(ebno_db=ebno_db)
    if op is None:
        op = make_operator(operator_kind(case), params, base_seed)
    jobs = [(case, params, base_seed + i, op) for i in range(trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    errs = np.array([r[0] for r in results])
    secs = np.array([r[1] for r in results])
    stderr = float(errs.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return PointResult(case, float(ebno_db), trials, float(errs.mean()), stderr,
                       float(secs.mean()), base_seed, tuple(errs.tolist()))


__all__ = [
    "Trial", "ErrorReport", "PointResult", "gen_trial", "pupe", "run_trial", "run_point",
    "draw_messages", "aggregate",
]
