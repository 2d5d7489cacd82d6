"""Outer graph code: encoding, one-round belief propagation, stitching.

Section values live in the ring of integers modulo ``2**v``.  Every check
ties two operand sections to one parity section through
``value(p) = value(a) + value(b) mod 2**v``.  Check-node messages are
cyclic convolutions and correlations, evaluated with real FFTs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import pme_sections_flat
from .params import default_beam_cap, default_list_size

TO_PARITY = "to_parity"
TO_OPERAND = "to_operand"

_NORM_TOL = 1e-6


@dataclass(frozen=True)
class OuterGraph:
    """Factor graph of the outer code.

    Sections ``0 .. L/2-1`` carry information, ``L/2 .. L-1`` carry parity.
    ``checks`` holds triples ``(a, b, p)``.
    """

    L: int
    v: int
    checks: tuple

    def __post_init__(self):
        half = self.L // 2
        for a, b, p in self.checks:
            if not (0 <= a < half and 0 <= b < half and a != b):
                raise ValueError(f"check operands must be distinct info sections: {(a, b, p)}")
            if not half <= p < self.L:
                raise ValueError(f"check target must be a parity section: {(a, b, p)}")
        parities = [p for _, _, p in self.checks]
        if len(set(parities)) != len(parities):
            raise ValueError("each parity section may be driven by one check only")

    @classmethod
    def ring(cls, L: int = 16, v: int = 16) -> "OuterGraph":
        """Degree-3 ring: check ``i`` joins info sections ``i``, ``i+1`` and parity ``L/2+i``."""
        half = L // 2
        if half < 2:
            raise ValueError("a ring needs at least two info sections")
        return cls(L, v, tuple((i, (i + 1) % half, half + i) for i in range(half)))

    @classmethod
    def edgeless(cls, L: int = 16, v: int = 16) -> "OuterGraph":
        return cls(L, v, ())

    @property
    def q(self) -> int:
        return 1 << self.v

    @property
    def info_sections(self) -> range:
        return range(self.L // 2)

    @property
    def parity_sections(self) -> range:
        return range(self.L // 2, self.L)

    @property
    def w(self) -> int:
        return (self.L // 2) * self.v

    def checks_of(self, section: int) -> list:
        return [c for c, chk in enumerate(self.checks) if section in chk]

    def satisfied(self, values) -> bool:
        values = np.asarray(values)
        return all(
            (int(values[a]) + int(values[b])) % self.q == int(values[p])
            for a, b, p in self.checks
        )


# ---------------------------------------------------------------------------
# Encoding and index representation
# ---------------------------------------------------------------------------


def payload_to_info(payload, graph: OuterGraph) -> np.ndarray:
    """Split a payload into ``L/2`` info values, most significant chunk first.

    ``payload`` is either a non-negative int below ``2**w`` or a sequence of
    exactly ``w`` bits.
    """
    w = graph.w
    if isinstance(payload, (int, np.integer)):
        payload = int(payload)
        if payload < 0 or payload >> w:
            raise ValueError(f"payload does not fit in {w} bits")
    else:
        bits = np.asarray(payload).ravel()
        if bits.size != w or not np.isin(bits, (0, 1)).all():
            raise ValueError(f"payload must be {w} bits, got {bits.size}")
        payload = int("".join("1" if b else "0" for b in bits), 2)
    mask = graph.q - 1
    half = graph.L // 2
    return np.array(
        [(payload >> ((half - 1 - i) * graph.v)) & mask for i in range(half)], dtype=np.int64
    )


def info_to_payload(info, graph: OuterGraph) -> int:
    out = 0
    for val in info:
        out = (out << graph.v) | int(val)
    return out


def encode_info(info: np.ndarray, graph: OuterGraph) -> np.ndarray:
    """Append parity values to info values.  Works on ``(L/2,)`` or ``(K, L/2)`` arrays."""
    info = np.asarray(info, dtype=np.int64)
    half = graph.L // 2
    if info.shape[-1] != half:
        raise ValueError(f"expected {half} info values per codeword")
    out = np.zeros(info.shape[:-1] + (graph.L,), dtype=np.int64)
    out[..., :half] = info
    for a, b, p in graph.checks:
        out[..., p] = (info[..., a] + info[..., b]) % graph.q
    return out


def encode(payload, graph: OuterGraph) -> np.ndarray:
    """Section values ``v(1) .. v(L)`` of one payload."""
    return encode_info(payload_to_info(payload, graph), graph)


def index_map(values, graph: OuterGraph) -> np.ndarray:
    """Support indices ``l * 2**v + values[l]`` of the one-sparse-per-section vector."""
    values = np.asarray(values, dtype=np.int64)
    return np.arange(graph.L, dtype=np.int64) * graph.q + values


def section_of(index, graph: OuterGraph):
    return np.asarray(index) >> graph.v


def value_of(index, graph: OuterGraph):
    return np.asarray(index) & (graph.q - 1)


# ---------------------------------------------------------------------------
# Check-node messages
# ---------------------------------------------------------------------------


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    np.maximum(x, 0.0, out=x)
    tot = x.sum(axis=-1, keepdims=True)
    bad = tot[..., 0] <= 0
    if np.any(bad):
        x[bad] = 1.0
        tot[bad] = x.shape[-1]
    x /= tot
    return x


def _combine(f1: np.ndarray, f2: np.ndarray, direction: str, size: int) -> np.ndarray:
    """Check message from the rFFT spectra of the two other incoming messages."""
    if direction == TO_PARITY:
        spec = f1 * f2
    elif direction == TO_OPERAND:
        spec = np.conj(f1) * f2
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return _normalize_rows(np.fft.irfft(spec, n=size, axis=-1))


def check_to_var(mu1, mu2, direction: str) -> np.ndarray:
    """Message from a check ``p = a + b`` to one of its sections.

    ``TO_PARITY``: ``mu1, mu2`` are the operand messages; returns their cyclic
    convolution.  ``TO_OPERAND``: ``mu1`` is the other operand's message and
    ``mu2`` the parity's; returns ``k -> sum_j mu1[j] * mu2[(k + j) % q]``.
    """
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    if mu1.shape != mu2.shape or mu1.ndim != 1:
        raise ValueError("messages must be 1-D arrays of equal length")
    size = mu1.size
    if size & (size - 1):
        raise ValueError("alphabet size must be a power of two")
    for mu in (mu1, mu2):
        if mu.min() < -_NORM_TOL or abs(mu.sum() - 1.0) > _NORM_TOL:
            raise ValueError("incoming messages must be normalized probability vectors")
    if direction not in (TO_PARITY, TO_OPERAND):
        raise ValueError(f"unknown direction {direction!r}")
    return _combine(np.fft.rfft(mu1), np.fft.rfft(mu2), direction, size)


# ---------------------------------------------------------------------------
# Dynamic denoiser
# ---------------------------------------------------------------------------


def separable_prior(K: int, v: int) -> float:
    """Probability that at least one of ``K`` users picks a given entry."""
    return -np.expm1(K * np.log1p(-(2.0 ** -v)))


LOCAL_MODES = ("pme", "likelihood")


def local_beliefs(r, tau, d, graph: OuterGraph, K: int = 1, mode: str = "pme") -> np.ndarray:
    """Per-section normalized local observations seeding the factor graph.

    ``likelihood``: weights ``exp((d r - d^2/2) / tau^2)``, the single-user
    likelihood ratio, with the section maximum factored out.
    ``pme``: posterior activity of each entry under the separable prior for
    ``K`` users.  It saturates at 1, so ``K`` strong entries in a section
    share the mass instead of the largest one absorbing it.
    """
    L, q = graph.L, graph.q
    r = np.asarray(r, dtype=np.float64).reshape(L, q)
    tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), (L,))
    d = np.broadcast_to(np.asarray(d, dtype=np.float64), (L,))
    if mode == "likelihood":
        lam = (d[:, None] * r - 0.5 * d[:, None] ** 2) / (tau[:, None] ** 2)
        lam -= lam.max(axis=1, keepdims=True)
        np.exp(lam, out=lam)
    elif mode == "pme":
        p0 = separable_prior(K, graph.v)
        logit = np.log(p0) - np.log1p(-p0)
        lam = np.empty((L, q))
        pme_sections_flat(np.ascontiguousarray(r), np.ascontiguousarray(d),
                          np.ascontiguousarray(tau), logit, lam)
        dead = lam.sum(axis=1) == 0.0
        if dead.any():
            # every entry underflowed; there the normalized PME is a softmax of the log-odds
            t = -np.logaddexp(0.0, -((d[dead, None] * r[dead] - 0.5 * d[dead, None] ** 2)
                                      / tau[dead, None] ** 2 + logit))
            lam[dead] = np.exp(t - t.max(axis=1, keepdims=True))
    else:
        raise ValueError(f"unknown local observation mode {mode!r}; expected {LOCAL_MODES}")
    # scaling by the row maximum first makes a flat row exactly 1/q after normalizing
    lam /= lam.max(axis=1, keepdims=True)
    lam /= lam.sum(axis=1, keepdims=True)
    return lam


def extrinsic_beliefs(lam: np.ndarray, graph: OuterGraph) -> np.ndarray:
    """One round of flooding BP; returns the normalized extrinsic belief per section.

    Sections without checks come back as NaN rows (no extrinsic information).
    """
    L, q = graph.L, graph.q
    spectra = np.fft.rfft(lam, axis=1)
    beta = np.ones((L, q))
    touched = np.zeros(L, dtype=bool)
    for a, b, p in graph.checks:
        to_p = _combine(spectra[a], spectra[b], TO_PARITY, q)
        to_a = _combine(spectra[b], spectra[p], TO_OPERAND, q)
        to_b = _combine(spectra[a], spectra[p], TO_OPERAND, q)
        beta[p] *= to_p
        beta[a] *= to_a
        beta[b] *= to_b
        touched[[a, b, p]] = True
    beta[touched] = _normalize_rows(beta[touched])
    beta[~touched] = np.nan
    return beta


def bp_denoise(r, tau, d, K: int, graph: OuterGraph, local: str = "pme") -> np.ndarray:
    """Prior field ``q`` for the PME from one round of BP on the outer graph.

    ``tau`` is a scalar or one value per section; ``d`` one amplitude per
    section.  Returns a vector shaped like ``r`` with entries in ``[0, 1]``:
    ``min(1, K * beta)`` with ``beta`` the extrinsic section belief.  Sections
    that no check touches keep the separable prior.
    """
    tau_arr = np.asarray(tau, dtype=np.float64)
    if np.any(tau_arr <= 0):
        raise ValueError("tau must be positive")
    lam = local_beliefs(r, tau, d, graph, K, local)
    beta = extrinsic_beliefs(lam, graph)
    prior = np.minimum(1.0, K * beta)
    isolated = np.isnan(beta[:, 0])
    prior[isolated] = separable_prior(K, graph.v)
    return prior.reshape(-1)


# ---------------------------------------------------------------------------
# Disambiguation
# ---------------------------------------------------------------------------


def top_lists(shat, graph: OuterGraph, list_size: int) -> np.ndarray:
    """``(L, list_size)`` indices of the largest values per section (lower index wins ties)."""
    blocks = np.asarray(shat, dtype=np.float64).reshape(graph.L, graph.q)
    size = min(list_size, graph.q)
    out = np.empty((graph.L, size), dtype=np.int64)
    for l, row in enumerate(blocks):
        cut = np.partition(row, graph.q - size)[graph.q - size]
        above = np.flatnonzero(row > cut)
        at = np.flatnonzero(row == cut)[: size - above.size]
        pick = np.concatenate([above, at])
        # descending value, ascending index on ties
        out[l] = pick[np.lexsort((pick, -row[pick]))]
    return out


def stitch(shat, graph: OuterGraph, K: int, list_size: int | None = None,
           beam_cap: int | None = None) -> list:
    """Recover up to ``K`` payloads from the aggregate estimate ``shat``.

    Beam search over the info sections in order.  A candidate survives only
    if every check whose operands are fixed implies a parity value inside
    that parity section's top list.  Candidates are ranked by the summed
    ``shat`` values of their info and implied parity entries.
    """
    list_size = default_list_size(K) if list_size is None else list_size
    beam_cap = default_beam_cap(K) if beam_cap is None else beam_cap
    blocks = np.asarray(shat, dtype=np.float64).reshape(graph.L, graph.q)
    if np.any(blocks < 0):
        raise ValueError("shat must be non-negative")
    tops = top_lists(blocks, graph, list_size)
    member = np.zeros((graph.L, graph.q), dtype=bool)
    np.put_along_axis(member, tops, True, axis=1)

    half = graph.L // 2
    pending = list(graph.checks)
    cands = tops[0][:, None].astype(np.int64)
    scores = blocks[0, tops[0]].copy()
    for sec in range(1, half):
        opts = tops[sec]
        cands = np.concatenate(
            [np.repeat(cands, opts.size, axis=0), np.tile(opts, cands.shape[0])[:, None]], axis=1
        )
        scores = np.repeat(scores, opts.size) + np.tile(blocks[sec, opts], scores.size)
        ready = [c for c in pending if max(c[0], c[1]) <= sec]
        pending = [c for c in pending if c not in ready]
        for a, b, p in ready:
            par = (cands[:, a] + cands[:, b]) % graph.q
            keep = member[p, par]
            cands, scores = cands[keep], scores[keep] + blocks[p, par[keep]]
        if scores.size > beam_cap:
            best = np.argsort(-scores, kind="stable")[:beam_cap]
            best.sort()
            cands, scores = cands[best], scores[best]
        if scores.size == 0:
            return []
    for a, b, p in pending:
        par = (cands[:, a] + cands[:, b]) % graph.q
        keep = member[p, par]
        cands, scores = cands[keep], scores[keep] + blocks[p, par[keep]]

    keep = scores > 0
    cands, scores = cands[keep], scores[keep]
    order = np.argsort(-scores, kind="stable")
    out = []
    seen = set()
    for i in order:
        msg = info_to_payload(cands[i], graph)
        if msg not in seen:
            seen.add(msg)
            out.append(msg)
        if len(out) == K:
            break
    return out
