"""System parameters and power profile for the unsourced access experiment."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


def default_list_size(K: int) -> int:
    """Per-section stitching list: K plus 15% slack, rounded up."""
    return (115 * K + 99) // 100


def default_beam_cap(K: int) -> int:
    return 10 * K


class ConfigError(ValueError):
    """Raised when a parameter set violates one of its consistency constraints."""


@dataclass(frozen=True)
class SystemParams:
    """Scalar parameters of one experiment.

    Defaults reproduce the reference operating point: 100 users with
    128-bit payloads, 16 sections of 16 bits, 38400 channel uses.
    """

    K: int = 100
    w: int = 128
    L: int = 16
    v: int = 16
    n: int = 38400
    ebno_db: float = 3.0
    iters: int = 10
    list_size: int | None = None
    beam_cap: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.K < 1:
            raise ConfigError(f"K must be >= 1 (got {self.K})")
        if self.L < 1 or self.v < 1 or self.n < 1:
            raise ConfigError("L, v and n must be positive")
        if self.L % 2:
            raise ConfigError(f"L must be even (got {self.L})")
        if self.w != (self.L // 2) * self.v:
            raise ConfigError(
                f"w must equal (L/2)*v = {(self.L // 2) * self.v} (got w={self.w})"
            )
        if self.n % self.L:
            raise ConfigError(f"n must be divisible by L (n={self.n}, L={self.L})")
        if self.iters < 0:
            raise ConfigError("iters must be >= 0")
        if self.list_size is not None and self.list_size < 1:
            raise ConfigError("list_size must be >= 1")
        if self.beam_cap is not None and self.beam_cap < 1:
            raise ConfigError("beam_cap must be >= 1")

    @property
    def section_size(self) -> int:
        return 1 << self.v

    @property
    def width(self) -> int:
        return self.L << self.v

    @property
    def rows_per_section(self) -> int:
        return self.n // self.L

    @property
    def symbol_energy(self) -> float:
        """Per-symbol energy P from Eb/N0 = nP / 2w with unit-variance noise."""
        return 2.0 * self.w / self.n * 10.0 ** (self.ebno_db / 10.0)

    @property
    def effective_list_size(self) -> int:
        return default_list_size(self.K) if self.list_size is None else self.list_size

    @property
    def effective_beam_cap(self) -> int:
        return default_beam_cap(self.K) if self.beam_cap is None else self.beam_cap

    def with_(self, **kw) -> "SystemParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class PowerProfile:
    """Per-section amplitudes d (the diagonal of D, one value per section)."""

    d: np.ndarray
    P: float
    ebno_db: float

    @classmethod
    def uniform(cls, params: SystemParams) -> "PowerProfile":
        P = params.symbol_energy
        d = np.full(params.L, np.sqrt(params.n * P / params.L))
        return cls(d=d, P=P, ebno_db=params.ebno_db)

    def expand(self, section_size: int) -> np.ndarray:
        """Amplitude of every entry of a state vector."""
        return np.repeat(self.d, section_size)
