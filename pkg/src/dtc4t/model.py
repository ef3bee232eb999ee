"""Driven spin-1/2 ladder: parameters, chain mapping, disorder, Hamiltonian terms.

The ladder has two legs ``a`` and ``b`` of length ``N0``. Sites are laid out on
a chain as ``(a, i) -> 2i`` and ``(b, i) -> 2i + 1`` (0-based), so rungs are
nearest neighbours on the chain and the a-leg bonds are next-nearest
neighbours.

First half period (0 <= t < T/2)::

    H1(t) = sum_i -(h_i/2) (X_ai X_bi - (1 + cos wt) Y_ai Y_bi)
            - sum_i J_i Z_ai Z_a(i+1)

Second half period::

    H2 = sum_i M_i X_bi
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .statevector import X, Y, Z


@dataclass(frozen=True)
class ModelParams:
    h: float
    J: float
    M: float
    T: float = 1.0
    N0: int = 4

    @property
    def omega(self) -> float:
        return 2 * math.pi / self.T

    @property
    def N(self) -> int:
        return 2 * self.N0

    def to_pi_units(self) -> dict:
        """Couplings as multiples of pi/T, the form used in config files."""
        return {
            "hT_over_pi": self.h * self.T / math.pi,
            "JT_over_pi": self.J * self.T / math.pi,
            "MT_over_pi": self.M * self.T / math.pi,
            "T": self.T,
            "N0": self.N0,
        }


def make_params(h: float, J: float, M: float, T: float = 1.0, N0: int = 4) -> ModelParams:
    if not T > 0:
        raise ValueError(f"driving period must be positive, got T={T}")
    if int(N0) != N0 or N0 < 2:
        raise ValueError(f"ladder length N0 must be an integer >= 2, got {N0}")
    for name, val in (("h", h), ("J", J), ("M", M), ("T", T)):
        if not math.isfinite(val):
            raise ValueError(f"{name} must be finite, got {val}")
    return ModelParams(float(h), float(J), float(M), float(T), int(N0))


def params_from_pi(hT_over_pi: float, JT_over_pi: float, MT_over_pi: float,
                   T: float = 1.0, N0: int = 4) -> ModelParams:
    """Build parameters from dimensionless angles, e.g. ``hT_over_pi=0.9``."""
    return make_params(hT_over_pi * math.pi / T, JT_over_pi * math.pi / T,
                       MT_over_pi * math.pi / T, T, N0)


@dataclass(frozen=True)
class SiteIndex:
    ladder: str
    rung: int

    def __post_init__(self):
        if self.ladder not in ("a", "b"):
            raise ValueError(f"ladder must be 'a' or 'b', got {self.ladder!r}")
        if self.rung < 0:
            raise ValueError(f"rung index must be >= 0, got {self.rung}")

    @property
    def chain_index(self) -> int:
        return 2 * self.rung + (0 if self.ladder == "a" else 1)

    @classmethod
    def from_chain(cls, q: int) -> SiteIndex:
        return cls("a" if q % 2 == 0 else "b", q // 2)


@dataclass(frozen=True)
class DisorderSpec:
    """Half-widths are fractions of the clean value (0.08 means dP = 0.08 P)."""

    dh: float = 0.0
    dJ: float = 0.0
    dM: float = 0.0
    n_realizations: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("dh", "dJ", "dM"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")

    @property
    def is_clean(self) -> bool:
        return self.dh == 0 and self.dJ == 0 and self.dM == 0


@dataclass(frozen=True, eq=False)
class DisorderedParams:
    h: np.ndarray  # per rung, length N0
    J: np.ndarray  # per a-leg bond, length N0 - 1
    M: np.ndarray  # per b site, length N0
    T: float = 1.0
    base: ModelParams | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("h", "J", "M"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n0 = self.h.size
        if self.M.size != n0 or self.J.size != n0 - 1:
            raise ValueError(
                f"inconsistent array lengths h={self.h.size}, J={self.J.size}, M={self.M.size}"
            )

    @property
    def N0(self) -> int:
        return self.h.size

    @property
    def N(self) -> int:
        return 2 * self.N0

    @property
    def omega(self) -> float:
        return 2 * math.pi / self.T

    def __eq__(self, other):
        if not isinstance(other, DisorderedParams):
            return NotImplemented
        return (self.T == other.T and np.array_equal(self.h, other.h)
                and np.array_equal(self.J, other.J) and np.array_equal(self.M, other.M))


def clean(params: ModelParams) -> DisorderedParams:
    n0 = params.N0
    return DisorderedParams(
        np.full(n0, params.h), np.full(n0 - 1, params.J), np.full(n0, params.M),
        params.T, params,
    )


def sample_disorder(params: ModelParams, spec: DisorderSpec, realization_index: int) -> DisorderedParams:
    """One disorder realization; a pure function of ``(spec.seed, realization_index)``."""
    if not 0 <= realization_index < spec.n_realizations:
        raise IndexError(
            f"realization {realization_index} out of range [0, {spec.n_realizations})"
        )
    rng = np.random.default_rng([spec.seed, realization_index])
    n0 = params.N0
    # always draw all three streams so one width never shifts another's samples
    uh = rng.uniform(-1.0, 1.0, n0)
    uJ = rng.uniform(-1.0, 1.0, n0 - 1)
    uM = rng.uniform(-1.0, 1.0, n0)
    return DisorderedParams(
        params.h * (1.0 + spec.dh * uh),
        params.J * (1.0 + spec.dJ * uJ),
        params.M * (1.0 + spec.dM * uM),
        params.T, params,
    )


def realizations(params: ModelParams, spec: DisorderSpec):
    for k in range(spec.n_realizations):
        yield sample_disorder(params, spec, k)


# ---------------------------------------------------------------------------
# Hamiltonian terms


def rung_sites(n0: int) -> list[tuple[int, int]]:
    return [(2 * i, 2 * i + 1) for i in range(n0)]


def bond_sites(n0: int) -> list[tuple[int, int]]:
    return [(2 * i, 2 * i + 2) for i in range(n0 - 1)]


def b_sites(n0: int) -> list[int]:
    return [2 * i + 1 for i in range(n0)]


def yy_modulation(t: float, omega: float) -> float:
    return 1.0 + math.cos(omega * t)


def hamiltonian_terms(dp: DisorderedParams, half: str, t: float = 0.0):
    """Local terms of H(t) as ``(support, hermitian matrix)`` pairs.

    ``half='first'`` gives the N0 rung terms followed by the N0-1 a-leg zz
    terms; ``half='second'`` gives the N0 single-site field terms.
    """
    if half == "first":
        c = yy_modulation(t, dp.omega)
        xx, yy, zz = np.kron(X, X), np.kron(Y, Y), np.kron(Z, Z)
        terms = [
            (sup, -(h / 2) * (xx - c * yy)) for sup, h in zip(rung_sites(dp.N0), dp.h)
        ]
        terms += [(sup, -J * zz) for sup, J in zip(bond_sites(dp.N0), dp.J)]
        return terms
    if half == "second":
        return [((q,), M * X) for q, M in zip(b_sites(dp.N0), dp.M)]
    raise ValueError(f"half must be 'first' or 'second', got {half!r}")
