"""Exact diagonalization of the one-period unitary and eigenstate diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .evolution import FloquetStepper, TrotterSchedule, a_leg_magnetization, reference_cycle
from .model import DisorderedParams, ModelParams, clean
from .observables import PowerSpectrum, power_spectrum
from .statevector import ResourceError, all_up_state, z_signs

ED_CAP = 12


@dataclass
class FloquetSpectrum:
    quasienergies: np.ndarray  # ascending, in (-pi/T, pi/T]
    eigenvectors: np.ndarray  # columns
    T: float = 1.0

    @property
    def dim(self) -> int:
        return self.quasienergies.size

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.dim)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "epsilon_T_over_pi"])
            for n, e in enumerate(self.quasienergies):
                w.writerow([n, f"{e * self.T / math.pi:.12g}"])


def build_floquet_unitary(dp: DisorderedParams, schedule: TrotterSchedule | None = None,
                          method: str = "trotter", fine_dt: float = 5e-4) -> np.ndarray:
    """Dense one-period unitary; columns are the cycle applied to basis states.

    ``method='reference'`` uses the midpoint/Strang reference propagator
    instead of the production Trotter cycle.
    """
    if dp.N > ED_CAP:
        raise ResourceError(f"dense Floquet unitary capped at N={ED_CAP}, got N={dp.N}")
    if method == "reference":
        return reference_cycle(dp, fine_dt)
    if method != "trotter":
        raise ValueError(f"unknown method {method!r}")
    stepper = FloquetStepper(dp, schedule)
    rows = stepper.cycle(np.eye(2**dp.N, dtype=complex))
    return np.ascontiguousarray(rows.T)


def fold_quasienergy(eps, T: float = 1.0):
    """Map onto (-pi/T, pi/T]."""
    period = 2 * math.pi / T
    e = np.mod(np.asarray(eps, dtype=float) + math.pi / T, period) - math.pi / T
    return np.where(e <= -math.pi / T + 1e-15, e + period, e)


def diagonalize(U: np.ndarray, T: float = 1.0, unitarity_tol: float = 1e-6) -> FloquetSpectrum:
    """Eigenphases via complex Schur form, which stays orthonormal under degeneracy."""
    d = U.shape[0]
    err = np.abs(U.conj().T @ U - np.eye(d)).max()
    if err > unitarity_tol:
        raise ValueError(f"matrix is not unitary (max |U^dag U - 1| = {err:.2e})")
    tri, vecs = schur(U, output="complex")
    lam = np.diag(tri)
    eps = fold_quasienergy(-np.angle(lam) / T, T)
    order = np.argsort(eps, kind="stable")
    return FloquetSpectrum(eps[order], vecs[:, order], T)


def floquet_spectrum(dp: DisorderedParams, schedule: TrotterSchedule | None = None,
                     method: str = "trotter") -> FloquetSpectrum:
    return diagonalize(build_floquet_unitary(dp, schedule, method), dp.T)


# ---------------------------------------------------------------------------
# quasienergy quadruplets


@dataclass
class QuadrupletReport:
    epsilon: np.ndarray
    plus_partner: np.ndarray  # quasienergy nearest eps + pi/2T
    minus_partner: np.ndarray
    plus_gap: np.ndarray  # circular distance to eps + pi/2T
    minus_gap: np.ndarray
    tolerance: float

    @property
    def fraction(self) -> float:
        ok = (self.plus_gap < self.tolerance) & (self.minus_gap < self.tolerance)
        return float(np.mean(ok))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "plus_gap", "minus_gap"])
            for e, p, m in zip(self.epsilon, self.plus_gap, self.minus_gap):
                w.writerow([f"{e:.12g}", f"{p:.12g}", f"{m:.12g}"])


def _nearest_circular(sorted_eps: np.ndarray, targets: np.ndarray, period: float):
    """Nearest element of ``sorted_eps`` to each target, modulo ``period``."""
    t = np.mod(targets - sorted_eps[0], period) + sorted_eps[0]
    ext = np.concatenate([sorted_eps[-1:] - period, sorted_eps, sorted_eps[:1] + period])
    pos = np.searchsorted(ext, t)
    pos = np.clip(pos, 1, ext.size - 1)
    left, right = ext[pos - 1], ext[pos]
    pick = np.where(np.abs(t - left) <= np.abs(right - t), left, right)
    gap = np.abs(t - pick)
    partner = fold_quasienergy(pick, 2 * math.pi / period)
    return partner, gap


def quadruplet_analysis(spectrum: FloquetSpectrum, tolerance: float = 0.02 * math.pi / 2) -> QuadrupletReport:
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    T = spectrum.T
    period = 2 * math.pi / T
    eps = np.sort(spectrum.quasienergies)
    shift = math.pi / (2 * T)
    pp, pg = _nearest_circular(eps, eps + shift, period)
    mp, mg = _nearest_circular(eps, eps - shift, period)
    return QuadrupletReport(eps, pp, mp, pg, mg, tolerance)


# ---------------------------------------------------------------------------
# eigenstate order parameters


def chi_zz(spectrum: FloquetSpectrum) -> float:
    """Eigenstate-averaged squared zz correlator over all distinct site pairs."""
    n = spectrum.n_qubits
    probs = np.abs(spectrum.eigenvectors) ** 2  # (basis, eigenstate)
    z = z_signs(n)
    total = 0.0
    n_pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            corr = (z[:, i] * z[:, j]) @ probs
            total += float(np.sum(corr**2))
            n_pairs += 1
    return total / (n_pairs * spectrum.dim)


def s_operator_diagonal(n: int) -> np.ndarray:
    """Diagonal of sigma^z_{a,0} + i sigma^z_{b,0} (chain sites 0 and 1)."""
    z = z_signs(n)
    return z[:, 0] + 1j * z[:, 1]


def sample_eigenstates(dim: int, n_qubits: int, seed: int = 0, size: int | None = None) -> np.ndarray:
    """Random eigenstate indices without replacement: 12 for N=4, 32 above."""
    if size is None:
        size = 12 if n_qubits <= 4 else 32
    size = min(size, dim)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(dim, size=size, replace=False))


def s_pi_half(spectrum: FloquetSpectrum, operator=None, delta: float | None = None,
              sample=None, seed: int = 0) -> float:
    """Fraction of |<n|O|m>|^2 weight at quasienergy shift eps_n - eps_m = pi/2T (mod 2pi/T).

    ``operator`` may be a diagonal (1-D array) or a dense matrix; the default
    is sigma^z_{a,0} + i sigma^z_{b,0}. ``sample`` selects the eigenstates n.
    """
    T = spectrum.T
    if delta is None:
        delta = 0.05 * math.pi / T
    if not 0 < delta < math.pi / (4 * T):
        raise ValueError(f"delta must lie in (0, pi/4T), got {delta}")
    n = spectrum.n_qubits
    if sample is None:
        sample = sample_eigenstates(spectrum.dim, n, seed)
    sample = np.asarray(sample, dtype=int)
    if sample.size == 0:
        raise ValueError("empty eigenstate sample")
    if operator is None:
        operator = s_operator_diagonal(n)
    V = spectrum.eigenvectors
    vs = V[:, sample]
    if np.ndim(operator) == 1:
        elems = vs.conj().T @ (operator[:, None] * V)
    else:
        elems = vs.conj().T @ (np.asarray(operator) @ V)
    weights = np.abs(elems) ** 2  # (sample, m)
    period = 2 * math.pi / T
    diff = spectrum.quasienergies[sample][:, None] - spectrum.quasienergies[None, :]
    off = np.mod(diff - math.pi / (2 * T) + period / 2, period) - period / 2
    num = weights[np.abs(off) <= delta].sum()
    den = weights.sum()
    return float(num / den) if den > 0 else 0.0


# ---------------------------------------------------------------------------
# finite-size scaling


@dataclass
class ScalingRow:
    N: int
    chi_zz: float
    s_pi_half: float
    spectrum: PowerSpectrum
    quarter_peak: float
    three_quarter_peak: float


def stroboscopic_from_unitary(U: np.ndarray, n_qubits: int, n_periods: int) -> np.ndarray:
    """<S_z>(kT), k = 0..n_periods, by repeated application of a dense U."""
    psi = all_up_state(n_qubits).amplitudes
    out = np.empty(n_periods + 1)
    out[0] = a_leg_magnetization(psi, n_qubits).mean()
    for k in range(1, n_periods + 1):
        psi = U @ psi
        out[k] = a_leg_magnetization(psi, n_qubits).mean()
    return out


def eigen_power_spectrum_scaling(params: ModelParams, N_list=(4, 6, 8), n_periods: int = 400,
                                 schedule: TrotterSchedule | None = None, seed: int = 0,
                                 delta: float | None = None) -> list[ScalingRow]:
    rows = []
    for N in N_list:
        if N > ED_CAP:
            raise ResourceError(f"finite-size scaling capped at N={ED_CAP}, got {N}")
        p = ModelParams(params.h, params.J, params.M, params.T, N // 2)
        U = build_floquet_unitary(clean(p), schedule)
        spec = diagonalize(U, p.T)
        sz = stroboscopic_from_unitary(U, N, n_periods)
        ps = power_spectrum(sz[1:])
        rows.append(ScalingRow(
            N, chi_zz(spec), s_pi_half(spec, delta=delta, seed=seed), ps,
            ps.at(math.pi / 2), ps.at(3 * math.pi / 2),
        ))
    return rows
