"""Stroboscopic Floquet evolution of the driven ladder.

The first half period is split into first-order Trotter steps. Each step
applies the a-leg zz exponentials and then the rung xx/yy exponentials, with
the yy modulation evaluated at the start time of the step. The second half is
a single exact x rotation of every b site.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .model import DisorderedParams, bond_sites, b_sites, hamiltonian_terms, rung_sites, yy_modulation
from .statevector import (
    GateOp, ResourceError, StateVector, all_up_state, apply_1q, apply_2q, apply_gate_array,
    check_size, expectation_z_array, rx, two_site_expm,
)

REFERENCE_DENSE_CAP = 10


@dataclass(frozen=True)
class TrotterSchedule:
    """First-order Trotter grid for the first half period.

    ``dt`` is rounded down, if needed, so that ``(T/2)/dt`` is an integer;
    ``requested_dt`` keeps the original value.
    """

    dt: float = 0.01
    T: float = 1.0
    requested_dt: float | None = None
    ordering: tuple[str, ...] = ("zz_even", "zz_odd", "rung")

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ValueError(f"need dt > 0 and T > 0, got dt={self.dt}, T={self.T}")
        n = math.ceil(round((self.T / 2) / self.dt, 9))
        dt = (self.T / 2) / n
        if self.requested_dt is None:
            object.__setattr__(self, "requested_dt", self.dt)
        object.__setattr__(self, "dt", dt)

    @property
    def n_steps(self) -> int:
        return int(round((self.T / 2) / self.dt))

    @property
    def adjusted(self) -> bool:
        return self.dt != self.requested_dt

    def step_times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt


@dataclass
class StroboscopicRecord:
    times: np.ndarray  # k T, k = 0..n_periods
    per_site_z: np.ndarray  # (n_periods + 1, N0), a-leg sites
    global_Sz: np.ndarray

    @property
    def n_periods(self) -> int:
        return len(self.times) - 1

    def to_csv(self, path) -> None:
        n0 = self.per_site_z.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "t", "Sz"] + [f"sz_site_{i}" for i in range(n0)])
            for k, (t, sz, row) in enumerate(zip(self.times, self.global_Sz, self.per_site_z)):
                w.writerow([k, _fmt(t), _fmt(sz)] + [_fmt(v) for v in row])


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def a_leg_magnetization(psi: np.ndarray, n: int) -> np.ndarray:
    """<sigma^z> on each a site; ``(N0,)`` or ``(B, N0)`` for a batch."""
    vals = [expectation_z_array(psi, q, n) for q in range(0, n, 2)]
    return np.stack(vals, axis=-1)


class FloquetStepper:
    """Precomputed pieces of the Trotterized Floquet cycle for one parameter set.

    Works on single states ``(D,)`` and on batches ``(B, D)``.
    """

    def __init__(self, dp: DisorderedParams, schedule: TrotterSchedule | None = None):
        self.dp = dp
        self.schedule = schedule or TrotterSchedule(T=dp.T)
        if abs(self.schedule.T - dp.T) > 1e-12:
            raise ValueError(f"schedule period {self.schedule.T} != model period {dp.T}")
        self.n = dp.N
        check_size(self.n)
        self._zz_cache: dict[float, np.ndarray] = {}
        self._zz_energy = zz_diagonal(dp)
        self._rx = [rx(m * dp.T) for m in dp.M]

    def zz_phase(self, dt: float) -> np.ndarray:
        ph = self._zz_cache.get(dt)
        if ph is None:
            ph = np.exp(1j * dt * self._zz_energy)
            self._zz_cache[dt] = ph
        return ph

    def rung_gates(self, t: float, dt: float) -> list[np.ndarray]:
        c = yy_modulation(t, self.dp.omega)
        return [two_site_expm(h / 2, -(h / 2) * c, 0.0, dt) for h in self.dp.h]

    def first_half_step(self, psi: np.ndarray, t: float, dt: float) -> np.ndarray:
        if np.any(self.dp.J):
            psi = psi * self.zz_phase(dt)
        for (q0, q1), u in zip(rung_sites(self.dp.N0), self.rung_gates(t, dt)):
            psi = apply_2q(psi, u, q0, q1, self.n)
        return psi

    def first_half(self, psi: np.ndarray) -> np.ndarray:
        dt = self.schedule.dt
        for t in self.schedule.step_times():
            psi = self.first_half_step(psi, t, dt)
        return psi

    def second_half(self, psi: np.ndarray) -> np.ndarray:
        for q, u in zip(b_sites(self.dp.N0), self._rx):
            psi = apply_1q(psi, u, q, self.n)
        return psi

    def cycle(self, psi: np.ndarray) -> np.ndarray:
        return self.second_half(self.first_half(psi))


def zz_diagonal(dp: DisorderedParams) -> np.ndarray:
    """Diagonal of sum_i J_i Z_{2i} Z_{2i+2} in the computational basis."""
    idx = np.arange(2**dp.N)
    e = np.zeros(idx.size)
    for (q0, q1), J in zip(bond_sites(dp.N0), dp.J):
        e += J * (1.0 - 2.0 * (((idx >> q0) ^ (idx >> q1)) & 1))
    return e


# ---------------------------------------------------------------------------
# public operations


def first_half_step(state: StateVector, dp: DisorderedParams, t_within_period: float,
                    dt: float) -> StateVector:
    if not 0 <= t_within_period < dp.T / 2:
        raise ValueError(f"step start time {t_within_period} outside [0, T/2)")
    stepper = FloquetStepper(dp, TrotterSchedule(dt=dp.T / 2, T=dp.T))
    return StateVector(stepper.first_half_step(state.amplitudes, t_within_period, dt), state.n_qubits)


def first_half_step_gates(dp: DisorderedParams, t: float, dt: float) -> list[GateOp]:
    """One Trotter step as an explicit gate list in the frozen ordering."""
    bonds = bond_sites(dp.N0)
    gates = []
    for parity in (0, 1):
        for i, ((q0, q1), J) in enumerate(zip(bonds, dp.J)):
            if i % 2 == parity:
                gates.append(GateOp((q0, q1), two_site_expm(0.0, 0.0, J, dt), "zz"))
    c = yy_modulation(t, dp.omega)
    for (q0, q1), h in zip(rung_sites(dp.N0), dp.h):
        gates.append(GateOp((q0, q1), two_site_expm(h / 2, -(h / 2) * c, 0.0, dt), "rung"))
    return gates


def second_half_gates(dp: DisorderedParams) -> list[GateOp]:
    return [GateOp((q,), rx(m * dp.T), "rx") for q, m in zip(b_sites(dp.N0), dp.M)]


def second_half(state: StateVector, dp: DisorderedParams) -> StateVector:
    psi = state.amplitudes
    for g in second_half_gates(dp):
        psi = apply_gate_array(psi, g, state.n_qubits)
    return StateVector(psi, state.n_qubits)


def floquet_cycle(state: StateVector, dp: DisorderedParams,
                  schedule: TrotterSchedule | None = None) -> StateVector:
    stepper = FloquetStepper(dp, schedule)
    return StateVector(stepper.cycle(state.amplitudes), state.n_qubits)


def evolve_stroboscopic(dp: DisorderedParams, schedule: TrotterSchedule | None = None,
                        n_periods: int = 20, initial: StateVector | None = None,
                        stepper: FloquetStepper | None = None) -> StroboscopicRecord:
    if n_periods < 1:
        raise ValueError(f"n_periods must be >= 1, got {n_periods}")
    stepper = stepper or FloquetStepper(dp, schedule)
    psi = (initial or all_up_state(dp.N)).amplitudes
    per_site = np.empty((n_periods + 1, dp.N0))
    per_site[0] = a_leg_magnetization(psi, dp.N)
    for k in range(1, n_periods + 1):
        psi = stepper.cycle(psi)
        per_site[k] = a_leg_magnetization(psi, dp.N)
    times = np.arange(n_periods + 1) * dp.T
    return StroboscopicRecord(times, per_site, per_site.mean(axis=1))


def evolve_batch(dp: DisorderedParams, states: np.ndarray, n_periods: int,
                 schedule: TrotterSchedule | None = None) -> np.ndarray:
    """Evolve a batch ``(B, D)``; returns ``(n_periods + 1, B, N0)`` a-leg magnetizations."""
    stepper = FloquetStepper(dp, schedule)
    out = np.empty((n_periods + 1, states.shape[0], dp.N0))
    psi = states
    out[0] = a_leg_magnetization(psi, dp.N)
    for k in range(1, n_periods + 1):
        psi = stepper.cycle(psi)
        out[k] = a_leg_magnetization(psi, dp.N)
    return out


# ---------------------------------------------------------------------------
# reference propagator


def reference_cycle(dp: DisorderedParams, fine_dt: float = 5e-4,
                    state: StateVector | None = None):
    """Near-exact one-period propagator used as a convergence oracle.

    Built independently of the production path: each local term of
    ``hamiltonian_terms`` is exponentiated with a generic dense ``expm`` and
    the first half uses symmetric (Strang) splitting with the yy modulation at
    the midpoint of every fine step, which is second order in ``fine_dt``.
    The second half is exact because its terms commute.

    Returns the evolved state when ``state`` is given, otherwise the dense
    unitary (only for N <= 10).
    """
    n = dp.N
    if state is None:
        if n > REFERENCE_DENSE_CAP:
            raise ResourceError(f"dense reference unitary capped at N={REFERENCE_DENSE_CAP}")
        psi = np.eye(2**n, dtype=complex)  # rows are evolved basis states
    else:
        psi = state.amplitudes.copy()

    steps = math.ceil(round((dp.T / 2) / fine_dt, 9))
    h = (dp.T / 2) / steps
    n0 = dp.N0
    zz_half = []
    for sup, mat in hamiltonian_terms(dp, "first", 0.0)[n0:]:
        zz_half.append((sup, expm(-1j * mat * h / 2)))
    for s in range(steps):
        t_mid = (s + 0.5) * h
        for sup, u in zz_half:
            psi = apply_2q(psi, u, sup[0], sup[1], n)
        for sup, mat in hamiltonian_terms(dp, "first", t_mid)[:n0]:
            psi = apply_2q(psi, expm(-1j * mat * h), sup[0], sup[1], n)
        for sup, u in zz_half:
            psi = apply_2q(psi, u, sup[0], sup[1], n)
    for sup, mat in hamiltonian_terms(dp, "second"):
        psi = apply_1q(psi, expm(-1j * mat * dp.T / 2), sup[0], n)

    if state is None:
        return psi.T
    return StateVector(psi, state.n_qubits)
