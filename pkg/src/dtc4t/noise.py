"""Shot-based noisy circuit simulation with Pauli trajectories and readout errors.

Each shot is one trajectory: after every gate, with probability r1 (one-qubit
gates) or r2 (two-qubit gates), a uniformly random non-identity Pauli string
hits the gate's support. The final state is sampled once in the z basis and
each bit is then flipped through its qubit's confusion matrix.

Random numbers are keyed on ``(seed, gate index)`` and indexed by trajectory,
so a trajectory's noise does not depend on how the batch is chunked.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evolution import TrotterSchedule, first_half_step_gates, second_half_gates
from .model import DisorderedParams
from .observables import power_spectrum
from .recompile import AnsatzCircuit, load_parameter_table, route_next_nearest
from .statevector import GateOp, all_up_state, apply_gate_array, check_size

DEFAULT_SHOTS = 4000
_CHUNK = 1000


@dataclass
class NoiseModel:
    r1: float = 0.0
    r2: float | None = None  # defaults to 10 * r1
    readout: np.ndarray | None = None  # (n, 2, 2), columns are the prepared bit

    def __post_init__(self):
        if self.r2 is None:
            self.r2 = min(10.0 * self.r1, 0.999999)
        for name in ("r1", "r2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if self.readout is not None:
            self.readout = _check_confusion(self.readout)

    @property
    def is_noiseless(self) -> bool:
        return self.r1 == 0 and self.r2 == 0 and self.readout is None

    def confusion(self, n: int) -> np.ndarray:
        if self.readout is None:
            return np.tile(np.eye(2), (n, 1, 1))
        if self.readout.shape[0] < n:
            raise ValueError(f"readout matrices given for {self.readout.shape[0]} qubits, need {n}")
        return self.readout[:n]


def _check_confusion(mats) -> np.ndarray:
    mats = np.array(mats, dtype=float)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3 or mats.shape[1:] != (2, 2):
        raise ValueError(f"confusion matrices must have shape (n, 2, 2), got {mats.shape}")
    if np.any(mats < 0) or not np.allclose(mats.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("confusion matrix columns must be probability vectors")
    return mats


def symmetric_readout(n: int, p: float) -> np.ndarray:
    """Every qubit flips with probability ``p`` regardless of its value."""
    return np.tile(np.array([[1 - p, p], [p, 1 - p]]), (n, 1, 1))


def load_calibration(path) -> np.ndarray:
    """Read ``qubit, p0_given_0, p0_given_1, p1_given_0, p1_given_1`` rows."""
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            q = int(row["qubit"])
            rows[q] = [[float(row["p0_given_0"]), float(row["p0_given_1"])],
                       [float(row["p1_given_0"]), float(row["p1_given_1"])]]
    if sorted(rows) != list(range(len(rows))):
        raise ValueError(f"{path}: qubit indices must be 0..n-1")
    return _check_confusion([rows[q] for q in range(len(rows))])


def save_calibration(path, mats) -> None:
    mats = _check_confusion(mats)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["qubit", "p0_given_0", "p0_given_1", "p1_given_0", "p1_given_1"])
        for q, m in enumerate(mats):
            w.writerow([q] + [repr(float(v)) for v in (m[0, 0], m[0, 1], m[1, 0], m[1, 1])])


@dataclass
class ShotRecord:
    """Measured basis indices, one per shot; bit q of an outcome is qubit q."""

    outcomes: np.ndarray
    n_qubits: int
    seed: int | None = None

    @property
    def n_shots(self) -> int:
        return self.outcomes.size

    @property
    def counts(self) -> dict[str, int]:
        """Bitstring counts; character i of a key is qubit i (0 = up)."""
        c = Counter(self.outcomes.tolist())
        return {format_bits(k, self.n_qubits): v for k, v in sorted(c.items())}

    def bits(self, site: int) -> np.ndarray:
        if not 0 <= site < self.n_qubits:
            raise ValueError(f"site {site} not among the {self.n_qubits} measured qubits")
        return (self.outcomes >> site) & 1


def format_bits(index: int, n: int) -> str:
    return "".join(str((index >> q) & 1) for q in range(n))


# ---------------------------------------------------------------------------
# trajectories


def _apply_pauli(psi: np.ndarray, p: int, q: int, n: int, rows: np.ndarray) -> None:
    """In place: Pauli ``p`` (1=X, 2=Y, 3=Z) on qubit ``q`` for the given batch rows."""
    if rows.size == 0:
        return
    idx = np.arange(2**n)
    bit = (idx >> q) & 1
    sub = psi[rows]
    if p == 1:
        sub = sub[:, idx ^ (1 << q)]
    elif p == 2:
        sub = 1j * np.where(bit == 1, 1.0, -1.0) * sub[:, idx ^ (1 << q)]
    else:
        sub = np.where(bit == 1, -1.0, 1.0) * sub
    psi[rows] = sub


def _check_routed(circuit) -> None:
    for g in circuit:
        if g.n_qubits == 2 and abs(g.support[0] - g.support[1]) != 1:
            raise ValueError(f"unrouted long-range gate on {g.support}; route it first")
        if g.n_qubits > 2:
            raise ValueError("only one- and two-qubit gates are supported")


class TrajectoryBatch:
    """A batch of pure-state trajectories advanced gate by gate."""

    def __init__(self, n_qubits: int, n_shots: int, noise: NoiseModel, seed: int,
                 initial: np.ndarray | None = None):
        check_size(n_qubits)
        if n_shots < 1:
            raise ValueError("n_shots must be >= 1")
        self.n = n_qubits
        self.noise = noise
        self.seed = seed
        self.n_shots = n_shots
        init = all_up_state(n_qubits).amplitudes if initial is None else np.asarray(initial, complex)
        self.psi = np.tile(init, (n_shots, 1))
        self.gate_counter = 0
        self.n_errors = np.zeros(n_shots, dtype=int)

    def run(self, circuit) -> None:
        circuit = list(circuit)
        _check_routed(circuit)
        for g in circuit:
            if max(g.support) >= self.n:
                raise ValueError(f"gate support {g.support} out of range for {self.n} qubits")
            self.psi = apply_gate_array(self.psi, g, self.n)
            r = self.noise.r1 if g.n_qubits == 1 else self.noise.r2
            if r > 0:
                self._depolarize(g.support, r)
            self.gate_counter += 1

    def _depolarize(self, support, r) -> None:
        rng = np.random.default_rng([self.seed, 0, self.gate_counter])
        hit = rng.random(self.n_shots) < r
        k = len(support)
        which = rng.integers(1, 4**k, self.n_shots)  # non-identity Pauli string
        rows_hit = np.flatnonzero(hit)
        if rows_hit.size == 0:
            return
        self.n_errors[rows_hit] += 1
        which = which[rows_hit]
        for j, q in enumerate(support):
            digit = (which >> (2 * (k - 1 - j))) & 3
            for p in (1, 2, 3):
                _apply_pauli(self.psi, p, q, self.n, rows_hit[digit == p])

    def measure(self, tag: int = 0) -> ShotRecord:
        """Sample every trajectory once in the z basis (the batch is not collapsed)."""
        rng = np.random.default_rng([self.seed, 1, tag])
        u = rng.random(self.n_shots)
        ru = rng.random((self.n_shots, self.n))
        out = np.empty(self.n_shots, dtype=np.int64)
        for s in range(0, self.n_shots, _CHUNK):
            probs = np.abs(self.psi[s:s + _CHUNK]) ** 2
            cdf = np.cumsum(probs, axis=1)
            cdf /= cdf[:, -1:]
            out[s:s + _CHUNK] = np.minimum((cdf < u[s:s + _CHUNK, None]).sum(axis=1), 2**self.n - 1)
        if self.noise.readout is not None:
            out = _readout_flip(out, self.noise.confusion(self.n), ru)
        return ShotRecord(out, self.n, self.seed)


def _readout_flip(outcomes: np.ndarray, conf: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = outcomes.copy()
    for q in range(conf.shape[0]):
        b = (outcomes >> q) & 1
        p_flip = np.where(b == 0, conf[q, 1, 0], conf[q, 0, 1])
        flip = u[:, q] < p_flip
        out ^= flip.astype(np.int64) << q
    return out


def noisy_execute(circuit, noise: NoiseModel, n_shots: int = DEFAULT_SHOTS, seed: int = 0,
                  n_qubits: int | None = None, initial=None) -> ShotRecord:
    """Run ``circuit`` (GateOps, nearest-neighbour only) and sample ``n_shots`` bitstrings."""
    circuit = list(circuit)
    if n_qubits is None:
        n_qubits = 1 + max((max(g.support) for g in circuit), default=0)
    batch = TrajectoryBatch(n_qubits, n_shots, noise, seed, initial)
    batch.run(circuit)
    return batch.measure()


# ---------------------------------------------------------------------------
# estimators and mitigation


def magnetization_from_shots(record: ShotRecord, site: int) -> float:
    b = record.bits(site)
    return float((b.size - 2 * b.sum()) / b.size)


def global_sz_from_shots(record: ShotRecord, sites) -> tuple[float, float]:
    """Mean over ``sites`` of <sigma^z> and its standard error over shots."""
    per_shot = np.mean([1 - 2 * record.bits(q) for q in sites], axis=0)
    se = per_shot.std(ddof=1) / math.sqrt(per_shot.size) if per_shot.size > 1 else 0.0
    return float(per_shot.mean()), float(se)


def mitigate_readout(record: ShotRecord, confusion, sites=None) -> np.ndarray:
    """Corrected <sigma^z> per site from tensored inverse confusion matrices.

    Each site's measured marginal ``(p0, p1)`` is mapped through the inverse of
    that qubit's confusion matrix; results are clipped to [-1, 1].
    """
    conf = _check_confusion(confusion)
    sites = range(record.n_qubits) if sites is None else sites
    out = []
    for q in sites:
        c = conf[q]
        det = np.linalg.det(c)
        if abs(det) < 1e-12:
            raise np.linalg.LinAlgError(f"calibration matrix of qubit {q} is singular")
        b = record.bits(q)
        p1 = b.mean()
        corrected = np.linalg.solve(c, np.array([1 - p1, p1]))
        out.append(np.clip(corrected[0] - corrected[1], -1.0, 1.0))
    return np.array(out)


def calibrate_readout(noise: NoiseModel, n_qubits: int, n_shots: int = DEFAULT_SHOTS,
                      seed: int = 0) -> np.ndarray:
    """Estimate tensored confusion matrices from |0...0> and |1...1> preparations."""
    zeros = noisy_execute([], NoiseModel(0.0, 0.0, noise.readout), n_shots, seed, n_qubits)
    ones_init = np.zeros(2**n_qubits, complex)
    ones_init[-1] = 1.0
    ones = noisy_execute([], NoiseModel(0.0, 0.0, noise.readout), n_shots, seed + 1, n_qubits, ones_init)
    mats = np.empty((n_qubits, 2, 2))
    for q in range(n_qubits):
        p10 = zeros.bits(q).mean()
        p01 = 1 - ones.bits(q).mean()
        mats[q] = [[1 - p10, p01], [p10, 1 - p01]]
    return mats


# ---------------------------------------------------------------------------
# circuits


def trotter_period_circuit(dp: DisorderedParams, schedule: TrotterSchedule | None = None) -> list[GateOp]:
    """One Trotterized period as nearest-neighbour gates; a-leg zz gates are routed."""
    schedule = schedule or TrotterSchedule(T=dp.T)
    gates = []
    for t in schedule.step_times():
        for g in first_half_step_gates(dp, t, schedule.dt):
            gates.extend(route_next_nearest(g, dp.N))
    gates.extend(second_half_gates(dp))
    return gates


def trotter_circuit(dp: DisorderedParams, schedule: TrotterSchedule | None, n_periods: int) -> list[GateOp]:
    return trotter_period_circuit(dp, schedule) * n_periods


@dataclass
class NoisySequence:
    k: np.ndarray
    r: float
    sz_mean: np.ndarray
    sz_stderr: np.ndarray
    label: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def peak(self) -> float:
        return power_spectrum(self.sz_mean).at(math.pi / 2)


def write_sequences_csv(path, sequences: list[NoisySequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        labelled = len({s.label for s in sequences}) > 1
        w.writerow(["k", "r", "Sz_mean", "Sz_stderr"] + (["circuit"] if labelled else []))
        for s in sequences:
            for k, m, e in zip(s.k, s.sz_mean, s.sz_stderr):
                w.writerow([int(k), repr(float(s.r)), f"{m:.12g}", f"{e:.12g}"]
                           + ([s.label] if labelled else []))


def _a_sites(n: int) -> list[int]:
    return list(range(0, n, 2))


def _sz_or_mitigated(record: ShotRecord, noise: NoiseModel, mitigate: bool, n: int):
    sites = _a_sites(n)
    if mitigate and noise.readout is not None:
        vals = mitigate_readout(record, noise.confusion(n), sites)
        _, se = global_sz_from_shots(record, sites)
        return float(vals.mean()), se
    return global_sz_from_shots(record, sites)


def trotter_noisy_sequence(dp: DisorderedParams, schedule: TrotterSchedule | None, noise: NoiseModel,
                           n_periods: int = 20, n_shots: int = DEFAULT_SHOTS, seed: int = 0,
                           mitigate: bool = False) -> NoisySequence:
    """Shot estimates of <S_z>(kT), k = 1..n_periods, from the Trotter circuits.

    The k-period circuit is the (k-1)-period circuit plus one more period, so
    trajectories are advanced period by period and sampled after each one.
    """
    period = trotter_period_circuit(dp, schedule)
    batch = TrajectoryBatch(dp.N, n_shots, noise, seed)
    means, errs = [], []
    for k in range(1, n_periods + 1):
        batch.run(period)
        m, e = _sz_or_mitigated(batch.measure(k), noise, mitigate, dp.N)
        means.append(m)
        errs.append(e)
    return NoisySequence(np.arange(1, n_periods + 1), noise.r1, np.array(means), np.array(errs), "trotter",
                         {"two_qubit_gates_per_period": sum(g.n_qubits == 2 for g in period)})


def noise_threshold_study(dp: DisorderedParams, schedule: TrotterSchedule | None, r_list,
                          n_periods: int = 20, n_shots: int = DEFAULT_SHOTS, seed: int = 0,
                          r2_factor: float = 10.0, readout=None, mitigate: bool = False) -> list[NoisySequence]:
    out = []
    for i, r in enumerate(r_list):
        noise = NoiseModel(r, min(r2_factor * r, 0.999999), readout)
        out.append(trotter_noisy_sequence(dp, schedule, noise, n_periods, n_shots, seed + 1000 * i, mitigate))
    return out


def recompiled_noisy_sequence(ansatz: AnsatzCircuit, parameters: dict[int, np.ndarray], noise: NoiseModel,
                              n_periods: int | None = None, n_shots: int = DEFAULT_SHOTS, seed: int = 0,
                              mitigate: bool = False) -> NoisySequence:
    ks = sorted(k for k in parameters if k >= 1)
    if n_periods is not None:
        missing = [k for k in range(1, n_periods + 1) if k not in parameters]
        if missing:
            raise KeyError(f"recompiled parameters missing for k={missing}")
        ks = list(range(1, n_periods + 1))
    means, errs = [], []
    for k in ks:
        batch = TrajectoryBatch(ansatz.n_qubits, n_shots, noise, seed + 7919 * k)
        batch.run(ansatz.to_gate_ops(parameters[k]))
        m, e = _sz_or_mitigated(batch.measure(k), noise, mitigate, ansatz.n_qubits)
        means.append(m)
        errs.append(e)
    return NoisySequence(np.array(ks), noise.r1, np.array(means), np.array(errs), "recompiled")


def compare_recompiled_vs_trotter(noise: NoiseModel, recompiled, dp: DisorderedParams,
                                  schedule: TrotterSchedule | None = None, n_periods: int = 20,
                                  n_shots: int = DEFAULT_SHOTS, seed: int = 0,
                                  mitigate: bool = False) -> tuple[NoisySequence, NoisySequence]:
    """Paired noisy sequences; ``recompiled`` is a table path or ``(ansatz, params)``."""
    if isinstance(recompiled, (str, Path)):
        ansatz, params = load_parameter_table(recompiled)
    else:
        ansatz, params = recompiled
    if ansatz.n_qubits != dp.N:
        raise ValueError(f"recompiled circuits act on {ansatz.n_qubits} qubits, model has {dp.N}")
    rec = recompiled_noisy_sequence(ansatz, params, noise, n_periods, n_shots, seed, mitigate)
    trot = trotter_noisy_sequence(dp, schedule, noise, n_periods, n_shots, seed + 1, mitigate)
    return rec, trot
