"""Variational recompilation of stroboscopic states into fixed-depth circuits.

The ansatz is an initial layer of U3 gates on every qubit followed by
``n_layers`` combined layers. A combined layer is an odd sublayer (CX on
pairs (2i, 2i+1), then U3 on both qubits of each pair) and an even sublayer
(CX on (2i+1, 2i+2), then U3 on both).

Costs are minimized with box-constrained L-BFGS-B wrapped in basin hops.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .evolution import FloquetStepper, TrotterSchedule
from .model import DisorderedParams
from .statevector import (
    CX, SWAP, GateOp, StateVector, all_up_state, apply_1q, apply_permutation_cx,
)

TWO_PI = 2 * math.pi
TABLE_VERSION = 1


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([
        [c, -np.exp(1j * lam) * s],
        [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
    ])


def u3_batch(theta, phi, lam) -> np.ndarray:
    """Stack of U3 matrices, shape ``(len(theta), 2, 2)``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    out = np.empty((np.size(theta), 2, 2), dtype=complex)
    out[:, 0, 0] = c
    out[:, 0, 1] = -np.exp(1j * lam) * s
    out[:, 1, 0] = np.exp(1j * phi) * s
    out[:, 1, 1] = np.exp(1j * (phi + lam)) * c
    return out


@dataclass(frozen=True)
class AnsatzGate:
    kind: str  # "u3" or "cx"
    qubits: tuple[int, ...]
    offset: int = -1  # first of the three angles for u3


@dataclass
class AnsatzCircuit:
    n_qubits: int
    n_layers: int
    gates: tuple[AnsatzGate, ...]
    parameters: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.parameters is None:
            self.parameters = np.zeros(self.n_params)

    @property
    def n_params(self) -> int:
        return 3 * sum(g.kind == "u3" for g in self.gates)

    @property
    def u3_gates(self) -> list[AnsatzGate]:
        return [g for g in self.gates if g.kind == "u3"]

    @property
    def n_cx(self) -> int:
        return sum(g.kind == "cx" for g in self.gates)

    def with_parameters(self, params) -> AnsatzCircuit:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        return AnsatzCircuit(self.n_qubits, self.n_layers, self.gates, params.copy())

    def to_gate_ops(self, params=None) -> list[GateOp]:
        p = self.parameters if params is None else np.asarray(params)
        ops = []
        for g in self.gates:
            if g.kind == "u3":
                ops.append(GateOp(g.qubits, u3_matrix(*p[g.offset:g.offset + 3]), "u3"))
            else:
                ops.append(GateOp(g.qubits, CX, "cx"))
        return ops


def odd_pairs(n: int) -> list[tuple[int, int]]:
    return [(q, q + 1) for q in range(0, n - 1, 2)]


def even_pairs(n: int) -> list[tuple[int, int]]:
    return [(q, q + 1) for q in range(1, n - 1, 2)]


def build_ansatz(n_qubits: int, n_layers: int = 3) -> AnsatzCircuit:
    if n_qubits < 2:
        raise ValueError("ansatz needs at least two qubits")
    if n_layers < 0:
        raise ValueError("n_layers must be >= 0")
    gates = []
    offset = 0

    def u3(q):
        nonlocal offset
        gates.append(AnsatzGate("u3", (q,), offset))
        offset += 3

    for q in range(n_qubits):
        u3(q)
    for _ in range(n_layers):
        for pairs in (odd_pairs(n_qubits), even_pairs(n_qubits)):
            for c, t in pairs:
                gates.append(AnsatzGate("cx", (c, t)))
                u3(c)
                u3(t)
    return AnsatzCircuit(n_qubits, n_layers, tuple(gates))


# ---------------------------------------------------------------------------
# simulation


class AnsatzSimulator:
    """Statevector evaluation of an ansatz against a fixed target state."""

    def __init__(self, ansatz: AnsatzCircuit, target: np.ndarray, initial: np.ndarray | None = None,
                 metric: str = "real"):
        n = ansatz.n_qubits
        target = np.asarray(target, dtype=complex)
        if target.shape != (2**n,):
            raise ValueError(f"target has shape {target.shape}, expected ({2**n},)")
        if metric not in ("real", "fidelity"):
            raise ValueError(f"unknown metric {metric!r}")
        self.ansatz = ansatz
        self.n = n
        self.target = target
        self.initial = all_up_state(n).amplitudes if initial is None else np.asarray(initial, complex)
        self.metric = metric
        self._perm = {g.qubits: apply_permutation_cx(n, *g.qubits)
                      for g in ansatz.gates if g.kind == "cx"}
        self.n_evals = 0

    def state(self, params) -> np.ndarray:
        psi = self.initial
        for g in self.ansatz.gates:
            if g.kind == "u3":
                psi = apply_1q(psi, u3_matrix(*params[g.offset:g.offset + 3]), g.qubits[0], self.n)
            else:
                psi = psi[self._perm[g.qubits]]
        return psi

    def _cost_from_overlap(self, ov):
        if self.metric == "real":
            return 1.0 - np.real(ov)
        return 1.0 - np.abs(ov) ** 2

    def cost(self, params) -> float:
        self.n_evals += 1
        return float(self._cost_from_overlap(np.vdot(self.state(params), self.target)))

    def cost_and_gradient(self, params, step: float = 1e-6):
        """Cost and its central finite-difference gradient.

        Every perturbed cost is evaluated exactly, but cheaply: with forward
        states ``f_g`` (before gate g) and backward states ``b_g`` (target
        pulled back through the gates after g), the overlap with gate g
        replaced by ``G'`` is ``sum_ab conj(G'_ba) R_ab`` with the 2x2
        transition matrix ``R_ab = <f_g|_a |b_g>_b``.
        """
        params = np.asarray(params, dtype=float)
        gates = self.ansatz.gates
        n = self.n
        fwd = []
        psi = self.initial
        for g in gates:
            fwd.append(psi)
            if g.kind == "u3":
                psi = apply_1q(psi, u3_matrix(*params[g.offset:g.offset + 3]), g.qubits[0], n)
            else:
                psi = psi[self._perm[g.qubits]]
        overlap = np.vdot(psi, self.target)
        cost = float(self._cost_from_overlap(overlap))

        grad = np.zeros_like(params)
        chi = self.target
        for gi in range(len(gates) - 1, -1, -1):
            g = gates[gi]
            if g.kind == "cx":
                chi = chi[self._perm[g.qubits]]  # CX is its own inverse
                continue
            q = g.qubits[0]
            f = fwd[gi].reshape(2 ** (n - 1 - q), 2, 2**q)
            b = chi.reshape(2 ** (n - 1 - q), 2, 2**q)
            R = np.einsum("lar,lbr->ab", f.conj(), b)
            base = params[g.offset:g.offset + 3]
            shifted = np.repeat(base[None, :], 6, axis=0)
            for j in range(3):
                shifted[2 * j, j] += step
                shifted[2 * j + 1, j] -= step
            mats = u3_batch(shifted[:, 0], shifted[:, 1], shifted[:, 2])
            ovs = np.einsum("kba,ab->k", mats.conj(), R)
            c = self._cost_from_overlap(ovs)
            grad[g.offset:g.offset + 3] = (c[0::2] - c[1::2]) / (2 * step)
            u = u3_matrix(*base)
            chi = apply_1q(chi, u.conj().T, q, n)
        self.n_evals += 1 + 2 * params.size
        return cost, grad


def cost(ansatz: AnsatzCircuit, parameters, target_state, metric: str = "real") -> float:
    """F = 1 - Re<psi0|V^dag|target> (``metric='fidelity'``: 1 - |<.>|^2)."""
    t = target_state.amplitudes if isinstance(target_state, StateVector) else target_state
    return AnsatzSimulator(ansatz, t, metric=metric).cost(np.asarray(parameters, dtype=float))


# ---------------------------------------------------------------------------
# optimization


@dataclass
class OptimizerConfig:
    max_iterations: int = 200
    n_hops: int = 10
    hop_scale: float = 0.3
    tolerance: float = 1e-10
    fd_step: float = 1e-6
    target_cost: float = 1e-8  # stop hopping once reached
    metric: str = "real"
    seed: int = 0


@dataclass
class RecompileResult:
    parameters: np.ndarray
    cost: float
    initial_cost: float
    n_iterations: int
    n_hops: int
    trace: list[float]  # best-so-far cost after the initial minimization and each hop
    n_evaluations: int = 0


def _local_minimize(sim: AnsatzSimulator, x0: np.ndarray, config: OptimizerConfig):
    bounds = [(0.0, TWO_PI)] * x0.size

    def fun(x):
        c, g = sim.cost_and_gradient(x, config.fd_step)
        if not (math.isfinite(c) and np.all(np.isfinite(g))):
            raise FloatingPointError("non-finite cost during search")
        return c, g

    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": config.max_iterations, "ftol": config.tolerance,
                            "gtol": 1e-12, "maxcor": 30})
    return np.clip(res.x, 0.0, TWO_PI), float(res.fun), int(res.nit)


def optimize(ansatz: AnsatzCircuit, target_state, config: OptimizerConfig | None = None,
             initial_parameters=None) -> RecompileResult:
    """Basin-hopping L-BFGS-B: kick the best point, re-minimize, keep if better."""
    config = config or OptimizerConfig()
    t = target_state.amplitudes if isinstance(target_state, StateVector) else target_state
    sim = AnsatzSimulator(ansatz, t, metric=config.metric)
    rng = np.random.default_rng(config.seed)
    x0 = np.zeros(ansatz.n_params) if initial_parameters is None else np.asarray(initial_parameters, float)
    x0 = np.clip(x0, 0.0, TWO_PI)
    c0 = sim.cost(x0)

    best_x, best_c, iters = x0, c0, 0
    try:
        x, c, it = _local_minimize(sim, x0, config)
        iters += it
        if c < best_c:
            best_x, best_c = x, c
    except FloatingPointError:
        pass
    trace = [best_c]
    hops = 0
    for _ in range(config.n_hops):
        if best_c <= config.target_cost:
            break
        hops += 1
        kick = rng.uniform(-config.hop_scale, config.hop_scale, best_x.size)
        trial = np.clip(best_x + kick, 0.0, TWO_PI)
        try:
            x, c, it = _local_minimize(sim, trial, config)
        except FloatingPointError:
            trace.append(best_c)
            continue
        iters += it
        if c < best_c:
            best_x, best_c = x, c
        trace.append(best_c)
    return RecompileResult(best_x, best_c, c0, iters, hops, trace, sim.n_evals)


def stroboscopic_targets(dp: DisorderedParams, schedule: TrotterSchedule | None, k_max: int) -> list[np.ndarray]:
    """``U^k |psi0>`` for k = 0..k_max with the Trotterized cycle."""
    stepper = FloquetStepper(dp, schedule)
    psi = all_up_state(dp.N).amplitudes
    out = [psi]
    for _ in range(k_max):
        psi = stepper.cycle(psi)
        out.append(psi)
    return out


def recompile_stroboscopic_sequence(dp: DisorderedParams, schedule: TrotterSchedule | None = None,
                                    k_max: int = 20, config: OptimizerConfig | None = None,
                                    n_layers: int = 3, k_min: int = 1, warm_start: bool = True,
                                    progress=None) -> dict[int, RecompileResult]:
    """One fixed-depth circuit per stroboscopic time k T, k = k_min..k_max.

    Step k warm-starts from the solution of step k-1; the first fitted step
    starts from small random angles (k=0, the identity target, from zeros).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    config = config or OptimizerConfig()
    ansatz = build_ansatz(dp.N, n_layers)
    targets = stroboscopic_targets(dp, schedule, k_max)
    rng = np.random.default_rng(config.seed)
    prev = None
    results = {}
    for k in range(k_min, k_max + 1):
        if k == 0:
            x0 = np.zeros(ansatz.n_params)
        elif prev is None or not warm_start:
            x0 = rng.uniform(0.0, 0.1, ansatz.n_params)
        else:
            x0 = prev
        cfg = OptimizerConfig(**{**config.__dict__, "seed": config.seed + k})
        res = optimize(ansatz, targets[k], cfg, x0)
        results[k] = res
        prev = res.parameters
        if progress is not None:
            progress(k, res)
    return results


# ---------------------------------------------------------------------------
# routing


def route_next_nearest(gate: GateOp, n_qubits: int | None = None) -> list[GateOp]:
    """Rewrite a gate on chain sites (q, q+2) as SWAP . gate(q, q+1) . SWAP."""
    if gate.n_qubits == 1:
        return [gate]
    a, b = gate.support
    if n_qubits is not None and max(a, b) >= n_qubits:
        raise ValueError(f"gate support {gate.support} out of range for {n_qubits} qubits")
    dist = abs(a - b)
    if dist == 1:
        return [gate]
    if dist != 2:
        raise ValueError(f"only next-nearest-neighbour gates can be routed, got {gate.support}")
    lo, hi = min(a, b), max(a, b)
    mid = lo + 1
    swap = GateOp((mid, hi), SWAP, "swap")
    moved = GateOp(tuple(mid if q == hi else q for q in gate.support), gate.matrix, gate.label)
    return [swap, moved, swap]


# ---------------------------------------------------------------------------
# persistence: "# dtc4t-recompile v1 n_qubits=.. n_layers=.." then a CSV table


def save_parameter_table(path, results: dict[int, np.ndarray | RecompileResult],
                         ansatz: AnsatzCircuit) -> None:
    buf = io.StringIO()
    buf.write(f"# dtc4t-recompile v{TABLE_VERSION} n_qubits={ansatz.n_qubits} n_layers={ansatz.n_layers}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "gate_index", "theta", "phi", "lambda"])
    for k in sorted(results):
        p = results[k]
        p = p.parameters if isinstance(p, RecompileResult) else np.asarray(p)
        for gi in range(p.size // 3):
            w.writerow([k, gi] + [repr(float(v)) for v in p[3 * gi:3 * gi + 3]])
    Path(path).write_text(buf.getvalue())


def load_parameter_table(path) -> tuple[AnsatzCircuit, dict[int, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"recompiled parameter table not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# dtc4t-recompile"):
        raise ValueError(f"{path} is not a recompile parameter table")
    meta = dict(tok.split("=") for tok in lines[0].split()[3:])
    version = int(lines[0].split()[2].lstrip("v"))
    if version != TABLE_VERSION:
        raise ValueError(f"unsupported table version {version}")
    ansatz = build_ansatz(int(meta["n_qubits"]), int(meta["n_layers"]))
    rows: dict[int, dict[int, list[float]]] = {}
    for row in csv.DictReader(lines[1:]):
        rows.setdefault(int(row["k"]), {})[int(row["gate_index"])] = [
            float(row["theta"]), float(row["phi"]), float(row["lambda"])]
    params = {}
    for k, gates in rows.items():
        p = np.array([gates[i] for i in range(len(gates))]).ravel()
        if p.size != ansatz.n_params:
            raise ValueError(f"k={k}: {p.size} parameters, ansatz needs {ansatz.n_params}")
        params[k] = p
    return ansatz, params
