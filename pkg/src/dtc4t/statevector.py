"""Dense statevector kernel.

Basis convention: chain index ``q`` is bit ``q`` of the basis-state integer and
spin-up maps to bit value 0, so the all-up state is basis state 0.

All kernels accept either a single amplitude vector of shape ``(2**n,)`` or a
batch of them with shape ``(B, 2**n)``. Batches are how the Floquet unitary,
finite-difference gradients and noise trajectories are evaluated without
Python-level loops over columns.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_QUBITS = 24

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)

SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
# control = first support qubit
CX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class ResourceError(ValueError):
    """Requested system is larger than the desk-scale caps allow."""


@dataclass(frozen=True)
class GateOp:
    """A 1- or 2-qubit gate.

    For two-qubit gates the 4x4 matrix is indexed by ``2*b0 + b1`` where
    ``b0`` is the bit of ``support[0]`` and ``b1`` the bit of ``support[1]``.
    """

    support: tuple[int, ...]
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        support = tuple(int(q) for q in self.support)
        object.__setattr__(self, "support", support)
        mat = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", mat)
        if len(support) not in (1, 2):
            raise ValueError(f"gate support must have 1 or 2 qubits, got {support}")
        if len(set(support)) != len(support):
            raise ValueError(f"overlapping gate support {support}")
        dim = 2 ** len(support)
        if mat.shape != (dim, dim):
            raise ValueError(f"matrix shape {mat.shape} does not match support {support}")

    @property
    def n_qubits(self) -> int:
        return len(self.support)

    def is_unitary(self, atol: float = 1e-12) -> bool:
        m = self.matrix
        return np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=atol)

    def dagger(self) -> GateOp:
        return GateOp(self.support, self.matrix.conj().T, self.label + "_dg")


@dataclass
class StateVector:
    amplitudes: np.ndarray
    n_qubits: int = field(default=-1)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        dim = self.amplitudes.shape[-1]
        n = int(round(np.log2(dim)))
        if 2**n != dim:
            raise ValueError(f"amplitude length {dim} is not a power of two")
        if self.n_qubits < 0:
            self.n_qubits = n
        elif self.n_qubits != n:
            raise ValueError(f"n_qubits={self.n_qubits} but amplitudes imply {n}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy(), self.n_qubits)

    def apply(self, gate: GateOp) -> StateVector:
        return apply_gate(self, gate)

    def overlap(self, other: StateVector) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def check_size(n_qubits: int, cap: int = MAX_QUBITS) -> None:
    if n_qubits < 1:
        raise ValueError(f"need at least one qubit, got {n_qubits}")
    if n_qubits > cap:
        raise ResourceError(f"{n_qubits} qubits exceeds the cap of {cap}")


def basis_state(n_qubits: int, index: int = 0) -> StateVector:
    check_size(n_qubits)
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[index] = 1.0
    return StateVector(amps, n_qubits)


def all_up_state(n_qubits: int) -> StateVector:
    return basis_state(n_qubits, 0)


def bitstring_index(bits) -> int:
    """Basis index of a sequence of bits, ``bits[q]`` being qubit ``q``."""
    return sum(int(b) << q for q, b in enumerate(bits))


def z_signs(n_qubits: int) -> np.ndarray:
    """``(2**n, n)`` table of sigma^z eigenvalues (+1 up, -1 down)."""
    idx = np.arange(2**n_qubits)
    bits = (idx[:, None] >> np.arange(n_qubits)[None, :]) & 1
    return 1.0 - 2.0 * bits


# ---------------------------------------------------------------------------
# array kernels


def apply_1q(psi: np.ndarray, mat: np.ndarray, q: int, n: int) -> np.ndarray:
    """Apply a 2x2 matrix to qubit ``q``; ``psi`` is ``(D,)`` or ``(B, D)``."""
    shape = psi.shape
    v = psi.reshape(-1, 2 ** (n - 1 - q), 2, 2**q)
    out = np.matmul(mat, v)
    return out.reshape(shape)


def apply_1q_batched(psi: np.ndarray, mats: np.ndarray, q: int, n: int) -> np.ndarray:
    """Apply a different 2x2 matrix to each row of a ``(B, D)`` batch."""
    b = psi.shape[0]
    v = psi.reshape(b, 2 ** (n - 1 - q), 2, 2**q)
    out = np.einsum("bij,bljr->blir", mats, v)
    return out.reshape(psi.shape)


def _two_qubit_view(psi: np.ndarray, q0: int, q1: int, n: int):
    hi, lo = max(q0, q1), min(q0, q1)
    v = psi.reshape(-1, 2 ** (n - 1 - hi), 2, 2 ** (hi - lo - 1), 2, 2**lo)
    # axis 2 holds qubit hi, axis 4 holds qubit lo
    return v, q0 == hi


_SWAP_ORDER = [0, 2, 1, 3]


def apply_2q(psi: np.ndarray, mat: np.ndarray, q0: int, q1: int, n: int) -> np.ndarray:
    """Apply a 4x4 matrix (index ``2*b(q0) + b(q1)``) to qubits ``q0, q1``."""
    if abs(q0 - q1) == 1:
        # adjacent bits form one axis of length 4 indexed by 2*b(hi) + b(lo)
        lo = min(q0, q1)
        if q0 < q1:
            mat = mat[np.ix_(_SWAP_ORDER, _SWAP_ORDER)]
        v = psi.reshape(-1, 2 ** (n - 2 - lo), 4, 2**lo)
        return np.matmul(mat, v).reshape(psi.shape)
    v, q0_is_hi = _two_qubit_view(psi, q0, q1, n)
    g = mat.reshape(2, 2, 2, 2)
    if not q0_is_hi:
        g = g.transpose(1, 0, 3, 2)
    t = np.tensordot(g, v, axes=([2, 3], [2, 4]))
    return np.ascontiguousarray(t.transpose(2, 3, 0, 4, 1, 5)).reshape(psi.shape)


def apply_2q_batched(psi: np.ndarray, mats: np.ndarray, q0: int, q1: int, n: int) -> np.ndarray:
    v, q0_is_hi = _two_qubit_view(psi, q0, q1, n)
    g = mats.reshape(-1, 2, 2, 2, 2)
    if not q0_is_hi:
        g = g.transpose(0, 2, 1, 4, 3)
    out = np.einsum("xabcd,xlcmdr->xlambr", g, v)
    return out.reshape(psi.shape)


def apply_permutation_cx(n: int, control: int, target: int) -> np.ndarray:
    """Index permutation implementing CX: ``new = psi[..., perm]``."""
    idx = np.arange(2**n)
    return np.where((idx >> control) & 1, idx ^ (1 << target), idx)


def apply_gate_array(psi: np.ndarray, gate: GateOp, n: int) -> np.ndarray:
    sup = gate.support
    if max(sup) >= n or min(sup) < 0:
        raise ValueError(f"gate support {sup} out of range for {n} qubits")
    if len(sup) == 1:
        return apply_1q(psi, gate.matrix, sup[0], n)
    return apply_2q(psi, gate.matrix, sup[0], sup[1], n)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    return StateVector(apply_gate_array(state.amplitudes, gate, state.n_qubits), state.n_qubits)


def apply_circuit(state: StateVector, gates) -> StateVector:
    psi = state.amplitudes
    for g in gates:
        psi = apply_gate_array(psi, g, state.n_qubits)
    return StateVector(psi, state.n_qubits)


# ---------------------------------------------------------------------------
# closed-form exponentials


def two_site_expm(c_xx: float, c_yy: float, c_zz: float, dt: float) -> np.ndarray:
    """exp(+i dt (c_xx XX + c_yy YY + c_zz ZZ)) in closed form.

    XX, YY and ZZ commute and are block diagonal on span{|00>,|11>} and
    span{|01>,|10>}; on the first block the generator is
    ``c_zz + (c_xx - c_yy) sigma_x``, on the second ``-c_zz + (c_xx + c_yy) sigma_x``.
    """
    g1 = (c_xx - c_yy) * dt
    g2 = (c_xx + c_yy) * dt
    p1 = np.exp(1j * c_zz * dt)
    p2 = np.exp(-1j * c_zz * dt)
    u = np.zeros((4, 4), dtype=complex)
    u[0, 0] = u[3, 3] = p1 * np.cos(g1)
    u[0, 3] = u[3, 0] = 1j * p1 * np.sin(g1)
    u[1, 1] = u[2, 2] = p2 * np.cos(g2)
    u[1, 2] = u[2, 1] = 1j * p2 * np.sin(g2)
    return u


def rx(angle: float) -> np.ndarray:
    """exp(-i angle/2 sigma_x)."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


# ---------------------------------------------------------------------------
# observables


def expectation_z_array(psi: np.ndarray, q: int, n: int) -> np.ndarray:
    p = np.abs(psi.reshape(-1, 2 ** (n - 1 - q), 2, 2**q)) ** 2
    s = p.sum(axis=(1, 3))
    res = s[:, 0] - s[:, 1]
    return res if psi.ndim > 1 else res[0]


def expectation_z(state: StateVector, site) -> float:
    q = _chain_index(site)
    return float(expectation_z_array(state.amplitudes, q, state.n_qubits))


def expectation_zz(state: StateVector, site1, site2) -> float:
    q1, q2 = _chain_index(site1), _chain_index(site2)
    if q1 == q2:
        raise ValueError("expectation_zz needs two distinct sites")
    n = state.n_qubits
    idx = np.arange(2**n)
    parity = ((idx >> q1) ^ (idx >> q2)) & 1
    p = np.abs(state.amplitudes) ** 2
    return float(np.sum(p * (1.0 - 2.0 * parity)))


def _chain_index(site) -> int:
    if hasattr(site, "chain_index"):
        return site.chain_index
    return int(site)


# ---------------------------------------------------------------------------
# binary snapshots: uint64 length, then interleaved float64 re/im, little endian


def dump_amplitudes(state: StateVector, path) -> None:
    amps = np.ascontiguousarray(state.amplitudes, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", amps.size))
        fh.write(amps.view("<f8").tobytes())


def load_amplitudes(path) -> StateVector:
    data = Path(path).read_bytes()
    (length,) = struct.unpack_from("<Q", data, 0)
    vals = np.frombuffer(data, dtype="<f8", offset=8)
    if vals.size != 2 * length:
        raise ValueError(f"snapshot truncated: expected {length} amplitudes")
    return StateVector(vals.view("<c16").astype(complex), -1)
