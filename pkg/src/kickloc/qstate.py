"""Wavefunction on the 2**n_q computational basis.

Momentum n and basis index j are related by ``n = -N/2 + j``, and the index
is read as the bit string ``j = (a_1, ..., a_nq)`` with ``a_1`` the most
significant bit.  Qubit indices are 1-based throughout.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateBranchError, DomainError

NORM_TOL = 1e-10
# Squared branch weights below this are treated as impossible outcomes.
WEIGHT_THRESHOLD = 1e-30

MIN_QUBITS = 2
MAX_QUBITS = 24

SNAPSHOT_MAGIC = b"KLST"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class Representation(enum.IntEnum):
    MOMENTUM = 0
    PHASE = 1


def _check_nq(n_q: int) -> None:
    if not (isinstance(n_q, (int, np.integer)) and MIN_QUBITS <= n_q <= MAX_QUBITS):
        raise DomainError(f"n_q must be an integer in [{MIN_QUBITS}, {MAX_QUBITS}], got {n_q!r}")


def index_to_momentum(j: int, n_q: int) -> int:
    """Signed momentum of basis index ``j``."""
    _check_nq(n_q)
    N = 1 << n_q
    if not 0 <= j < N:
        raise DomainError(f"basis index {j} outside [0, {N})")
    return int(j) - N // 2


def momentum_to_index(n: int, n_q: int) -> int:
    _check_nq(n_q)
    half = 1 << (n_q - 1)
    if not -half <= n < half:
        raise DomainError(f"momentum {n} outside [{-half}, {half})")
    return int(n) + half


def momenta(n_q: int) -> np.ndarray:
    """Momentum grid in index order, as int64."""
    _check_nq(n_q)
    N = 1 << n_q
    return np.arange(N, dtype=np.int64) - N // 2


def qubit_bit(j: int, m: int, n_q: int) -> int:
    """Bit ``a_m`` of basis index ``j`` (``m = 1`` is the most significant)."""
    _check_nq(n_q)
    if not 1 <= m <= n_q:
        raise DomainError(f"qubit index m={m} outside [1, {n_q}]")
    if not 0 <= j < (1 << n_q):
        raise DomainError(f"basis index {j} outside [0, {1 << n_q})")
    return (int(j) >> (n_q - m)) & 1


@dataclass(frozen=True)
class MapParams:
    """Kick strength ``k``, rotation parameter ``T`` and register size ``n_q``."""

    k: float
    T: float
    n_q: int

    def __post_init__(self):
        _check_nq(self.n_q)
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n_q", int(self.n_q))
        if not np.isfinite(self.k) or self.k < 0:
            raise DomainError(f"kick strength must be finite and >= 0, got {self.k}")
        if not np.isfinite(self.T):
            raise DomainError(f"T must be finite, got {self.T}")

    @property
    def N(self) -> int:
        return 1 << self.n_q

    @property
    def K(self) -> float:
        """Classical chaos parameter k*T."""
        return self.k * self.T

    @property
    def l_est(self) -> float:
        """Rough localization length k**2 / 2."""
        return self.k ** 2 / 2


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Normalized amplitude vector tagged with its representation.

    The amplitude array is copied and frozen on construction, so instances can
    be handed between threads freely.
    """

    amplitudes: np.ndarray
    representation: Representation
    n_q: int

    def __post_init__(self):
        _check_nq(self.n_q)
        amps = np.array(self.amplitudes, dtype=np.complex128, copy=True)
        if amps.shape != (1 << self.n_q,):
            raise DomainError(f"expected {1 << self.n_q} amplitudes, got shape {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"state is not normalized (|psi|^2 = {norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "representation", Representation(self.representation))

    @property
    def N(self) -> int:
        return 1 << self.n_q

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def replace(self, amplitudes, representation=None) -> "QuantumState":
        rep = self.representation if representation is None else representation
        return QuantumState(amplitudes, rep, self.n_q)

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self.n_q, int(self.representation))
        return header + self.amplitudes.astype("<c16").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuantumState":
        if len(data) < _HEADER.size:
            raise DomainError("snapshot shorter than its header")
        magic, version, n_q, rep = _HEADER.unpack_from(data)
        if magic != SNAPSHOT_MAGIC:
            raise DomainError(f"bad snapshot magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise DomainError(f"unsupported snapshot version {version}")
        _check_nq(n_q)
        if rep not in (0, 1):
            raise DomainError(f"unknown representation tag {rep}")
        expected = _HEADER.size + 16 * (1 << n_q)
        if len(data) != expected:
            raise DomainError(f"snapshot has {len(data)} bytes, expected {expected}")
        amps = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
        return cls(amps, Representation(rep), n_q)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "QuantumState":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass(frozen=True, eq=False)
class ProjectedState:
    """Unnormalized branch ``P_a psi`` together with its weight ``||P_a psi||**2``."""

    amplitudes: np.ndarray
    weight: float
    n_q: int

    @classmethod
    def from_amplitudes(cls, amplitudes: np.ndarray, n_q: int) -> "ProjectedState":
        amps = np.array(amplitudes, dtype=np.complex128, copy=True)
        amps.flags.writeable = False
        return cls(amps, float(np.vdot(amps, amps).real), n_q)


def initial_state(n_q: int, n0: int = 0) -> QuantumState:
    """Momentum eigenstate ``|n0>``."""
    j = momentum_to_index(n0, n_q)
    amps = np.zeros(1 << n_q, dtype=np.complex128)
    amps[j] = 1.0
    return QuantumState(amps, Representation.MOMENTUM, n_q)


def norm_squared(state) -> float:
    amps = state.amplitudes if hasattr(state, "amplitudes") else np.asarray(state)
    return float(np.vdot(amps, amps).real)


def renormalize(branch: ProjectedState) -> QuantumState:
    """Scale a projected branch back to unit norm (result is in momentum representation)."""
    if not branch.weight > WEIGHT_THRESHOLD:
        raise DegenerateBranchError(f"branch weight {branch.weight!r} below {WEIGHT_THRESHOLD}")
    return QuantumState(branch.amplitudes / np.sqrt(branch.weight), Representation.MOMENTUM, branch.n_q)
