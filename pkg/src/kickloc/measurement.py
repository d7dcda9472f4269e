"""Projective measurement of one qubit after each map iteration.

Three ways to realize the measured dynamics:

* quantum trajectories: sample an outcome with the Born rule, project,
  renormalize;
* random phases: multiply the two outcome subspaces by independent random
  phases (dephases them without collapsing);
* exact density matrix: ``rho -> P0 U rho U^+ P0 + P1 U rho U^+ P1``, used as an
  oracle for small registers.

The subspace ``a_m = a`` is the union of ``2**(m-1)`` cells of
``L = 2**(n_q - m)`` consecutive basis states, so reshaping the amplitude
array to ``(..., 2**(m-1), 2, L)`` puts bit ``a_m`` on its own axis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapacityError, DegenerateBranchError, DomainError
from .qstate import (
    WEIGHT_THRESHOLD,
    MapParams,
    ProjectedState,
    QuantumState,
    Representation,
    renormalize,
)
from .rotator import MapKernel, _require, step

MAX_DENSITY_QUBITS = 8

# Uniform draws consumed per trajectory and time step.
DRAWS_PER_STEP = 2
RNG_BLOCK = 64


class MeasurementBackend(str, enum.Enum):
    TRAJECTORIES = "trajectories"
    RANDOM_PHASE = "random-phase"
    DENSITY_MATRIX = "density-matrix"
    NONE = "none"


@dataclass(frozen=True)
class MeasurementSpec:
    """Which qubit is measured (1-based, ``None`` for no measurement) and how."""

    m: Optional[int]
    backend: MeasurementBackend = MeasurementBackend.TRAJECTORIES

    def __post_init__(self):
        object.__setattr__(self, "backend", MeasurementBackend(self.backend))
        if self.backend is MeasurementBackend.NONE:
            object.__setattr__(self, "m", None)
        elif self.m is None and self.backend is not MeasurementBackend.DENSITY_MATRIX:
            raise DomainError(f"backend {self.backend.value!r} needs a measured qubit")
        if self.m is not None and (not isinstance(self.m, (int, np.integer)) or self.m < 1):
            raise DomainError(f"qubit index must be a positive integer, got {self.m!r}")

    def validate(self, n_q: int) -> None:
        if self.m is not None and self.m > n_q:
            raise DomainError(f"qubit index m={self.m} outside [1, {n_q}]")

    def cell_length(self, n_q: int) -> int:
        self.validate(n_q)
        return 1 << (n_q - self.m)

    def cell_count(self) -> int:
        """Cells per outcome subspace."""
        return 1 << (self.m - 1)


def subspace_view(psi: np.ndarray, m: int, n_q: int) -> np.ndarray:
    """View of ``psi`` (shape ``(..., N)``) with bit ``a_m`` on axis ``-2``."""
    if not 1 <= m <= n_q:
        raise DomainError(f"qubit index m={m} outside [1, {n_q}]")
    return psi.reshape(psi.shape[:-1] + (1 << (m - 1), 2, 1 << (n_q - m)))


def subspace_mask(m: int, n_q: int, outcome: int) -> np.ndarray:
    """Boolean support of ``P_outcome(m)`` in index order."""
    j = np.arange(1 << n_q)
    return ((j >> (n_q - m)) & 1) == outcome


# --- random streams ---------------------------------------------------------


def _stream_key(master_seed: int, stream_id: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(master_seed) % 2 ** 64, spawn_key=(int(stream_id),))
    return ss.generate_state(2, dtype=np.uint64)


def _block(key: np.ndarray, block: int) -> np.ndarray:
    # Philox is counter based: block b is addressed directly, no sequential state.
    gen = np.random.Generator(np.random.Philox(key=key, counter=[0, block, 0, 0]))
    return gen.random((RNG_BLOCK, DRAWS_PER_STEP))


class RngStream:
    """Uniform draws for one trajectory, addressed by time step.

    The draws for step ``s`` are a pure function of
    ``(master_seed, stream_id, s)``; ``position`` is the next step to be drawn.
    """

    def __init__(self, master_seed: int, stream_id: int, position: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.position = int(position)
        self._key = _stream_key(master_seed, stream_id)
        self._cached = (-1, None)

    def at(self, step_index: int) -> np.ndarray:
        b, r = divmod(step_index, RNG_BLOCK)
        if self._cached[0] != b:
            self._cached = (b, _block(self._key, b))
        return self._cached[1][r]

    def draw(self) -> np.ndarray:
        u = self.at(self.position)
        self.position += 1
        return u


class EnsembleRng:
    """Vectorized access to the streams of a contiguous range of trajectories."""

    def __init__(self, master_seed: int, stream_ids):
        self.master_seed = int(master_seed)
        self.stream_ids = np.asarray(stream_ids, dtype=np.int64)
        self._keys = [_stream_key(master_seed, s) for s in self.stream_ids]
        self._block_index = -1
        self._blocks = None

    def at(self, step_index: int) -> np.ndarray:
        """Draws for every stream at one step, shape ``(len(stream_ids), 2)``."""
        b, r = divmod(step_index, RNG_BLOCK)
        if b != self._block_index:
            self._blocks = np.stack([_block(key, b) for key in self._keys], axis=1)
            self._block_index = b
        return self._blocks[r]


# --- single-state operations ------------------------------------------------


def project(state: QuantumState, m: int, outcome: int) -> ProjectedState:
    """Apply ``P_outcome(m)`` without renormalizing."""
    _require(state, Representation.MOMENTUM)
    if outcome not in (0, 1):
        raise DomainError(f"outcome must be 0 or 1, got {outcome!r}")
    amps = np.array(state.amplitudes)
    subspace_view(amps, m, state.n_q)[..., 1 - outcome, :] = 0
    return ProjectedState.from_amplitudes(amps, state.n_q)


def measure_trajectory(state: QuantumState, m: int, rng) -> tuple[int, QuantumState]:
    """Sample the outcome of measuring qubit ``m`` and collapse onto it.

    ``rng`` is an :class:`RngStream` (its first draw of the step is used) or a
    ``numpy.random.Generator``.
    """
    _require(state, Representation.MOMENTUM)
    u = rng.draw()[0] if isinstance(rng, RngStream) else rng.random()
    b0, b1 = project(state, m, 0), project(state, m, 1)
    if b0.weight <= WEIGHT_THRESHOLD and b1.weight <= WEIGHT_THRESHOLD:
        raise DegenerateBranchError("both measurement branches have zero weight")
    p0 = b0.weight / (b0.weight + b1.weight)
    outcome = 0 if u < p0 else 1
    return outcome, renormalize(b0 if outcome == 0 else b1)


def apply_random_phase(state: QuantumState, m: int, rng) -> QuantumState:
    """Replace ``|phi>`` by ``e^{i b0} P0|phi> + e^{i b1} P1|phi>`` with random b0, b1."""
    _require(state, Representation.MOMENTUM)
    u = rng.draw() if isinstance(rng, RngStream) else rng.random(2)
    amps = np.array(state.amplitudes)
    subspace_view(amps, m, state.n_q)[...] *= np.exp(2j * np.pi * np.asarray(u))[:, None]
    return state.replace(amps)


def measured_step(state: QuantumState, params: MapParams, spec: MeasurementSpec, rng=None, backend="dft") -> QuantumState:
    """One map iteration followed by the measurement action of ``spec.backend``."""
    spec.validate(params.n_q)
    out = step(state, params, backend)
    if spec.backend is MeasurementBackend.NONE:
        return out
    if spec.backend is MeasurementBackend.TRAJECTORIES:
        return measure_trajectory(out, spec.m, rng)[1]
    if spec.backend is MeasurementBackend.RANDOM_PHASE:
        return apply_random_phase(out, spec.m, rng)
    raise DomainError("density-matrix backend acts on DensityMatrix, use evolve_density_matrix")


# --- batched kernels (used by the ensemble runner) --------------------------


def collapse_batch(psi: np.ndarray, m: int, n_q: int, u: np.ndarray) -> np.ndarray:
    """Born-rule collapse of each row of ``psi`` in place; returns the outcomes.

    ``u`` holds one uniform draw per row.
    """
    view = subspace_view(psi, m, n_q)
    prob = np.abs(view) ** 2
    w0 = prob[..., 0, :].sum(axis=(-2, -1))
    w1 = prob[..., 1, :].sum(axis=(-2, -1))
    if np.any((w0 <= WEIGHT_THRESHOLD) & (w1 <= WEIGHT_THRESHOLD)):
        raise DegenerateBranchError("both measurement branches have zero weight")
    p0 = w0 / (w0 + w1)
    outcome = (u >= p0).astype(np.int8)
    one = outcome == 1
    view[one, :, 0, :] = 0
    view[~one, :, 1, :] = 0
    psi /= np.sqrt(np.where(one, w1, w0))[:, None]
    return outcome


def dephase_batch(psi: np.ndarray, m: int, n_q: int, u: np.ndarray) -> None:
    """Random subspace phases for each row of ``psi`` in place; ``u`` has shape ``(rows, 2)``."""
    subspace_view(psi, m, n_q)[...] *= np.exp(2j * np.pi * u)[:, None, :, None]


# --- density matrix oracle --------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    rho: np.ndarray
    n_q: int

    def __post_init__(self):
        rho = np.array(self.rho, dtype=np.complex128, copy=True)
        N = 1 << self.n_q
        if rho.shape != (N, N):
            raise DomainError(f"density matrix must be {N}x{N}, got {rho.shape}")
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_state(cls, state: QuantumState) -> "DensityMatrix":
        _require(state, Representation.MOMENTUM)
        a = state.amplitudes
        return cls(np.outer(a, a.conj()), state.n_q)

    def diagonal(self) -> np.ndarray:
        return self.rho.diagonal().real.copy()

    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def check(self, herm_tol: float = 1e-12, trace_tol: float = 1e-10, psd_tol: float = 1e-10) -> None:
        """Raise if the matrix is not Hermitian, unit-trace and positive semidefinite."""
        rho = self.rho
        if np.max(np.abs(rho - rho.conj().T), initial=0.0) > herm_tol:
            raise DomainError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > trace_tol:
            raise DomainError(f"density matrix trace {np.trace(rho)} != 1")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -psd_tol:
            raise DomainError("density matrix has a negative eigenvalue")


def evolve_density_matrix(dm: DensityMatrix, params: MapParams, m: Optional[int]) -> DensityMatrix:
    """Exact measured step; ``m=None`` gives the unmeasured ``U rho U^+``."""
    if params.n_q > MAX_DENSITY_QUBITS:
        raise CapacityError(f"density-matrix oracle limited to n_q <= {MAX_DENSITY_QUBITS}")
    if dm.n_q != params.n_q:
        raise DomainError("density matrix size does not match the map parameters")
    kernel = MapKernel(params)
    # kernel.apply(V) acts row-wise: V -> V U^T
    w = kernel.apply(np.array(dm.rho.T)).T  # U rho
    rho = np.conj(kernel.apply(np.conj(w)))  # U rho U^+
    if m is not None:
        j = np.arange(params.N)
        bits = (j >> (params.n_q - m)) & 1
        rho[bits[:, None] != bits[None, :]] = 0
    return DensityMatrix(rho, params.n_q)
