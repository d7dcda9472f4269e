"""One iteration of the kicked-rotator map ``U = exp(-ik cos theta) exp(-iT n^2/2)``.

Two interchangeable backends are provided.  ``DIRECT_DFT`` diagonalizes each
factor with an FFT; ``GATE_CIRCUIT`` applies the same unitary as a gate
sequence (single-qubit and controlled phases for the rotation, a textbook QFT
circuit for the basis change, the kick as one diagonal oracle).

Phase grid: ``theta_j = 2 pi j / N``.  Because momenta are shifted by ``-N/2``
the momentum -> phase transform picks up a ``(-1)**j`` twiddle on top of the
plain inverse DFT.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

import numpy as np
from scipy import fft as sfft

from .errors import RepresentationError
from .qstate import MapParams, QuantumState, Representation, momenta


class EvolutionBackend(str, enum.Enum):
    DIRECT_DFT = "dft"
    GATE_CIRCUIT = "circuit"


def _require(state: QuantumState, rep: Representation) -> None:
    if state.representation != rep:
        raise RepresentationError(
            f"expected {rep.name.lower()} representation, got {state.representation.name.lower()}"
        )


def phase_grid(n_q: int) -> np.ndarray:
    N = 1 << n_q
    return 2 * np.pi * np.arange(N) / N


def _twiddle(n_q: int) -> np.ndarray:
    return np.where(np.arange(1 << n_q) % 2 == 0, 1.0, -1.0)


def rotation_phases(n_q: int, T: float) -> np.ndarray:
    n = momenta(n_q).astype(np.float64)
    return np.exp(-0.5j * T * n * n)


def kick_phases(n_q: int, k: float) -> np.ndarray:
    return np.exp(-1j * k * np.cos(phase_grid(n_q)))


def apply_rotation(state: QuantumState, T: float) -> QuantumState:
    _require(state, Representation.MOMENTUM)
    return state.replace(state.amplitudes * rotation_phases(state.n_q, T))


def apply_kick(state: QuantumState, k: float) -> QuantumState:
    _require(state, Representation.PHASE)
    return state.replace(state.amplitudes * kick_phases(state.n_q, k))


def to_phase_representation(state: QuantumState) -> QuantumState:
    _require(state, Representation.MOMENTUM)
    amps = np.fft.ifft(state.amplitudes, norm="ortho") * _twiddle(state.n_q)
    return state.replace(amps, Representation.PHASE)


def to_momentum_representation(state: QuantumState) -> QuantumState:
    _require(state, Representation.PHASE)
    amps = np.fft.fft(state.amplitudes * _twiddle(state.n_q), norm="ortho")
    return state.replace(amps, Representation.MOMENTUM)


# --- gate-level backend -----------------------------------------------------


@dataclass(frozen=True)
class GateCounts:
    hadamard: int = 0
    phase: int = 0
    controlled_phase: int = 0
    swap: int = 0
    diagonal: int = 0

    @property
    def single_qubit(self) -> int:
        return self.hadamard + self.phase

    @property
    def total(self) -> int:
        return sum(getattr(self, f.name) for f in fields(self))

    def __add__(self, other: "GateCounts") -> "GateCounts":
        return GateCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["single_qubit"] = self.single_qubit
        d["total"] = self.total
        return d


class _Register:
    """Mutable tensor view of an amplitude vector; axis ``q - 1`` holds bit ``a_q``."""

    _SQRT_HALF = np.sqrt(0.5)

    def __init__(self, amplitudes: np.ndarray, n_q: int):
        self.n_q = n_q
        self.psi = np.array(amplitudes, dtype=np.complex128).reshape((2,) * n_q)
        self.counts = dict(hadamard=0, phase=0, controlled_phase=0, swap=0, diagonal=0)

    def _idx(self, *fixed):
        idx = [slice(None)] * self.n_q
        for q, b in fixed:
            idx[q - 1] = b
        return tuple(idx)

    def h(self, q: int) -> None:
        lo, hi = self._idx((q, 0)), self._idx((q, 1))
        a0 = self.psi[lo].copy()
        a1 = self.psi[hi]
        self.psi[lo] = (a0 + a1) * self._SQRT_HALF
        self.psi[hi] = (a0 - a1) * self._SQRT_HALF
        self.counts["hadamard"] += 1

    def p(self, q: int, phi: float) -> None:
        self.psi[self._idx((q, 1))] *= np.exp(1j * phi)
        self.counts["phase"] += 1

    def cp(self, q1: int, q2: int, phi: float) -> None:
        self.psi[self._idx((q1, 1), (q2, 1))] *= np.exp(1j * phi)
        self.counts["controlled_phase"] += 1

    def reverse(self) -> None:
        self.psi = np.ascontiguousarray(self.psi.transpose(tuple(range(self.n_q))[::-1]))
        self.counts["swap"] += self.n_q // 2

    def diagonal(self, d: np.ndarray) -> None:
        self.psi *= d.reshape(self.psi.shape)
        self.counts["diagonal"] += 1

    def vector(self) -> np.ndarray:
        return self.psi.reshape(-1)

    def gate_counts(self) -> GateCounts:
        return GateCounts(**self.counts)


def _qft(reg: _Register, inverse: bool) -> None:
    n_q = reg.n_q
    sign = -1.0 if inverse else 1.0
    if not inverse:
        for q in range(1, n_q + 1):
            reg.h(q)
            for r in range(q + 1, n_q + 1):
                reg.cp(r, q, 2 * np.pi / 2 ** (r - q + 1))
        reg.reverse()
        # momentum offset -N/2 -> (-1)**j on the output index
        reg.p(n_q, np.pi)
    else:
        reg.p(n_q, np.pi)
        reg.reverse()
        for q in range(n_q, 0, -1):
            for r in range(n_q, q, -1):
                reg.cp(r, q, sign * 2 * np.pi / 2 ** (r - q + 1))
            reg.h(q)


def qft_gate_circuit(state: QuantumState, inverse: bool = False) -> tuple[QuantumState, GateCounts]:
    """QFT circuit equal to :func:`to_phase_representation` (or its inverse).

    The input tag is not checked; the output is tagged phase (forward) or
    momentum (inverse).
    """
    reg = _Register(state.amplitudes, state.n_q)
    _qft(reg, inverse)
    rep = Representation.MOMENTUM if inverse else Representation.PHASE
    return state.replace(reg.vector(), rep), reg.gate_counts()


def _rotation(reg: _Register, T: float) -> float:
    """Apply exp(-iT n^2/2) up to a global phase; return that global phase."""
    n_q = reg.n_q
    N = 1 << n_q
    w = [1 << (n_q - m) for m in range(1, n_q + 1)]  # weight of bit a_m
    # n = -N/2 + sum_m a_m w_m and a_m^2 = a_m
    for m in range(1, n_q + 1):
        wm = w[m - 1]
        reg.p(m, -0.5 * T * (wm * wm - N * wm))
    for m in range(1, n_q + 1):
        for mp in range(m + 1, n_q + 1):
            reg.cp(m, mp, -T * w[m - 1] * w[mp - 1])
    return -0.5 * T * (N * N / 4)


def rotation_gate_circuit(state: QuantumState, T: float) -> tuple[QuantumState, GateCounts]:
    _require(state, Representation.MOMENTUM)
    reg = _Register(state.amplitudes, state.n_q)
    global_phase = _rotation(reg, T)
    return state.replace(reg.vector() * np.exp(1j * global_phase)), reg.gate_counts()


def step_gate_counts(n_q: int) -> GateCounts:
    """Gate tally of one map iteration on the circuit backend."""
    reg = _Register(np.zeros(1 << n_q), n_q)
    _rotation(reg, 0.0)
    _qft(reg, False)
    reg.diagonal(np.ones(1 << n_q))
    _qft(reg, True)
    return reg.gate_counts()


def step(state: QuantumState, params: MapParams, backend=EvolutionBackend.DIRECT_DFT) -> QuantumState:
    """One map iteration: rotation, QFT, kick, inverse QFT."""
    _require(state, Representation.MOMENTUM)
    backend = EvolutionBackend(backend)
    if backend is EvolutionBackend.DIRECT_DFT:
        phi = to_phase_representation(apply_rotation(state, params.T))
        return to_momentum_representation(apply_kick(phi, params.k))
    reg = _Register(state.amplitudes, state.n_q)
    global_phase = _rotation(reg, params.T)
    _qft(reg, False)
    reg.diagonal(kick_phases(state.n_q, params.k))
    _qft(reg, True)
    return state.replace(reg.vector() * np.exp(1j * global_phase))


class MapKernel:
    """Batched, in-place DFT propagator for arrays of momentum amplitudes.

    Works on the last axis of an ``(..., N)`` array.  The ``(-1)**j`` twiddle
    commutes with the diagonal kick and is dropped, so one step is
    ``fft(kick * ifft(rotation * psi))``.  Each row is transformed
    independently, so results do not depend on how rows are batched.
    """

    def __init__(self, params: MapParams):
        self.params = params
        self.rotation = rotation_phases(params.n_q, params.T)
        self.kick = kick_phases(params.n_q, params.k)

    def apply(self, psi: np.ndarray, steps: int = 1) -> np.ndarray:
        for _ in range(steps):
            psi *= self.rotation
            phi = sfft.ifft(psi, axis=-1, overwrite_x=True)
            phi *= self.kick
            psi[...] = sfft.fft(phi, axis=-1, overwrite_x=True)
        return psi
