"""Ensembles, sweeps and method comparisons, with resumable checkpoints."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import CapacityError, CheckpointError, DomainError
from .measurement import (
    MAX_DENSITY_QUBITS,
    DensityMatrix,
    EnsembleRng,
    MeasurementBackend,
    MeasurementSpec,
    collapse_batch,
    dephase_batch,
    evolve_density_matrix,
)
from .observables import ObservableSeries, ProbabilityDistribution, series_statistics, time_averaged_ipr
from .qstate import MapParams, QuantumState, Representation, momentum_to_index
from .rotator import EvolutionBackend, MapKernel, step, step_gate_counts

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"KLCK"
CHECKPOINT_VERSION = 1
_CK_HEADER = struct.Struct("<4sI32s32sQ")

WORKERS_ENV = "KICKLOC_WORKERS"

# k_c is the smallest swept k whose <xi> spread across n_q exceeds this.
SPREAD_THRESHOLD = 0.30
CONSISTENT_FRACTION = 0.90


def resolve_workers(flag: Optional[int] = None) -> int:
    if flag is not None:
        workers = int(flag)
    elif os.environ.get(WORKERS_ENV):
        workers = int(os.environ[WORKERS_ENV])
    else:
        workers = os.cpu_count() or 1
    if workers < 1:
        raise DomainError(f"worker count must be >= 1, got {workers}")
    return workers


@dataclass(frozen=True)
class EnsembleConfig:
    params: MapParams
    spec: MeasurementSpec
    M: int = 50
    t_max: int = 20000
    seed: int = 0
    per_decade: int = 30
    window_fraction: float = 0.1
    window_stride: int = 10
    snapshot_times: tuple = ()
    checkpoint_every: int = 0
    n0: int = 0
    evolution: EvolutionBackend = EvolutionBackend.DIRECT_DFT

    def __post_init__(self):
        object.__setattr__(self, "evolution", EvolutionBackend(self.evolution))
        object.__setattr__(self, "snapshot_times", tuple(sorted({int(t) for t in self.snapshot_times})))
        self.spec.validate(self.params.n_q)
        momentum_to_index(self.n0, self.params.n_q)
        if self.M < 1:
            raise DomainError(f"trajectory count must be >= 1, got {self.M}")
        if self.deterministic and self.M != 1:
            raise DomainError(f"backend {self.spec.backend.value!r} is deterministic and needs M = 1")
        if self.t_max < 1:
            raise DomainError(f"t_max must be >= 1, got {self.t_max}")
        if not 0 < self.window_fraction <= 1 or self.window_stride < 1 or self.per_decade < 1:
            raise DomainError("invalid sampling schedule")
        if self.checkpoint_every < 0:
            raise DomainError("checkpoint_every must be >= 0")
        if any(not 0 <= t <= self.t_max for t in self.snapshot_times):
            raise DomainError("snapshot times must lie in [0, t_max]")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must fit in 64 bits")

    @property
    def deterministic(self) -> bool:
        return self.spec.backend in (MeasurementBackend.NONE, MeasurementBackend.DENSITY_MATRIX)

    def averaging_window(self) -> tuple[int, int]:
        """Last ``window_fraction`` of the run, inclusive bounds."""
        width = max(1, int(round(self.window_fraction * self.t_max)))
        return self.t_max - width + 1, self.t_max

    def geometric_times(self) -> np.ndarray:
        """About ``per_decade`` log-spaced times from 1 to t_max; the grid used for power-law fits."""
        decades = np.log10(self.t_max)
        geo = np.round(np.logspace(0, decades, int(np.ceil(self.per_decade * decades)) + 1))
        return np.unique(geo.astype(np.int64))

    def sample_times(self) -> np.ndarray:
        """Geometric grid, the averaging window at ``window_stride``, and t_max/2, t_max."""
        geo = self.geometric_times()
        lo, hi = self.averaging_window()
        window = np.arange(hi, lo - 1, -self.window_stride)
        extra = [max(1, self.t_max // 2), self.t_max]
        return np.unique(np.concatenate([geo, window, extra]).astype(np.int64))

    def to_dict(self) -> dict:
        return {
            "n_q": self.params.n_q,
            "k": self.params.k,
            "T": self.params.T,
            "m": self.spec.m,
            "backend": self.spec.backend.value,
            "M": self.M,
            "t_max": self.t_max,
            "seed": self.seed,
            "per_decade": self.per_decade,
            "window_fraction": self.window_fraction,
            "window_stride": self.window_stride,
            "snapshot_times": list(self.snapshot_times),
            "checkpoint_every": self.checkpoint_every,
            "n0": self.n0,
            "evolution": self.evolution.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleConfig":
        return cls(
            params=MapParams(float(d["k"]), float(d["T"]), int(d["n_q"])),
            spec=MeasurementSpec(None if d.get("m") is None else int(d["m"]), d["backend"]),
            M=int(d["M"]),
            t_max=int(d["t_max"]),
            seed=int(d["seed"]),
            per_decade=int(d.get("per_decade", 30)),
            window_fraction=float(d.get("window_fraction", 0.1)),
            window_stride=int(d.get("window_stride", 10)),
            snapshot_times=tuple(d.get("snapshot_times", ())),
            checkpoint_every=int(d.get("checkpoint_every", 0)),
            n0=int(d.get("n0", 0)),
            evolution=d.get("evolution", "dft"),
        )

    def config_hash(self) -> bytes:
        """SHA-256 over everything that affects the output (checkpointing excluded)."""
        d = self.to_dict()
        d.pop("checkpoint_every")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).digest()


@dataclass
class RunResult:
    config: EnsembleConfig
    series: ObservableSeries
    snapshots: dict = field(default_factory=dict)
    final_probabilities: Optional[np.ndarray] = None
    completed: bool = True
    wall_time: float = 0.0

    @property
    def fit_series(self) -> ObservableSeries:
        """Samples on the geometric grid only, so dense averaging windows do not dominate fits."""
        return self.series.select(self.config.geometric_times())

    def metadata(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash().hex(),
            "gate_counts_per_step": step_gate_counts(self.config.params.n_q).as_dict(),
            "cell_length": None if self.config.spec.m is None else self.config.spec.cell_length(self.config.params.n_q),
            "wall_time_s": self.wall_time,
            "code_version": __version__,
        }


class EnsembleRunner:
    """Evolves M trajectories (or one density matrix) and samples observables.

    Trajectories live as rows of one ``(M, N)`` array.  Between sampling
    points, contiguous row blocks are advanced by a thread pool; every row only
    depends on its own stream, and all reductions run over the full array, so
    results are independent of the worker count.
    """

    def __init__(self, config: EnsembleConfig, workers: Optional[int] = None):
        self.config = config
        self.workers = resolve_workers(workers)
        self.kernel = MapKernel(config.params)
        self.t = 0
        self.records: list[tuple] = []
        self.snapshots: dict[int, np.ndarray] = {}
        N, M = config.params.N, config.M
        j0 = momentum_to_index(config.n0, config.params.n_q)
        if config.spec.backend is MeasurementBackend.DENSITY_MATRIX:
            if config.params.n_q > MAX_DENSITY_QUBITS:
                raise CapacityError(f"density-matrix backend limited to n_q <= {MAX_DENSITY_QUBITS}")
            rho = np.zeros((N, N), dtype=np.complex128)
            rho[j0, j0] = 1.0
            self.rho = DensityMatrix(rho, config.params.n_q)
            self.psi = None
        else:
            self.rho = None
            self.psi = np.zeros((M, N), dtype=np.complex128)
            self.psi[:, j0] = 1.0
        chunks = np.array_split(np.arange(M), min(self.workers, M))
        self._chunks = [(int(c[0]), int(c[-1]) + 1) for c in chunks if len(c)]
        self._rngs = [EnsembleRng(config.seed, range(a, b)) for a, b in self._chunks]

    # -- evolution --

    def _advance_rows(self, chunk: int, t_from: int, t_to: int) -> None:
        a, b = self._chunks[chunk]
        psi = self.psi[a:b]
        cfg = self.config
        backend, m, n_q = cfg.spec.backend, cfg.spec.m, cfg.params.n_q
        rng = self._rngs[chunk]
        for t in range(t_from + 1, t_to + 1):
            if cfg.evolution is EvolutionBackend.DIRECT_DFT:
                self.kernel.apply(psi)
            else:
                for r in range(psi.shape[0]):
                    st = QuantumState(psi[r], Representation.MOMENTUM, n_q)
                    psi[r] = step(st, cfg.params, cfg.evolution).amplitudes
            if backend is MeasurementBackend.TRAJECTORIES:
                collapse_batch(psi, m, n_q, rng.at(t - 1)[:, 0])
            elif backend is MeasurementBackend.RANDOM_PHASE:
                dephase_batch(psi, m, n_q, rng.at(t - 1))

    def advance_to(self, t_target: int) -> None:
        if t_target <= self.t:
            return
        if self.rho is not None:
            for _ in range(self.t, t_target):
                self.rho = evolve_density_matrix(self.rho, self.config.params, self.config.spec.m)
        elif len(self._chunks) == 1:
            self._advance_rows(0, self.t, t_target)
        else:
            with ThreadPoolExecutor(max_workers=len(self._chunks)) as pool:
                futures = [pool.submit(self._advance_rows, i, self.t, t_target) for i in range(len(self._chunks))]
                for f in futures:
                    f.result()
        self.t = t_target

    def probabilities(self) -> np.ndarray:
        """``|psi_n|**2`` per trajectory, shape ``(M, N)``."""
        if self.rho is not None:
            return self.rho.diagonal()[None, :]
        return np.abs(self.psi) ** 2

    def sample(self) -> None:
        n2, se, xi, norm_dev = series_statistics(self.probabilities(), self.config.params.n_q)
        if self.rho is not None:
            norm_dev = abs(self.rho.trace() - 1.0)
        self.records.append((self.t, n2, se, xi, norm_dev))

    def distribution(self) -> np.ndarray:
        prob = self.probabilities()
        return prob.sum(axis=0) / prob.shape[0]

    def series(self) -> ObservableSeries:
        cols = list(zip(*self.records)) if self.records else [[]] * 5
        return ObservableSeries(*cols, metadata={"config": self.config.to_dict()})

    def run(self, checkpoint_path=None, halt_at: Optional[int] = None) -> RunResult:
        """Run to ``t_max`` (or stop early at ``halt_at`` after checkpointing)."""
        cfg = self.config
        started = time.perf_counter()
        samples = set(int(t) for t in cfg.sample_times())
        events = set(samples) | set(cfg.snapshot_times)
        if cfg.checkpoint_every and checkpoint_path is not None:
            events |= set(range(cfg.checkpoint_every, cfg.t_max + 1, cfg.checkpoint_every))
        if halt_at is not None:
            events.add(int(halt_at))
        if self.t == 0 and 0 in cfg.snapshot_times:
            self.snapshots[0] = self.distribution()
        for t in sorted(e for e in events if e > self.t):
            self.advance_to(t)
            if t in samples:
                self.sample()
            if t in cfg.snapshot_times:
                self.snapshots[t] = self.distribution()
            if checkpoint_path is not None and (
                (cfg.checkpoint_every and t % cfg.checkpoint_every == 0) or t == halt_at
            ):
                write_checkpoint(self, checkpoint_path)
            if halt_at is not None and t >= halt_at and t < cfg.t_max:
                return self._result(False, time.perf_counter() - started)
        return self._result(True, time.perf_counter() - started)

    def _result(self, completed: bool, wall: float) -> RunResult:
        n_q = self.config.params.n_q
        snaps = {t: ProbabilityDistribution(p, n_q) for t, p in sorted(self.snapshots.items())}
        return RunResult(self.config, self.series(), snaps, self.probabilities(), completed, wall)


# --- checkpoints ------------------------------------------------------------


def write_checkpoint(runner: EnsembleRunner, path) -> None:
    """Serialize a stopped runner; the RNG position is implied by ``t``."""
    buf = io.BytesIO()
    records = np.array(runner.records, dtype=np.float64).reshape(-1, 5)
    snap_t = np.array(sorted(runner.snapshots), dtype=np.int64)
    snap_p = np.array([runner.snapshots[t] for t in snap_t]).reshape(len(snap_t), runner.config.params.N)
    np.savez(
        buf,
        t=np.int64(runner.t),
        state=runner.rho.rho if runner.rho is not None else runner.psi,
        records=records,
        snapshot_times=snap_t,
        snapshot_probs=snap_p,
        config=np.frombuffer(json.dumps(runner.config.to_dict(), sort_keys=True).encode(), dtype=np.uint8),
    )
    payload = buf.getvalue()
    header = _CK_HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        runner.config.config_hash(),
        hashlib.sha256(payload).digest(),
        len(payload),
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(header + payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def read_checkpoint(path, config: Optional[EnsembleConfig] = None, workers: Optional[int] = None) -> EnsembleRunner:
    """Rebuild a runner from a checkpoint.

    If ``config`` is given its hash must match the stored one; otherwise the
    embedded configuration is used.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < _CK_HEADER.size:
        raise CheckpointError("checkpoint truncated before end of header")
    magic, version, cfg_hash, digest, length = _CK_HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    payload = data[_CK_HEADER.size:]
    if len(payload) != length or hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("checkpoint payload is corrupted")
    with np.load(io.BytesIO(payload), allow_pickle=False) as z:
        stored = EnsembleConfig.from_dict(json.loads(z["config"].tobytes().decode()))
        if stored.config_hash() != cfg_hash:
            raise CheckpointError("checkpoint configuration does not match its header hash")
        if config is not None and config.config_hash() != cfg_hash:
            raise CheckpointError("checkpoint was written for a different configuration")
        runner = EnsembleRunner(config or stored, workers)
        runner.t = int(z["t"])
        if runner.rho is not None:
            runner.rho = DensityMatrix(z["state"], stored.params.n_q)
        else:
            runner.psi[...] = z["state"]
        runner.records = [tuple([int(r[0])] + [float(x) for x in r[1:]]) for r in z["records"]]
        runner.snapshots = {int(t): p for t, p in zip(z["snapshot_times"], z["snapshot_probs"])}
    return runner


def run_ensemble(config: EnsembleConfig, workers: Optional[int] = None, checkpoint_path=None, halt_at: Optional[int] = None) -> RunResult:
    log.info("run n_q=%d k=%g T=%g m=%s backend=%s M=%d t_max=%d", config.params.n_q, config.params.k,
             config.params.T, config.spec.m, config.spec.backend.value, config.M, config.t_max)
    return EnsembleRunner(config, workers).run(checkpoint_path, halt_at)


def resume_ensemble(checkpoint_path, config: Optional[EnsembleConfig] = None, workers: Optional[int] = None) -> RunResult:
    runner = read_checkpoint(checkpoint_path, config, workers)
    return runner.run(checkpoint_path)


# --- sweeps -----------------------------------------------------------------


def _sweep_config(base: EnsembleConfig, axis: str, value) -> EnsembleConfig:
    p = base.params
    if axis == "k":
        return replace(base, params=MapParams(float(value), p.T, p.n_q))
    if axis == "n_q":
        return replace(base, params=MapParams(p.k, p.T, int(value)))
    if axis == "m":
        return replace(base, spec=MeasurementSpec(int(value), base.spec.backend))
    raise DomainError(f"unknown sweep axis {axis!r}")


def run_sweep(base: EnsembleConfig, axis: str, values, workers: Optional[int] = None) -> list[tuple]:
    """Run ``base`` once per value along ``axis``; returns ``[(value, RunResult), ...]``."""
    values = list(values)
    if len(set(values)) != len(values) or not all(np.isfinite(values)):
        raise DomainError("sweep points must be distinct and finite")
    return [(v, run_ensemble(_sweep_config(base, axis, v), workers)) for v in values]


@dataclass(frozen=True)
class SweepConfig:
    """k scan at fixed ``n_q - m`` over several register sizes."""

    base: EnsembleConfig
    k_values: tuple
    n_q_values: tuple
    m_offset: int = 8
    outdir: Optional[Path] = None

    def __post_init__(self):
        for vals in (self.k_values, self.n_q_values):
            if len(set(vals)) != len(vals) or not all(np.isfinite(vals)):
                raise DomainError("sweep points must be distinct and finite")
        if any(n - self.m_offset < 1 for n in self.n_q_values):
            raise DomainError("m = n_q - m_offset must be >= 1 for every n_q")

    def point(self, k: float, n_q: int) -> EnsembleConfig:
        spec = MeasurementSpec(n_q - self.m_offset, self.base.spec.backend)
        return replace(self.base, params=MapParams(float(k), self.base.params.T, int(n_q)), spec=spec)

    def baseline(self, k: float) -> EnsembleConfig:
        return replace(
            self.base,
            params=MapParams(float(k), self.base.params.T, int(min(self.n_q_values))),
            spec=MeasurementSpec(None, MeasurementBackend.NONE),
            M=1,
        )


def relative_spread(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float((v.max() - v.min()) / v.mean())


@dataclass
class TransitionReport:
    k_values: np.ndarray
    n_q_values: np.ndarray
    xi: np.ndarray  # shape (len(k_values), len(n_q_values))
    xi0: np.ndarray
    cell_length: int
    k_c: Optional[float]

    @property
    def spread(self) -> np.ndarray:
        return np.array([relative_spread(row) for row in self.xi])

    @property
    def xi0_at_kc(self) -> Optional[float]:
        if self.k_c is None:
            return None
        return float(self.xi0[list(self.k_values).index(self.k_c)])

    @property
    def xi0_over_L(self) -> Optional[float]:
        x = self.xi0_at_kc
        return None if x is None else x / self.cell_length

    def consistent(self) -> bool:
        """Whether ``xi0 / L`` at the estimated transition lies in [0.1, 0.4]."""
        r = self.xi0_over_L
        return r is not None and 0.1 <= r <= 0.4

    def to_dict(self) -> dict:
        return {
            "k_values": [float(k) for k in self.k_values],
            "n_q_values": [int(n) for n in self.n_q_values],
            "xi": self.xi.tolist(),
            "xi0": self.xi0.tolist(),
            "spread": self.spread.tolist(),
            "cell_length": self.cell_length,
            "k_c": self.k_c,
            "xi0_at_kc": self.xi0_at_kc,
            "xi0_over_L": self.xi0_over_L,
            "consistent": self.consistent(),
        }

    def to_csv(self, path) -> None:
        lines = ["k,xi0," + ",".join(f"xi_nq{n}" for n in self.n_q_values) + ",spread"]
        for k, x0, row, s in zip(self.k_values, self.xi0, self.xi, self.spread):
            lines.append(",".join(f"{v:.17g}" for v in [k, x0, *row, s]))
        Path(path).write_text("\n".join(lines) + "\n")


def estimate_kc(k_values, xi, threshold: float = SPREAD_THRESHOLD) -> Optional[float]:
    for k, row in zip(k_values, xi):
        if relative_spread(row) > threshold:
            return float(k)
    return None


def run_k_scan(sweep: SweepConfig, workers: Optional[int] = None) -> TransitionReport:
    ks = sorted(float(k) for k in sweep.k_values)
    nqs = sorted(int(n) for n in sweep.n_q_values)
    xi = np.zeros((len(ks), len(nqs)))
    xi0 = np.zeros(len(ks))
    for i, k in enumerate(ks):
        base = sweep.baseline(k)
        xi0[i] = time_averaged_ipr(run_ensemble(base, workers).series, base.averaging_window())
        for j, n_q in enumerate(nqs):
            cfg = sweep.point(k, n_q)
            xi[i, j] = time_averaged_ipr(run_ensemble(cfg, workers).series, cfg.averaging_window())
        log.info("k=%g xi0=%.3g xi=%s", k, xi0[i], np.array2string(xi[i], precision=4))
    report = TransitionReport(np.array(ks), np.array(nqs), xi, xi0, 1 << sweep.m_offset, estimate_kc(ks, xi))
    if sweep.outdir is not None:
        out = Path(sweep.outdir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "k_scan.csv")
        (out / "k_scan.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report


# --- method comparison ------------------------------------------------------

_TWIN_OFFSET = 0x9E3779B97F4A7C15


@dataclass
class MethodComparison:
    trajectories: RunResult
    random_phase: RunResult
    ratio: np.ndarray
    agree: np.ndarray

    @property
    def fraction_consistent(self) -> float:
        return float(self.agree.mean())

    @property
    def consistent(self) -> bool:
        return self.fraction_consistent >= CONSISTENT_FRACTION


def run_method_comparison(config: EnsembleConfig, workers: Optional[int] = None, nsigma: float = 3.0) -> MethodComparison:
    """Trajectories vs random phases, same parameters, independent seeds."""
    if config.spec.backend is not MeasurementBackend.TRAJECTORIES:
        raise DomainError("method comparison starts from a trajectories configuration")
    twin = replace(
        config,
        spec=MeasurementSpec(config.spec.m, MeasurementBackend.RANDOM_PHASE),
        seed=(config.seed + _TWIN_OFFSET) % 2 ** 64,
    )
    a = run_ensemble(config, workers)
    b = run_ensemble(twin, workers)
    sa, sb = a.series, b.series
    diff = np.abs(sa.second_moment - sb.second_moment)
    sigma = np.sqrt(sa.second_moment_stderr ** 2 + sb.second_moment_stderr ** 2)
    # identical values with zero error (e.g. both exactly at n = 0) count as agreement
    agree = diff <= nsigma * sigma + 1e-12 * np.maximum(sa.second_moment, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = sa.second_moment / sb.second_moment
    return MethodComparison(a, b, ratio, agree)


# --- oracle check -----------------------------------------------------------


@dataclass
class OracleCheck:
    exact: np.ndarray
    sampled: np.ndarray
    M: int

    @property
    def sigma(self) -> np.ndarray:
        """Binomial error bound ``sqrt(p (1 - p) / M)`` per momentum."""
        p = np.clip(self.exact, 0.0, 1.0)
        return np.sqrt(p * (1 - p) / self.M)

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.exact - self.sampled)))

    @property
    def max_z(self) -> float:
        diff = np.abs(self.exact - self.sampled)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(diff > 1e-12, diff / self.sigma, 0.0)
        return float(np.max(z))

    def passed(self, nsigma: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.exact - self.sampled) <= nsigma * self.sigma + 1e-12))


def verify_oracle(params: MapParams, m: Optional[int], t: int, M: int, seed: int = 0, workers: Optional[int] = None) -> OracleCheck:
    """Exact density-matrix diagonal against an M-trajectory average after ``t`` measured steps."""
    dm = EnsembleConfig(params, MeasurementSpec(m, MeasurementBackend.DENSITY_MATRIX), M=1, t_max=t)
    exact = EnsembleRunner(dm, 1)
    exact.advance_to(t)
    backend = MeasurementBackend.NONE if m is None else MeasurementBackend.TRAJECTORIES
    traj_cfg = EnsembleConfig(params, MeasurementSpec(m, backend), M=1 if m is None else M, t_max=t, seed=seed)
    traj = EnsembleRunner(traj_cfg, workers)
    traj.advance_to(t)
    return OracleCheck(exact.distribution(), traj.distribution(), M)


# --- output files -----------------------------------------------------------


def write_run_outputs(result: RunResult, outdir, stem: str = "series", extra_metadata: Optional[dict] = None) -> list[Path]:
    """Write ``<stem>.csv``, ``<stem>.json`` and one distribution CSV per snapshot."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / f"{stem}.csv"
    result.series.to_csv(path)
    written.append(path)
    for t, dist in result.snapshots.items():
        p = out / f"{stem}_dist_t{t}.csv"
        dist.to_csv(p)
        written.append(p)
    meta = result.metadata()
    if extra_metadata:
        meta.update(extra_metadata)
    p = out / f"{stem}.json"
    p.write_text(json.dumps(meta, indent=2, sort_keys=True))
    written.append(p)
    return written
