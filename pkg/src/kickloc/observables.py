"""Momentum distribution diagnostics: second moment, IPR, time averages, power-law fits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DomainError, FitError, RepresentationError
from .qstate import Representation, momenta

DIST_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ProbabilityDistribution:
    """Ensemble-averaged momentum probabilities in index order."""

    p: np.ndarray
    n_q: int

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64, copy=True)
        if p.shape != (1 << self.n_q,):
            raise DomainError(f"expected {1 << self.n_q} probabilities, got shape {p.shape}")
        if np.any(p < 0):
            raise DomainError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > DIST_TOL:
            raise DomainError(f"probabilities sum to {p.sum()!r}")
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> np.ndarray:
        return momenta(self.n_q)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "p"])
            for n, p in zip(self.n, self.p):
                w.writerow([int(n), f"{p:.17g}"])


def second_moment(dist: ProbabilityDistribution) -> float:
    """``sum_n n**2 p_n`` about n = 0 (not the variance)."""
    n = dist.n.astype(np.float64)
    return float(np.dot(n * n, dist.p))


def ipr(dist: ProbabilityDistribution) -> float:
    """Inverse participation ratio ``1 / sum_n p_n**2``."""
    return float(1.0 / np.dot(dist.p, dist.p))


def accumulate_distribution(states) -> ProbabilityDistribution:
    """Average ``|psi_n|**2`` over trajectory states (summed in the given order)."""
    states = list(states)
    if not states:
        raise DomainError("no states to accumulate")
    n_q = states[0].n_q
    total = np.zeros(1 << n_q)
    for s in states:
        if s.representation != Representation.MOMENTUM:
            raise RepresentationError("accumulate_distribution needs momentum-representation states")
        if s.n_q != n_q:
            raise DomainError("states have different register sizes")
        total += s.probabilities()
    return ProbabilityDistribution(total / len(states), n_q)


@dataclass
class ObservableSeries:
    """Observables sampled on a time grid."""

    times: np.ndarray
    second_moment: np.ndarray
    second_moment_stderr: np.ndarray
    ipr: np.ndarray
    norm_check: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        for name in ("second_moment", "second_moment_stderr", "ipr", "norm_check"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != self.times.shape:
                raise DomainError(f"{name} has shape {arr.shape}, times has {self.times.shape}")
            setattr(self, name, arr)

    def __len__(self):
        return len(self.times)

    def value_at(self, t: int, quantity: str = "n2") -> float:
        idx = np.flatnonzero(self.times == t)
        if idx.size == 0:
            raise DomainError(f"time {t} was not sampled")
        return float(self._quantity(quantity)[idx[0]])

    def select(self, times) -> "ObservableSeries":
        """The samples taken at ``times`` (unsampled times are ignored)."""
        keep = np.isin(self.times, np.asarray(times, dtype=np.int64))
        return ObservableSeries(
            self.times[keep], self.second_moment[keep], self.second_moment_stderr[keep],
            self.ipr[keep], self.norm_check[keep], dict(self.metadata),
        )

    def _quantity(self, quantity: str) -> np.ndarray:
        if quantity == "n2":
            return self.second_moment
        if quantity == "ipr":
            return self.ipr
        raise DomainError(f"unknown quantity {quantity!r}")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "n2_mean", "n2_stderr", "ipr", "norm_check"])
            for row in zip(self.times, self.second_moment, self.second_moment_stderr, self.ipr, self.norm_check):
                w.writerow([int(row[0])] + [f"{x:.17g}" for x in row[1:]])

    @classmethod
    def from_csv(cls, path, metadata=None) -> "ObservableSeries":
        data = np.genfromtxt(Path(path), delimiter=",", names=True, dtype=None)
        data = np.atleast_1d(data)
        return cls(data["t"], data["n2_mean"], data["n2_stderr"], data["ipr"], data["norm_check"], metadata or {})


def _window(series: ObservableSeries, t_range) -> np.ndarray:
    lo, hi = t_range
    return (series.times >= lo) & (series.times <= hi)


def time_averaged_ipr(series: ObservableSeries, window) -> float:
    """Mean IPR over samples with ``window[0] <= t <= window[1]``."""
    sel = _window(series, window)
    if not sel.any():
        raise DomainError(f"no samples in window {window}")
    return float(series.ipr[sel].mean())


def fit_power_law(series: ObservableSeries, t_range, quantity: str = "n2", min_samples: int = 10) -> tuple[float, float]:
    """Least-squares slope of ``log(quantity)`` against ``log t``; returns (exponent, stderr)."""
    sel = _window(series, t_range)
    t = series.times[sel].astype(np.float64)
    y = series._quantity(quantity)[sel]
    if t.size < min_samples:
        raise FitError(f"only {t.size} samples in {t_range}, need {min_samples}")
    if np.any(y <= 0) or np.any(t <= 0):
        raise FitError("power-law fit needs positive values")
    res = stats.linregress(np.log(t), np.log(y))
    return float(res.slope), float(res.stderr)


def series_statistics(prob: np.ndarray, n_q: int) -> tuple[float, float, float, float]:
    """(<n^2>, its standard error, IPR, max norm deviation) of a ``(M, N)`` array of ``|psi|^2``.

    The reductions run over the full array in trajectory-index order, so the
    result does not depend on how trajectories were scheduled.
    """
    M = prob.shape[0]
    n2 = momenta(n_q).astype(np.float64) ** 2
    p = prob.sum(axis=0) / M
    per_traj = prob @ n2
    stderr = float(per_traj.std(ddof=1) / np.sqrt(M)) if M > 1 else 0.0
    norm_dev = float(np.max(np.abs(prob.sum(axis=1) - 1.0)))
    return float(np.dot(n2, p)), stderr, float(1.0 / np.dot(p, p)), norm_dev
