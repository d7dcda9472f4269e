"""Presets that regenerate the data behind the four reference figures.

Desk-scale presets keep the separation ``l << L << N`` of the long runs but
stop at ``t_max = 2e4`` (5e4 for the k scan).  ``paper_scale=True`` uses the
long times (5e5, 1e7 for fig4) and registers up to 12 qubits; those runs take
days and are not part of the test suite.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .errors import DomainError, FitError
from .experiment import (
    EnsembleConfig,
    SweepConfig,
    run_ensemble,
    run_k_scan,
    run_method_comparison,
    write_run_outputs,
)
from .measurement import MeasurementBackend, MeasurementSpec
from .observables import fit_power_law
from .qstate import MapParams

FIGURES = ("fig1", "fig2", "fig3", "fig4")

_DESK = {
    "fig1": dict(n_q=(9, 10, 11), t_max=20_000),
    "fig2": dict(n_q=(10,), t_max=20_000),
    "fig3": dict(n_q=(9, 10, 11), t_max=50_000, k=(2, 3, 4, 5, 6, 7, 8, 9, 10)),
    "fig4": dict(n_q=(10,), t_max=20_000),
}
_PAPER = {
    "fig1": dict(n_q=(9, 10, 11, 12), t_max=500_000),
    "fig2": dict(n_q=(10,), t_max=500_000),
    "fig3": dict(n_q=(9, 10, 11, 12), t_max=500_000, k=tuple(range(1, 13))),
    "fig4": dict(n_q=(10,), t_max=10_000_000),
}
T_PRESET = 2.0
M_PRESET = 50
# measuring m = n_q - 8 keeps cells of L = 256 states
SIGNIFICANT_OFFSET = 8


def _fits(result, t_max: int) -> dict:
    out = {}
    for q in ("n2", "ipr"):
        try:
            exp, err = fit_power_law(result.fit_series, (max(1, t_max // 20), t_max), q)
            out[q] = {"exponent": exp, "stderr": err}
        except FitError as exc:
            out[q] = {"error": str(exc)}
    return out


def reproduce_figure(
    name: str,
    outdir,
    paper_scale: bool = False,
    M: Optional[int] = None,
    t_max: Optional[int] = None,
    n_q_values=None,
    k_values=None,
    seed: int = 0,
    workers: Optional[int] = None,
) -> list[Path]:
    """Run a figure preset and write its curves; returns the files written."""
    if name not in FIGURES:
        raise DomainError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    preset = dict((_PAPER if paper_scale else _DESK)[name])
    if t_max is not None:
        preset["t_max"] = int(t_max)
    if n_q_values is not None:
        preset["n_q"] = tuple(n_q_values)
    if k_values is not None:
        preset["k"] = tuple(k_values)
    M = M_PRESET if M is None else int(M)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    tm = preset["t_max"]
    window = 1000 / tm if paper_scale else 0.1
    written: list[Path] = []
    fits: dict = {}

    def cfg(k, n_q, m, backend, snapshots=()):
        spec = MeasurementSpec(m, backend)
        return EnsembleConfig(
            MapParams(k, T_PRESET, n_q), spec, M=1 if spec.backend is MeasurementBackend.NONE else M,
            t_max=tm, seed=seed, window_fraction=window, snapshot_times=snapshots,
        )

    def emit(config, stem):
        res = run_ensemble(config, workers)
        written.extend(write_run_outputs(res, out, stem))
        fits[stem] = _fits(res, tm)
        return res

    if name == "fig1":
        for n_q in preset["n_q"]:
            emit(cfg(2.0, n_q, n_q, "trajectories"), f"fig1_nq{n_q}_m{n_q}")
            m = n_q - SIGNIFICANT_OFFSET
            emit(cfg(2.0, n_q, m, "trajectories"), f"fig1_nq{n_q}_m{m}")
        emit(cfg(2.0, preset["n_q"][0], None, "none"), "fig1_no_measurement")
    elif name == "fig2":
        n_q = preset["n_q"][0]
        for m, label in ((n_q - SIGNIFICANT_OFFSET, f"m{n_q - SIGNIFICANT_OFFSET}"), (n_q, f"m{n_q}"), (None, "no_measurement")):
            res = emit(cfg(2.0, n_q, m, "none" if m is None else "trajectories", (tm,)), f"fig2_nq{n_q}_{label}")
            single = out / f"fig2_nq{n_q}_{label}_single_trajectory.csv"
            lines = ["n,p"] + [f"{n - (1 << (n_q - 1))},{p:.17g}" for n, p in enumerate(res.final_probabilities[0])]
            single.write_text("\n".join(lines) + "\n")
            written.append(single)
    elif name == "fig3":
        base = EnsembleConfig(
            MapParams(2.0, T_PRESET, min(preset["n_q"])), MeasurementSpec(1, "trajectories"),
            M=M, t_max=tm, seed=seed, window_fraction=window, window_stride=1 if paper_scale else 10,
        )
        sweep = SweepConfig(base, tuple(float(k) for k in preset["k"]), tuple(preset["n_q"]), SIGNIFICANT_OFFSET, out)
        report = run_k_scan(sweep, workers)
        written += [out / "k_scan.csv", out / "k_scan.json"]
        fits["k_scan"] = report.to_dict()
    else:
        n_q = preset["n_q"][0]
        panels = {"a": [(6.0, n_q), (2.0, n_q)], "b": [(2.0, 2), (6.0, 2)]}
        for panel, curves in panels.items():
            for k, m in curves:
                stem = f"fig4{panel}_k{k:g}_m{m}"
                cmp = run_method_comparison(cfg(k, n_q, m, "trajectories"), workers)
                written.extend(write_run_outputs(cmp.trajectories, out, stem + "_trajectories"))
                written.extend(write_run_outputs(cmp.random_phase, out, stem + "_random_phase"))
                fits[stem] = {
                    "trajectories": _fits(cmp.trajectories, tm),
                    "random_phase": _fits(cmp.random_phase, tm),
                    "fraction_consistent": cmp.fraction_consistent,
                    "consistent": cmp.consistent,
                }
    summary = out / f"{name}_summary.json"
    summary.write_text(json.dumps(fits, indent=2, sort_keys=True, default=float))
    written.append(summary)
    return written
