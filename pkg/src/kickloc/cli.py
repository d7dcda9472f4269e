"""Command-line driver.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import CapacityError, DomainError, KickLocError
from .experiment import (
    EnsembleConfig,
    SweepConfig,
    resume_ensemble,
    run_ensemble,
    run_k_scan,
    run_method_comparison,
    verify_oracle,
    write_run_outputs,
)
from .figures import FIGURES, reproduce_figure
from .measurement import MeasurementBackend, MeasurementSpec
from .qstate import MapParams

log = logging.getLogger("kickloc")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# flat config-file keys -> argparse destinations
CONFIG_KEYS = {
    "n_q": "nq", "k": "k", "T": "T", "m": "m", "backend": "backend", "M": "M",
    "t_max": "tmax", "seed": "seed", "schedule": "schedule",
    "checkpoint_every": "checkpoint_every", "outdir": "out",
}
DEFAULTS = dict(nq=10, k=2.0, T=2.0, m=None, backend="trajectories", M=None, tmax=20000,
                seed=0, schedule=30, checkpoint_every=0, out="out")


class UsageError(Exception):
    pass


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` file (``#`` comments) or a run metadata JSON."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        data = json.loads(text)
        data = data.get("config", data)
        if "per_decade" in data:
            data["schedule"] = data.pop("per_decade")
        return {CONFIG_KEYS[k]: v for k, v in data.items() if k in CONFIG_KEYS}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[CONFIG_KEYS[key]] = value
    return out


def _schedule(value) -> int:
    s = str(value)
    if s.startswith("geometric:"):
        s = s.split(":", 1)[1]
    try:
        return int(s)
    except ValueError as exc:
        raise UsageError(f"bad schedule {value!r}; use points per decade, e.g. 'geometric:30'") from exc


def effective_settings(args) -> dict:
    """Defaults, then config file, then explicit flags."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(parse_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def build_config(settings: dict) -> EnsembleConfig:
    backend = MeasurementBackend(str(settings["backend"]))
    m = settings["m"]
    if m in ("", "none", "None"):
        m = None
    if m is not None:
        m = int(m)
        if m < 1:
            raise UsageError("qubit indices are 1-based: --m must be >= 1")
    n_q = int(settings["nq"])
    if backend is not MeasurementBackend.NONE and m is None:
        m = n_q
    M = settings["M"]
    if M is None:
        M = 1 if backend in (MeasurementBackend.NONE, MeasurementBackend.DENSITY_MATRIX) else 50
    return EnsembleConfig(
        MapParams(float(settings["k"]), float(settings["T"]), n_q),
        MeasurementSpec(m, backend),
        M=int(M),
        t_max=int(settings["tmax"]),
        seed=int(settings["seed"]),
        per_decade=_schedule(settings["schedule"]),
        checkpoint_every=int(settings["checkpoint_every"]),
    )


def write_manifest(outdir, files) -> Path:
    outdir = Path(outdir)
    entries = []
    for f in sorted({Path(f) for f in files}):
        entries.append({"file": str(f.relative_to(outdir)), "sha256": hashlib.sha256(f.read_bytes()).hexdigest()})
    path = outdir / "manifest.json"
    path.write_text(json.dumps({"code_version": __version__, "files": entries}, indent=2))
    return path


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file (or run metadata JSON)")
    p.add_argument("--nq", type=int, help="number of qubits")
    p.add_argument("--k", type=float, help="kick strength")
    p.add_argument("--T", type=float, help="rotation parameter")
    p.add_argument("--m", type=int, help="measured qubit, 1 = most significant")
    p.add_argument("--backend", choices=[b.value for b in MeasurementBackend])
    p.add_argument("--M", type=int, help="number of trajectories")
    p.add_argument("--tmax", type=int, help="number of map iterations")
    p.add_argument("--seed", type=int)
    p.add_argument("--schedule", help="sampling points per decade, e.g. geometric:30")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker threads (overrides KICKLOC_WORKERS)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kickloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve one ensemble and write its time series")
    _run_flags(p)
    p.add_argument("--snapshot", type=int, action="append", default=[], help="write the distribution at this time")

    p = sub.add_parser("compare-methods", help="trajectories vs random phases")
    _run_flags(p)

    p = sub.add_parser("scan-k", help="time-averaged IPR versus k for several register sizes")
    _run_flags(p)
    p.add_argument("--k-list", type=_float_list, default=[2, 3, 4, 5, 6, 7, 8, 9, 10])
    p.add_argument("--nq-list", type=_int_list, default=[9, 10, 11])
    p.add_argument("--m-offset", type=int, default=8, help="measure m = n_q - offset")

    p = sub.add_parser("verify-oracle", help="density matrix against a trajectory ensemble")
    p.add_argument("--nq", type=int, default=4)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--t", type=int, default=50)
    p.add_argument("--M", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("reproduce-figure", help="regenerate the data of one figure")
    p.add_argument("name")
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--M", type=int)
    p.add_argument("--tmax", type=int)
    p.add_argument("--nq-list", type=_int_list)
    p.add_argument("--k-list", type=_float_list)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("resume", help="continue a run from its checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--out", default=None, help="output directory (default: checkpoint directory)")
    p.add_argument("--workers", type=int)
    return parser


def _cmd_run(args) -> int:
    settings = effective_settings(args)
    cfg = build_config(settings)
    if args.snapshot:
        cfg = replace(cfg, snapshot_times=tuple(args.snapshot))
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    ck = out / "run.klck" if cfg.checkpoint_every else None
    res = run_ensemble(cfg, args.workers, ck)
    files = write_run_outputs(res, out, "series", {"outdir": str(out)})
    if ck is not None:
        files.append(ck)
    write_manifest(out, files)
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


def _cmd_resume(args) -> int:
    ck = Path(args.checkpoint)
    out = Path(args.out) if args.out else ck.parent
    res = resume_ensemble(ck, workers=args.workers)
    files = write_run_outputs(res, out, "series", {"outdir": str(out), "resumed_from": str(ck)})
    write_manifest(out, files)
    print(f"resumed to t={res.config.t_max}; wrote {len(files)} files to {out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    settings = effective_settings(args)
    cfg = build_config(settings)
    if cfg.spec.backend is not MeasurementBackend.TRAJECTORIES:
        raise UsageError("compare-methods takes a trajectories configuration")
    out = Path(settings["out"])
    cmp = run_method_comparison(cfg, args.workers)
    files = write_run_outputs(cmp.trajectories, out, "trajectories")
    files += write_run_outputs(cmp.random_phase, out, "random_phase")
    summary = out / "comparison.json"
    summary.write_text(json.dumps({
        "fraction_consistent": cmp.fraction_consistent,
        "consistent": cmp.consistent,
    }, indent=2))
    files.append(summary)
    write_manifest(out, files)
    print(f"fraction of times within 3 sigma: {cmp.fraction_consistent:.3f} "
          f"({'consistent' if cmp.consistent else 'INCONSISTENT'})")
    return EXIT_OK


def _cmd_scan(args) -> int:
    settings = effective_settings(args)
    if any(n - args.m_offset < 1 for n in args.nq_list):
        raise UsageError("m-offset leaves no valid qubit for some n_q")
    settings["nq"] = min(args.nq_list)
    settings["m"] = settings["nq"] - args.m_offset
    if settings["backend"] not in ("trajectories", "random-phase"):
        raise UsageError("scan-k needs a stochastic measurement backend")
    cfg = build_config(settings)
    out = Path(settings["out"])
    report = run_k_scan(SweepConfig(cfg, tuple(args.k_list), tuple(args.nq_list), args.m_offset, out), args.workers)
    write_manifest(out, [out / "k_scan.csv", out / "k_scan.json"])
    print(f"k_c estimate: {report.k_c}; xi0/L at k_c: {report.xi0_over_L}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    if args.m is not None and not 1 <= args.m <= args.nq:
        raise UsageError(f"--m must lie in [1, {args.nq}]")
    check = verify_oracle(MapParams(args.k, args.T, args.nq), args.m if args.m is not None else args.nq,
                          args.t, args.M, args.seed, args.workers)
    ok = check.passed()
    print(f"max |rho_nn - p_n| = {check.max_abs_diff:.3e}, max z = {check.max_z:.2f}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def _cmd_figure(args) -> int:
    if args.name not in FIGURES:
        raise UsageError(f"unknown figure {args.name!r}; choose from {', '.join(FIGURES)}")
    files = reproduce_figure(args.name, args.out, args.paper_scale, args.M, args.tmax,
                             args.nq_list, args.k_list, args.seed, args.workers)
    write_manifest(args.out, files)
    print(f"wrote {len(files)} files to {args.out}")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "resume": _cmd_resume,
    "compare-methods": _cmd_compare,
    "scan-k": _cmd_scan,
    "verify-oracle": _cmd_verify,
    "reproduce-figure": _cmd_figure,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DomainError, CapacityError, ValueError) as exc:
        print(f"kickloc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KickLocError, OSError, RuntimeError) as exc:
        print(f"kickloc {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())
