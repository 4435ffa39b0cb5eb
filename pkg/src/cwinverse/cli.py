"""Command-line front end: data generation, inversion, verification, reporting.

Subcommands:

  forward           simulate sample paths and persist noisy Cauchy data
  invert            run the averaged reconstruction (generating data unless
                    --data points at a `forward` output directory)
  verify-weights    print the weight admissibility report as JSON
  gradcheck         finite-difference check of the assembled gradient
  report            aggregate a run directory into plot-ready CSV/JSON
  list-experiments  print the experiment registry as JSON

Every output directory receives a manifest (config echo, seeds, RNG
identifier, version, config hash) sufficient to re-run the job. Config files
are JSON with a fixed schema; unknown keys are rejected so a typo cannot
silently fall back to a default. Exit codes: 0 success, 1 runtime failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .driver import RunPlan, RunResult, l2_relative_error, run_inverse
from .experiments import experiment_ids, registry, spec_from_config, spec_to_config, true_source_grid
from .forward import CauchyData, generate_dataset
from .mesh import Field, build_mesh, cfl_number, load_field, read_raw, save_field, write_raw
from .objective import DofLayout, ObjectiveContext, eval_J_direct
from .stochastic import RNG_ALGORITHM, BrownianPath, sample_path, split_seed
from .weights import CarlemanParams, check_condition_psi2, classify_boundary

__all__ = ["main", "entry", "ConfigError"]


class ConfigError(ValueError):
    """User-facing configuration problem; reported with exit code 2."""


# Schema: every accepted config key with its converter. CLI flags use the
# same names (dashes for underscores) and take precedence over the file.
CONFIG_SCHEMA = {
    "experiment": str,
    "seed": int,
    "paths": int,
    "outer": int,
    "steps": int,
    "delta": float,
    "kappa": float,
    "lam": float,
    "c0": float,
    "alpha": float,
    "beta1": float,
    "beta2": float,
    "epsilon": float,
    "forward_paths": int,
    "functional_noise": str,
    "bottom_ring": str,
    "paper_literal_volume": bool,
    "workers": int,
    "trace_every": int,
    "out": str,
}


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path}: top level must be an object")
    return validate_config(raw, origin=path)


def validate_config(raw: dict, origin: str = "config") -> dict:
    cfg = {}
    for key, value in raw.items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{origin}: unknown key {key!r}")
        conv = CONFIG_SCHEMA[key]
        try:
            cfg[key] = conv(value) if not isinstance(value, bool) or conv is bool else conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: field {key!r}: {exc}") from exc
    return cfg


def resolve_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for key in CONFIG_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            cfg[key] = CONFIG_SCHEMA[key](flag)
    if "experiment" not in cfg:
        raise ConfigError("no experiment selected (use --experiment or a config file)")
    cfg.setdefault("seed", 0)
    try:
        spec = spec_from_config(cfg)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return cfg, spec


# Execution details that do not influence results are kept out of the hash,
# so runs that differ only in placement or parallelism compare equal.
_NON_SEMANTIC_KEYS = {"out", "workers"}


def config_hash(cfg: dict) -> str:
    semantic = {k: v for k, v in cfg.items() if k not in _NON_SEMANTIC_KEYS}
    blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_manifest(out: Path, command: str, cfg: dict, extra: dict | None = None) -> dict:
    manifest = {
        "command": command,
        "config": dict(sorted(cfg.items())),
        "config_hash": config_hash(cfg),
        "master_seed": cfg.get("seed", 0),
        "rng": RNG_ALGORITHM,
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    if not path.exists():
        raise ConfigError(f"{run_dir}: no manifest.json (not a run directory?)")
    manifest = json.loads(path.read_text())
    if config_hash(manifest.get("config", {})) != manifest.get("config_hash"):
        raise ConfigError(f"{run_dir}: manifest config hash mismatch; refusing to use it")
    return manifest


# ---------------------------------------------------------------------------
# forward


def _dataset_dir(out: Path, index: int) -> Path:
    return out / f"path_{index:03d}"


def cmd_forward(args) -> int:
    cfg, spec = resolve_config(args)
    out = Path(cfg.get("out", "forward-out"))
    n = cfg.get("forward_paths", spec.n_forward_paths)
    started = time.perf_counter()
    records, fields = generate_dataset(spec, n, cfg["seed"], delta=cfg.get("delta", spec.delta),
                                       return_fields=True)
    write_manifest(out, "forward", cfg, {"n_paths": n, "note": "traces are noisy; trajectory fields are clean"})
    m = spec.inverse_mesh
    params = (m.T, m.Lx, m.Ly, m.ox, m.oy, 0.0)
    for rec, traj in zip(records, fields):
        d = _dataset_dir(out, rec.path_id)
        d.mkdir(parents=True, exist_ok=True)
        write_raw(d / "f.field", m.shape, params, rec.f)
        write_raw(d / "g_left.field", (m.M + 1, m.Ny + 1, 1), params, rec.g_left)
        write_raw(d / "g_right.field", (m.M + 1, m.Ny + 1, 1), params, rec.g_right)
        write_raw(d / "g_top.field", (m.M + 1, m.Nx + 1, 1), params, rec.g_top)
        write_raw(d / "brownian.field", (rec.brownian.M, 1, 1),
                  (rec.brownian.tau, 0, 0, 0, 0, 0), rec.brownian.increments)
        save_field(traj, d / "trajectory.field")
    (out / "timings.json").write_text(json.dumps(
        {"generate_seconds": time.perf_counter() - started}, indent=2) + "\n")
    print(f"wrote {n} sample paths to {out}")
    return 0


def load_dataset(data_dir: Path, spec) -> list[CauchyData]:
    manifest = read_manifest(data_dir)
    if manifest.get("command") != "forward":
        raise ConfigError(f"{data_dir}: not a forward output directory")
    if manifest["config"].get("experiment") != spec.id:
        raise ConfigError(
            f"{data_dir}: dataset was generated for experiment "
            f"{manifest['config'].get('experiment')!r}, not {spec.id!r}"
        )
    mesh = spec.inverse_mesh
    records = []
    for index in range(manifest["n_paths"]):
        d = _dataset_dir(data_dir, index)
        if not d.exists():
            raise ConfigError(f"{data_dir}: missing {d.name}")
        _, _, f = read_raw(d / "f.field")
        _, _, gl = read_raw(d / "g_left.field")
        _, _, gr = read_raw(d / "g_right.field")
        _, _, gt = read_raw(d / "g_top.field")
        dims, params, inc = read_raw(d / "brownian.field")
        brownian = BrownianPath(inc.reshape(dims[0]), params[0], None)
        records.append(CauchyData(mesh, f, gl[:, :, 0], gr[:, :, 0], gt[:, :, 0],
                                  path_id=index, brownian=brownian))
    return records


# ---------------------------------------------------------------------------
# invert


def _write_series(out: Path, result: RunResult) -> None:
    rows = []
    for pr in result.path_results:
        for outer, step, err in pr.error_series:
            rows.append(f"{pr.index},{outer},{step},{err!r}")
    (out / "error_vs_step.csv").write_text("path,outer,step,l2_error\n" + "\n".join(rows) + "\n")

    lines = ["n,mean," + ",".join(f"path_{p.index:03d}" for p in result.path_results if not p.failed)]
    good = [p for p in result.path_results if not p.failed]
    for n in range(result.consecutive.shape[0]):
        per = ",".join(repr(result.consecutive_per_path[g, n]) for g in range(len(good)))
        lines.append(f"{n + 1},{result.consecutive[n]!r},{per}")
    (out / "consecutive_difference.csv").write_text("\n".join(lines) + "\n")

    rows = ["path,outer,step,J,grad_inf"]
    for pr in result.path_results:
        for outer, step, value, gn in pr.trace_values:
            rows.append(f"{pr.index},{outer},{step},{value!r},{gn!r}")
    (out / "loss_trace.csv").write_text("\n".join(rows) + "\n")


def cmd_invert(args) -> int:
    cfg, spec = resolve_config(args)
    out = Path(cfg.get("out", "invert-out"))
    dataset_hash = None
    started = time.perf_counter()
    if args.data:
        data_dir = Path(args.data)
        dataset = load_dataset(data_dir, spec)
        dataset_hash = config_hash(read_manifest(data_dir)["config"])
        gen_seconds = 0.0
    else:
        dataset = generate_dataset(spec, spec.n_forward_paths, cfg["seed"],
                                   delta=cfg.get("delta", spec.delta))
        gen_seconds = time.perf_counter() - started

    plan = RunPlan(
        spec=spec,
        dataset=tuple(dataset),
        master_seed=cfg["seed"],
        n_paths=spec.n_paths,
        n_outer=spec.n_outer,
        adam=spec.adam,
        workers=cfg.get("workers", 1),
        trace_every=cfg.get("trace_every", 50),
    )
    result = run_inverse(plan)

    write_manifest(out, "invert", cfg, {"dataset_hash": dataset_hash} if dataset_hash else None)
    save_field(result.u_c, out / "u_c.field")
    pdir = out / "paths"
    pdir.mkdir(exist_ok=True)
    for pr in result.path_results:
        if not pr.failed:
            save_field(Field(spec.inverse_mesh, pr.final_field), pdir / f"path_{pr.index:03d}.field")

    metrics = {
        "experiment": spec.id,
        "config_hash": config_hash(cfg),
        "l2_relative_error": result.l2_error,
        "l2_error_per_path": result.l2_error_per_path,
        "consecutive_difference": [float(v) for v in result.consecutive],
        "n_paths": plan.n_paths,
        "n_failed": result.n_failed,
        "failures": [p.error for p in result.path_results if p.failed],
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps({
        "generate_seconds": gen_seconds,
        "solve_seconds": result.wall_clock["solve_seconds"],
        "per_path_seconds": result.wall_clock["per_path_seconds"],
        "total_seconds": time.perf_counter() - started,
    }, indent=2) + "\n")
    _write_series(out, result)
    print(f"l2 relative error: {result.l2_error:.4f}  ({out})")
    return 0


# ---------------------------------------------------------------------------
# verify-weights / gradcheck


def cmd_verify_weights(args) -> int:
    cfg, spec = resolve_config(args)
    report = check_condition_psi2(spec.inverse_mesh, spec.carleman)
    cls = classify_boundary(spec.inverse_mesh, spec.carleman)
    report["observed_edges"] = list(cls.observed_edges)
    report["cfl_number"] = float(cfl_number(spec.inverse_mesh))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _parse_mesh_arg(text: str):
    try:
        m, nx, ny = (int(p) for p in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--mesh expects MxNXxNY, got {text!r}") from exc
    return m, nx, ny


def cmd_gradcheck(args) -> int:
    cfg, spec = resolve_config(args)
    m, nx, ny = _parse_mesh_arg(args.mesh)
    mesh = build_mesh(m, nx, ny, 1.0, 1.0, 1.5)
    probes = args.probes
    rng = np.random.default_rng(cfg["seed"])

    small = replace(spec, forward_mesh=mesh, inverse_mesh=mesh, window=None)
    record = generate_dataset(small, 1, cfg["seed"])[0]
    path = sample_path(split_seed(cfg["seed"], "functional", 0), mesh.M, mesh.tau)
    ctx = ObjectiveContext(mesh, spec.carleman, spec.kappa, record, path,
                           spec.a_inverse, spec.nonlinearity,
                           paper_literal_volume=spec.paper_literal_volume,
                           layout=DofLayout(mesh, spec.bottom_ring_mode))
    x = rng.standard_normal(ctx.layout.free_shape)
    ctx.set_previous_iterate(ctx.embed(rng.standard_normal(ctx.layout.free_shape)))

    started = time.perf_counter()
    g = ctx.grad_J(x).ravel()
    scale = max(1.0, float(np.max(np.abs(x))))
    h = 1e-6 * scale
    flat = x.ravel().copy()
    picks = rng.choice(flat.size, size=min(probes, flat.size), replace=False)
    max_rel = 0.0
    for idx in picks:
        keep = flat[idx]
        flat[idx] = keep + h
        j_plus = eval_J_direct(flat.reshape(x.shape), ctx)
        flat[idx] = keep - h
        j_minus = eval_J_direct(flat.reshape(x.shape), ctx)
        flat[idx] = keep
        fd = (j_plus - j_minus) / (2.0 * h)
        rel = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-12)
        max_rel = max(max_rel, rel)
    print(json.dumps({
        "mesh": f"{m}x{nx}x{ny}",
        "probes": int(len(picks)),
        "max_rel_error": max_rel,
        "seconds": time.perf_counter() - started,
        "passes_1e-6": bool(max_rel < 1e-6),
    }, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    manifest = read_manifest(run_dir)
    if manifest.get("command") != "invert":
        raise ConfigError(f"{run_dir}: report expects an invert output directory")
    spec = spec_from_config(manifest["config"])
    mesh = spec.inverse_mesh
    u_c = load_field(run_dir / "u_c.field")
    u0 = u_c.values[0]
    u0_true = true_source_grid(spec)
    sup = float(np.max(np.abs(u0_true)))
    if sup == 0.0:
        raise ConfigError("true source is identically zero; nothing to report against")

    X, Y = mesh.xy_grids()
    rows = ["x,y,u0,u0_true,rel_diff"]
    for i in range(mesh.Nx + 1):
        for j in range(mesh.Ny + 1):
            rows.append(f"{X[i, j]!r},{Y[i, j]!r},{u0[i, j]!r},{u0_true[i, j]!r},"
                        f"{abs(u0[i, j] - u0_true[i, j]) / sup!r}")
    (run_dir / "reconstruction.csv").write_text("\n".join(rows) + "\n")

    metrics = json.loads((run_dir / "metrics.json").read_text())
    timings = {}
    if (run_dir / "timings.json").exists():
        timings = json.loads((run_dir / "timings.json").read_text())
    summary = {
        "experiment": manifest["config"].get("experiment"),
        "final_l2_relative_error": l2_relative_error(u0, u0_true, mesh),
        "metrics": metrics,
        "runtimes": timings,
        "config": manifest["config"],
        "rng": manifest.get("rng"),
        "version": manifest.get("version"),
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"final_l2_relative_error": summary["final_l2_relative_error"],
                      "report_dir": str(run_dir)}, indent=2))
    return 0


def cmd_list_experiments(args) -> int:
    listing = {}
    for eid in experiment_ids():
        spec = registry(eid)
        entry = spec_to_config(spec)
        entry["reference_error"] = spec.reference_error
        entry["inverse_mesh"] = [spec.inverse_mesh.M, spec.inverse_mesh.Nx, spec.inverse_mesh.Ny]
        entry["forward_mesh"] = [spec.forward_mesh.M, spec.forward_mesh.Nx, spec.forward_mesh.Ny]
        entry["window"] = spec.window
        listing[eid] = entry
    print(json.dumps(listing, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--experiment", help="experiment id (see list-experiments)")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="master seed (default 0)")
    parser.add_argument("--paths", type=int, help="sample paths entering the average")
    parser.add_argument("--outer", type=int, help="outer fixed-point iterations")
    parser.add_argument("--steps", type=int, help="Adam steps per minimization")
    parser.add_argument("--delta", type=float, help="multiplicative noise level")
    parser.add_argument("--kappa", type=float, help="regularization weight")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel path workers (default: 1)")
    parser.add_argument("--trace-every", dest="trace_every", type=int, help="loss-trace subsampling")
    parser.add_argument("--forward-paths", dest="forward_paths", type=int, help="simulated datasets")
    parser.add_argument("--functional-noise", dest="functional_noise",
                        choices=["resample", "reuse_forward_path"])
    parser.add_argument("--bottom-ring", dest="bottom_ring", choices=["free", "frozen"])
    parser.add_argument("--paper-literal-volume", dest="paper_literal_volume", action="store_true",
                        default=None, help="use the printed double volume factor in the data term")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cwinverse",
                                     description="Carleman-weighted inverse source reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="simulate sample paths and persist Cauchy data")
    _add_common(p)
    p.set_defaults(fn=cmd_forward)

    p = sub.add_parser("invert", help="run the averaged reconstruction")
    _add_common(p)
    p.add_argument("--data", help="directory produced by `forward` (default: generate in-process)")
    p.set_defaults(fn=cmd_invert)

    p = sub.add_parser("verify-weights", help="print the weight admissibility report")
    _add_common(p)
    p.set_defaults(fn=cmd_verify_weights)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_common(p)
    p.add_argument("--mesh", default="10x8x8", help="small mesh as MxNXxNY (default 10x8x8)")
    p.add_argument("--probes", type=int, default=50, help="number of probed components")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="aggregate a run directory into CSV/JSON")
    p.add_argument("run_dir", help="invert output directory")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("list-experiments", help="print the experiment registry")
    p.set_defaults(fn=cmd_list_experiments)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports its own message
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
