"""Command-line entry point: ``graphpde <command> [options]``.

Every command accepts ``--seed``, ``--profile``, ``--config`` (a flat YAML
or JSON mapping of option names to values) and ``--out``.  Explicit
command-line flags override the config file, which overrides defaults.  The
output root defaults to ``$GRAPHPDE_OUT`` (or ``./runs``) and every run
writes its resolved configuration to ``config.json`` in its directory.

Exit codes: 0 success, 2 configuration error, 3 data/input error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class ConfigError(ValueError):
    pass


def _csv_ints(s):
    return [int(v) for v in str(s).split(",") if v.strip()]


def _kv_floats(items):
    """``["c=0.7", "k=0.1"]`` -> ``{"c": 0.7, "k": 0.1}``."""
    out = {}
    for it in items or []:
        k, sep, v = str(it).partition("=")
        if not sep:
            raise ConfigError(f"expected name=value, got {it!r}")
        out[k.strip()] = float(v)
    return out


def _bounds(items):
    """``["c=-2:2"]`` -> ``{"c": (-2.0, 2.0)}``."""
    out = {}
    for it in items or []:
        k, sep, v = str(it).partition("=")
        lo, sep2, hi = v.partition(":")
        if not (sep and sep2):
            raise ConfigError(f"expected name=lo:hi, got {it!r}")
        out[k.strip()] = (float(lo), float(hi))
    return out


# ---------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--profile", default=None, help="model profile: S, M, L, XL, desk, tiny")
    p.add_argument("--config", default=None, help="flat YAML/JSON file of option values")
    p.add_argument("--out", default=None, help="output directory")


def _train_opts(p):
    p.add_argument("--data", default=None, help="dataset directory")
    p.add_argument("--val-data", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--warmup-epochs", type=float, default=None)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--double", action="store_true", default=None)
    p.add_argument("--shift-augment", action="store_true", default=None,
                   help="random periodic translations of periodic samples during training")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphpde", description="PDE surrogate toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset")
    _common(p)
    p.add_argument("--family", default=None, help="dcr, dcr-trig, wave, advection, heat")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--non-periodic", action="store_true", default=None)
    p.add_argument("--n-x", type=int, default=None)
    p.add_argument("--n-t", type=int, default=None)
    p.add_argument("--n-trig", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("train", help="train a model from scratch")
    _common(p)
    _train_opts(p)

    p = sub.add_parser("finetune", help="continue training a checkpoint")
    _common(p)
    _train_opts(p)
    p.add_argument("--ckpt", default=None)

    p = sub.add_parser("eval", help="nRMSE of a checkpoint on a dataset")
    _common(p)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--data", default=None)

    p = sub.add_parser("invert", help="recover coefficients or fields from sparse observations")
    _common(p)
    p.add_argument("--mode", default=None, help="scalar, sysid or field")
    p.add_argument("--forward", default=None, help="reference or surrogate")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--pde", default=None, help=".pde file (scalar and field modes)")
    p.add_argument("--truth", nargs="*", default=None, help="name=value scalar payloads")
    p.add_argument("--bounds", nargs="*", default=None, help="name=lo:hi search box per unknown")
    p.add_argument("--slot", default=None, help="field slot to recover (field mode)")
    p.add_argument("--truth-field", default=None, help="numpy expression in x for the true field")
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--ic-noise", type=float, default=None)
    p.add_argument("--n-ic", type=int, default=None)
    p.add_argument("--locations", type=int, default=None)
    p.add_argument("--mean-times", type=float, default=None)
    p.add_argument("--swarm", type=int, default=None)
    p.add_argument("--pso-iterations", type=int, default=None)
    p.add_argument("--gd-steps", type=int, default=None)
    p.add_argument("--gd-lr", type=float, default=None)
    p.add_argument("--smooth", type=float, default=None)
    p.add_argument("--n-x", type=int, default=None)
    p.add_argument("--n-t", type=int, default=None)

    p = sub.add_parser("inspect-dag", help="compile a .pde file, validate it and print DOT")
    _common(p)
    p.add_argument("pde", help=".pde file")
    p.add_argument("--no-aux", action="store_true", help="omit branch and modulation nodes")

    p = sub.add_parser("scaling-study", help="test error versus dataset size at a fixed budget")
    _common(p)
    _train_opts(p)
    p.add_argument("--family", default=None)
    p.add_argument("--sizes", default=None, help="comma-separated dataset sizes")
    p.add_argument("--test-size", type=int, default=None)
    return ap


DEFAULTS = {
    "common": {"seed": 0, "profile": "desk"},
    "gen-data": {"family": "dcr", "n": 100, "non_periodic": False, "n_x": 64, "n_t": 51, "n_trig": 0, "workers": 1},
    "train": {"data": None, "val_data": None, "epochs": 10, "iterations": None, "batch_size": 16, "lr": 1e-4,
              "warmup_epochs": 1.0, "n_points": 512, "double": False, "shift_augment": False},
    "eval": {"ckpt": None, "data": None},
    "invert": {"mode": "scalar", "forward": "reference", "ckpt": None, "pde": None, "truth": None, "bounds": None,
               "slot": "s", "truth_field": None, "noise": 0.0, "ic_noise": 0.0, "n_ic": 4, "locations": 8,
               "mean_times": 8.0, "swarm": 20, "pso_iterations": 40, "gd_steps": 100, "gd_lr": 0.05,
               "smooth": 0.0, "n_x": 64, "n_t": 51},
    "inspect-dag": {"pde": None, "no_aux": False},
    "scaling-study": {"family": "advection", "sizes": "100,400,1600", "test_size": 100},
}
DEFAULTS["finetune"] = {**DEFAULTS["train"], "ckpt": None}
DEFAULTS["scaling-study"] = {**DEFAULTS["train"], **DEFAULTS["scaling-study"], "iterations": 2000}


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    cmd = args.command
    cfg = {**DEFAULTS["common"], **DEFAULTS[cmd]}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            loaded = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(loaded, dict) or any(isinstance(v, dict) for v in loaded.values()):
            raise ConfigError("config file must be a flat mapping")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(cfg) - {"out"}
        if unknown:
            raise ConfigError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        cfg.update(loaded)
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = cmd
    return cfg


def _out_dir(cfg) -> Path:
    if cfg.get("out"):
        out = Path(cfg["out"])
    else:
        out = Path(os.environ.get("GRAPHPDE_OUT", "runs")) / f"{cfg['command']}-seed{cfg['seed']}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, cfg: dict):
    (out / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True, default=str))


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise ConfigError(f"--{k.replace('_', '-')} is required for {cfg['command']}")


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg) -> int:
    from .data import generate_dataset, write_dataset
    from .families import FamilySpec
    from .fields import grid_for

    spec = FamilySpec(family=cfg["family"], periodic=not cfg["non_periodic"], n_trig=int(cfg["n_trig"]))
    grid = grid_for(spec.periodic, int(cfg["n_x"]), int(cfg["n_t"]))
    out = _out_dir(cfg)
    _write_config(out, cfg)
    samples, stats = generate_dataset(spec, int(cfg["n"]), int(cfg["seed"]), grid, workers=int(cfg["workers"]))
    m = write_dataset(samples, out, extra={"config": cfg, "stats": stats})
    print(f"accepted {stats['accepted']} discarded {stats['discarded']} {stats['discard_reasons']}")
    print(f"dataset {out} sha256 {m['data_sha256']}")
    return 0


def _train_config(cfg):
    from .trainer import TrainConfig

    keys = ("profile", "batch_size", "lr", "warmup_epochs", "epochs", "iterations", "n_points", "seed", "double",
            "shift_augment")
    return TrainConfig.from_dict({k: cfg[k] for k in keys})


def _echo(rec):
    if rec.get("event") == "val":
        print(f"epoch {rec['epoch']} val nRMSE {rec['val_nrmse']:.4f}")
    elif rec.get("event") == "start":
        print("base checkpoint digest", rec.get("base_digest"))
    elif rec.get("event") == "step" and rec["step"] % 100 == 0:
        print(f"step {rec['step']} loss {rec['loss']:.4f} lr {rec['lr']:.2e}")


def cmd_train(cfg) -> int:
    from .data import read_dataset
    from .trainer import train

    _need(cfg, "data")
    tcfg = _train_config(cfg)
    samples = read_dataset(cfg["data"])
    val = read_dataset(cfg["val_data"]) if cfg.get("val_data") else None
    out = _out_dir(cfg)
    _write_config(out, cfg)
    res = train(tcfg, samples, val, out, echo=_echo, extra_meta={"data": str(cfg["data"])})
    print(f"checkpoint {res.checkpoint} sha256 {res.digest}")
    return 0


def cmd_finetune(cfg) -> int:
    from .data import read_dataset
    from .trainer import finetune, load_checkpoint

    _need(cfg, "ckpt", "data")
    ck = load_checkpoint(cfg["ckpt"])
    cfg["profile"] = ck.train_config.get("profile", cfg["profile"])
    tcfg = _train_config(cfg)
    samples = read_dataset(cfg["data"])
    val = read_dataset(cfg["val_data"]) if cfg.get("val_data") else None
    out = _out_dir(cfg)
    _write_config(out, cfg)
    res = finetune(cfg["ckpt"], samples, dict(tcfg.__dict__), val, out, echo=_echo)
    print(f"base digest {ck.digest}")
    print(f"checkpoint {res.checkpoint} sha256 {res.digest}")
    return 0


def cmd_eval(cfg) -> int:
    from .data import read_dataset
    from .trainer import evaluate, load_checkpoint

    _need(cfg, "ckpt", "data")
    ck = load_checkpoint(cfg["ckpt"])
    summary = evaluate(ck.model, read_dataset(cfg["data"]))
    out = _out_dir(cfg)
    _write_config(out, cfg)
    (out / "eval.json").write_text(json.dumps({"checkpoint_digest": ck.digest, **summary.as_dict()}, indent=1))
    print(f"nRMSE mean {summary.mean:.6g} median {summary.median:.6g} n {len(summary.per_sample)}")
    return 0


def _field_from_expr(expr: str, x):
    ns = {k: getattr(np, k) for k in ("sin", "cos", "exp", "tanh", "abs", "sqrt", "pi", "ones_like")}
    ns["x"] = x
    try:
        v = eval(expr, {"__builtins__": {}}, ns)  # noqa: S307 - restricted namespace
    except Exception as exc:
        raise ConfigError(f"cannot evaluate field expression {expr!r}: {exc}") from exc
    return np.broadcast_to(np.asarray(v, float), x.shape).copy()


def cmd_invert(cfg) -> int:
    from . import dsl
    from . import inverse as inv
    from .fields import grid_for, make_grid
    from .trainer import load_checkpoint

    mode = cfg["mode"]
    if mode not in ("scalar", "sysid", "field"):
        raise ConfigError("--mode must be scalar, sysid or field")
    if cfg["forward"] == "surrogate":
        _need(cfg, "ckpt")
        forward = inv.SurrogateForward(load_checkpoint(cfg["ckpt"]).model)
    elif cfg["forward"] == "reference":
        forward = inv.ReferenceForward()
    else:
        raise ConfigError("--forward must be reference or surrogate")
    truth = _kv_floats(cfg.get("truth"))
    bounds = _bounds(cfg.get("bounds"))
    plan = inv.ObservationPlan(int(cfg["n_ic"]), int(cfg["locations"]), float(cfg["mean_times"]),
                               float(cfg["noise"]), float(cfg["ic_noise"]), int(cfg["seed"]))
    pso_cfg = inv.PsoConfig(swarm=int(cfg["swarm"]), iterations=int(cfg["pso_iterations"]), seed=int(cfg["seed"]))

    if mode == "sysid":
        text = inv.SYSID_TEMPLATE
        if set(truth) != set(inv.SYSID_SLOTS):
            raise ConfigError(f"--truth must give all of {inv.SYSID_SLOTS}")
    else:
        _need(cfg, "pde")
        text = Path(cfg["pde"]).read_text()
    defn = dsl.parse(text)
    grid = grid_for(defn.periodic, int(cfg["n_x"]), int(cfg["n_t"]))
    x = make_grid(grid)
    payloads = dict(truth)
    if mode == "field":
        _need(cfg, "truth_field")
        payloads[cfg["slot"]] = dsl.FieldSamples(x, _field_from_expr(cfg["truth_field"], x))
        unknowns = (cfg["slot"],)
    elif mode == "sysid":
        unknowns = inv.SYSID_SLOTS
    else:
        if not bounds:
            raise ConfigError("--bounds is required for scalar recovery")
        unknowns = tuple(bounds)
        missing = set(unknowns) - set(truth)
        if missing:
            raise ConfigError(f"no ground truth for {sorted(missing)} (needed to synthesise observations)")
    ic_slots = tuple(ic.slot for ic in defn.initial_conditions)
    obs = inv.make_observations(text, payloads, plan, unknowns, grid, inv.ReferenceForward(), ic_slots=ic_slots)
    out = _out_dir(cfg)
    _write_config(out, cfg)
    if mode == "scalar":
        res = inv.recover_scalars(obs, forward, bounds, pso_cfg)
    elif mode == "sysid":
        res = inv.identify_system(obs, forward, pso_cfg, bounds or None)
    else:
        gd = inv.GdConfig(steps=int(cfg["gd_steps"]), lr=float(cfg["gd_lr"]), smooth=float(cfg["smooth"]))
        res = inv.recover_field(obs, cfg["slot"], forward, gd)
    report = {"mode": mode, "objective": res.objective, "errors": res.errors, "status": res.status,
              "n_observations": obs.n_obs,
              "estimates": {k: (np.asarray(v).tolist() if np.ndim(v) else v) for k, v in res.estimates.items()}}
    (out / "report.json").write_text(json.dumps(report, indent=1))
    arrays = {"trajectory": np.asarray(res.trajectory)}
    if mode == "field":
        arrays.update(x=x, estimate=np.asarray(res.estimates[cfg["slot"]]), truth=payloads[cfg["slot"]].values)
    np.savez(out / "arrays.npz", **arrays)
    if mode == "field":
        err = res.errors[cfg["slot"]]
        print(f"field {cfg['slot']}: relative L2 error {err:.4g}, objective {res.objective:.4g}")
    else:
        table = res.table({k: truth[k] for k in unknowns})
        (out / "report.txt").write_text(table + "\n")
        print(table)
    print(f"report {out / 'report.json'}")
    return 0


def cmd_inspect_dag(cfg) -> int:
    from . import dsl
    from .dag import compile_pde, export_dot, validate

    path = Path(cfg["pde"])
    if not path.exists():
        raise FileNotFoundError(f"{path} not found")
    dag = compile_pde(dsl.parse(path.read_text()))
    violations = validate(dag)
    dot = export_dot(dag, aux=not cfg["no_aux"])
    sys.stdout.write(dot)
    core = sum(not nd.is_aux for nd in dag.nodes)
    print(f"// nodes {dag.n} (core {core}, aux {dag.n - core}), edges {len(dag.edges)}, "
          f"violations {len(violations)}")
    for v in violations:
        print(f"// violation node={v.node} {v.rule}: {v.message}")
    if cfg.get("out"):
        out = _out_dir(cfg)
        (out / "dag.dot").write_text(dot)
        _write_config(out, cfg)
    return 0 if not violations else EXIT_DATA


def cmd_scaling_study(cfg) -> int:
    from .data import generate_dataset, read_dataset
    from .families import FamilySpec
    from .trainer import scaling_study

    sizes = _csv_ints(cfg["sizes"])
    tcfg = _train_config(cfg)
    if cfg.get("data"):
        pool = read_dataset(cfg["data"])
        test = read_dataset(cfg["val_data"]) if cfg.get("val_data") else None
        if test is None:
            raise ConfigError("--val-data (test set) is required with --data")
    else:
        spec = FamilySpec(family=cfg["family"])
        pool, _ = generate_dataset(spec, max(sizes), int(cfg["seed"]))
        test, _ = generate_dataset(spec, int(cfg["test_size"]), int(cfg["seed"]) + 1)
    out = _out_dir(cfg)
    _write_config(out, cfg)
    rep = scaling_study(tcfg, pool, test, sizes, out, echo=None)
    for r in rep.rows:
        print(f"size {r['size']:6d} test nRMSE {r['test_nrmse']:.4f} time {r['seconds']:.1f}s")
    print(f"alpha {rep.alpha:.3f} (residual {rep.alpha_residual:.3g}) "
          f"beta {rep.beta:.3f} (residual {rep.beta_residual:.3g}) strictly decreasing {rep.strictly_decreasing()}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "finetune": cmd_finetune, "eval": cmd_eval,
    "invert": cmd_invert, "inspect-dag": cmd_inspect_dag, "scaling-study": cmd_scaling_study,
}


def _exit_code(exc: BaseException) -> int:
    from . import dsl
    from .dag import CompileError
    from .data import DatasetError
    from .inverse import RecoveryDiverged
    from .solvers import SolverError
    from .trainer import CheckpointError, TrainingDiverged

    if isinstance(exc, (TrainingDiverged, RecoveryDiverged, SolverError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DatasetError, CheckpointError, FileNotFoundError, OSError, dsl.PdeSyntaxError,
                        dsl.PdeDefinitionError, CompileError)):
        return EXIT_DATA
    if isinstance(exc, (ConfigError, ValueError, TypeError, KeyError)):
        return EXIT_CONFIG
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except Exception as exc:  # mapped to exit classes below
        code = _exit_code(exc)
        print(f"graphpde {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
