"""Command-line interface: ``hiact {synth,train,predict,eval,cv,inspect}``.

Every run writes ``<output>.config.json`` with the fully resolved settings next
to its main output. Failures print one JSON line ``{"error": kind, "message": ...}``
to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .core import HiactError, Hyperparams, INIT_STRATEGIES, flatten
from .data import (
    DatasetFile,
    ParseError,
    SchemaVersionUnsupported,
    ValidationError,
    default_synthetic_spec,
    load,
    load_categories,
    load_model,
    save,
    save_model,
    synth_generate,
)
from .evaluation import cross_validate, evaluate, fit_model, predict, write_metrics

EXIT_CODES = {"Usage": 2, "Io": 3, "Validation": 4, "TrainingFailure": 5}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("Usage", message)


def _add_hyperparams(p):
    d = Hyperparams()
    p.add_argument("--c", dest="c_reg", type=float, default=d.c_reg, help="regularization C")
    p.add_argument("--lambda", dest="lambda_loss", type=float, default=d.lambda_loss,
                   help="activity loss weight in [0, 1]; 0 trains the action-only objective")
    p.add_argument("--n-latent", type=int, default=d.n_latent, help="latent states per action")
    p.add_argument("--epsilon", dest="epsilon_cp", type=float, default=d.epsilon_cp,
                   help="cutting-plane tolerance")
    p.add_argument("--max-cccp-iters", type=int, default=d.max_cccp_iters)
    p.add_argument("--max-cp-iters", type=int, default=d.max_cp_iters)
    p.add_argument("--init", dest="init_strategy", choices=INIT_STRATEGIES, default=d.init_strategy)
    p.add_argument("--categories", type=Path, default=None,
                   help="per-segment category file for --init kmeans_categorical")
    p.add_argument("--no-standardize", action="store_true",
                   help="skip feature standardization")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hiact", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON file whose keys override the flags")
        p.add_argument("--seed", type=int, default=0)
        return p

    p = command("synth", "generate a synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-sequences", type=int, default=120)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--n-actions", type=int, default=4)
    p.add_argument("--n-latent", type=int, default=2, help="latent states of the generator")
    p.add_argument("--n-activities", type=int, default=3)
    p.add_argument("--dim", type=int, default=8)

    p = command("train", "train a model")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True, help="output model file")
    p.add_argument("--log", type=Path, default=None,
                   help="training log (JSON lines); default <model>.log.jsonl")
    _add_hyperparams(p)

    p = command("predict", "decode sequences with a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="predictions (JSON lines)")

    p = command("eval", "score a model (or a predictions file) against gold labels")
    p.add_argument("--data", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", type=Path)
    src.add_argument("--predictions", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)

    p = command("cv", "leave-one-subject-out cross-validation")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--repeats", type=int, default=1, help="repeat with seeds seed..seed+n-1")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel folds")
    _add_hyperparams(p)

    p = command("inspect", "print model dimensions, weight norms and label tables")
    p.add_argument("--model", type=Path, required=True)
    return parser


def _apply_config(args, parser):
    if getattr(args, "config", None) is None:
        return args
    try:
        overrides = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise CliError("Io", f"cannot read config {args.config}: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError("Usage", f"config {args.config}: {exc}")
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in ("command", "config"):
            raise CliError("Usage", f"unknown config key {key!r}")
        current = getattr(args, dest)
        setattr(args, dest, Path(value) if isinstance(current, Path) else value)
    return args


def _resolved(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
            if k != "config"}


def _write_config(args, output: Path) -> None:
    output = Path(output)
    if output.is_dir():
        path = output / "config.json"
    else:
        path = output.with_name(output.name + ".config.json")
    path.write_text(json.dumps(_resolved(args), indent=1, sort_keys=True) + "\n")


def _hyperparams(args) -> Hyperparams:
    try:
        return Hyperparams(c_reg=args.c_reg, lambda_loss=args.lambda_loss, n_latent=args.n_latent,
                           epsilon_cp=args.epsilon_cp, max_cccp_iters=args.max_cccp_iters,
                           max_cp_iters=args.max_cp_iters, init_strategy=args.init_strategy,
                           rng_seed=args.seed)
    except HiactError as exc:
        raise CliError("Usage", str(exc))


def _require(path: Path) -> Path:
    if not Path(path).exists():
        raise CliError("Usage", f"no such file: {path}")
    return path


def _load_dataset(path) -> DatasetFile:
    return load(_require(path))


def _categories(args):
    if args.categories is None:
        if args.init_strategy == "kmeans_categorical":
            raise CliError("Usage", "--init kmeans_categorical needs --categories")
        return None, None
    return load_categories(_require(args.categories))


def _dump_json_lines(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def cmd_synth(args) -> int:
    spec = default_synthetic_spec(seed=args.seed, n_sequences=args.n_sequences, noise=args.noise,
                                  n_actions=args.n_actions, n_latent=args.n_latent,
                                  n_activities=args.n_activities, dim=args.dim)
    ds = synth_generate(spec)
    save(ds, args.out)
    _write_config(args, args.out)
    print(f"wrote {len(ds)} sequences to {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = _load_dataset(args.data)
    hp = _hyperparams(args)
    cats, n_cats = _categories(args)
    try:
        model, report = fit_model(ds, hp, standardize=not args.no_standardize,
                                  categories=cats, n_categories=n_cats)
    except (HiactError, ValueError) as exc:
        raise CliError("TrainingFailure", str(exc))
    save_model(model, args.model)
    log_path = args.log or args.model.with_name(args.model.name + ".log.jsonl")
    _dump_json_lines(log_path, report.records + [{"kind": "summary", **report.summary()}])
    _write_config(args, args.model)
    s = report.summary()
    print(f"trained in {s['n_cccp_iters']} CCCP iterations ({s['stop_reason']}); "
          f"model written to {args.model}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(_require(args.model))
    ds = _load_dataset(args.data)
    preds = predict(model, ds.records)
    _dump_json_lines(args.out, [{"id": r.id, **p.to_dict()} for r, p in zip(ds.records, preds)])
    _write_config(args, args.out)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _read_predictions(path, ds):
    from .core import DecodeResult
    by_id = {}
    with open(_require(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, exc.colno, exc.msg) from None
            by_id[d["id"]] = DecodeResult(d["activity"], d["actions"], d["latents"], d["score"])
    missing = [r.id for r in ds.records if r.id not in by_id]
    if missing:
        raise CliError("Validation", f"no prediction for sequence {missing[0]!r}")
    return [by_id[r.id] for r in ds.records]


def cmd_eval(args) -> int:
    ds = _load_dataset(args.data)
    if args.model is not None:
        preds = predict(load_model(_require(args.model)), ds.records)
    else:
        preds = _read_predictions(args.predictions, ds)
    actions, activities = evaluate(preds, ds.records, ds.space.n_actions, ds.space.n_activities)
    write_metrics(args.out_dir, actions, activities, ds.action_names, ds.activity_names)
    _write_config(args, args.out_dir)
    print(f"action accuracy {actions.accuracy:.4f}  activity accuracy {activities.accuracy:.4f}")
    return 0


def cmd_cv(args) -> int:
    ds = _load_dataset(args.data)
    if args.init_strategy == "kmeans_categorical":
        raise CliError("Usage", "cv does not support kmeans_categorical initialization")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for rep in range(args.repeats):
        args_seed = args.seed + rep
        hp = Hyperparams.from_dict({**_hyperparams(args).to_dict(), "rng_seed": args_seed})
        try:
            cv = cross_validate(ds, hp, n_jobs=args.workers, standardize=not args.no_standardize)
        except HiactError as exc:
            raise CliError("Validation", str(exc))
        runs.append({"seed": args_seed, **cv.to_dict()})
        (out / f"cv_seed{args_seed}.txt").write_text(cv.table() + "\n")
        print(f"seed {args_seed}\n{cv.table()}")
    # wall times differ between runs; keep them out of the report
    for run in runs:
        for fold in run["folds"]:
            fold["train"].pop("wall_time", None)
    (out / "cv.json").write_text(json.dumps(runs, indent=1, sort_keys=True) + "\n")
    _write_config(args, out)
    return 0


def cmd_inspect(args) -> int:
    model = load_model(_require(args.model))
    sp = model.space
    w = model.weights
    print(f"actions={sp.n_actions} latent={sp.n_latent} activities={sp.n_activities} "
          f"D={sp.dim_segment} D0={sp.dim_global} parameters={sp.dim}")
    for name in ("w1", "w2", "w3", "w4", "w5"):
        block = getattr(w, name)
        print(f"  {name} shape={block.shape} norm={np.linalg.norm(block):.6g}")
    print(f"  total norm={np.linalg.norm(flatten(w)):.6g}")
    print("actions:   " + ", ".join(f"{i}={n}" for i, n in enumerate(model.action_names)))
    print("activities: " + ", ".join(f"{i}={n}" for i, n in enumerate(model.activity_names)))
    if model.hyperparams:
        print("hyperparams: " + json.dumps(model.hyperparams, sort_keys=True))
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "predict": cmd_predict, "eval": cmd_eval,
            "cv": cmd_cv, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("Usage", "missing subcommand (one of: " + ", ".join(COMMANDS) + ")")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args = _apply_config(args, parser)
        return COMMANDS[args.command](args)
    except CliError as exc:
        kind, msg = exc.kind, str(exc)
    except (ParseError, SchemaVersionUnsupported, ValidationError) as exc:
        kind, msg = "Validation", str(exc)
    except HiactError as exc:
        kind, msg = "Validation", str(exc)
    except OSError as exc:
        kind, msg = "Io", str(exc)
    sys.stderr.write(json.dumps({"error": kind, "message": msg}) + "\n")
    return EXIT_CODES[kind]


if __name__ == "__main__":
    sys.exit(main())
