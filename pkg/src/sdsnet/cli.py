"""Command-line entry point: ``sdsnet {generate,train,eval,cv,gradcheck}``.

Every command accepts ``--config run.json`` holding any of the sections
``gen``, ``model``, ``train``, ``paths`` and ``methods``; explicit flags
override file values. Exit status is 0 on success, 1 on a numeric or
training failure and 2 on a usage, config or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import NumericError
from .datagen import CALIBRATED_SPEC, GenSpec, generate, summary
from .ingest import FormatError, StoreError, read_store, write_store
from .models import Batch, ConfigError, ModelConfig, load_checkpoint, save_checkpoint
from .models.checkpoint import sidecar
from .train_eval import (
    METHODS,
    SDS_SUM,
    FoldError,
    TrainConfig,
    audit_leakage,
    cross_validate,
    evaluate,
    evaluate_sds_sum,
    make_fold_plan,
    method_config,
    to_table,
    train,
    write_report,
)
from .train_eval.report import CSV_COLUMNS

DATA_ENV = "SDSNET_DATA"
EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
SECTIONS = ("gen", "model", "train", "paths", "methods")
PATH_KEYS = ("data", "out", "report", "checkpoint")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    gen: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)  # optional "preset" plus ModelConfig overrides
    train: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    methods: list = field(default_factory=list)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(doc) - set(SECTIONS)
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")
        return cls(**doc)

    def check(self) -> None:
        """Validate every section before any work starts."""
        try:
            self._check()
        except UsageError:
            raise
        except (ValueError, TypeError) as exc:
            raise UsageError(str(exc)) from exc

    def _check(self) -> None:
        gen_keys = {f.name for f in fields(GenSpec)}
        if set(self.gen) - gen_keys:
            raise UsageError(f"unknown gen keys: {sorted(set(self.gen) - gen_keys)}")
        if set(self.paths) - set(PATH_KEYS):
            raise UsageError(f"unknown paths keys: {sorted(set(self.paths) - set(PATH_KEYS))}")
        for m in self.methods:
            if m not in METHODS:
                raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        self.gen_spec().validate()
        self.model_config()
        self.train_config()

    def gen_spec(self) -> GenSpec:
        return GenSpec(**self.gen)

    def model_config(self) -> ModelConfig:
        d = dict(self.model)
        preset = d.pop("preset", "tiny")
        return ModelConfig.preset(preset, **d)

    def train_config(self) -> TrainConfig:
        d = dict(self.train)
        preset = d.pop("preset", self.model.get("preset", "tiny"))
        if preset == "tiny":
            return TrainConfig.from_dict({"epochs": TrainConfig.tiny().epochs, **d})
        if preset == "full":
            return TrainConfig.from_dict(d)
        raise UsageError(f"unknown train preset {preset!r}")


def _csv_ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _csv_methods(text: str) -> list:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return methods


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdsnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its values")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--preset", choices=("tiny", "full"), help="model scale preset (default tiny)")
    model.add_argument("--epochs", type=int)
    model.add_argument("--lr", type=float)
    model.add_argument("--batch-size", type=int)
    model.add_argument("--fold-seed", type=int, help="seed of the stratified fold assignment")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help=f"session store directory (default: ${DATA_ENV})")

    g = sub.add_parser("generate", parents=[common], help="write a synthetic cohort to a session store")
    g.add_argument("--out", help="store directory")
    g.add_argument("--calibrated", action="store_true", help="use the 200-subject calibrated cohort spec")
    g.add_argument("--n-subjects", type=int)
    g.add_argument("--prevalence", type=float)
    g.add_argument("--agreement", type=float, dest="sds_agreement")
    g.add_argument("--signal", type=float, dest="signal_strength")
    g.add_argument("--frames", type=int, dest="frames_per_clip")
    g.add_argument("--height", type=int, dest="clip_height")
    g.add_argument("--width", type=int, dest="clip_width")
    g.add_argument("--seed", type=int)

    t = sub.add_parser("train", parents=[common, data, model], help="train one model on all folds but one")
    t.add_argument("--method", choices=[m for m in METHODS if m != SDS_SUM], default=None)
    t.add_argument("--fold", type=int, required=True, help="held-out fold 0..4")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", help="checkpoint path")

    e = sub.add_parser("eval", parents=[common, data], help="metrics on one held-out fold")
    src = e.add_mutually_exclusive_group()
    src.add_argument("--checkpoint")
    src.add_argument("--method", choices=[SDS_SUM])
    e.add_argument("--fold", type=int, required=True)
    e.add_argument("--fold-seed", type=int)

    c = sub.add_parser("cv", parents=[common, data, model], help="five-fold cross-validation report")
    c.add_argument("--methods", type=_csv_methods, help=f"comma-separated subset of {','.join(METHODS)}")
    c.add_argument("--seeds", type=_csv_ints, help="comma-separated initialisation seeds")
    c.add_argument("--report", help="output directory for CSV, table, figures and logs")
    c.add_argument("--jobs", type=int, default=1, help="parallel (fold, seed) runs")
    c.add_argument("--no-figures", action="store_true")

    k = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    k.add_argument("--preset", choices=("tiny",), default="tiny")
    k.add_argument("--ops-only", action="store_true", help="skip the full-pipeline checks")
    k.add_argument("--entries", type=int, default=4, help="sampled entries per parameter tensor")
    parser.subcommands = {"generate": g, "train": t, "eval": e, "cv": c, "gradcheck": k}
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if args.command != "gradcheck" and getattr(args, "preset", None) is not None:
        cfg.model["preset"] = args.preset
    for flag, key in (("epochs", "epochs"), ("lr", "lr"), ("batch_size", "batch_size"), ("fold_seed", "fold_seed"), ("seeds", "seeds")):
        if getattr(args, flag, None) is not None:
            cfg.train[key] = getattr(args, flag)
    for key in PATH_KEYS:
        if getattr(args, key, None) is not None:
            cfg.paths[key] = getattr(args, key)
    if getattr(args, "methods", None):
        cfg.methods = args.methods
    cfg.check()
    return cfg


def _data_root(cfg: RunConfig) -> Path:
    root = cfg.paths.get("data") or os.environ.get(DATA_ENV)
    if not root:
        raise UsageError(f"no data store given: pass --data or set ${DATA_ENV}")
    root = Path(root)
    if not root.is_dir():
        raise UsageError(f"data store {root} does not exist")
    return root


def _require(cfg: RunConfig, key: str) -> Path:
    if not cfg.paths.get(key):
        raise UsageError(f"--{key} is required")
    return Path(cfg.paths[key])


def _load_batch(cfg: RunConfig, with_clips: bool, dtype) -> Batch:
    return Batch.from_sessions(read_store(_data_root(cfg)), dtype=dtype, with_clips=with_clips)


def cmd_generate(args, out) -> int:
    cfg = _run_config(args)
    gen = dict(CALIBRATED_SPEC.to_dict()) if args.calibrated else {}
    gen.update(cfg.gen)
    for f in fields(GenSpec):
        if getattr(args, f.name, None) is not None:
            gen[f.name] = getattr(args, f.name)
    try:
        spec = GenSpec(**gen)
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    root = _require(cfg, "out")
    sessions = generate(spec)
    info = summary(sessions)
    write_store(sessions, root, cohort={"spec": spec.to_dict(), "summary": info})
    c = info["sds_confusion"]
    print(f"wrote {info['n_subjects']} subjects to {root}", file=out)
    print(f"labels: normal {info['normal']}, depression {info['depression']}", file=out)
    print(f"SDS>=50 vs label: TN {c['TN']}  FP {c['FP']}  FN {c['FN']}  TP {c['TP']}", file=out)
    return EXIT_OK


def cmd_train(args, out) -> int:
    cfg = _run_config(args)
    base = cfg.model_config()
    # --method picks a named variant; otherwise the model section is used as is
    model_cfg = method_config(args.method, base) if args.method else base
    method = args.method or model_cfg.encoder
    train_cfg = cfg.train_config()
    target = _require(cfg, "out")
    data = _load_batch(cfg, model_cfg.encoder != "none", model_cfg.np_dtype)
    plan = make_fold_plan(data.subject_ids, data.labels, seed=train_cfg.fold_seed)
    if not 0 <= args.fold < plan.n_folds:
        raise UsageError(f"--fold must lie in 0..{plan.n_folds - 1}")
    res = train(data, plan, args.fold, model_cfg, train_cfg, args.seed)
    meta = {
        "fold": args.fold,
        "seed": args.seed,
        "method": method,
        "train": train_cfg.to_dict(),
        "held_out": plan.test_ids(args.fold),
        "epoch_losses": res.log.epoch_losses,
        "batches": res.log.batches,
    }
    save_checkpoint(res.model, target, meta)
    final = res.log.epoch_losses[-1] if res.log.epoch_losses else float("nan")
    print(f"trained {model_cfg.method_name} fold {args.fold} seed {args.seed}: final loss {final:.6f} -> {target}", file=out)
    return EXIT_OK


def cmd_eval(args, out) -> int:
    cfg = _run_config(args)
    fold_seed = args.fold_seed if args.fold_seed is not None else cfg.train_config().fold_seed
    checkpoint = cfg.paths.get("checkpoint")
    if checkpoint and args.method is None:
        model = load_checkpoint(checkpoint)
        data = _load_batch(cfg, model.cfg.encoder != "none", model.cfg.np_dtype)
        seed = json.loads(sidecar(checkpoint).read_text(encoding="utf-8"))["meta"].get("seed", "")
        label = model.cfg.method_name
    elif args.method == SDS_SUM:
        data = _load_batch(cfg, False, None)
        model, seed, label = None, "", SDS_SUM
    else:
        raise UsageError("pass --checkpoint or --method sds_sum")
    plan = make_fold_plan(data.subject_ids, data.labels, seed=fold_seed)
    if not 0 <= args.fold < plan.n_folds:
        raise UsageError(f"--fold must lie in 0..{plan.n_folds - 1}")
    ids = plan.test_ids(args.fold)
    conf = evaluate(model, data, ids)[0] if model is not None else evaluate_sds_sum(data, ids)
    m = conf.metrics()
    print(",".join(CSV_COLUMNS), file=out)
    row = [label, args.fold, seed, conf.tp, conf.fn, conf.fp, conf.tn, *(f"{m[k]:.6f}" for k in ("accuracy", "sensitivity", "specificity"))]
    print(",".join(map(str, row)), file=out)
    return EXIT_OK


def write_cv_logs(results, report: Path) -> dict:
    """Training-batch log (JSON lines) and the leakage audit derived from it."""
    log_path = report / "cv_trainlog.jsonl"
    audit_path = report / "cv_audit.csv"
    with log_path.open("w", encoding="utf-8", newline="\n") as fh:
        for res in results:
            for log in res.logs:
                rec = {
                    "method": res.method,
                    "seed": log.seed,
                    "fold": log.held_out,
                    "held_out": res.plan.test_ids(log.held_out),
                    "epoch_losses": log.epoch_losses,
                    "batches": log.batches,
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    lines = ["method,fold,seed,held_out,trained_on,overlap"]
    for res in results:
        for a in audit_leakage(res):
            lines.append(f"{res.method},{a.fold},{a.seed},{a.held_out},{a.trained_on},{len(a.overlap)}")
    audit_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"trainlog": log_path, "audit": audit_path}


def cmd_cv(args, out) -> int:
    cfg = _run_config(args)
    base = cfg.model_config()
    train_cfg = cfg.train_config()
    methods = cfg.methods or [SDS_SUM, "sds_only", "q3dcnn"]
    needs_clips = any(method_config(m, base).encoder != "none" for m in methods if m != SDS_SUM)
    root = _data_root(cfg)
    report = _require(cfg, "report")
    data = Batch.from_sessions(read_store(root), dtype=base.np_dtype, with_clips=needs_clips)
    plan = make_fold_plan(data.subject_ids, data.labels, seed=train_cfg.fold_seed)

    def progress(method, seed, fold, conf):
        print(f"  {method} seed {seed} fold {fold}: acc {conf.accuracy:.3f}", file=sys.stderr)

    results = [cross_validate(data, m, base, train_cfg, plan=plan, jobs=args.jobs, progress=progress) for m in methods]
    paths = write_report(results, report)
    paths.update(write_cv_logs(results, report))
    if not args.no_figures:
        from .train_eval.plots import write_figures

        paths.update(write_figures(results, report))
    print(to_table(results), end="", file=out)
    dirty = [a for r in results for a in audit_leakage(r) if not a.clean]
    for name, p in sorted(paths.items()):
        print(f"{name}: {p}", file=out)
    if dirty:
        print(f"leakage audit FAILED for {len(dirty)} runs", file=out)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_gradcheck(args, out) -> int:
    from .gradsuite import PIPELINE_ENCODERS, TOLERANCE, check_op, check_pipeline, OP_CASES

    ok = True
    for name in OP_CASES:
        r = check_op(name)
        ok &= r.passed
        print(f"{'PASS' if r.passed else 'FAIL'} op {name:<28s} max_rel_err={r.max_rel_error:.3e}", file=out)
    if not args.ops_only:
        for enc in PIPELINE_ENCODERS:
            r = check_pipeline(enc, max_entries=args.entries)
            ok &= r.passed
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name:<31s} max_rel_err={r.max_rel_error:.3e}", file=out)
            for line in r.lines:
                print(f"    {line}", file=out)
    print(f"gradient suite {'passed' if ok else 'FAILED'} (tolerance {TOLERANCE:g})", file=out)
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "cv": cmd_cv, "gradcheck": cmd_gradcheck}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.subcommands[args.command].print_usage(sys.stderr)
        print(f"sdsnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StoreError, FormatError, ConfigError, FoldError) as exc:
        print(f"sdsnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"sdsnet {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
