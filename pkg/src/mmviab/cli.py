"""Command-line runner: gen / train / eval / predict / gradcheck.

A run is driven by a TOML config with top-level keys (selector, data_dir,
out_dir, split_seed) and sections [synth], [model], [tabular], [train].
Every command writes a resolved snapshot (all defaults materialized) next to
its outputs, so any run can be reproduced bit-exactly from the snapshot in
single-thread mode (MMV_THREADS=1).

Exit codes: 0 success, 1 usage error, 2 validation or data error,
3 numerical failure (divergence, gradient-check breach).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .data.io import load_dataset
from .data.preprocess import TabularNormalizer
from .data.types import DatasetSchema
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    NumericsError,
    ShapeError,
    UndefinedMetricError,
)
from .metrics import compute_report, write_report
from .model import ModelConfig
from .synthclinic import SynthConfig, generate_dataset
from .tabular import TabularConfig
from .trainer import SplitData, TrainConfig, TrainedModel, train, write_history

PRIME = "′"

# rows of the modality-combination tables; tokens after normalizing ' to the prime
SELECTOR_ROWS = (
    "v", "v+e", "v+v′", "v+v′+e+e′",
    "v′", "v′+e+e′", "e", "e+e′", "e′",
)
_SELECTOR_SETS = {frozenset(row.split("+")): row for row in SELECTOR_ROWS}

METRIC_KEYS = ("embryo_auc", "embryo_f1", "treatment_auc", "treatment_f1")


class UsageError(Exception):
    """Bad flags or subcommand; maps to exit code 1."""


def normalize_selector(raw: str) -> str:
    tokens = raw.replace("'", PRIME).split("+")
    combo = frozenset(t.strip() for t in tokens)
    if combo not in _SELECTOR_SETS:
        raise ConfigError(
            f"selector {raw!r} is not a modality row; expected one of: "
            + ", ".join(SELECTOR_ROWS))
    return _SELECTOR_SETS[combo]


def selector_modalities(selector: str) -> dict[str, bool]:
    tokens = set(selector.split("+"))
    return {
        "video": "v" in tokens,
        "morph": "v" + PRIME in tokens,
        "ehr": "e" in tokens,
        "interp": "e" + PRIME in tokens,
    }


def selector_kind(selector: str) -> str:
    m = selector_modalities(selector)
    return "multimodal" if m["video"] or m["morph"] else "tabular"


# modality switches come from the selector, data widths from the schema;
# neither is a config-file key
_MODEL_EXCLUDED = {"use_video", "use_morph", "use_ehr", "use_interp",
                   "ehr_dim", "interp_dim"}
_TABULAR_EXCLUDED = {"use_ehr", "use_interp", "ehr_numeric", "ehr_categorical",
                     "interp_names"}


def _section_fields(cls, excluded=frozenset()):
    return [f for f in dataclasses.fields(cls) if f.name not in excluded]


def _coerce(section: str, name: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {name} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"[{section}] {name} must be a string, got {value!r}")
        return value
    raise ConfigError(f"[{section}] {name} has unsupported type")


def _materialize(section: str, cls, data: dict, excluded=frozenset()) -> dict:
    out = {f.name: f.default for f in _section_fields(cls, excluded)}
    unknown = sorted(set(data) - set(out))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    for name, value in data.items():
        out[name] = _coerce(section, name, value, out[name])
    return out


@dataclass(frozen=True)
class RunConfig:
    """Parsed config file with every default materialized."""

    selector: str = "v+v′+e+e′"
    data_dir: str = "data"
    out_dir: str = "out"
    split_seed: int = 0
    synth: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    tabular: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    def synth_config(self) -> SynthConfig:
        cfg = SynthConfig(**self.synth)
        cfg.validate()
        return cfg

    def train_config(self) -> TrainConfig:
        cfg = TrainConfig(**self.train)
        cfg.validate()
        return cfg

    def model_config(self, schema: DatasetSchema):
        """Selector plus schema decide the concrete architecture config."""
        m = selector_modalities(self.selector)
        ehr_width = TabularNormalizer.for_ehr(schema.ehr).width
        interp_width = len(schema.interp)
        if selector_kind(self.selector) == "multimodal":
            cfg = ModelConfig(**self.model, use_video=m["video"], use_morph=m["morph"],
                              use_ehr=m["ehr"], use_interp=m["interp"],
                              ehr_dim=ehr_width if m["ehr"] else 0,
                              interp_dim=interp_width if m["interp"] else 0)
            cfg.validate()
            return cfg
        return TabularConfig.for_schema(schema, use_ehr=m["ehr"],
                                        use_interp=m["interp"], **self.tabular)


def load_run_config(path: Path) -> RunConfig:
    try:
        raw = tomli.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"config file {path} does not exist") from None
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"config file {path} is not valid TOML: {e}") from None

    sections = {"synth": SynthConfig, "model": ModelConfig, "tabular": TabularConfig,
                "train": TrainConfig}
    top_defaults = {"selector": RunConfig.selector, "data_dir": RunConfig.data_dir,
                    "out_dir": RunConfig.out_dir, "split_seed": RunConfig.split_seed}
    unknown = sorted(set(raw) - set(sections) - set(top_defaults))
    if unknown:
        raise ConfigError(f"unknown top-level key(s) in config: {', '.join(unknown)}")

    top = {}
    for name, default in top_defaults.items():
        top[name] = _coerce("top level", name, raw.get(name, default), default)
    top["selector"] = normalize_selector(top["selector"])

    return RunConfig(
        **top,
        synth=_materialize("synth", SynthConfig, raw.get("synth", {})),
        model=_materialize("model", ModelConfig, raw.get("model", {}), _MODEL_EXCLUDED),
        tabular=_materialize("tabular", TabularConfig, raw.get("tabular", {}),
                             _TABULAR_EXCLUDED),
        train=_materialize("train", TrainConfig, raw.get("train", {})),
    )


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not np.isfinite(v):
            raise ConfigError(f"cannot serialize non-finite value {v}")
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    raise ConfigError(f"cannot serialize {type(v).__name__} to the config snapshot")


def emit_resolved(run: RunConfig) -> str:
    lines = [f"selector = {_toml_value(run.selector)}",
             f"data_dir = {_toml_value(run.data_dir)}",
             f"out_dir = {_toml_value(run.out_dir)}",
             f"split_seed = {run.split_seed}"]
    for section in ("synth", "model", "tabular", "train"):
        lines.append("")
        lines.append(f"[{section}]")
        for name, value in getattr(run, section).items():
            lines.append(f"{name} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def write_resolved(run: RunConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved.toml"
    path.write_text(emit_resolved(run))
    return path


def _apply_overrides(run: RunConfig, args, seed_section: str) -> RunConfig:
    if args.out is not None:
        run = dataclasses.replace(run, out_dir=args.out)
    if getattr(args, "seed", None) is not None:
        section = dict(getattr(run, seed_section))
        section["seed"] = args.seed
        run = dataclasses.replace(run, **{seed_section: section})
    return run


def cmd_gen(args) -> int:
    run = _apply_overrides(load_run_config(args.config), args, "synth")
    if args.out is not None:
        run = dataclasses.replace(run, data_dir=args.out)
    cfg = run.synth_config()
    root = generate_dataset(cfg, run.data_dir)
    write_resolved(run, Path(run.data_dir))
    dataset = load_dataset(root)
    n_success = sum(1 for c in dataset.cycles if c.successful)
    print(f"wrote {len(dataset.cycles)} treatments ({n_success} successful) to {root}")
    return 0


def _single_train(run: RunConfig, out_dir: Path):
    dataset = load_dataset(run.data_dir)
    splits = SplitData.from_dataset(dataset, seed=run.split_seed)
    kind = selector_kind(run.selector)
    model_cfg = run.model_config(dataset.schema)
    model, history = train(kind, splits, run.train_config(), model_cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_history(history, out_dir / "history.csv")
    model.save(out_dir / "checkpoint.ckpt")
    write_resolved(dataclasses.replace(run, out_dir=str(out_dir)), out_dir)
    return model, history


def cmd_train(args) -> int:
    run = _apply_overrides(load_run_config(args.config), args, "train")
    base_seed = run.train["seed"]
    if args.repeats is None:
        _, history = _single_train(run, Path(run.out_dir))
        if history.diverged:
            print(f"training diverged: {history.failure}", file=sys.stderr)
            return 3
        best = history.epochs[history.best_epoch]
        print(f"trained {len(history.epochs)} epochs; best val loss "
              f"{best.val_loss:.6f} at epoch {best.epoch}")
        return 0

    best_losses = []
    for seed in range(base_seed, base_seed + args.repeats):
        sub = dict(run.train)
        sub["seed"] = seed
        per_seed = dataclasses.replace(run, train=sub)
        _, history = _single_train(per_seed, Path(run.out_dir) / f"seed-{seed}")
        if history.diverged:
            print(f"seed {seed} diverged: {history.failure}", file=sys.stderr)
            return 3
        best_losses.append(history.epochs[history.best_epoch].val_loss)
        print(f"seed {seed}: best val loss {best_losses[-1]:.6f}")
    mean = float(np.mean(best_losses))
    std = float(np.std(best_losses, ddof=1)) if len(best_losses) > 1 else 0.0
    summary = f"best_val_loss mean {mean:.6f} +/- {std:.6f} over {args.repeats} seeds\n"
    (Path(run.out_dir) / "summary.txt").write_text(summary)
    print(summary, end="")
    return 0


def _eval_cycles(run: RunConfig, split: str):
    dataset = load_dataset(run.data_dir)
    splits = SplitData.from_dataset(dataset, seed=run.split_seed)
    cycles = getattr(splits, split)
    if not cycles:
        raise DataError(f"split {split!r} is empty")
    return cycles


def _single_eval(run: RunConfig, out_dir: Path, cycles):
    model = TrainedModel.load(out_dir / "checkpoint.ckpt")
    predictions = model.score_cycles(cycles)
    report = compute_report(predictions, cycles)
    write_report(report, out_dir)
    write_resolved(dataclasses.replace(run, out_dir=str(out_dir)), out_dir)
    return report


def cmd_eval(args) -> int:
    run = _apply_overrides(load_run_config(args.config), args, "train")
    cycles = _eval_cycles(run, args.split)
    if args.repeats is None:
        _single_eval(run, Path(run.out_dir), cycles)
        print((Path(run.out_dir) / "table.txt").read_text(), end="")
        return 0

    base_seed = run.train["seed"]
    rows = []
    for seed in range(base_seed, base_seed + args.repeats):
        report = _single_eval(run, Path(run.out_dir) / f"seed-{seed}", cycles)
        rows.append([getattr(report, k) for k in METRIC_KEYS])
        print(f"seed {seed}: " + "  ".join(
            f"{k} {v:.4f}" for k, v in zip(METRIC_KEYS, rows[-1])))
    arr = np.array(rows)
    means = arr.mean(axis=0)
    stds = arr.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros(arr.shape[1])
    lines = [f"{k} mean {m:.4f} +/- {s:.4f} over {args.repeats} seeds"
             for k, m, s in zip(METRIC_KEYS, means, stds)]
    summary = "\n".join(lines) + "\n"
    (Path(run.out_dir) / "summary.txt").write_text(summary)
    print(summary, end="")
    return 0


def cmd_predict(args) -> int:
    run = _apply_overrides(load_run_config(args.config), args, "train")
    cycles = _eval_cycles(run, args.split)
    out_dir = Path(run.out_dir)
    model = TrainedModel.load(out_dir / "checkpoint.ckpt")
    predictions = model.score_cycles(cycles, transferred_only=False)
    owner = {e.embryo_id: c.treatment_id for c in cycles for e in c.embryos}
    lines = ["embryo_id,treatment_id,score"]
    for embryo_id in sorted(predictions):
        lines.append(f"{embryo_id},{owner[embryo_id]},{predictions[embryo_id]!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "predictions.csv"
    path.write_text("\n".join(lines) + "\n")
    write_resolved(run, out_dir)
    print(f"wrote {len(predictions)} scores to {path}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_suite

    results = run_suite()
    for name in sorted(results):
        print(f"{name:24s} {results[name]:.3e}")
    worst = max(results.values())
    print(f"{'max':24s} {worst:.3e}  (tolerance {TOLERANCE:.0e})")
    if worst >= TOLERANCE:
        print("gradient check FAILED", file=sys.stderr)
        return 3
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="mmviab",
                     description="Embryo-viability models over synthetic clinics.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, repeats=False, split=False):
        p.add_argument("--config", required=True, help="TOML run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if repeats:
            p.add_argument("--repeats", type=int, default=None, metavar="N",
                           help="rerun with seeds seed..seed+N-1 under per-seed dirs")
        if split:
            p.add_argument("--split", choices=("train", "val", "test"),
                           default="test", help="dataset partition to use")

    common(sub.add_parser("gen", help="generate a synthetic dataset"))
    common(sub.add_parser("train", help="train a model"), repeats=True)
    common(sub.add_parser("eval", help="evaluate a checkpoint"),
           repeats=True, split=True)
    common(sub.add_parser("predict", help="write per-embryo scores"), split=True)
    sub.add_parser("gradcheck", help="verify gradients against finite differences")
    return parser


_COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
             "predict": cmd_predict, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if getattr(args, "repeats", None) is not None and args.repeats < 1:
            raise UsageError("--repeats must be at least 1")
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1

    threads = os.environ.get("MMV_THREADS")
    limiter = None
    if threads is not None:
        import threadpoolctl

        try:
            n = int(threads)
        except ValueError:
            print(f"error: MMV_THREADS must be an integer, got {threads!r}",
                  file=sys.stderr)
            return 1
        limiter = threadpoolctl.threadpool_limits(limits=n)

    try:
        return _COMMANDS[args.command](args)
    except NumericsError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, ContractError, ShapeError,
            UndefinedMetricError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    finally:
        if limiter is not None:
            limiter.unregister()


if __name__ == "__main__":
    sys.exit(main())
