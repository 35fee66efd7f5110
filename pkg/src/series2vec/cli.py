"""Command-line entry point: pretrain | probe | finetune | ablate | rank | generate.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
Configuration precedence: command-line flags > ``--config`` JSON > defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .data import Dataset, load_csv_dir, load_ts_sktime, make_synthetic, split, write_csv_dir
from .encoder import EncoderConfig
from .errors import ConfigError, DomainError, Series2VecError
from .similarity import SoftDtwConfig
from .training import (
    TrainConfig,
    extract_representations,
    finetune,
    init_state,
    load_checkpoint,
    predict,
    pretrain,
    save_checkpoint,
    write_history,
)

log = logging.getLogger("series2vec")


class UsageError(Series2VecError):
    """Bad invocation; maps to exit code 2."""


@dataclass
class RunConfig:
    command: str = "pretrain"
    data: str | None = None
    out: str | None = None
    checkpoint: str | None = None
    seed: int = 0
    test_fraction: float = 1 / 3
    normalize: bool = True
    labels_per_class: list[int] | None = None
    repeats: int = 5
    finetune_epochs: int = 10
    finetune_lr: float = 1e-4
    compare_random: bool = False
    train: dict = field(default_factory=dict)
    encoder: dict = field(default_factory=dict)
    similarity: dict = field(default_factory=dict)

    def train_config(self) -> TrainConfig:
        return _build(TrainConfig, {**self.train, "seed": self.seed}, "train")

    def encoder_config(self) -> EncoderConfig:
        return _build(EncoderConfig, self.encoder, "encoder")

    def dtw_config(self) -> SoftDtwConfig:
        return _build(SoftDtwConfig, self.similarity, "similarity")

    def validate(self) -> None:
        self.train_config()
        self.encoder_config()
        self.dtw_config()
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction", "must lie in (0, 1)")
        if self.repeats < 1:
            raise ConfigError("repeats", "must be >= 1")
        if self.labels_per_class is not None and any(n < 1 for n in self.labels_per_class):
            raise ConfigError("labels_per_class", "values must be >= 1")
        if self.finetune_epochs < 0 or self.finetune_lr < 0:
            raise ConfigError("finetune", "epochs and lr must be >= 0")

    def resolved(self) -> dict:
        """Fully-resolved configuration echo."""
        out = asdict(self)
        out["train"] = asdict(self.train_config())
        out["encoder"] = asdict(self.encoder_config())
        out["similarity"] = asdict(self.dtw_config())
        return out


def _build(cls, values: dict, section: str):
    known = {f.name for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"{section}.{key}", "unknown field")
    try:
        return cls(**values)
    except DomainError as exc:
        msg = str(exc)
        name = next((k for k in sorted(known, key=len, reverse=True) if k in msg), section)
        raise ConfigError(f"{section}.{name}", msg) from None
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from None


# ---------------------------------------------------------------------------
# argument parsing


def _grid(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON run configuration")
    shared.add_argument("--data", help="CSV directory, .ts file, or synthetic:KIND[,key=value...]")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--alpha", type=float, help="DTW locality weight")
    shared.add_argument("--gamma", type=float, help="DTW soft-min temperature (0 = hard min)")
    shared.add_argument("--batch-size", type=int)
    shared.add_argument("--epochs", type=int)
    shared.add_argument("--lr", type=float)
    shared.add_argument("--patience", type=int)
    shared.add_argument("--no-attention", action="store_true", default=None)
    shared.add_argument("--no-spectral", action="store_true", default=None)
    shared.add_argument("--no-temporal", action="store_true", default=None)
    shared.add_argument("--labels-per-class", type=_grid)
    shared.add_argument("--repeats", type=int)
    shared.add_argument("--test-fraction", type=float)
    shared.add_argument("--no-normalize", action="store_true", default=None, help="skip per-sample z-normalization at load")
    shared.add_argument("--checkpoint", help="checkpoint directory")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="series2vec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("pretrain", parents=[shared], help="self-supervised pretraining")
    sub.add_parser("probe", parents=[shared], help="linear probe on a checkpoint")
    ft = sub.add_parser("finetune", parents=[shared], help="supervised fine-tuning")
    ft.add_argument("--finetune-epochs", type=int)
    ft.add_argument("--finetune-lr", type=float)
    ft.add_argument("--compare-random", action="store_true", default=None)
    sub.add_parser("ablate", parents=[shared], help="full / no-attention / no-spectral / no-temporal comparison")
    rk = sub.add_parser("rank", help="average rank across metrics files")
    rk.add_argument("metrics", nargs="+", help='JSON files: {"model": NAME, "accuracies": {DATASET: ACC}}')
    rk.add_argument("--out", help="write rank.json here")
    gen = sub.add_parser("generate", help="write a synthetic fixture in the CSV-directory layout")
    gen.add_argument("kind", choices=("tones", "shapes", "warps"))
    gen.add_argument("--out", required=True)
    gen.add_argument("--n-per-class", type=int, default=50)
    gen.add_argument("--length", type=int, default=64)
    gen.add_argument("--channels", type=int, default=1)
    gen.add_argument("--sigma", type=float, default=0.3)
    gen.add_argument("--classes", type=int, default=3)
    gen.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config", "top level must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for key in base:
        if key not in known:
            raise ConfigError(key, "unknown field")
    cfg = RunConfig(**{k: v for k, v in base.items()})
    cfg.command = args.command
    cfg.train, cfg.encoder, cfg.similarity = dict(cfg.train), dict(cfg.encoder), dict(cfg.similarity)
    flag_map = {
        "data": "data", "out": "out", "seed": "seed", "checkpoint": "checkpoint",
        "labels_per_class": "labels_per_class", "repeats": "repeats", "test_fraction": "test_fraction",
        "finetune_epochs": "finetune_epochs", "finetune_lr": "finetune_lr", "compare_random": "compare_random",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "no_normalize", None):
        cfg.normalize = False
    train_flags = {"batch_size": "batch_size", "epochs": "epochs", "lr": "lr", "patience": "patience"}
    for attr, key in train_flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg.train[key] = value
    for attr, key in (("no_attention", "use_attention"), ("no_spectral", "use_spectral"), ("no_temporal", "use_temporal")):
        if getattr(args, attr, None):
            cfg.train[key] = False
    for attr in ("alpha", "gamma"):
        value = getattr(args, attr, None)
        if value is not None:
            cfg.similarity[attr] = value
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# data sources


def load_data(source: str | None, seed: int, normalize: bool = True) -> Dataset:
    if not source:
        raise ConfigError("data", "a data source is required")
    if source.startswith("synthetic:"):
        kind, *opts = source[len("synthetic:") :].split(",")
        params = {"n": 50, "length": 64, "channels": 1, "sigma": 0.3, "classes": 3, "seed": seed}
        for opt in opts:
            key, _, value = opt.partition("=")
            if key not in params:
                raise ConfigError("data", f"unknown synthetic option {key!r}")
            params[key] = float(value) if key == "sigma" else int(value)
        try:
            return make_synthetic(kind, params["n"], params["length"], params["channels"], params["sigma"],
                                  params["seed"], params["classes"])
        except DomainError as exc:
            raise ConfigError("data", str(exc)) from None
    path = Path(source)
    if path.is_dir():
        return load_csv_dir(path, normalize=normalize)
    if path.suffix.lower() == ".ts":
        return load_ts_sktime(path, labels=True, normalize=normalize)
    raise ConfigError("data", f"cannot interpret data source {source!r}")


def _split(dataset: Dataset, cfg: RunConfig):
    if dataset.labels is None:
        return dataset, None
    train, _, test = split(dataset, (1 - cfg.test_fraction, 0.0, cfg.test_fraction), seed=cfg.seed, stratified=True)
    return train, test


def _out_dir(cfg: RunConfig, fallback: str | None = None) -> Path:
    out = cfg.out or fallback
    if not out:
        raise ConfigError("out", "an output directory is required")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_config(out: Path, cfg: RunConfig) -> None:
    (out / "config.json").write_text(ev.dumps(cfg.resolved()))


# ---------------------------------------------------------------------------
# commands


def _pretrain_and_probe(train: Dataset, test: Dataset | None, tcfg: TrainConfig, cfg: RunConfig):
    result = pretrain(train, tcfg, cfg.encoder_config(), cfg.dtw_config())
    probe = None
    if test is not None:
        tr = extract_representations(train, result.state, tcfg)
        te = extract_representations(test, result.state, tcfg)
        probe = ev.linear_probe(tr, train.labels, te, test.labels)
    return result, probe


def cmd_pretrain(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    dataset = load_data(cfg.data, cfg.seed, cfg.normalize)
    train, _ = _split(dataset, cfg)
    tcfg = cfg.train_config()
    result = pretrain(train, tcfg, cfg.encoder_config(), cfg.dtw_config())
    save_checkpoint(result.state, out, tcfg, cfg.encoder_config(),
                    extra={"similarity": asdict(cfg.dtw_config()), "best_epoch": result.best_epoch})
    write_history(result.history, out / "history.json")
    _write_config(out, cfg)
    print(f"pretrained {len(result.history)} epochs (best {result.best_epoch}) -> {out}")
    return 0


def _checkpoint(cfg: RunConfig):
    if not cfg.checkpoint:
        raise UsageError("--checkpoint is required")
    try:
        return load_checkpoint(cfg.checkpoint)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def cmd_probe(cfg: RunConfig) -> int:
    state, tcfg, _, _ = _checkpoint(cfg)
    out = _out_dir(cfg, cfg.checkpoint)
    dataset = load_data(cfg.data, cfg.seed, cfg.normalize)
    if dataset.labels is None:
        raise UsageError("probing needs labeled data")
    if dataset.n_channels != state.temporal.in_channels:
        raise UsageError(f"data has {dataset.n_channels} channels, checkpoint expects {state.temporal.in_channels}")
    train, test = _split(dataset, cfg)
    tr = extract_representations(train, state, tcfg)
    te = extract_representations(test, state, tcfg)
    result = ev.linear_probe(tr, train.labels, te, test.labels)
    (out / "probe.json").write_text(ev.dumps(result.to_json()))
    print(f"accuracy {result.accuracy:.4f}")
    if cfg.labels_per_class:
        curve = ev.low_label_curve(tr, train.labels, te, test.labels, cfg.labels_per_class, cfg.repeats, cfg.seed)
        (out / "low_label.csv").write_text(ev.curve_csv(curve))
        print(ev.format_table(["n_per_class", "mean", "std"], curve), end="")
    _write_config(out, cfg)
    return 0


def cmd_finetune(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    dataset = load_data(cfg.data, cfg.seed, cfg.normalize)
    if dataset.labels is None:
        raise UsageError("fine-tuning needs labeled data")
    train, test = _split(dataset, cfg)
    if cfg.checkpoint:
        state, tcfg, _, _ = _checkpoint(cfg)
        if dataset.n_channels != state.temporal.in_channels:
            raise UsageError(f"data has {dataset.n_channels} channels, checkpoint expects {state.temporal.in_channels}")
    else:
        tcfg = cfg.train_config()
        state = pretrain(train, tcfg, cfg.encoder_config(), cfg.dtw_config()).state
    runs = {"pretrained": state}
    if cfg.compare_random:
        runs["random"] = init_state(cfg.encoder_config(), dataset.n_channels, tcfg)
    report = {}
    for name, init in runs.items():
        tuned, head, _ = finetune(train, init, tcfg, cfg.finetune_epochs, cfg.finetune_lr, n_classes=dataset.n_classes)
        acc = float(np.mean(predict(test, tuned, head, tcfg) == test.labels))
        report[name] = {"accuracy": acc}
        print(f"{name}: accuracy {acc:.4f}")
    (out / "finetune.json").write_text(ev.dumps(report))
    _write_config(out, cfg)
    return 0


ABLATIONS = {
    "full": {},
    "no_attention": {"use_attention": False},
    "no_spectral": {"use_spectral": False},
    "no_temporal": {"use_temporal": False},
}


def run_ablation(train: Dataset, test: Dataset, cfg: RunConfig) -> dict:
    base = asdict(cfg.train_config())
    results = {}
    for name, override in ABLATIONS.items():
        tcfg = TrainConfig(**{**base, **override})
        _, probe = _pretrain_and_probe(train, test, tcfg, cfg)
        results[name] = {"accuracy": probe.accuracy, "seed": cfg.seed}
    return results


def cmd_ablate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    dataset = load_data(cfg.data, cfg.seed, cfg.normalize)
    if dataset.labels is None:
        raise UsageError("ablation needs labeled data")
    train, test = _split(dataset, cfg)
    results = run_ablation(train, test, cfg)
    table = ev.format_table(["variant", "accuracy", "seed"], [(k, v["accuracy"], v["seed"]) for k, v in results.items()])
    (out / "ablation.json").write_text(ev.dumps(results))
    (out / "ablation.txt").write_text(table)
    _write_config(out, cfg)
    print(table, end="")
    return 0


def cmd_rank(paths: list[str], out: str | None) -> int:
    table = {}
    for p in paths:
        try:
            doc = json.loads(Path(p).read_text())
            model, accs = doc["model"], doc["accuracies"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"{p}: not a metrics file ({exc})") from None
        table[model] = accs
    if len(table) < 2:
        raise UsageError("rank needs metrics for at least 2 models")
    keys = {m: set(a) for m, a in table.items()}
    first = next(iter(keys.values()))
    for m, k in keys.items():
        if k != first:
            raise UsageError(f"model {m!r} has dataset keys {sorted(k)}, expected {sorted(first)}")
    ranks = ev.average_rank(table)
    ordered = sorted(ranks.items(), key=lambda kv: (kv[1], kv[0]))
    print(ev.format_table(["model", "mean_rank"], ordered), end="")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "rank.json").write_text(ev.dumps(dict(ordered)))
    return 0


def cmd_generate(args) -> int:
    ds = make_synthetic(args.kind, args.n_per_class, args.length, args.channels, args.sigma, args.seed, args.classes)
    write_csv_dir(ds, args.out)
    print(f"wrote {len(ds)} samples to {args.out}")
    return 0


COMMANDS = {"pretrain": cmd_pretrain, "probe": cmd_probe, "finetune": cmd_finetune, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rank":
            return cmd_rank(args.metrics, args.out)
        if args.command == "generate":
            return cmd_generate(args)
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (Series2VecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
