"""Command-line entry point: ``mnist-fraction <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 a ``bench
--check`` threshold failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import metrics
from .idx_io import IdxError, load_idx, read_pgm, write_pgm

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _override(cfg: dict, **flags) -> dict:
    out = dict(cfg)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _write(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _load_dataset(path):
    from .dataset import LabeledDataset
    try:
        return LabeledDataset.load(path)
    except (FileNotFoundError, IdxError) as e:
        raise DataError(f"cannot read dataset at {path}: {e}") from e


def _load_split(path):
    from .dataset import SplitIndices
    try:
        return SplitIndices.load(path)
    except FileNotFoundError as e:
        raise DataError(f"split file not found: {path}") from e
    except (json.JSONDecodeError, KeyError) as e:
        raise DataError(f"malformed split file {path}") from e


def load_any_model(path):
    """A fitted estimator from a CNN checkpoint or a classical model file."""
    from .classifiers.spec import load_model
    from .cnn import CnnClassifier
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    try:
        return CnnClassifier.from_checkpoint(path)
    except (ValueError, KeyError, OSError):
        pass
    try:
        return load_model(path)[1]
    except (ValueError, KeyError, OSError) as e:
        raise DataError(f"{path} is neither a CNN checkpoint nor a model file") from e


# -- subcommands -----------------------------------------------------------

def cmd_generate(args) -> int:
    from .data import load_mnist
    from .dataset import LabeledDataset
    from .fraction_gen import GenerationConfig, generate_dataset

    cfg = _load_config(args.config)
    if "seed" in cfg:
        cfg["master_seed"] = cfg.pop("seed")
    cfg = _override(cfg, master_seed=args.seed)
    preset = cfg.pop("preset", args.preset)
    per_class = cfg.pop("per_class", args.per_class)
    pool = cfg.pop("pool", args.pool)
    known = {f.name for f in fields(GenerationConfig)}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown generation keys: {sorted(unknown)}")
    try:
        if preset == "full":
            base = GenerationConfig.full_scale()
        elif preset == "desk":
            base = GenerationConfig.desk_scale(per_class or 1000)
        else:
            base = GenerationConfig()
        gen = GenerationConfig(**{**{f.name: getattr(base, f.name) for f in fields(base)}, **cfg})
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    if gen.total == 0:
        raise ConfigError("nothing to generate: all counts are zero")
    try:
        images, labels = load_mnist(args.mnist_dir, pool)
    except (FileNotFoundError, IdxError, ValueError) as e:
        raise DataError(str(e)) from e
    imgs, manifest = generate_dataset(gen, images, labels, n_jobs=args.jobs)
    out = LabeledDataset(imgs, [r.label for r in manifest], manifest).save(args.out)
    print(json.dumps({"out": str(out), "samples": len(manifest)}))
    return EXIT_OK


def cmd_split(args) -> int:
    from .dataset import stratified_split
    cfg = _override(_load_config(args.config), seed=args.seed)
    ratios = tuple(cfg.get("ratios", (0.70, 0.15, 0.15)))
    data = _load_dataset(args.data)
    try:
        split = stratified_split(data.labels, ratios, int(cfg.get("seed", 0)))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    split.save(args.out)
    print(json.dumps({"out": str(args.out), "train": int(split.train.size),
                      "val": int(split.val.size), "test": int(split.test.size)}))
    return EXIT_OK


def cmd_train_cnn(args) -> int:
    from .bench import cap_indices
    from .cnn import CnnArch, TrainHyper, init_params, save_checkpoint, train
    from .dataset import NO_AUGMENT, AugmentParams

    cfg = _override(_load_config(args.config), seed=args.seed, epochs=args.epochs,
                    cap_train=args.cap_train)
    data = _load_dataset(args.data)
    split = _load_split(args.split)
    try:
        arch = CnnArch(**cfg.get("arch", {}))
        hyper = TrainHyper(**{k: cfg[k] for k in ("learning_rate", "momentum", "batch_size",
                                                   "epochs", "seed") if k in cfg})
        aug = NO_AUGMENT if args.no_augment else AugmentParams(**cfg.get("augment", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    train_idx = cap_indices(split.train, data.labels, cfg.get("cap_train"), hyper.seed)
    history_fh = open(args.history, "w") if args.history else None

    def log(rec):
        line = json.dumps(rec, sort_keys=True)
        print(line, flush=True)
        if history_fh:
            history_fh.write(line + "\n")
            history_fh.flush()

    try:
        params = init_params(arch, hyper.seed, np.float32)
        params, history = train(params, arch, data.images, data.labels, train_idx, split.val,
                                hyper, aug, log)
    finally:
        if history_fh:
            history_fh.close()
    save_checkpoint(args.out, params, arch, hyper, history, aug)
    return EXIT_OK


def cmd_eval(args) -> int:
    data = _load_dataset(args.data)
    split = _load_split(args.split)
    model = load_any_model(args.model)
    idx = getattr(split, args.subset)
    pred = model.predict(data.features[idx])
    cm = metrics.confusion(data.labels[idx], pred, 11)
    summary = metrics.summarize(cm)
    report = {"subset": args.subset, "n": int(idx.size), "model": str(args.model),
              "confusion": cm.tolist(), **summary}
    _write(args.out, json.dumps(report, sort_keys=True, indent=2) + "\n")
    if args.text:
        sys.stderr.write(metrics.format_report(summary))
    if args.heatmap:
        Path(args.heatmap).write_bytes(metrics.heatmap_pgm(cm))
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import BenchConfig, check_result, run_benchmark
    cfg = _override(_load_config(args.config), seed=args.seed, repeats=args.repeats,
                    models=args.models, cap_train=args.cap_train, cap_test=args.cap_test,
                    jobs=args.jobs)
    try:
        bench_cfg = BenchConfig.from_dict(cfg)
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(str(e)) from e
    data = _load_dataset(args.data)
    split = _load_split(args.split)
    result = run_benchmark(bench_cfg, data, split)
    _write(args.out, result.to_json())
    if args.table:
        _write(args.table, result.table())
    else:
        sys.stderr.write(result.table())
    if args.check:
        failures = check_result(result, args.check)
        for f in failures:
            sys.stderr.write(f"CHECK FAILED {f}\n")
        if failures:
            return EXIT_CHECK
    return EXIT_OK


def _read_images(path: Path) -> list[tuple[str, np.ndarray]]:
    raw = path.read_bytes()
    if raw[:2] in (b"P5", b"P2"):
        return [(str(path), read_pgm(raw))]
    arr = load_idx(path)
    if arr.ndim == 2:
        return [(str(path), arr)]
    if arr.ndim == 3:
        return [(f"{path}[{i}]", a) for i, a in enumerate(arr)]
    raise DataError(f"{path}: expected a 2-D image or a stack of images")


def cmd_parse(args) -> int:
    from .parser import EstimatorDigitModel, ParseError, ZeroDenominator, decode_fraction
    model = EstimatorDigitModel(load_any_model(args.model), canvas=args.canvas)
    for p in args.images:
        try:
            items = _read_images(Path(p))
        except (FileNotFoundError, IdxError, ValueError) as e:
            raise DataError(f"cannot read {p}: {e}") from e
        for name, img in items:
            try:
                out = {"input": name, **decode_fraction(img, model).to_dict()}
            except ZeroDenominator as e:
                out = {"input": name, "error": "ZeroDenominator", "detail": str(e)}
            except ParseError as e:
                out = {"input": name, "error": type(e).__name__, "detail": str(e)}
            print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_export_pgm(args) -> int:
    data = _load_dataset(args.data)
    idx = args.indices if args.indices else range(min(args.count, len(data)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in idx:
        if not 0 <= i < len(data):
            raise DataError(f"index {i} out of range for {len(data)} samples")
        (out / f"{i:06d}_label{int(data.labels[i])}.pgm").write_bytes(write_pgm(data.images[i]))
    return EXIT_OK


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mnist-fraction", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, data=True, split=False):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--seed", type=int)
        if data:
            p.add_argument("--data", required=True, help="dataset directory")
        if split:
            p.add_argument("--split", required=True, help="split JSON file")

    g = sub.add_parser("generate", help="synthesize the dataset and manifest")
    common(g, data=False)
    g.add_argument("--out", required=True)
    g.add_argument("--mnist-dir")
    g.add_argument("--preset", choices=("desk", "full"))
    g.add_argument("--per-class", type=int, help="desk preset size per class")
    g.add_argument("--pool", choices=("train", "t10k", "all"), default="train",
                   help="which MNIST files supply exemplars")
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("split", help="stratified 70/15/15 split")
    common(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train-cnn", help="train the CNN and write a checkpoint")
    common(t, split=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--cap-train", type=int)
    t.add_argument("--history", help="also write per-epoch JSON lines here")
    t.add_argument("--no-augment", action="store_true")
    t.set_defaults(func=cmd_train_cnn)

    e = sub.add_parser("eval", help="confusion matrix and per-class report")
    common(e, split=True)
    e.add_argument("--model", required=True)
    e.add_argument("--subset", choices=("train", "val", "test"), default="test")
    e.add_argument("--out")
    e.add_argument("--heatmap", help="write the confusion matrix as a PGM")
    e.add_argument("--text", action="store_true", help="also print a text report to stderr")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="repeated-shuffle classifier benchmark")
    common(b, split=True)
    b.add_argument("--models", choices=("desk", "reference"))
    b.add_argument("--repeats", type=int)
    b.add_argument("--cap-train", type=int)
    b.add_argument("--cap-test", type=int)
    b.add_argument("--jobs", type=int)
    b.add_argument("--out")
    b.add_argument("--table", help="write the aligned text table here")
    b.add_argument("--check", nargs="?", const="desk", choices=("desk", "full"))
    b.set_defaults(func=cmd_bench)

    p = sub.add_parser("parse", help="read fractions from PGM or IDX images")
    p.add_argument("images", nargs="+")
    p.add_argument("--model", required=True)
    p.add_argument("--canvas", type=int, default=56)
    p.set_defaults(func=cmd_parse)

    x = sub.add_parser("export-pgm", help="write dataset samples as PGM files")
    x.add_argument("--data", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--indices", type=int, nargs="*")
    x.add_argument("--count", type=int, default=20)
    x.set_defaults(func=cmd_export_pgm)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    except DataError as e:
        sys.stderr.write(f"data error: {e}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
