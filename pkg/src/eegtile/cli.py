"""Command-line pipeline: synth -> prepare -> train -> eval / permtest / mds.

All randomness flows from explicit --seed flags; machine-readable outputs
are JSON with fixed field names (docs/file-formats.md). Exit codes:
0 success, 2 usage error, 3 data error, 4 numeric/divergence error.

BLAS threading is configured from --threads / EEGTILE_THREADS (env wins)
before NumPy is imported, which is why the heavy imports live inside the
handlers.
"""
import argparse
import json
import os
import sys
from pathlib import Path

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_THREAD_ENV_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS")


def _configure_threads(argv):
    """Set BLAS thread env vars before numpy import. EEGTILE_THREADS
    overrides --threads; existing env vars are left alone."""
    threads = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif arg.startswith("--threads="):
            threads = arg.split("=", 1)[1]
    override = os.environ.get("EEGTILE_THREADS")
    if override:
        threads = override
    if threads is None:
        return
    for var in _THREAD_ENV_VARS:
        os.environ.setdefault(var, str(threads))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eegtile",
        description="EEG [channel x sample] tile classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_threads(p):
        p.add_argument("--threads", type=int, default=None,
                       help="BLAS thread count (EEGTILE_THREADS overrides)")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--participants", type=int, default=2)
    p.add_argument("--seconds", type=int, default=240)
    p.add_argument("--channels", type=int, default=125)
    p.add_argument("--rate", type=float, default=125.0)
    p.add_argument("--noise-sigma", type=float, default=2.0)
    add_threads(p)

    p = sub.add_parser("prepare", help="chunk recordings into example manifests")
    p.add_argument("--corpus", required=True, help="directory of .egtr files")
    p.add_argument("--out", required=True, help="manifest output directory")
    p.add_argument("--chunk-seconds", type=int, default=5)
    p.add_argument("--example-seconds", type=int, default=1)
    p.add_argument("--train-ratio", type=float, default=0.75)
    p.add_argument("--use-seconds", type=int, default=240)
    add_threads(p)

    p = sub.add_parser("train", help="train the classifier on a manifest pair")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--repr", dest="representation", default="raw",
                   choices=("raw", "psd1", "psd2"))
    p.add_argument("--ordering", default="default",
                   help='"default", "random" (with --ordering-seed), or a '
                        "path to an ordering.json")
    p.add_argument("--ordering-seed", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--optimizer", default="adam", choices=("adam", "sgd"))
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--no-shuffle", action="store_true")
    add_threads(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--meta", default=None,
                   help="songs.json; enables the BPM confusion analysis")
    p.add_argument("--out", required=True, help="report.json path")
    add_threads(p)

    p = sub.add_parser("permtest", help="label/weight permutation chance test")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", required=True, choices=("labels", "weights"))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="distribution JSON path")
    add_threads(p)

    p = sub.add_parser("mds", help="derive an MDS channel ordering")
    p.add_argument("--manifest", required=True, help="train manifest")
    p.add_argument("--out", required=True, help="ordering.json path")
    add_threads(p)

    return parser


def _write_manifest(path, split, example_seconds, rate, entries):
    payload = {
        "split": split,
        "example_seconds": example_seconds,
        "sampling_rate": rate,
        "examples": entries,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_manifest(path):
    from .dataio import Example, ExampleSet, load_recording, make_tile
    from .errors import FormatError

    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    try:
        split = raw["split"]
        example_seconds = int(raw["example_seconds"])
        entries = raw["examples"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad manifest {path}: {exc}") from exc
    cache = {}
    out = ExampleSet(split=split)
    for e in entries:
        rec_path = (path.parent / e["recording"]).resolve()
        rec = cache.get(rec_path)
        if rec is None:
            rec = cache[rec_path] = load_recording(rec_path)
        out.examples.append(Example(
            tile=make_tile(rec, e["offset"], example_seconds),
            label=int(e["label"]),
            provenance=(e["participant"], int(e["label"]), int(e["chunk"]),
                        int(e["offset"])),
        ))
    return out


def _transform_set(example_set, representation, ordering):
    from . import reprs
    from .dataio import Example, ExampleSet
    from .errors import FormatError

    out = ExampleSet(split=example_set.split)
    for e in example_set.examples:
        tile = e.tile
        if ordering is not None:
            tile = reprs.apply_ordering(tile, ordering)
        if representation in ("psd1", "psd2"):
            want = {"psd1": 1, "psd2": 2}[representation]
            rate = tile.cols / want
            if tile.cols % want:
                raise FormatError(
                    f"{representation} expects {want}s examples; tile has "
                    f"{tile.cols} columns")
            tile = reprs.periodogram_tile(tile, rate)
        out.examples.append(Example(tile=tile, label=e.label,
                                    provenance=e.provenance))
    return out


def _resolve_ordering(args, channels):
    from . import reprs

    name = args.ordering
    if name == "default":
        return None
    if name == "random":
        if args.ordering_seed is None:
            raise UsageError("--ordering random requires --ordering-seed")
        return reprs.random_order(channels, args.ordering_seed)
    return reprs.load_ordering(name)


class UsageError(Exception):
    pass


def cmd_synth(args):
    from .synthgen import SynthSpec, write_corpus

    spec = SynthSpec(seed=args.seed, classes=args.classes,
                     participants=args.participants, seconds=args.seconds,
                     channels=args.channels, rate=args.rate,
                     noise_sigma=args.noise_sigma)
    recordings, _ = write_corpus(spec, args.out)
    print(f"wrote {len(recordings)} recordings and songs.json to {args.out}")
    return 0


def cmd_prepare(args):
    from .dataio import chunk_and_split, corpus_recording_paths, load_recording

    corpus = Path(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = corpus_recording_paths(corpus)
    if not paths:
        raise FileNotFoundError(f"no .egtr recordings under {corpus}")
    splits = {"train": [], "test": []}
    rate = None
    for rec_path in paths:
        rec = load_recording(rec_path)
        rate = rec.sampling_rate
        tr, te = chunk_and_split(
            rec, chunk_seconds=args.chunk_seconds,
            example_seconds=args.example_seconds,
            train_ratio=args.train_ratio, use_seconds=args.use_seconds)
        rel = os.path.relpath(rec_path, out)
        for split_name, es in (("train", tr), ("test", te)):
            splits[split_name].extend(
                {"recording": rel, "participant": ex.provenance[0],
                 "label": ex.label, "chunk": ex.provenance[2],
                 "offset": ex.provenance[3]}
                for ex in es.examples)
    for split_name, entries in splits.items():
        _write_manifest(out / f"{split_name}_manifest.json", split_name,
                        args.example_seconds, rate, entries)
    print(f"wrote {len(splits['train'])} train / {len(splits['test'])} test "
          f"examples to {out}")
    return 0


def cmd_train(args):
    from .model import init_he, save_checkpoint
    from .train import TrainConfig, train

    train_set = _load_manifest(args.train_manifest)
    test_set = _load_manifest(args.test_manifest)
    channels = train_set.examples[0].tile.rows
    ordering = _resolve_ordering(args, channels)
    train_set = _transform_set(train_set, args.representation, ordering)
    test_set = _transform_set(test_set, args.representation, ordering)

    classes = int(max(train_set.labels().max(), test_set.labels().max())) + 1
    cfg = TrainConfig(seed=args.seed, batch_size=args.batch_size,
                      epochs=args.epochs, optimizer=args.optimizer,
                      lr=args.lr, momentum=args.momentum, beta1=args.beta1,
                      beta2=args.beta2, eps=args.eps,
                      shuffle=not args.no_shuffle)
    params = init_he(args.seed, classes)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def report(stats):
        print(f"epoch {stats.epoch}: train_loss {stats.train_loss:.4f} "
              f"train_acc {stats.train_accuracy:.4f} "
              f"test_acc {stats.test_accuracy:.4f} "
              f"({stats.seconds:.1f}s)")

    params, log = train(params, train_set, test_set, cfg, on_epoch=report)
    save_checkpoint(params, out / "model.ckpt")
    log.write_jsonl(out / "trainlog.jsonl")
    runconfig = {
        "classes": classes,
        "representation": args.representation,
        "ordering": args.ordering,
        "ordering_seed": args.ordering_seed,
        "seed": args.seed,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "optimizer": args.optimizer,
        "lr": args.lr,
        "momentum": args.momentum,
        "beta1": args.beta1,
        "beta2": args.beta2,
        "eps": args.eps,
        "shuffle": not args.no_shuffle,
    }
    with open(out / "runconfig.json", "w") as fh:
        json.dump(runconfig, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote model.ckpt, trainlog.jsonl, runconfig.json to {out}")
    return 0


def _load_eval_inputs(checkpoint, manifest):
    """Checkpoint + manifest, with tiles transformed per the runconfig.json
    sitting next to the checkpoint (when present)."""
    from .model import load_checkpoint

    params = load_checkpoint(checkpoint)
    example_set = _load_manifest(manifest)
    runconfig_path = Path(checkpoint).parent / "runconfig.json"
    if runconfig_path.exists():
        with open(runconfig_path) as fh:
            rc = json.load(fh)
        ns = argparse.Namespace(ordering=rc.get("ordering", "default"),
                                ordering_seed=rc.get("ordering_seed"))
        ordering = _resolve_ordering(ns, example_set.examples[0].tile.rows)
        example_set = _transform_set(example_set,
                                     rc.get("representation", "raw"), ordering)
    return params, example_set


def cmd_eval(args):
    from .dataio import load_song_meta
    from .metrics import (bpm_confusion_analysis, confusion_matrix, metrics,
                          write_report)
    from .train import evaluate

    params, example_set = _load_eval_inputs(args.checkpoint, args.manifest)
    preds, accuracy = evaluate(params, example_set)
    cm = confusion_matrix(example_set.labels(), preds, params.classes)
    report = metrics(cm)
    extra = {"examples": int(cm.sum()), "classes": params.classes}
    if args.meta:
        metas = load_song_meta(args.meta)
        have_bpm = all(metas.get(c) is not None and metas[c].bpm is not None
                       for c in range(params.classes))
        if have_bpm:
            bpm = bpm_confusion_analysis(cm, metas)
            extra["bpm_analysis"] = {
                "mean_confused_bpm_diff": bpm.mean_confused_bpm_diff,
                "chance_bpm_diff": bpm.chance_bpm_diff,
                "sorted_classes": bpm.sorted_classes.tolist(),
                "sorted_confusion_matrix": bpm.sorted_cm.tolist(),
            }
    write_report(args.out, report, cm, extra=extra)
    print(f"accuracy {report.accuracy:.4f} kappa {report.kappa:.4f} "
          f"-> {args.out}")
    return 0


def cmd_permtest(args):
    from .metrics import permutation_test_labels, permutation_test_weights

    params, example_set = _load_eval_inputs(args.checkpoint, args.manifest)
    fn = {"labels": permutation_test_labels,
          "weights": permutation_test_weights}[args.mode]
    result = fn(params, example_set, trials=args.trials, seed=args.seed)
    payload = {
        "mode": result.mode,
        "trials": args.trials,
        "seed": args.seed,
        "mean_accuracy": result.mean,
        "accuracies": result.accuracies.tolist(),
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    mean = "n/a" if result.mean is None else f"{result.mean:.4f}"
    print(f"{args.mode} permutation mean accuracy {mean} -> {args.out}")
    return 0


def cmd_mds(args):
    from .reprs import mds_channel_order, save_ordering

    train_set = _load_manifest(args.manifest)
    ordering = mds_channel_order(train_set)
    save_ordering(ordering, args.out)
    flag = " (degenerate: default order)" if ordering.degenerate else ""
    print(f"wrote MDS ordering for {len(ordering.permutation)} channels "
          f"to {args.out}{flag}")
    return 0


_HANDLERS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "permtest": cmd_permtest,
    "mds": cmd_mds,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    _configure_threads(argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    from .errors import DataError, EegTileError, NumericError

    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EegTileError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
