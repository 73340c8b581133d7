"""Operator commands: synth, prepare, train, infer, eval, noise-sweep, flex,
fold/unfold and an rpc bridge for foreign-language bindings.

Every command accepts --config <json> whose keys mirror the long flag names
(hyphens as underscores); explicit flags win. The resolved configuration is
echoed as one JSON line on stderr for reproducible run records. Seeds default
to the VSEG_SEED environment variable, then 0.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    balance_classes,
    build_training_pairs,
    default_profiles,
    load_corpus,
    read_manifest,
    read_window_file,
    synth_corpus,
    write_corpus,
    write_window_file,
)
from .dsp import BandpassSpec
from .evaluate import (
    FLEX_FRACTIONS,
    evaluate_model,
    flexibility_protocol,
    noise_sweep,
    reports_to_json,
    report_to_csv,
    sweep_to_csv,
)
from .fold import geometry, fold as fold_op, unfold_to_channels
from .pipeline import (
    StreamProcessor,
    infer_window,
    iter_raw_blocks,
    preprocess_window,
    read_stream_header,
)
from .postprocess import PostConfig, detections_to_jsonl
from .segmenter import ToyUNet, ToyUNetSpec, TrainConfig, train
from .segmenter.masks import read_mask_file, write_masks
from . import rpc as rpc_mod


def _default_seed() -> int:
    return int(os.environ.get("VSEG_SEED", "0"))


def _parse_geom(text: str):
    try:
        s, w = text.lower().split("x")
        return geometry(int(s), int(w))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad geometry {text!r}: {exc}") from exc


def _bandpass_from(args) -> BandpassSpec | None:
    if getattr(args, "no_bandpass", False):
        return None
    return BandpassSpec(low_hz=args.band_low, high_hz=args.band_high, order=args.band_order)


def _post_from(args) -> PostConfig:
    return PostConfig(merge_gap=args.merge_gap, min_len=args.min_len)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file whose keys mirror the flags")
    p.add_argument("--seed", type=int, default=None, help="default from VSEG_SEED, else 0")
    p.add_argument("--threads", type=int, default=0,
                   help="cap BLAS/worker parallelism (0 = library default)")


def _add_bandpass(p: argparse.ArgumentParser):
    p.add_argument("--band-low", type=float, default=1.0)
    p.add_argument("--band-high", type=float, default=15.0)
    p.add_argument("--band-order", type=int, default=4)
    p.add_argument("--no-bandpass", action="store_true")


def _add_post(p: argparse.ArgumentParser):
    p.add_argument("--merge-gap", type=int, default=100)
    p.add_argument("--min-len", type=int, default=0)


class _RegisteringSubparsers:
    """add_parser passthrough that remembers each subcommand parser, so the
    config overlay can tell explicit flags from subcommand defaults."""

    def __init__(self, sub, registry: dict):
        self._sub = sub
        self._registry = registry

    def add_parser(self, name: str, **kwargs) -> argparse.ArgumentParser:
        sp = self._sub.add_parser(name, **kwargs)
        self._registry[name] = sp
        return sp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vseg", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subcommands: dict[str, argparse.ArgumentParser] = {}
    parser.subcommands = subcommands  # type: ignore[attr-defined]
    sub = _RegisteringSubparsers(
        parser.add_subparsers(dest="command", required=True), subcommands
    )

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--bg-count", type=int, default=None,
                   help="noise-only windows (default: per-class)")
    p.add_argument("--geom", type=str, default="8x512")
    p.add_argument("--noise-floor", type=float, default=0.05)
    p.add_argument("--band-shift", type=float, default=0.0)
    p.add_argument("--volcano", default="SYNTH")
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("prepare", help="preprocess and balance a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=1500)
    p.add_argument("--val", type=int, default=200)
    p.add_argument("--test", type=int, default=200)
    _add_bandpass(p)
    _add_common(p)

    p = sub.add_parser("train", help="train the built-in segmenter")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--geom", type=str, required=True)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr-max", type=float, default=1e-5)
    p.add_argument("--lr-min", type=float, default=1e-6)
    p.add_argument("--anneal-period", type=int, default=25)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--base-channels", type=int, default=8)
    p.add_argument("--out", required=True, help="VSGW weights path")
    p.add_argument("--loss-csv", help="per-epoch loss trace CSV")
    _add_bandpass(p)
    _add_common(p)

    p = sub.add_parser("infer", help="detect events in VSGD files or a raw stream")
    p.add_argument("--weights", required=True)
    p.add_argument("--geom", type=str, required=True)
    p.add_argument("--inputs", nargs="*", default=[], help="VSGD files")
    p.add_argument("--stdin", action="store_true", help="raw stream on stdin")
    p.add_argument("--hop", type=int, default=None)
    p.add_argument("--out", help="JSONL output path (default stdout)")
    _add_bandpass(p)
    _add_post(p)
    _add_common(p)

    p = sub.add_parser("eval", help="score a model on a manifest split")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--geom", type=str, required=True)
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--csv", help="optional CSV report path")
    _add_bandpass(p)
    _add_post(p)
    _add_common(p)

    p = sub.add_parser("noise-sweep", help="evaluate across the -5..10 dB SNR grid")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--geom", type=str, required=True)
    p.add_argument("--out", required=True, help="sweep CSV path")
    p.add_argument("--json", help="optional full reports JSON")
    _add_bandpass(p)
    _add_post(p)
    _add_common(p)

    p = sub.add_parser("flex", help="zero-shot plus progressive fine-tuning")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--geom", type=str, required=True)
    p.add_argument("--fractions", type=float, nargs="*", default=list(FLEX_FRACTIONS))
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr-max", type=float, default=1e-3)
    p.add_argument("--lr-min", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--epoch-metrics", action="store_true")
    p.add_argument("--out-dir", required=True)
    _add_bandpass(p)
    _add_post(p)
    _add_common(p)

    p = sub.add_parser("fold", help="fold a VSGD window into a VSGM image")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("unfold", help="unfold a VSGM image back to a VSGD window")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--channels", type=int, required=True)
    p.add_argument("--sample-rate", type=float, default=100.0)
    _add_common(p)

    p = sub.add_parser("rpc", help="serve one JSON request per line on stdin")
    _add_common(p)

    return parser


def _apply_config(args: argparse.Namespace, parser_defaults: dict) -> None:
    """Overlay --config file values under explicit command-line flags."""
    if not getattr(args, "config", None):
        return
    cfg = json.loads(Path(args.config).read_text())
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValueError(f"unknown config key {key!r}")
        # a flag explicitly given on the command line wins over the config
        if getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, value)


def _echo_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    print("vseg-config: " + json.dumps(resolved, default=str), file=sys.stderr)


def _seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


# -- command bodies --------------------------------------------------------------


def cmd_synth(args) -> int:
    geom = _parse_geom(args.geom)
    profiles = default_profiles(geom, band_shift_hz=args.band_shift)
    bg = args.per_class if args.bg_count is None else args.bg_count
    windows = synth_corpus(
        profiles, args.per_class, geom,
        noise_floor=args.noise_floor, seed=_seed(args), bg_count=bg,
        volcano=args.volcano,
    )
    manifest = write_corpus(windows, args.out, volcano=args.volcano, split=args.split)
    print(f"wrote {len(windows)} windows, manifest {manifest}")
    return 0


def cmd_prepare(args) -> int:
    spec = _bandpass_from(args)
    pool = load_corpus(args.manifest)
    rng = np.random.default_rng(_seed(args))
    # val and test are sampled per class; the rest is balanced for training
    groups: dict = {}
    for lw in pool:
        groups.setdefault(lw.label, []).append(lw)
    val, test, remainder = [], [], []
    held = args.val + args.test
    for label in sorted(groups, key=int):
        members = groups[label]
        if len(members) <= held:
            raise ValueError(
                f"class {label.name} has {len(members)} windows, needs more than "
                f"{held} for the validation/test split"
            )
        order = rng.permutation(len(members))
        val.extend(members[i] for i in order[: args.val])
        test.extend(members[i] for i in order[args.val : held])
        remainder.extend(members[i] for i in order[held:])
    balanced = balance_classes(remainder, args.per_class, seed=_seed(args))

    def pre(lw):
        from .dataset import LabeledWindow

        return LabeledWindow(preprocess_window(lw.window, spec), lw.annotations)

    out = Path(args.out)
    vol = read_manifest(args.manifest)[0].get("volcano", "SYNTH")
    write_corpus([pre(lw) for lw in balanced], out, volcano=vol, split="train")
    write_corpus([pre(lw) for lw in val], out, volcano=vol, split="val", append=True)
    write_corpus([pre(lw) for lw in test], out, volcano=vol, split="test", append=True)
    print(
        f"prepared {len(balanced)} train / {len(val)} val / {len(test)} test "
        f"({args.val} and {args.test} per class)"
    )
    return 0


def cmd_train(args) -> int:
    geom = _parse_geom(args.geom)
    spec = _bandpass_from(args)
    windows = load_corpus(args.manifest, split=args.split)
    pairs = build_training_pairs(
        windows, geom, preprocess=lambda w: preprocess_window(w, spec)
    )
    model = ToyUNet(
        ToyUNetSpec(depth=args.depth, base_channels=args.base_channels),
        seed=_seed(args),
        dtype=np.float32,
    )
    cfg = TrainConfig(
        epochs=args.epochs, lr_max=args.lr_max, lr_min=args.lr_min,
        anneal_period_epochs=args.anneal_period, batch_size=args.batch_size,
        seed=_seed(args),
    )
    model, trace = train(model, pairs, cfg, log_every=max(1, args.epochs // 10))
    model.save_weights(args.out)
    if args.loss_csv:
        lines = ["epoch,dice_loss"] + [f"{i},{v:.6f}" for i, v in enumerate(trace)]
        Path(args.loss_csv).write_text("\n".join(lines) + "\n")
    print(f"trained {cfg.epochs} epochs, final loss {trace[-1]:.4f}, weights {args.out}")
    return 0


def cmd_infer(args) -> int:
    geom = _parse_geom(args.geom)
    model = ToyUNet.load_weights(args.weights)
    spec = _bandpass_from(args)
    post = _post_from(args)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        if args.stdin:
            header = read_stream_header(sys.stdin.buffer)
            if header["s"] != geom.s:
                raise ValueError(
                    f"stream has {header['s']} channels, geometry wants {geom.s}"
                )
            proc = StreamProcessor(
                model, geom, hop=args.hop, bandpass_spec=spec, post=post,
                sample_rate_hz=header["sample_rate"],
            )
            for block in iter_raw_blocks(sys.stdin.buffer, header["s"]):
                for det in proc.push(block):
                    sink.write(detections_to_jsonl([det]))
            for det in proc.finish():
                sink.write(detections_to_jsonl([det]))
            print(
                f"stream: {proc.stats.windows} windows, "
                f"{proc.stats.realtime_factor:.0f}x real time",
                file=sys.stderr,
            )
        for path in args.inputs:
            lw = read_window_file(path)
            dets = infer_window(lw.window, model, geom, spec, post)
            sink.write(detections_to_jsonl(dets, lw.window))
    finally:
        if args.out:
            sink.close()
    return 0


def cmd_eval(args) -> int:
    geom = _parse_geom(args.geom)
    model = ToyUNet.load_weights(args.weights)
    windows = load_corpus(args.manifest, split=args.split)
    report = evaluate_model(model, windows, geom, _bandpass_from(args), _post_from(args))
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if args.csv:
        Path(args.csv).write_text(report_to_csv(report))
    return 0


def cmd_noise_sweep(args) -> int:
    geom = _parse_geom(args.geom)
    model = ToyUNet.load_weights(args.weights)
    windows = load_corpus(args.manifest, split=args.split)
    reports = noise_sweep(
        model, windows, geom, _bandpass_from(args), _post_from(args), seed=_seed(args)
    )
    Path(args.out).write_text(sweep_to_csv(reports, "snr_db"))
    if args.json:
        Path(args.json).write_text(reports_to_json(reports))
    print(f"wrote {len(reports)} SNR reports to {args.out}")
    return 0


def cmd_flex(args) -> int:
    geom = _parse_geom(args.geom)
    model = ToyUNet.load_weights(args.weights)
    corpus = load_corpus(args.manifest, split=args.split)
    cfg = TrainConfig(
        epochs=args.epochs, lr_max=args.lr_max, lr_min=args.lr_min,
        anneal_period_epochs=max(1, args.epochs), batch_size=args.batch_size,
        seed=_seed(args),
    )
    reports = flexibility_protocol(
        model, corpus, geom, fractions=tuple(args.fractions), finetune_cfg=cfg,
        bandpass_spec=_bandpass_from(args), post=_post_from(args), seed=_seed(args),
        epoch_metrics=args.epoch_metrics,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "flex_reports.json").write_text(reports_to_json(reports))
    (out / "flex_sweep.csv").write_text(sweep_to_csv(reports, "finetune_fraction"))
    for rep in reports:
        if rep.epoch_trace:
            name = f"trace_{rep.axis_value:g}.csv"
            lines = ["epoch,macro_f1,mean_iou"] + [
                f"{t['epoch']},{t['macro_f1']:.6f},{t['mean_iou']:.6f}"
                for t in rep.epoch_trace
            ]
            (out / name).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(reports)} flexibility reports to {out}")
    return 0


def cmd_fold(args) -> int:
    lw = read_window_file(args.input)
    geom = geometry(lw.window.s, lw.window.w)
    image = fold_op(lw.window.samples, geom)
    write_masks(args.out, image[None].astype(np.float32), class_count=1)
    print(f"folded {args.input} ({geom.s}x{geom.w}) -> {args.out} ({geom.n}x{geom.n})")
    return 0


def cmd_unfold(args) -> int:
    data = read_mask_file(args.input)
    if data.shape[0] != 1:
        raise ValueError(f"expected a single-image VSGM file, got {data.shape[0]} classes")
    n = data.shape[1]
    geom = geometry(args.channels, n * n // args.channels)
    channels = unfold_to_channels(data[0].astype(np.float64), geom)
    from .core import WindowBatch
    from .dataset import LabeledWindow

    lw = LabeledWindow(
        WindowBatch(channels, sample_rate_hz=args.sample_rate,
                    window_id=Path(args.out).stem)
    )
    write_window_file(args.out, lw)
    print(f"unfolded {args.input} -> {args.out} ({geom.s}x{geom.w})")
    return 0


def cmd_rpc(args) -> int:
    return rpc_mod.serve(sys.stdin, sys.stdout)


_COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "noise-sweep": cmd_noise_sweep,
    "flex": cmd_flex,
    "fold": cmd_fold,
    "unfold": cmd_unfold,
    "rpc": cmd_rpc,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    subparser = parser.subcommands[args.command]  # type: ignore[attr-defined]
    defaults = {a.dest: a.default for a in subparser._actions}
    try:
        _apply_config(args, defaults)
        if args.command != "rpc":
            _echo_config(args)
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return _COMMANDS[args.command](args)
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - single machine-readable error line
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
