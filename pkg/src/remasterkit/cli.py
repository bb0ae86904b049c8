"""Command-line entry point: fabricate, fx, pretrain-encoder, train-cloner,
remaster and evaluate subcommands. Orchestration only; no numeric logic here.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import dataset, fx, metrics, training
from .audio import load_wav, save_wav


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="remasterkit",
                     description="Self-supervised music remastering toolkit")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("fabricate",
                       help="fabricate a triplet dataset from a song corpus")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--segment-len", type=int, default=dataset.DEFAULT_SEGMENT_LEN)

    p = sub.add_parser("fx",
                       help="apply or sample a mastering chain")
    fx_sub = p.add_subparsers(dest="fx_command", required=True,
                              parser_class=_Parser)
    pa = fx_sub.add_parser("apply")
    pa.add_argument("--params", required=True)
    pa.add_argument("input")
    pa.add_argument("output")
    ps = fx_sub.add_parser("sample")
    ps.add_argument("--seed", type=int, required=True)
    ps.add_argument("--out", required=True)

    for phase in ("pretrain-encoder", "train-cloner"):
        p = sub.add_parser(phase)
        p.add_argument("--config", default=None,
                       help="JSON config file (fallback: REMASTERKIT_CONFIG)")
        p.add_argument("--data", required=True, help="corpus directory")
        p.add_argument("--out", required=True, help="checkpoint directory")
        p.add_argument("--resume", default=None)
        p.add_argument("--seed", type=int, default=None)
        if phase == "train-cloner":
            p.add_argument("--encoder", required=True)

    p = sub.add_parser("remaster",
                       help="transfer the reference's mastering style onto the input")
    p.add_argument("--input", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--cloner", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=131072)

    p = sub.add_parser("evaluate")
    p.add_argument("--index", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--cloner", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=131072)
    return parser


def _load_train_config(args, phase: str) -> training.TrainConfig:
    config_path = args.config or os.environ.get("REMASTERKIT_CONFIG")
    if config_path:
        config = training.TrainConfig.from_file(config_path)
    else:
        config = (training.TrainConfig.pretrain_defaults()
                  if phase == "pretrain" else training.TrainConfig.clone_defaults())
    overrides = {"phase": phase, "checkpoint_dir": args.out}
    if args.seed is not None:
        overrides["seed"] = args.seed
    from dataclasses import replace
    return replace(config, **overrides)


def _dispatch(args) -> None:
    if args.command == "fabricate":
        manifest = dataset.scan_corpus(args.input_dir)
        dataset.fabricate(manifest, args.count, args.seed, args.out,
                          segment_len=args.segment_len)
    elif args.command == "fx":
        if args.fx_command == "sample":
            params = fx.params_from_seed(args.seed)
            Path(args.out).write_text(params.to_json())
        else:
            params = fx.FxParams.from_json(Path(args.params).read_text())
            wf = load_wav(args.input)
            save_wav(fx.apply_chain(wf, params), args.output, "32f")
    elif args.command == "pretrain-encoder":
        config = _load_train_config(args, "pretrain")
        manifest = dataset.scan_corpus(args.data)
        training.pretrain_encoder(config, manifest, resume=args.resume)
    elif args.command == "train-cloner":
        config = _load_train_config(args, "clone")
        manifest = dataset.scan_corpus(args.data)
        training.train_cloner(config, manifest, args.encoder, resume=args.resume)
    elif args.command == "remaster":
        from .cloner import remaster_waveform
        encoder, _ = training.load_encoder(args.encoder)
        cloner, _ = training.load_cloner(args.cloner)
        wf = load_wav(args.input)
        reference = load_wav(args.reference)
        out = remaster_waveform(wf, reference, encoder, cloner, window=args.window)
        save_wav(out, args.out, "32f")
    elif args.command == "evaluate":
        encoder, enc_payload = training.load_encoder(args.encoder)
        cloner, clo_payload = training.load_cloner(args.cloner)
        metrics.evaluate_pairs(
            args.index, encoder, cloner, out_path=args.out, window=args.window,
            metadata={
                "encoder_checkpoint": str(args.encoder),
                "cloner_checkpoint": str(args.cloner),
                "encoder_step": enc_payload.get("step"),
                "cloner_step": clo_payload.get("step"),
            },
        )


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        _dispatch(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
