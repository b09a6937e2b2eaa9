"""Command-line entry point: ``mtn {train,generate,rank,evaluate,synth}``.

Every RunConfig field is a flag (``--model.d_model 32``); a JSON config file of
flat dotted keys may be given with ``--config`` and flags override it.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, RunConfigError, flag_specs
from .data import (DatasetFormatError, FeatureFormatError, FeatureStore, build_vocab,
                   corpus_tokens, load_dataset, write_synth)
from .engine import (CheckpointError, beam_search, greedy_decode, load_checkpoint,
                     rank_candidates, save_checkpoint, train)
from .metrics import AlignmentError, evaluate
from .model import ConfigError, MtnModel
from .numerics.tensor import NonFiniteError

log = logging.getLogger("mtn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

SHORTCUTS = {
    "--variant": "model.variant",
    "--seed": "train.seed",
    "--beam": "decode.beam_size",
    "--dataset": "paths.dataset",
    "--features": "paths.features",
    "--checkpoint": "paths.checkpoint",
    "--output": "paths.output",
    "--hyp": "paths.hypotheses",
    "--ref": "paths.references",
    "--report": "paths.report",
    "--out": "synth.out",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [("train", "train a model"),
                           ("generate", "generate responses with a checkpoint"),
                           ("rank", "rank answer candidates with a checkpoint"),
                           ("evaluate", "score generated responses"),
                           ("synth", "write a synthetic corpus and features")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON file of flat dotted keys")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key")
        for flag, key in SHORTCUTS.items():
            p.add_argument(flag, dest=key, default=None, help=f"alias for --{key}")
        for key, typ in flag_specs():
            if f"--{key}" in SHORTCUTS:
                continue
            p.add_argument(f"--{key}", dest=key, default=None, metavar=typ.split()[0].upper())
        if name == "generate":
            p.add_argument("--greedy", dest="decode.greedy", action="store_const", const="true",
                           default=None, help="greedy decoding instead of beam search")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise RunConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(key, value)
    for key, value in vars(args).items():
        if "." in key and value is not None:
            cfg.set(key, value)
    return cfg


def _require(cfg: RunConfig, *keys: str) -> None:
    flat = cfg.to_flat()
    for key in keys:
        if not flat[key]:
            raise RunConfigError(f"missing required setting {key}")


def _features(cfg: RunConfig, modalities) -> FeatureStore | None:
    if not modalities:
        return None
    if not cfg.paths.features:
        raise RunConfigError("paths.features is required when model.modalities is non-empty")
    return FeatureStore.from_dir(cfg.paths.features, [m for m, _ in modalities])


def cmd_train(cfg: RunConfig) -> int:
    if not cfg.paths.checkpoint_dir:
        cfg.paths.checkpoint_dir = cfg.train.checkpoint_dir
    _require(cfg, "paths.dataset", "paths.checkpoint_dir")
    cfg.model_config(vocab_size=5).validate()
    cfg.train.validate()
    examples = load_dataset(cfg.paths.dataset, max_history=cfg.model.max_history)
    vocab = build_vocab(corpus_tokens(examples), cfg.data.min_freq)
    examples = load_dataset(cfg.paths.dataset, vocab, cfg.model.max_history)
    valid = (load_dataset(cfg.paths.valid_dataset, vocab, cfg.model.max_history)
             if cfg.paths.valid_dataset else None)
    features = _features(cfg, cfg.model.modalities)
    mcfg = cfg.model_config(len(vocab))
    mcfg.validate()
    model = MtnModel(mcfg)
    out = Path(cfg.paths.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(cfg.dumps(), encoding="utf-8")
    cfg.train.checkpoint_dir = str(out)
    result = train(examples, features, cfg.train, model, vocab, valid)
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as f:
        for rec in result.log:
            f.write(json.dumps({"seed": cfg.train.seed, **rec}, sort_keys=True) + "\n")
    save_checkpoint(out / "final", model, vocab, result.steps, result.optimizer.state,
                    extra={"best": result.best})
    if result.best is not None:
        (out / "best.json").write_text(json.dumps(result.best, sort_keys=True) + "\n")
    log.info("trained %d steps; best %s", result.steps, result.best)
    return EXIT_OK


def _load_for_inference(cfg: RunConfig):
    _require(cfg, "paths.checkpoint", "paths.dataset")
    ck = load_checkpoint(cfg.paths.checkpoint)
    examples = load_dataset(cfg.paths.dataset, ck.vocab, ck.model.cfg.max_history)
    features = _features(cfg, ck.model.cfg.modalities)
    return ck, examples, features


def cmd_generate(cfg: RunConfig) -> int:
    _require(cfg, "paths.output")
    ck, examples, features = _load_for_inference(cfg)
    d = cfg.decode
    with open(cfg.paths.output, "w", encoding="utf-8") as f:
        for ex in examples:
            if d.greedy:
                ids = greedy_decode(ck.model, ex, ck.vocab, features, d.max_len)
            else:
                ids = beam_search(ck.model, ex, ck.vocab, features, d.beam_size,
                                  d.length_penalty, d.max_len)
            f.write(json.dumps({"dialogue_id": ex.dialogue_id, "turn": ex.turn,
                                "response": " ".join(ck.vocab.decode(ids))}) + "\n")
    return EXIT_OK


def cmd_rank(cfg: RunConfig) -> int:
    _require(cfg, "paths.output")
    ck, examples, features = _load_for_inference(cfg)
    with open(cfg.paths.output, "w", encoding="utf-8") as f:
        for ex in examples:
            if not ex.candidates:
                raise DatasetFormatError(
                    f"dialogue {ex.dialogue_id} turn {ex.turn}: no candidates to rank")
            order = rank_candidates(ck.model, ex, ex.candidates, ck.vocab, features)
            f.write(json.dumps({"dialogue_id": ex.dialogue_id, "turn": ex.turn,
                                "ranking": order}) + "\n")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    _require(cfg, "paths.hypotheses", "paths.references")
    report = evaluate(cfg.paths.hypotheses, cfg.paths.references, cfg.paths.report)
    print(report.to_json())
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    _require(cfg, "synth.out")
    s = cfg.synth
    write_synth(s.out, s.seed, s.n_dialogues, s.grammar_size, n_turns=s.n_turns)
    # generator settings only, so equal seeds give identical trees wherever they are written
    record = {k: v for k, v in cfg.to_flat().items() if k.startswith("synth.") and k != "synth.out"}
    (Path(s.out) / "synth_config.json").write_text(
        json.dumps(record, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "generate": cmd_generate, "rank": cmd_rank,
            "evaluate": cmd_evaluate, "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (RunConfigError, ConfigError) as exc:
        print(f"mtn {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetFormatError, FeatureFormatError, AlignmentError, CheckpointError,
            FileNotFoundError, KeyError) as exc:
        print(f"mtn {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, FloatingPointError, ValueError) as exc:
        print(f"mtn {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
