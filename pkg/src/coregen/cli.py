"""Command-line entry point: ``coregen {align,coverage,train,generate,evaluate}``.

Every command writes a manifest (``OUT.manifest.json``, or
``OUT/manifest.json`` for ``train``) recording the command, config hash,
input hashes and seed. On failure the process exits
with status 1 and prints one line ``error<TAB><category><TAB><message>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .alignment import AlignmentTable, CorpusError, prune_top_k, train_alignment
from .checkpoint import CheckpointError, content_hash, load_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import read_corpus, read_sentences, read_sources
from .decoding import decode_corpus, format_outputs
from .evaluation import InputError, format_report, lead_baseline, metric_report, train_lm
from .model import CoReModel, ModelConfig
from .training import Resources, build_resources, resource_hashes, train
from .vocab import Vocabulary, coverage_ratio, coverage_report

log = logging.getLogger("coregen")

RESOURCE_FILES = {
    "source": "source.vocab",
    "target": "target.vocab",
    "frequent": "frequent.vocab",
    "table": "align.tsv",
}


def _file_hash(path) -> str:
    return content_hash(Path(path).read_bytes())


def write_manifest(path, command: str, cfg: RunConfig, inputs: dict) -> dict:
    manifest = {
        "command": command,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "inputs": {k: _file_hash(v) for k, v in sorted(inputs.items()) if v is not None},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return manifest


def _manifest_path(out) -> Path:
    return Path(str(out) + ".manifest.json")


def save_resources(res: Resources, out_dir: Path) -> None:
    res.source.save(out_dir / RESOURCE_FILES["source"])
    res.target.save(out_dir / RESOURCE_FILES["target"])
    res.frequent.save(out_dir / RESOURCE_FILES["frequent"])
    res.table.save(out_dir / RESOURCE_FILES["table"])


def load_model(model_dir, checkpoint=None) -> tuple[CoReModel, Resources, dict]:
    """Model, resources and stored config from a ``train`` output directory."""
    model_dir = Path(model_dir)
    params, conf = load_checkpoint(checkpoint or model_dir / "best.ckpt")
    res = Resources(
        source=Vocabulary.load(model_dir / RESOURCE_FILES["source"]),
        target=Vocabulary.load(model_dir / RESOURCE_FILES["target"]),
        frequent=Vocabulary.load(model_dir / RESOURCE_FILES["frequent"]),
        table=AlignmentTable.load(model_dir / RESOURCE_FILES["table"]),
    )
    for key, value in resource_hashes(res).items():
        if conf.get(key) != value:
            raise CheckpointError(f"{key} in checkpoint does not match the files in {model_dir}")
    mcfg = ModelConfig(int(conf["src_vocab_size"]), int(conf["tgt_vocab_size"]),
                       int(conf["embedding_dim"]), int(conf["hidden_dim"]))
    return CoReModel(mcfg, params), res, conf


# ----------------------------------------------------------------- commands

def cmd_align(args, cfg: RunConfig) -> None:
    corpus = read_corpus(args.train)
    table = train_alignment(corpus, cfg.align_iterations, cfg.diagonal_tension or None)
    prune_top_k(table, cfg.k_alignments).save(args.out)
    write_manifest(_manifest_path(args.out), "align", cfg, {"train": args.train})


def cmd_coverage(args, cfg: RunConfig) -> None:
    train_pairs = read_corpus(args.train)
    test_pairs = read_corpus(args.test)
    res = build_resources(train_pairs, cfg.train_config())
    rows = [
        ("X", coverage_ratio(test_pairs, "X")),
        ("X+A(X)", coverage_ratio(test_pairs, "X+A(X)", res.table)),
        ("X+A(X)+U", coverage_ratio(test_pairs, "X+A(X)+U", res.table, res.frequent)),
        (f"top-{cfg.top_n}", coverage_ratio(test_pairs, "top-N", v=res.target, n=cfg.top_n)),
    ]
    Path(args.out).write_text(coverage_report(rows), encoding="utf-8")
    write_manifest(_manifest_path(args.out), "coverage", cfg, {"train": args.train, "test": args.test})


def cmd_train(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = read_corpus(args.train)
    valid = read_corpus(args.valid) if args.valid else None
    tcfg = cfg.train_config()
    res = build_resources(corpus, tcfg)
    save_resources(res, out)
    train(tcfg, corpus, res, valid, out)
    write_manifest(out / "manifest.json", "train", cfg, {"train": args.train, "valid": args.valid})


def cmd_generate(args, cfg: RunConfig) -> None:
    model, res, _ = load_model(args.model, args.checkpoint)
    sources = read_sources(args.input)
    hyps = decode_corpus(model, res, sources, cfg.beam_width, cfg.max_len)
    Path(args.out).write_text(format_outputs(hyps), encoding="utf-8")
    if args.trace:
        blocks = [f"# {i}\n" + h.trace() for i, h in enumerate(hyps, 1)]
        Path(args.trace).write_text("".join(blocks), encoding="utf-8")
    write_manifest(_manifest_path(args.out), "generate", cfg,
                   {"input": args.input, "checkpoint": args.checkpoint or Path(args.model) / "best.ckpt"})


def cmd_evaluate(args, cfg: RunConfig) -> None:
    ref = read_corpus(args.ref)
    sources = [s for s, _ in ref]
    references = [t for _, t in ref]
    if args.lead:
        candidates = [lead_baseline(s, cfg.lead_k) for s in sources]
    elif args.hyp:
        candidates = read_sentences(args.hyp)
    else:
        raise InputError("evaluate needs --hyp or --lead")
    lm_corpus = read_corpus(args.lm_corpus) if args.lm_corpus else ref
    lm = train_lm(t for _, t in lm_corpus)
    rows = metric_report(candidates, references, sources, lm)
    Path(args.out).write_text(format_report(rows), encoding="utf-8")
    write_manifest(_manifest_path(args.out), "evaluate", cfg,
                   {"ref": args.ref, "hyp": args.hyp, "lm_corpus": args.lm_corpus})


COMMANDS = {
    "align": cmd_align,
    "coverage": cmd_coverage,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coregen", description="Copy-and-rewrite sequence generation: align, train, decode, evaluate.")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", parents=[common], help="train and prune the alignment table")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("coverage", parents=[common], help="target-word coverage report")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", parents=[common], help="decode sources with a trained model")
    p.add_argument("--model", required=True, help="train output directory")
    p.add_argument("--checkpoint", help="checkpoint file (default: MODEL/best.ckpt)")
    p.add_argument("--input", required=True, help="corpus or one-source-per-line file")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="write a per-token mode trace (TSV)")

    p = sub.add_parser("evaluate", parents=[common], help="ROUGE / PPL / length / UNK / copy report")
    p.add_argument("--ref", required=True, help="reference corpus (source<TAB>target)")
    p.add_argument("--hyp", help="generated sentences, one per line")
    p.add_argument("--lead", action="store_true", help="score the LEAD baseline instead of --hyp")
    p.add_argument("--lm-corpus", help="corpus whose targets train the LM (default: --ref)")
    p.add_argument("--out", required=True)
    return parser


def _category(exc: Exception) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, CheckpointError):
        return "checkpoint"
    if isinstance(exc, (CorpusError, InputError)):
        return "input"
    if isinstance(exc, OSError):
        return "io"
    return "runtime"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        COMMANDS[args.command](args, cfg)
    except (ValueError, OSError, KeyError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error\t{_category(exc)}\t{msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
