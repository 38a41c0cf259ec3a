"""Command-line surface: train, decode, eval, compile-context, sweep, dump-attention.

Every command is a pure function of (inputs, config, seed); each output
directory receives the resolved configuration that produced it. The default
config path can be set via the CTXSEQ_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .conditioning import BiasEntry, split_rule_based
from .config import RunConfig
from .corpus import generate_corpus, read_manifest
from .decoding import beam_search
from .experiments import (
    attention_hit_rate,
    conditioning_comparison,
    decode_corpus,
    distractor_sweep,
    dump_bias_attention,
    prepare_audio,
    strategy_comparison,
)
from .fst import FusionScorer, compile_context, load_context, save_context
from .metrics import WerReport, compute_wer
from .model import Recognizer
from .sampler import SamplerConfig
from .tensor import load_tensors, save_tensors
from .train import train_model
from .vocab import SPACE, Vocabulary


def _load_config(args) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get("CTXSEQ_CONFIG")
    cfg = RunConfig.load(path)
    for assignment in getattr(args, "set", None) or []:
        cfg.override(assignment)
    return cfg


def load_checkpoint(path) -> tuple[Recognizer, RunConfig]:
    d = Path(path)
    cfg = RunConfig.load(d / "config.ini")
    vocab = Vocabulary.load(d / "vocab.txt")
    model = Recognizer(cfg.model(), vocab, seed=cfg.seed)
    model.load_arrays(load_tensors(d / "params.bin"))
    return model, cfg


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args.out)
    corpus = generate_corpus(cfg.task(), out)
    cfg.save_resolved(out / "config.ini")
    for name, path in corpus.manifests.items():
        print(f"{name}\t{path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    task = cfg.task()
    utts = read_manifest(args.data)
    if not utts:
        raise ValueError(f"no utterances in manifest {args.data}")
    vocab = task.vocabulary()
    model = Recognizer(cfg.model(task.feature_dim), vocab, seed=cfg.seed)
    out = _outdir(args.out)
    cfg.save_resolved(out / "config.ini")
    vocab.save(out / "vocab.txt")
    every = args.checkpoint_every

    def on_step(step: int, loss: float) -> None:
        if every and (step + 1) % every == 0:
            model.save(out / f"params_step{step + 1:06d}.bin")

    log = train_model(model, utts, cfg.sampler(), cfg.train(), on_step=on_step)
    model.save(out / "params.bin")
    with open(out / "loss_log.tsv", "w", encoding="utf-8") as f:
        for step, loss in log:
            f.write(f"{step}\t{loss!r}\n")
    print(f"trained {cfg.train().steps} steps; final loss {log[-1][1]:.4f}; checkpoint in {out}")
    return 0


def cmd_decode(args) -> int:
    model, cfg = load_checkpoint(args.checkpoint)
    for flag in ("lam", "beam_width", "max_len", "n_best"):
        value = getattr(args, flag)
        if value is not None:
            cfg.override(f"decode.{flag}={value}")
    dcfg = cfg.decode()
    utts = read_manifest(args.data)
    alphabet = model.vocab.graphemes

    shared_fusion = None
    if args.context:
        shared_fusion = FusionScorer(load_context(args.context))

    def fusion_per_utt(u):
        if shared_fusion is not None:
            return shared_fusion
        if args.strategy and u.bias_phrases and not args.empty_bias:
            return FusionScorer(compile_context(u.bias_phrases, alphabet, args.strategy, args.bonus))
        return None

    def phrases_fn(u):
        return [] if args.empty_bias else list(u.bias_phrases)

    def entries_fn(u):
        if args.conditioning == "off" or args.empty_bias:
            return None
        if args.conditioning == "manifest":
            if u.bias_prefixes is None:
                raise ValueError(f"utterance {u.id} has no bias_prefixes in the manifest")
            return [BiasEntry(p, z) for p, z in zip(u.bias_prefixes, u.bias_phrases)]
        return split_rule_based(u.bias_phrases, trigger=args.trigger)

    out = _outdir(args.out)
    cfg.save_resolved(out / "config.ini")
    results = decode_corpus(
        model,
        utts,
        dcfg,
        fusion_per_utt=fusion_per_utt,
        phrases_fn=phrases_fn,
        entries_fn=entries_fn if args.conditioning != "off" else None,
    )
    with open(out / "hypotheses.tsv", "w", encoding="utf-8") as f:
        for u, r in zip(utts, results):
            f.write(f"{u.id}\t{r.text}\t{r.total!r}\n")
    print(f"decoded {len(utts)} utterances into {out / 'hypotheses.tsv'}")
    return 0


def cmd_eval(args) -> int:
    utts = {u.id: u for u in read_manifest(args.data)}
    out = _outdir(args.out)
    total = WerReport(0, 0, 0, 0)
    lines = []
    with open(args.hyp, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            utt_id, text, _ = line.rstrip("\n").split("\t")
            if utt_id not in utts:
                raise ValueError(f"hypothesis for unknown utterance {utt_id}")
            report = compute_wer(text, utts[utt_id].transcript)
            total = total + report
            lines.append(
                f"{utt_id}\t{report.substitutions}\t{report.insertions}\t"
                f"{report.deletions}\t{report.ref_words}\t{report.wer:.4f}"
            )
    with open(out / "wer_report.tsv", "w", encoding="utf-8") as f:
        f.write("id\tsub\tins\tdel\tref_words\twer\n")
        for line in lines:
            f.write(line + "\n")
        f.write(
            f"TOTAL\t{total.substitutions}\t{total.insertions}\t{total.deletions}\t"
            f"{total.ref_words}\t{total.wer:.4f}\n"
        )
    print(f"WER {100 * total.wer:.2f}% over {total.ref_words} reference words")
    return 0


def cmd_compile_context(args) -> int:
    with open(args.phrases, "r", encoding="utf-8") as f:
        phrases = [line.strip() for line in f if line.strip()]
    if args.checkpoint:
        vocab = Vocabulary.load(Path(args.checkpoint) / "vocab.txt")
        alphabet = vocab.graphemes
    elif args.alphabet:
        alphabet = [SPACE] + list(args.alphabet)
    else:
        raise ValueError("compile-context needs --checkpoint or --alphabet")
    machine = compile_context(phrases, alphabet, args.strategy, args.bonus)
    save_context(args.out, machine)
    print(f"compiled {len(phrases)} phrases -> {args.out} ({machine.n_states} states)")
    return 0


def cmd_dump_attention(args) -> int:
    model, cfg = load_checkpoint(args.checkpoint)
    utts = read_manifest(args.data)
    if args.utt_id:
        utts = [u for u in utts if u.id == args.utt_id]
        if not utts:
            raise ValueError(f"utterance {args.utt_id} not in manifest")
    utt = utts[0]
    alphas, symbols, labels = dump_bias_attention(model, utt, utt.bias_phrases, cfg.decode())
    out = _outdir(args.out)
    cfg.save_resolved(out / "config.ini")
    with open(out / f"attention_{utt.id}.tsv", "w", encoding="utf-8") as f:
        f.write("step\tsymbol\t" + "\t".join(labels) + "\n")
        for i, sym in enumerate(symbols):
            f.write(f"{i}\t{sym}\t" + "\t".join(f"{a:.6f}" for a in alphas[i]) + "\n")
    print(f"dumped {len(symbols)} steps x {len(labels)} columns for {utt.id}")
    return 0


def cmd_sweep(args) -> int:
    spec = RunConfig.load(args.spec)
    out = _outdir(args.out)
    ran = []

    if "distractors" in spec.sections:
        s = spec.sections["distractors"]
        model, cfg = load_checkpoint(s["checkpoint"])
        utts = read_manifest(s["manifest"])
        counts = [int(c) for c in s["counts"].split(",")]
        pool = sorted({p for u in utts for p in u.bias_phrases})
        curve = distractor_sweep(model, utts, pool, counts, cfg.decode(), seed=cfg.seed)
        with open(out / "distractor_curve.tsv", "w", encoding="utf-8") as f:
            for n, wer in curve:
                f.write(f"{n}\t{wer:.4f}\n")
        ran.append("distractors")

    if "strategies" in spec.sections:
        s = spec.sections["strategies"]
        model, cfg = load_checkpoint(s["checkpoint"])
        utts = read_manifest(s["manifest"])
        strategies = [x.strip() for x in s["strategies"].split(",")]
        lams = [float(x) for x in s["lams"].split(",")]
        table = strategy_comparison(
            model, utts, strategies, lams, cfg.decode(), bonus=float(s.get("bonus", 1.0))
        )
        with open(out / "strategy_table.tsv", "w", encoding="utf-8") as f:
            for strat, (lam, wer) in table.items():
                f.write(f"{strat}\t{lam}\t{wer:.4f}\n")
        ran.append("strategies")

    if "conditioning" in spec.sections:
        s = spec.sections["conditioning"]
        model, cfg = load_checkpoint(s["checkpoint"])
        utts = read_manifest(s["manifest"])
        table = conditioning_comparison(model, utts, cfg.decode(), trigger=s.get("trigger", "talk to"))
        with open(out / "conditioning.tsv", "w", encoding="utf-8") as f:
            for k, v in table.items():
                f.write(f"{k}\t{v:.4f}\n")
        ran.append("conditioning")

    if "attention" in spec.sections:
        s = spec.sections["attention"]
        model, cfg = load_checkpoint(s["checkpoint"])
        utts = read_manifest(s["manifest"])
        rate = attention_hit_rate(model, utts, cfg.decode(), threshold=float(s.get("threshold", 0.5)))
        with open(out / "attention.tsv", "w", encoding="utf-8") as f:
            f.write(f"hit_rate\t{rate:.4f}\n")
        ran.append("attention")

    print(f"sweep complete: {', '.join(ran) if ran else 'nothing to do'}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxseq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="run config file (or CTXSEQ_CONFIG)")
        sp.add_argument("--set", action="append", help="override: section.key=value")

    g = sub.add_parser("generate", help="generate a synthetic corpus")
    common(g)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train a model")
    common(t)
    t.add_argument("--data", required=True, help="training manifest (jsonl)")
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.set_defaults(fn=cmd_train)

    d = sub.add_parser("decode", help="beam-search decode a manifest")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--lam", type=float, default=None)
    d.add_argument("--beam-width", type=int, default=None)
    d.add_argument("--max-len", type=int, default=None)
    d.add_argument("--n-best", type=int, default=None)
    d.add_argument("--empty-bias", action="store_true", help="decode with an empty phrase list")
    d.add_argument("--context", help="compiled context file for shallow fusion")
    d.add_argument("--strategy", help="compile per-utterance contexts with this strategy")
    d.add_argument("--bonus", type=float, default=1.0)
    d.add_argument("--conditioning", choices=["off", "manifest", "rule-based"], default="off")
    d.add_argument("--trigger", default="talk to")
    d.set_defaults(fn=cmd_decode)

    e = sub.add_parser("eval", help="score hypotheses against references")
    e.add_argument("--hyp", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("compile-context", help="compile phrases into a context file")
    c.add_argument("--phrases", required=True, help="text file, one phrase per line")
    c.add_argument("--checkpoint", help="take the alphabet from this checkpoint")
    c.add_argument("--alphabet", help="letters of the alphabet, e.g. abcde")
    c.add_argument("--strategy", required=True)
    c.add_argument("--bonus", type=float, default=1.0)
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_compile_context)

    s = sub.add_parser("sweep", help="run the experiment battery from a spec file")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sweep)

    a = sub.add_parser("dump-attention", help="write per-step bias attention")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--utt-id", default=None)
    a.add_argument("--out", required=True)
    a.set_defaults(fn=cmd_dump_attention)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
