"""Command-line interface.

Subcommands: synth-data, train-am, train-lm, decode, evaluate, tune,
analyze-frontend, ppl-wer, context-wer. A line-oriented key=value config file
(--config) supplies defaults for any long flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import pipeline, synth
from .acoustic import AcousticModelConfig, ConvLayerSpec
from .decoder import DecoderOptions, build_trie, decode
from .errors import ConfigurationError, ConvSpeechError, EmptyBeamError
from .frontend import FrontendConfig, analyze_filters
from .gcnn import GcnnConfig, GcnnLm, train_gcnn
from .lm import Vocabulary, fit_bigram_arpa, load_arpa
from .synth import SyntheticTaskSpec, load_manifest


def parse_config_file(path) -> list[str]:
    """key=value lines -> CLI argument list ('#' starts a comment)."""
    args: list[str] = []
    for no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{path}:{no}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "1") and key in _BOOL_KEYS:
            args.append(flag)
        elif value.lower() in ("false", "no", "0") and key in _BOOL_KEYS:
            continue
        else:
            args.extend([flag, value])
    return args


_BOOL_KEYS = {"normalized-emissions", "normalized_emissions", "markov", "no-markov"}


def _add_decoder_flags(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--beam-size", type=int, default=2500)
    p.add_argument("--beam-score", type=float, default=26.0)
    p.add_argument("--normalized-emissions", action="store_true")


def _decoder_opts(args) -> DecoderOptions:
    return DecoderOptions(
        alpha=args.alpha, beta=args.beta, gamma=args.gamma,
        beam_size=args.beam_size, beam_score=args.beam_score,
        normalized_emissions=args.normalized_emissions,
    )


def _load_task(path) -> SyntheticTaskSpec:
    raw = json.loads(Path(path).read_text())
    return SyntheticTaskSpec(
        letters=tuple(raw["letters"]),
        tone_frequencies=tuple(raw["tone_frequencies"]),
        letter_duration_ms=raw["letter_duration_ms"],
        gap_duration_ms=raw["gap_duration_ms"],
        noise_level=raw["noise_level"],
        amplitude=raw["amplitude"],
        lexicon={w: list(s) for w, s in raw["lexicon"].items()},
        sentence_words=tuple(raw["sentence_words"]),
        sample_rate=raw["sample_rate"],
    )


def _save_task(path, spec: SyntheticTaskSpec):
    Path(path).write_text(json.dumps({
        "letters": list(spec.letters),
        "tone_frequencies": list(spec.tone_frequencies),
        "letter_duration_ms": spec.letter_duration_ms,
        "gap_duration_ms": spec.gap_duration_ms,
        "noise_level": spec.noise_level,
        "amplitude": spec.amplitude,
        "lexicon": {w: list(s) for w, s in spec.lexicon.items()},
        "sentence_words": list(spec.sentence_words),
        "sample_rate": spec.sample_rate,
    }, indent=2))


def _load_lm(path):
    text_head = Path(path).read_text(errors="ignore")[:64] if Path(path).suffix != ".bin" else ""
    if str(path).endswith(".arpa") or text_head.lstrip().startswith("\\data\\"):
        with open(path) as handle:
            return load_arpa(handle)
    return pipeline.load_gcnn(path)


def _read_corpus(path) -> list[list[str]]:
    return [line.split() for line in Path(path).read_text().splitlines() if line.strip()]


def cmd_synth_data(args):
    spec = SyntheticTaskSpec()
    if args.condition == "other":
        spec = synth.noisy_variant(spec, args.snr_db)
    elif args.noise_level:
        from dataclasses import replace

        spec = replace(spec, noise_level=args.noise_level)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bias = synth.markov_bias(spec) if args.markov else None
    counts = {"train": args.train, "dev": args.dev, "test": args.test}
    counts = {k: v for k, v in counts.items() if v > 0}
    manifests = synth.synthesize_dataset(spec, out, counts, seed=args.seed, transition_bias=bias)
    ckpt.write_lexicon(out / "lexicon.txt", spec.lexicon)
    _save_task(out / "task.json", spec)
    corpus = synth.synthesize_corpus(spec, args.corpus_sentences, seed=args.seed + 1,
                                     transition_bias=bias)
    (out / "corpus.txt").write_text("\n".join(" ".join(s) for s in corpus) + "\n")
    val = synth.synthesize_corpus(spec, max(args.corpus_sentences // 10, 10),
                                  seed=args.seed + 2, transition_bias=bias)
    (out / "corpus-dev.txt").write_text("\n".join(" ".join(s) for s in val) + "\n")
    for split, manifest in manifests.items():
        print(f"{split}: {len(manifest)} utterances")
    print(f"task spec, lexicon, and LM corpora written under {out}")


def cmd_train_am(args):
    spec = _load_task(args.task)
    manifest = load_manifest(args.manifest)
    dev = load_manifest(args.dev_manifest, "dev") if args.dev_manifest else None
    fcfg = FrontendConfig(num_filters=args.filters)
    model_config = None
    if args.layers:
        layer_specs = []
        prev = args.filters
        for part in args.layers.split(","):
            channels, width = (int(x) for x in part.split(":"))
            layer_specs.append(ConvLayerSpec(prev, channels, width, dropout_rate=args.dropout))
            prev = channels
        model_config = AcousticModelConfig(layer_specs, len(spec.alphabet))
    settings = pipeline.TrainSettings(
        epochs=args.epochs, lr=args.lr, momentum=args.momentum, clip=args.clip,
        batch_size=args.batch_size, seed=args.seed,
    )
    system, history = pipeline.train_acoustic(
        manifest, spec.lexicon, spec.alphabet, frontend_kind=args.frontend,
        frontend_config=fcfg, model_config=model_config, dev_manifest=dev,
        settings=settings, sample_rate=spec.sample_rate,
        checkpoint_path=args.checkpoint,
    )
    if args.loss_curve:
        pipeline.write_csv(args.loss_curve, history)
    for record in history:
        dev_part = f"  dev {record['dev_loss']:8.3f}" if "dev_loss" in record else ""
        print(f"epoch {record['epoch']:3d}  loss {record['train_loss']:8.3f}{dev_part}"
              f"  lr {record['lr']:.4f}")
    print(f"checkpoint written to {args.checkpoint}")


def cmd_train_lm(args):
    corpus = _read_corpus(args.corpus)
    if args.arch == "bigram":
        Path(args.checkpoint).write_text(fit_bigram_arpa(corpus))
        print(f"bigram ARPA written to {args.checkpoint}")
        return
    tokens = sorted({tok for sentence in corpus for tok in sentence})
    vocab = Vocabulary(tuple(tokens) + ("<s>", "</s>", "<unk>"))
    config = GcnnConfig(num_blocks=args.blocks, embed_dim=args.embed_dim,
                        bottleneck_dim=args.bottleneck_dim,
                        mid_kernel_width=args.kernel_width, dropout_rate=args.dropout)
    lm = GcnnLm(vocab, config, rng=np.random.default_rng(args.seed))
    val = _read_corpus(args.val_corpus) if args.val_corpus else None
    ckpt_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    def save_epoch(epoch, model, record):
        if ckpt_dir:
            pipeline.save_gcnn(ckpt_dir / f"epoch{epoch:03d}.ckpt", model)

    history = train_gcnn(lm, corpus, val, epochs=args.epochs, lr=args.lr,
                         momentum=args.momentum, clip=args.clip,
                         batch_size=args.batch_size, seed=args.seed,
                         epoch_callback=save_epoch)
    pipeline.save_gcnn(args.checkpoint, lm)
    if args.history:
        pipeline.write_csv(args.history, history)
    for record in history:
        val_part = f"  val ppl {record['val_ppl']:8.3f}" if "val_ppl" in record else ""
        print(f"epoch {record['epoch']:3d}  train ppl {record['train_ppl']:8.3f}{val_part}")
    print(f"checkpoint written to {args.checkpoint}")


def _decode_setup(args):
    system = pipeline.load_system(args.am)
    lexicon = ckpt.read_lexicon(args.lexicon)
    trie = build_trie(lexicon, system.alphabet)
    lm = _load_lm(args.lm)
    return system, trie, lm


def cmd_decode(args):
    opts = _decoder_opts(args)
    if args.emissions:
        emissions, alphabet = ckpt.load_emissions(args.emissions)
        lexicon = ckpt.read_lexicon(args.lexicon)
        trie = build_trie(lexicon, alphabet)
        lm = _load_lm(args.lm)
        g = np.zeros((len(alphabet), len(alphabet)))
        result = decode(emissions, g, trie, lm, opts)
        print(" ".join(result.words))
        return
    system, trie, lm = _decode_setup(args)
    from .audio_io import read_wav

    manifest = load_manifest(args.manifest)
    for entry in manifest.entries:
        try:
            result = decode(system.emissions(read_wav(entry.audio)), system.transitions,
                            trie, lm, opts)
            text = " ".join(result.words)
        except EmptyBeamError as err:
            text = f"<decode-failed frame {err.frame}>"
        print(f"{entry.utt_id}\t{text}")


def cmd_evaluate(args):
    system, trie, lm = _decode_setup(args)
    manifest = load_manifest(args.manifest)
    report = pipeline.evaluate(manifest, system, trie, lm, _decoder_opts(args))
    print(f"WER {report.wer:.2f}%  CER {report.cer:.2f}%  "
          f"(S={report.substitutions} D={report.deletions} I={report.insertions} "
          f"N={report.reference_length} failures={report.decode_failures})")
    if args.report:
        rows = [
            {"id": u.utterance_id, "reference": " ".join(u.reference),
             "hypothesis": " ".join(u.hypothesis), "substitutions": u.substitutions,
             "deletions": u.deletions, "insertions": u.insertions}
            for u in report.utterances
        ]
        pipeline.write_csv(args.report, rows)


def _grid(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x != ""]


def cmd_tune(args):
    system, trie, lm = _decode_setup(args)
    manifest = load_manifest(args.manifest)
    stage1 = tuple(float(x) for x in args.stage1.split(":"))
    stage2 = tuple(float(x) for x in args.stage2.split(":"))
    best, rows = pipeline.tune(
        manifest, system, trie, lm,
        _grid(args.alpha_grid), _grid(args.beta_grid), _grid(args.gamma_grid),
        stage1=(int(stage1[0]), stage1[1]), stage2=(int(stage2[0]), stage2[1]),
    )
    if args.out:
        pipeline.write_csv(args.out, rows)
    print(f"best: alpha={best.alpha} beta={best.beta} gamma={best.gamma} "
          f"(beam {best.beam_size}/{best.beam_score})")
    print(f"stage-2 WER {rows[-1]['wer']:.2f}%")


def cmd_analyze_frontend(args):
    system = pipeline.load_system(args.am)
    if system.frontend_kind != "learnable":
        raise ConfigurationError("filter analysis requires a learnable front-end")
    analysis = analyze_filters(system.frontend)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_csv(
        out / "center_frequencies.csv",
        [{"filter_index": i, "center_hz": hz}
         for i, hz in enumerate(analysis.center_frequencies)],
    )
    heat_rows = []
    for i, spectrum in enumerate(analysis.power_spectra):
        for hz, power in zip(analysis.bin_frequencies, spectrum):
            heat_rows.append({"filter_index": i, "bin_hz": hz, "power": power})
    pipeline.write_csv(out / "filter_heatmap.csv", heat_rows)
    print(f"wrote {out / 'center_frequencies.csv'} and {out / 'filter_heatmap.csv'}")


def cmd_ppl_wer(args):
    system, trie, _ = _decode_setup_no_lm(args)
    manifest = load_manifest(args.manifest)
    items = pipeline.eval_items(manifest, system)
    corpus = _read_corpus(args.corpus)
    checkpoints = []
    for path in args.checkpoints.split(","):
        checkpoints.append((Path(path).stem, pipeline.load_gcnn(path)))
    rows = pipeline.perplexity_wer_study(checkpoints, items, trie, _decoder_opts(args), corpus)
    pipeline.write_csv(args.out, rows)
    for row in rows:
        print(f"{row['checkpoint']}: ppl {row['perplexity']:.3f}  wer {row['wer']:.2f}%")


def _decode_setup_no_lm(args):
    system = pipeline.load_system(args.am)
    lexicon = ckpt.read_lexicon(args.lexicon)
    return system, build_trie(lexicon, system.alphabet), None


def cmd_context_wer(args):
    system, trie, _ = _decode_setup_no_lm(args)
    lm = _load_lm(args.lm)
    manifest = load_manifest(args.manifest)
    items = pipeline.eval_items(manifest, system)
    limits = [int(x) for x in args.limits.split(",")]
    rows = pipeline.context_wer_study(lm, limits, items, trie, _decoder_opts(args))
    pipeline.write_csv(args.out, rows)
    for row in rows:
        print(f"context {row['context']:3d}: wer {row['wer']:.2f}%")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convspeech",
        description="Fully convolutional speech recognition at desk scale",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value defaults file")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth-data", help="render the synthetic tone task")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train", type=int, default=500)
    p.add_argument("--dev", type=int, default=50)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--condition", choices=["clean", "other"], default="clean")
    p.add_argument("--snr-db", type=float, default=5.0)
    p.add_argument("--noise-level", type=float, default=0.0)
    p.add_argument("--corpus-sentences", type=int, default=2000)
    p.add_argument("--markov", action="store_true", default=True)
    p.add_argument("--no-markov", dest="markov", action="store_false")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train-am", help="train the acoustic model end to end")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--dev-manifest")
    p.add_argument("--task", required=True, help="task.json from synth-data")
    p.add_argument("--frontend", choices=["learnable", "mel"], default="learnable")
    p.add_argument("--filters", type=int, default=8)
    p.add_argument("--layers", help="conv-GLU stack as channels:width,... (e.g. 24:9,32:9)")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--lr", type=float, default=0.3)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--loss-curve", help="CSV output for the loss history")
    p.set_defaults(func=cmd_train_am)

    p = sub.add_parser("train-lm", help="train a language model")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--val-corpus")
    p.add_argument("--arch", choices=["gcnn", "bigram"], default="gcnn")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--embed-dim", type=int, default=24)
    p.add_argument("--bottleneck-dim", type=int, default=12)
    p.add_argument("--kernel-width", type=int, default=5)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--checkpoint-dir", help="save per-epoch checkpoints here")
    p.add_argument("--history", help="CSV output for perplexity history")
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("decode", help="beam-decode a manifest or an emission table")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--emissions", help="binary emission table instead of audio")
    p.add_argument("--am", help="acoustic system checkpoint")
    p.add_argument("--lm", required=True)
    p.add_argument("--lexicon", required=True)
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="WER/CER over a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--am", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--report", help="per-utterance CSV output")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="two-stage grid search for alpha/beta/gamma")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--am", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--alpha-grid", default="0,0.5,1")
    p.add_argument("--beta-grid", default="0,0.5,1")
    p.add_argument("--gamma-grid", default="0,0.5")
    p.add_argument("--stage1", default="2500:26")
    p.add_argument("--stage2", default="3000:50")
    p.add_argument("--out", help="CSV output for the WER grid")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("analyze-frontend", help="center frequencies and filter heatmap")
    common(p)
    p.add_argument("--am", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_analyze_frontend)

    p = sub.add_parser("ppl-wer", help="perplexity vs WER across LM checkpoints")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--am", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--checkpoints", required=True, help="comma-separated GCNN checkpoints")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_ppl_wer)

    p = sub.add_parser("context-wer", help="WER as a function of LM context size")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--am", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--limits", default="1,2,4,8,16")
    p.add_argument("--out", required=True)
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_context_wer)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 >= len(argv):
            print("error: --config needs a path", file=sys.stderr)
            return 2
        expanded = parse_config_file(argv[idx + 1])
        argv = [argv[0], *expanded, *argv[1:]]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConvSpeechError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
