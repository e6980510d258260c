#!/usr/bin/env python3
"""Conv-LM studies: perplexity vs WER over training, and WER vs context size.

Uses the homophone study task: two words share a spelling and the anchor word
two tokens earlier decides which one occurs, so the language model (and its
visible context) is the only way to get them right. The acoustic side is the
fixed mel baseline. Trains the gated convolutional LM with per-epoch
checkpoints, then sweeps checkpoints and context limits.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from convspeech import synth
from convspeech.decoder import DecoderOptions, build_trie
from convspeech.frontend import FrontendConfig
from convspeech.gcnn import GcnnConfig, GcnnLm, train_gcnn
from convspeech.lm import Vocabulary
from convspeech.pipeline import (
    TrainSettings,
    context_wer_study,
    eval_items,
    perplexity_wer_study,
    train_acoustic,
    write_csv,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/lm_studies")
    parser.add_argument("--train", type=int, default=120)
    parser.add_argument("--dev", type=int, default=40)
    parser.add_argument("--lm-epochs", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = synth.homophone_study_spec()
    train_m = synth.synthesize_from_sentences(
        spec, synth.homophone_study_sentences(args.train, 10), out / "data", "train"
    )
    dev_m = synth.synthesize_from_sentences(
        spec, synth.homophone_study_sentences(args.dev, 11), out / "data", "dev"
    )
    system, _ = train_acoustic(
        train_m, spec.lexicon, spec.alphabet,
        frontend_kind="mel", frontend_config=FrontendConfig(num_filters=8),
        settings=TrainSettings(epochs=6, lr=0.3, batch_size=4, seed=args.seed),
    )
    items = eval_items(dev_m, system)
    trie = build_trie(spec.lexicon, spec.alphabet)

    corpus = synth.homophone_study_sentences(600, 20)
    val_corpus = synth.homophone_study_sentences(150, 21)
    tokens = sorted({tok for sentence in corpus for tok in sentence})
    vocab = Vocabulary(tuple(tokens) + ("<s>", "</s>", "<unk>"))
    lm = GcnnLm(vocab, GcnnConfig(num_blocks=2, embed_dim=16, bottleneck_dim=8),
                rng=np.random.default_rng(args.seed))
    checkpoints = [("epoch-start", GcnnLm(vocab, lm.config,
                    params={k: v.copy() for k, v in lm.params.items()}))]

    def snapshot(epoch, model, record):
        checkpoints.append((
            f"epoch{epoch}",
            GcnnLm(vocab, model.config,
                   params={k: v.copy() for k, v in model.params.items()}),
        ))

    train_gcnn(lm, corpus, val_corpus, epochs=args.lm_epochs, lr=0.5, clip=0.5,
               batch_size=8, seed=args.seed, epoch_callback=snapshot)

    opts = DecoderOptions(alpha=1.5, beta=1.0, beam_size=2500, beam_score=26.0)
    rows = perplexity_wer_study(checkpoints, items, trie, opts, val_corpus)
    write_csv(out / "ppl_wer.csv", rows)
    for row in rows:
        print(f"{row['checkpoint']:12s} ppl {row['perplexity']:8.2f}  wer {row['wer']:6.2f}%")

    ctx_rows = context_wer_study(lm, [1, 2, 4, 8], items, trie, opts)
    write_csv(out / "context_wer.csv", ctx_rows)
    for row in ctx_rows:
        print(f"context {row['context']:2d}: wer {row['wer']:6.2f}%")


if __name__ == "__main__":
    main()
