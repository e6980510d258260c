"""End-to-end orchestration: training, evaluation, tuning, and LM studies."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint as ckpt
from .acoustic import AcousticModel, AcousticModelConfig, ConvLayerSpec, EmissionTable
from .audio_io import read_wav
from .criterion import (
    Alphabet,
    TransitionTable,
    asg_loss,
    asg_loss_and_gradients,
    encode_target,
)
from .decoder import DecoderOptions, LexiconTrie, decode, items_wer, tune_grid
from .errors import ConfigurationError, EmptyBeamError
from .frontend import (
    FrontendConfig,
    LearnableFrontend,
    MelFrontend,
    Waveform,
    num_output_frames,
)
from .gcnn import GcnnConfig, GcnnLm
from .lm import Vocabulary, perplexity
from .metrics import EvalReport, aggregate, score_utterance
from .optim import PlateauScheduler, SgdOptimizer
from .synth import DatasetManifest, normalize_transcript, transcript_letters


@dataclass
class SpeechSystem:
    """Trained front-end + acoustic model + transition table."""

    frontend: LearnableFrontend | MelFrontend
    model: AcousticModel
    transitions: TransitionTable
    alphabet: Alphabet
    frontend_kind: str = "learnable"

    def emissions(self, wave: Waveform) -> EmissionTable:
        return self.model.forward(self.frontend.forward(wave))


@dataclass
class TrainSettings:
    epochs: int = 15
    lr: float = 0.2
    momentum: float = 0.9
    clip: float = 0.2
    batch_size: int = 8
    seed: int = 0
    lr_patience: int = 2
    lr_factor: float = 0.5


def small_model_config(input_channels: int, alphabet_size: int) -> AcousticModelConfig:
    """Compact conv-GLU stack for the synthetic task."""
    return AcousticModelConfig(
        layers=[
            ConvLayerSpec(input_channels, 24, kernel_width=9, dropout_rate=0.0),
            ConvLayerSpec(24, 32, kernel_width=9, dropout_rate=0.0),
        ],
        alphabet_size=alphabet_size,
    )


def _load_training_items(manifest, lexicon, alphabet, frontend_config, sample_rate):
    items = []
    skipped = 0
    sil = alphabet.silence_token
    for entry in manifest.entries:
        wave = read_wav(entry.audio)
        words = normalize_transcript(entry.text)
        target = encode_target(alphabet, transcript_letters(words, lexicon, sil))
        frames = num_output_frames(len(wave.samples), frontend_config, sample_rate)
        if len(target) > frames:
            skipped += 1
            continue
        items.append((wave, target, words))
    return items, skipped


def train_acoustic(
    train_manifest: DatasetManifest,
    lexicon: dict[str, list[str]],
    alphabet: Alphabet,
    frontend_kind: str = "learnable",
    frontend_config: FrontendConfig | None = None,
    model_config: AcousticModelConfig | None = None,
    dev_manifest: DatasetManifest | None = None,
    settings: TrainSettings | None = None,
    criterion: str = "asg",
    sample_rate: int = 16000,
    checkpoint_path=None,
):
    """Joint training of front-end (when learnable), network, and transitions.

    Returns (SpeechSystem, history); history has one record per epoch with the
    mean training loss, optional dev loss, learning rate, and the count of
    transcripts skipped as infeasible.
    """
    if criterion != "asg":
        raise ConfigurationError(f"unsupported criterion {criterion!r}")
    if frontend_kind not in ("learnable", "mel"):
        raise ConfigurationError(f"unknown front-end kind {frontend_kind!r}")
    settings = settings or TrainSettings()
    fcfg = frontend_config or FrontendConfig(num_filters=8)
    rng = np.random.default_rng(settings.seed)
    if frontend_kind == "learnable":
        frontend = LearnableFrontend(fcfg, sample_rate, rng=rng)
    else:
        frontend = MelFrontend(fcfg, sample_rate)
    mcfg = model_config or small_model_config(fcfg.num_filters, len(alphabet))
    model = AcousticModel(mcfg, rng=rng)
    transitions = TransitionTable.zeros(len(alphabet))

    train_items, skipped = _load_training_items(
        train_manifest, lexicon, alphabet, fcfg, sample_rate
    )
    if not train_items:
        raise ConfigurationError("no feasible training utterances")
    dev_items = None
    if dev_manifest is not None:
        dev_items, _ = _load_training_items(dev_manifest, lexicon, alphabet, fcfg, sample_rate)

    params = {f"am.{k}": v for k, v in model.params.items()}
    if frontend_kind == "learnable":
        params.update({f"fe.{k}": v for k, v in frontend.params.items()})
    if transitions.trainable:
        params["transitions"] = transitions.g
    optimizer = SgdOptimizer(settings.lr, settings.momentum, settings.clip)
    scheduler = PlateauScheduler(optimizer, settings.lr_factor, settings.lr_patience)

    mel_cache: dict[int, object] = {}
    history = []
    for epoch in range(settings.epochs):
        order = rng.permutation(len(train_items))
        epoch_loss = 0.0
        for start in range(0, len(order), settings.batch_size):
            batch = order[start : start + settings.batch_size]
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            for j in batch:
                wave, target, _ = train_items[j]
                if frontend_kind == "learnable":
                    feat, fe_cache = frontend.forward(wave, want_cache=True)
                else:
                    if j not in mel_cache:
                        mel_cache[j] = frontend.forward(wave)
                    feat, fe_cache = mel_cache[j], None
                emissions, am_cache = model.forward(
                    feat, training=True, rng=rng, want_cache=True
                )
                loss, d_em, d_g = asg_loss_and_gradients(emissions, transitions, target)
                epoch_loss += loss
                am_grads, d_feat = model.backward(am_cache, d_em)
                for k, v in am_grads.items():
                    grads[f"am.{k}"] += v
                if frontend_kind == "learnable":
                    for k, v in frontend.backward(fe_cache, d_feat).items():
                        grads[f"fe.{k}"] += v
                if transitions.trainable:
                    grads["transitions"] += d_g
            scale = 1.0 / len(batch)
            optimizer.step(params, {k: g * scale for k, g in grads.items()})
        record = {
            "epoch": epoch,
            "train_loss": epoch_loss / len(train_items),
            "lr": optimizer.lr,
            "skipped": skipped,
        }
        if dev_items is not None:
            record["dev_loss"] = _mean_loss(dev_items, frontend, model, transitions)
            scheduler.update(record["dev_loss"])
        else:
            scheduler.update(record["train_loss"])
        history.append(record)
    system = SpeechSystem(frontend, model, transitions, alphabet, frontend_kind)
    if checkpoint_path is not None:
        save_system(checkpoint_path, system)
    return system, history


def _mean_loss(items, frontend, model, transitions) -> float:
    total = 0.0
    for wave, target, _ in items:
        emissions = model.forward(frontend.forward(wave))
        total += asg_loss(emissions, transitions, target)
    return total / len(items)


# -- system checkpoints -------------------------------------------------------

def save_system(path, system: SpeechSystem):
    config = {
        "frontend_kind": system.frontend_kind,
        "frontend": asdict(system.frontend.config),
        "sample_rate": system.frontend.sample_rate,
        "model": {
            "layers": [asdict(layer) for layer in system.model.config.layers],
            "alphabet_size": system.model.config.alphabet_size,
        },
        "alphabet": {
            "letters": list(system.alphabet.letters),
            "silence": system.alphabet.silence_token,
            "repetition": system.alphabet.repetition_token,
        },
        "transitions_trainable": system.transitions.trainable,
    }
    arrays = {f"am.{k}": v for k, v in system.model.params.items()}
    arrays.update({f"fe.{k}": v for k, v in system.frontend.params.items()})
    arrays["transitions"] = system.transitions.g
    ckpt.save_checkpoint(path, "acoustic-system", config, arrays)


def load_system(path) -> SpeechSystem:
    kind, config, arrays = ckpt.load_checkpoint(path)
    if kind != "acoustic-system":
        raise ConfigurationError(f"{path} holds a {kind!r} checkpoint, not an acoustic system")
    fcfg = FrontendConfig(**config["frontend"])
    rate = config["sample_rate"]
    fe_params = {k[3:]: v for k, v in arrays.items() if k.startswith("fe.")}
    if config["frontend_kind"] == "learnable":
        frontend = LearnableFrontend(fcfg, rate, params=fe_params)
    else:
        frontend = MelFrontend(fcfg, rate)
    mcfg = AcousticModelConfig(
        layers=[ConvLayerSpec(**layer) for layer in config["model"]["layers"]],
        alphabet_size=config["model"]["alphabet_size"],
    )
    model = AcousticModel(mcfg, params={k[3:]: v for k, v in arrays.items() if k.startswith("am.")})
    alphabet = Alphabet(
        tuple(config["alphabet"]["letters"]),
        config["alphabet"]["silence"],
        config["alphabet"]["repetition"],
    )
    transitions = TransitionTable(arrays["transitions"], config["transitions_trainable"])
    return SpeechSystem(frontend, model, transitions, alphabet, config["frontend_kind"])


def save_gcnn(path, lm: GcnnLm):
    config = {"vocab": list(lm.vocab.tokens), "gcnn": asdict(lm.config)}
    ckpt.save_checkpoint(path, "gcnn-lm", config, lm.params)


def load_gcnn(path) -> GcnnLm:
    kind, config, arrays = ckpt.load_checkpoint(path)
    if kind != "gcnn-lm":
        raise ConfigurationError(f"{path} holds a {kind!r} checkpoint, not a conv LM")
    vocab = Vocabulary(tuple(config["vocab"]))
    return GcnnLm(vocab, GcnnConfig(**config["gcnn"]), params=arrays)


# -- evaluation ---------------------------------------------------------------

def eval_items(manifest: DatasetManifest, system: SpeechSystem):
    """Precompute (emissions, transitions, reference) triples for decoding."""
    items = []
    for entry in manifest.entries:
        wave = read_wav(entry.audio)
        items.append(
            (system.emissions(wave), system.transitions, normalize_transcript(entry.text))
        )
    return items


def evaluate(
    manifest: DatasetManifest,
    system: SpeechSystem,
    trie: LexiconTrie,
    lm,
    opts: DecoderOptions,
) -> EvalReport:
    """Decode every utterance and aggregate WER/CER; deterministic."""
    scores = []
    char_pairs = []
    failures = 0
    for entry in manifest.entries:
        wave = read_wav(entry.audio)
        reference = normalize_transcript(entry.text)
        try:
            hypothesis = decode(system.emissions(wave), system.transitions, trie, lm, opts).words
        except EmptyBeamError:
            hypothesis = []
            failures += 1
        scores.append(score_utterance(entry.utt_id, reference, hypothesis))
        char_pairs.append((list(" ".join(reference)), list(" ".join(hypothesis))))
    report = aggregate(scores, char_pairs)
    report.decode_failures = failures
    return report


def tune(
    manifest: DatasetManifest,
    system: SpeechSystem,
    trie: LexiconTrie,
    lm,
    alphas,
    betas,
    gammas,
    base_opts: DecoderOptions | None = None,
    stage1=(2500, 26.0),
    stage2=(3000, 50.0),
):
    """Two-stage hyper-parameter search on a validation manifest."""
    items = eval_items(manifest, system)
    return tune_grid(items, alphas, betas, gammas, trie, lm, base_opts, stage1, stage2)


# -- LM studies ----------------------------------------------------------------

def perplexity_wer_study(checkpoints, items, trie, opts: DecoderOptions, corpus):
    """(perplexity, WER) per LM checkpoint with fixed decoder weights.

    `checkpoints` is a sequence of (label, lm) pairs; at least 3 are required.
    """
    if len(checkpoints) < 3:
        raise ConfigurationError("perplexity study needs at least 3 checkpoints")
    rows = []
    for label, lm in checkpoints:
        rows.append(
            {
                "checkpoint": label,
                "perplexity": perplexity(lm, corpus),
                "wer": items_wer(items, trie, lm, opts),
            }
        )
    return rows


def context_wer_study(lm, limits, items, trie, opts: DecoderOptions):
    """WER as a function of the LM context window."""
    from .lm import ContextLimitedLM

    if list(limits) != sorted(limits):
        raise ConfigurationError("context limits must be ascending")
    rows = []
    for limit in limits:
        limited = ContextLimitedLM(lm, limit)
        rows.append({"context": limit, "wer": items_wer(items, trie, limited, opts)})
    return rows


def write_csv(path, rows, fieldnames=None):
    """Study output: CSV with a header row."""
    if rows and fieldnames is None:
        fieldnames = list(rows[0])
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames or [])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
