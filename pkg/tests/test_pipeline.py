import math

import numpy as np
import pytest

from convspeech import pipeline, synth
from convspeech.acoustic import EmissionTable
from convspeech.criterion import TransitionTable, encode_target
from convspeech.decoder import DecoderOptions, build_trie
from convspeech.errors import ConfigurationError
from convspeech.frontend import FrontendConfig
from convspeech.gcnn import GcnnConfig, GcnnLm
from convspeech.lm import Vocabulary
from convspeech.synth import transcript_letters


@pytest.fixture(scope="module")
def tiny_task(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_task")
    spec = synth.SyntheticTaskSpec()
    manifests = synth.synthesize_dataset(spec, root, {"train": 6, "dev": 3}, seed=0)
    return spec, manifests, root


@pytest.fixture(scope="module")
def tiny_system(tiny_task):
    spec, manifests, _ = tiny_task
    system, history = pipeline.train_acoustic(
        manifests["train"], spec.lexicon, spec.alphabet,
        frontend_config=FrontendConfig(num_filters=4),
        settings=pipeline.TrainSettings(epochs=2, lr=0.3, batch_size=3, seed=0),
    )
    return system, history


def test_training_reduces_loss(tiny_system):
    _, history = tiny_system
    assert history[-1]["train_loss"] < history[0]["train_loss"]
    assert history[0]["skipped"] == 0


def test_end_to_end_gradient_reaches_frontend(tiny_task):
    spec, manifests, _ = tiny_task
    seed_front = pipeline.LearnableFrontend(
        FrontendConfig(num_filters=4), rng=np.random.default_rng(0)
    )
    before = {k: v.copy() for k, v in seed_front.params.items()}
    system, _ = pipeline.train_acoustic(
        manifests["train"], spec.lexicon, spec.alphabet,
        frontend_config=FrontendConfig(num_filters=4),
        settings=pipeline.TrainSettings(epochs=1, lr=0.2, batch_size=6, seed=0),
    )
    for key in ("filter_real", "filter_imag", "preemphasis"):
        delta = np.linalg.norm(system.frontend.params[key] - before[key])
        assert delta > 0.0, key


def test_zero_lr_freezes_everything(tiny_task):
    spec, manifests, _ = tiny_task
    system, history = pipeline.train_acoustic(
        manifests["train"], spec.lexicon, spec.alphabet,
        frontend_config=FrontendConfig(num_filters=4),
        settings=pipeline.TrainSettings(epochs=3, lr=0.0, batch_size=3, seed=0),
    )
    losses = [rec["train_loss"] for rec in history]
    assert losses[0] == pytest.approx(losses[-1], rel=1e-12)


def test_infeasible_transcripts_are_skipped(tiny_task, tmp_path):
    spec, manifests, root = tiny_task
    entry = manifests["train"].entries[0]
    bogus_words = " ".join(["abc"] * 40)  # far longer than any utterance
    bad = synth.DatasetManifest(
        entries=[entry, synth.ManifestEntry("bad", entry.audio, bogus_words)],
        split="train",
    )
    system, history = pipeline.train_acoustic(
        bad, spec.lexicon, spec.alphabet,
        frontend_config=FrontendConfig(num_filters=4),
        settings=pipeline.TrainSettings(epochs=1, lr=0.1, batch_size=2, seed=0),
    )
    assert history[0]["skipped"] == 1


def test_mel_frontend_training_runs(tiny_task):
    spec, manifests, _ = tiny_task
    system, history = pipeline.train_acoustic(
        manifests["train"], spec.lexicon, spec.alphabet,
        frontend_kind="mel",
        frontend_config=FrontendConfig(num_filters=8),
        settings=pipeline.TrainSettings(epochs=2, lr=0.3, batch_size=3, seed=0),
    )
    assert history[-1]["train_loss"] < history[0]["train_loss"]
    assert system.frontend_kind == "mel"


def test_system_checkpoint_round_trip(tiny_system, tiny_task, tmp_path):
    system, _ = tiny_system
    spec, manifests, _ = tiny_task
    path = tmp_path / "system.ckpt"
    pipeline.save_system(path, system)
    loaded = pipeline.load_system(path)
    for key in system.model.params:
        assert np.array_equal(loaded.model.params[key], system.model.params[key])
        assert loaded.model.params[key].tobytes() == system.model.params[key].tobytes()
    for key in system.frontend.params:
        assert np.array_equal(loaded.frontend.params[key], system.frontend.params[key])
    assert np.array_equal(loaded.transitions.g, system.transitions.g)
    assert loaded.alphabet == system.alphabet
    wave = pipeline.read_wav(manifests["dev"].entries[0].audio)
    assert np.array_equal(loaded.emissions(wave).scores, system.emissions(wave).scores)


def test_gcnn_checkpoint_round_trip(tmp_path):
    vocab = Vocabulary(("w0", "w1", "<s>", "</s>", "<unk>"))
    lm = GcnnLm(vocab, GcnnConfig(num_blocks=1, embed_dim=6, bottleneck_dim=3,
                                  mid_kernel_width=3),
                rng=np.random.default_rng(0))
    path = tmp_path / "lm.ckpt"
    pipeline.save_gcnn(path, lm)
    loaded = pipeline.load_gcnn(path)
    assert loaded.vocab.tokens == vocab.tokens
    for key in lm.params:
        assert np.array_equal(loaded.params[key], lm.params[key])
    ids = np.array([0, 1, 0])
    assert np.array_equal(loaded.forward(ids), lm.forward(ids))


class StubSystem:
    """Plays back scripted emission tables in manifest order."""

    def __init__(self, tables, alphabet):
        self.tables = list(tables)
        self.transitions = TransitionTable.zeros(len(alphabet))
        self._next = 0

    def emissions(self, wave):
        table = self.tables[self._next % len(self.tables)]
        self._next += 1
        return table


def _peaked_table(alphabet, letters, frames_per_letter=3):
    rows = []
    for letter in letters:
        idx = alphabet.index(letter)
        row = np.full(len(alphabet), -15.0)
        row[idx] = 15.0
        rows.extend([row] * frames_per_letter)
    return EmissionTable(np.array(rows))


def test_evaluate_perfect_emissions_zero_wer(tiny_task):
    spec, manifests, _ = tiny_task
    alphabet = spec.alphabet
    trie = build_trie(spec.lexicon, alphabet)

    class WordLm:
        vocab = Vocabulary(tuple(spec.lexicon) + ("<s>", "</s>", "<unk>"))

        def start_state(self):
            return ()

        def score(self, state, token_id):
            return -1.0, state + (token_id,)

        def score_window(self, window, token_id):
            return -1.0

        def finish(self, state):
            return -1.0

    tables = []
    for entry in manifests["dev"].entries:
        words = synth.normalize_transcript(entry.text)
        letters = transcript_letters(words, spec.lexicon, alphabet.silence_token)
        encoded = encode_target(alphabet, letters).encoded
        tables.append(_peaked_table(alphabet, [alphabet.letters[i] for i in encoded]))
    stub = StubSystem(tables, alphabet)
    opts = DecoderOptions(alpha=0.1, beta=0.1, beam_size=500, beam_score=math.inf)
    report = pipeline.evaluate(manifests["dev"], stub, trie, WordLm(), opts)
    assert report.wer == 0.0
    assert report.cer == 0.0

    # all-silence emissions decode to nothing: every reference word is deleted
    silence_tables = [
        _peaked_table(alphabet, [alphabet.silence_token] * 6) for _ in manifests["dev"].entries
    ]
    stub2 = StubSystem(silence_tables, alphabet)
    report2 = pipeline.evaluate(manifests["dev"], stub2, trie, WordLm(), opts)
    assert report2.wer == 100.0
    assert report2.insertions == 0 and report2.substitutions == 0


def test_evaluate_deterministic_and_consistent(tiny_system, tiny_task):
    system, _ = tiny_system
    spec, manifests, _ = tiny_task
    trie = build_trie(spec.lexicon, spec.alphabet)
    corpus = synth.synthesize_corpus(spec, 50, seed=3)
    from io import StringIO

    from convspeech.lm import fit_bigram_arpa, load_arpa

    lm = load_arpa(StringIO(fit_bigram_arpa(corpus)))
    opts = DecoderOptions(alpha=0.5, beta=0.5, beam_size=100, beam_score=26.0)
    r1 = pipeline.evaluate(manifests["dev"], system, trie, lm, opts)
    r2 = pipeline.evaluate(manifests["dev"], system, trie, lm, opts)
    assert r1.wer == r2.wer and r1.cer == r2.cer
    assert r1.substitutions == sum(u.substitutions for u in r1.utterances)
    assert r1.deletions == sum(u.deletions for u in r1.utterances)
    assert r1.insertions == sum(u.insertions for u in r1.utterances)


def test_context_study_equal_limits(tiny_task):
    spec, manifests, _ = tiny_task
    alphabet = spec.alphabet
    trie = build_trie(spec.lexicon, alphabet)
    vocab = Vocabulary(tuple(spec.lexicon) + ("<s>", "</s>", "<unk>"))
    lm = GcnnLm(vocab, GcnnConfig(num_blocks=1, embed_dim=6, bottleneck_dim=3,
                                  mid_kernel_width=3),
                rng=np.random.default_rng(1))
    items = [

        (_peaked_table(alphabet, ["a", "b"]), TransitionTable.zeros(len(alphabet)), ["ab"])
    ]
    opts = DecoderOptions(alpha=0.3, beam_size=100, beam_score=26.0)
    rows = pipeline.context_wer_study(lm, [2, 2], items, trie, opts)
    assert rows[0]["wer"] == rows[1]["wer"]
    with pytest.raises(ConfigurationError):
        pipeline.context_wer_study(lm, [4, 2], items, trie, opts)


def test_perplexity_study_identical_checkpoints(tiny_task):
    spec, manifests, _ = tiny_task
    alphabet = spec.alphabet
    trie = build_trie(spec.lexicon, alphabet)
    vocab = Vocabulary(tuple(spec.lexicon) + ("<s>", "</s>", "<unk>"))
    lm = GcnnLm(vocab, GcnnConfig(num_blocks=1, embed_dim=6, bottleneck_dim=3,
                                  mid_kernel_width=3),
                rng=np.random.default_rng(2))
    items = [
        (_peaked_table(alphabet, ["a"]), TransitionTable.zeros(len(alphabet)), ["a"])
    ]
    corpus = [["a", "ab"], ["b"]]
    opts = DecoderOptions(alpha=0.3, beam_size=50, beam_score=26.0)
    rows = pipeline.perplexity_wer_study(
        [("e1", lm), ("e2", lm), ("e3", lm)], items, trie, opts, corpus
    )
    assert len(rows) == 3
    assert rows[0]["perplexity"] == rows[1]["perplexity"] == rows[2]["perplexity"]
    assert rows[0]["wer"] == rows[2]["wer"]
    with pytest.raises(ConfigurationError):
        pipeline.perplexity_wer_study([("e1", lm)], items, trie, opts, corpus)


def test_write_csv(tmp_path):
    path = tmp_path / "out.csv"
    pipeline.write_csv(path, [{"a": 1, "b": 2.5}, {"a": 3, "b": 4.0}])
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "a,b"
    assert len(lines) == 3
