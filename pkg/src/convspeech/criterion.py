"""Sequence criterion with learned letter transitions.

Scores letter paths by per-frame emissions plus input-independent transition
scores, normalizing with a log-sum-exp over all paths of an alignment graph.
The loss is the difference between the unconstrained (all paths) and the
target-constrained graph scores. There is no blank symbol; doubled letters in
targets are rewritten with a repetition token and silence is an ordinary
letter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .acoustic import EmissionTable
from .errors import ConfigurationError, InfeasibleAlignmentError, VocabularyError
from .util import NEG_INF, logsumexp


@dataclass(frozen=True)
class Alphabet:
    """Ordered letter set including the silence and repetition tokens."""

    letters: tuple[str, ...]
    silence_token: str = "|"
    repetition_token: str = "2"

    def __post_init__(self):
        if len(set(self.letters)) != len(self.letters):
            raise ConfigurationError("alphabet letters must be unique")
        if len(self.letters) < 2:
            raise ConfigurationError("alphabet needs at least 2 letters")
        for tok in (self.silence_token, self.repetition_token):
            if tok not in self.letters:
                raise ConfigurationError(f"special token {tok!r} missing from alphabet")

    @classmethod
    def from_plain_letters(cls, plain: Sequence[str]) -> "Alphabet":
        return cls(tuple(plain) + ("|", "2"))

    def __len__(self) -> int:
        return len(self.letters)

    @property
    def silence_index(self) -> int:
        return self.letters.index(self.silence_token)

    @property
    def repetition_index(self) -> int:
        return self.letters.index(self.repetition_token)

    def index(self, letter: str) -> int:
        try:
            return self.letters.index(letter)
        except ValueError:
            raise VocabularyError(f"letter {letter!r} not in alphabet") from None


@dataclass
class TransitionTable:
    """Letter-to-letter scores g[i, j] for moving from letter i to j."""

    g: np.ndarray
    trainable: bool = True

    @classmethod
    def zeros(cls, alphabet_size: int) -> "TransitionTable":
        return cls(np.zeros((alphabet_size, alphabet_size)))


@dataclass
class Target:
    """Letter-index sequence after repetition encoding."""

    encoded: np.ndarray

    def __len__(self) -> int:
        return len(self.encoded)


def encode_target(alphabet: Alphabet, letters: Sequence[str]) -> Target:
    """Rewrite immediate letter repeats with the repetition token.

    Runs alternate letter/repetition ("aaa" -> a 2 a), so the result never has
    identical adjacent indices and decodes back uniquely.
    """
    if len(letters) == 0:
        raise VocabularyError("cannot encode an empty letter sequence")
    rep = alphabet.repetition_index
    out: list[int] = []
    for i, ch in enumerate(letters):
        idx = alphabet.index(ch)
        if i > 0 and ch == letters[i - 1] and out[-1] != rep:
            out.append(rep)
        else:
            out.append(idx)
    return Target(np.asarray(out, dtype=np.int64))


def decode_target(alphabet: Alphabet, target: Target) -> list[str]:
    """Inverse of encode_target."""
    rep = alphabet.repetition_index
    letters: list[str] = []
    for idx in target.encoded:
        if idx == rep:
            if not letters:
                raise VocabularyError("repetition token cannot start a target")
            letters.append(letters[-1])
        else:
            letters.append(alphabet.letters[idx])
    return letters


@dataclass
class AlignmentGraph:
    """Frame-unrolled path set: states with letters and allowed transitions."""

    state_letters: np.ndarray  # (S,) letter index per state
    allowed: np.ndarray  # (S, S) bool, allowed[p, s] permits p -> s
    start: np.ndarray  # (S,) bool
    final: np.ndarray  # (S,) bool

    @property
    def num_states(self) -> int:
        return len(self.state_letters)


def full_graph(alphabet_size: int) -> AlignmentGraph:
    """Unconstrained graph: any letter at any frame (|A|^T paths over T frames)."""
    s = alphabet_size
    return AlignmentGraph(
        state_letters=np.arange(s, dtype=np.int64),
        allowed=np.ones((s, s), dtype=bool),
        start=np.ones(s, dtype=bool),
        final=np.ones(s, dtype=bool),
    )


def target_graph(target: Target) -> AlignmentGraph:
    """Monotonic alignments of the target: each state stays or advances by one."""
    s = len(target)
    allowed = np.zeros((s, s), dtype=bool)
    idx = np.arange(s)
    allowed[idx, idx] = True
    allowed[idx[:-1], idx[:-1] + 1] = True
    start = np.zeros(s, dtype=bool)
    final = np.zeros(s, dtype=bool)
    start[0] = True
    final[s - 1] = True
    return AlignmentGraph(np.asarray(target.encoded, dtype=np.int64), allowed, start, final)


def _scores(emissions) -> np.ndarray:
    if isinstance(emissions, EmissionTable):
        return emissions.scores
    return np.asarray(emissions, dtype=np.float64)


def _transitions(g) -> np.ndarray:
    if isinstance(g, TransitionTable):
        return g.g
    return np.asarray(g, dtype=np.float64)


def _graph_tables(f: np.ndarray, g: np.ndarray, graph: AlignmentGraph):
    letters = graph.state_letters
    em = f[:, letters]  # (T, S)
    score_mat = g[np.ix_(letters, letters)].copy()
    score_mat[~graph.allowed] = NEG_INF
    return em, score_mat


def _lse_over(mat: np.ndarray, axis: int) -> np.ndarray:
    """log-sum-exp down one axis of a 2-d array, tolerant of -inf entries."""
    peak = mat.max(axis=axis)
    finite = np.isfinite(peak)
    if finite.all():
        with np.errstate(divide="ignore"):
            return peak + np.log(
                np.exp(mat - np.expand_dims(peak, axis)).sum(axis=axis)
            )
    out = np.full(peak.shape, NEG_INF)
    if finite.any():
        sub = mat[:, finite] if axis == 0 else mat[finite, :]
        sub_peak = peak[finite]
        with np.errstate(divide="ignore"):
            out[finite] = sub_peak + np.log(
                np.exp(sub - np.expand_dims(sub_peak, axis)).sum(axis=axis)
            )
    return out


def _forward_pass(em, score_mat, start):
    t_total, s = em.shape
    alpha = np.empty((t_total, s))
    alpha[0] = np.where(start, em[0], NEG_INF)
    for t in range(1, t_total):
        alpha[t] = em[t] + _lse_over(alpha[t - 1][:, None] + score_mat, axis=0)
    return alpha


def _backward_pass(em, score_mat, final):
    t_total, s = em.shape
    beta = np.empty((t_total, s))
    beta[t_total - 1] = np.where(final, 0.0, NEG_INF)
    for t in range(t_total - 1, 0, -1):
        beta[t - 1] = _lse_over(score_mat + (em[t] + beta[t])[None, :], axis=1)
    return beta


def forward_score(emissions, g, graph: AlignmentGraph) -> float:
    """log-sum-exp over all graph paths of per-frame emission + transition sums.

    The first frame contributes its emission only; transitions apply from the
    second frame on. Returns -inf when the graph admits no path of length T.
    """
    f = _scores(emissions)
    em, score_mat = _graph_tables(f, _transitions(g), graph)
    alpha = _forward_pass(em, score_mat, graph.start)
    return float(logsumexp(np.where(graph.final, alpha[-1], NEG_INF)))


def _check_feasible(target: Target, num_frames: int):
    if len(target) == 0:
        raise InfeasibleAlignmentError("empty target")
    if len(target) > num_frames:
        raise InfeasibleAlignmentError(
            f"target of {len(target)} letters cannot align onto {num_frames} frames"
        )


def asg_loss(emissions, g, target: Target) -> float:
    """Unconstrained minus target-constrained graph score; always >= 0."""
    f = _scores(emissions)
    _check_feasible(target, f.shape[0])
    full = forward_score(f, g, full_graph(f.shape[1]))
    constrained = forward_score(f, g, target_graph(target))
    return full - constrained


def _graph_marginals(f, gmat, graph):
    """Posterior letter marginals (T, |A|) and transition marginals (|A|, |A|)."""
    em, score_mat = _graph_tables(f, gmat, graph)
    alpha = _forward_pass(em, score_mat, graph.start)
    beta = _backward_pass(em, score_mat, graph.final)
    z = logsumexp(np.where(graph.final, alpha[-1], NEG_INF))
    t_total = em.shape[0]
    letters = graph.state_letters
    post = np.exp(alpha + beta - z)  # (T, S)
    letter_marg = np.zeros((t_total, f.shape[1]))
    np.add.at(letter_marg, (slice(None), letters), post)
    edge_total = np.zeros_like(score_mat)
    for t in range(1, t_total):
        with np.errstate(invalid="ignore"):
            log_edges = alpha[t - 1][:, None] + score_mat + (em[t] + beta[t])[None, :] - z
        edges = np.exp(log_edges)
        edges[~np.isfinite(log_edges)] = 0.0
        edge_total += edges
    trans_marg = np.zeros_like(gmat)
    s = len(letters)
    rows = np.broadcast_to(letters[:, None], (s, s))
    cols = np.broadcast_to(letters[None, :], (s, s))
    np.add.at(trans_marg, (rows, cols), edge_total)
    return letter_marg, trans_marg, float(z)


def asg_gradients(emissions, g, target: Target):
    """Exact loss gradients w.r.t. emissions and the transition table.

    The emission gradient at frame t is the difference between the posterior
    letter marginals of the unconstrained and constrained graphs; the
    transition gradient is the analogous difference of expected edge counts.
    """
    return asg_loss_and_gradients(emissions, g, target)[1:]


def asg_loss_and_gradients(emissions, g, target: Target):
    """(loss, emission gradient, transition gradient) in one forward-backward."""
    f = _scores(emissions)
    gmat = _transitions(g)
    _check_feasible(target, f.shape[0])
    full_letter, full_trans, z_full = _graph_marginals(f, gmat, full_graph(f.shape[1]))
    con_letter, con_trans, z_con = _graph_marginals(f, gmat, target_graph(target))
    return z_full - z_con, full_letter - con_letter, full_trans - con_trans


def viterbi(emissions, g, graph: AlignmentGraph):
    """Best single path (letter indices) and its score.

    Ties are broken toward the lower letter index, then the lower state index.
    Returns ([], -inf) when the graph admits no length-T path.
    """
    f = _scores(emissions)
    em, score_mat = _graph_tables(f, _transitions(g), graph)
    t_total, s = em.shape
    letters = graph.state_letters
    tie_key = letters.astype(np.float64) * (s + 1) + np.arange(s)
    alpha = np.where(graph.start, em[0], NEG_INF)
    back = np.zeros((t_total, s), dtype=np.int64)
    for t in range(1, t_total):
        cand = alpha[:, None] + score_mat  # (p, s)
        best = cand.max(axis=0)
        mask = cand == best[None, :]
        pick = np.where(mask, tie_key[:, None], np.inf)
        back[t] = np.argmin(pick, axis=0)
        alpha = em[t] + best
    finals = np.where(graph.final, alpha, NEG_INF)
    best_score = finals.max()
    if best_score == NEG_INF:
        return [], NEG_INF
    state = int(np.argmin(np.where(finals == best_score, tie_key, np.inf)))
    path = [state]
    for t in range(t_total - 1, 0, -1):
        state = int(back[t, state])
        path.append(state)
    path.reverse()
    return [int(letters[p]) for p in path], float(best_score)
