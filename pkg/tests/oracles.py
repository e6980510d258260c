"""Independent brute-force reference implementations used by the test suite.

Everything here is deliberately naive (scalar loops, full enumeration) and
shares no code with the package under test.
"""

import itertools
import math

import numpy as np

NEG_INF = float("-inf")


def naive_preemphasis(x, kernel):
    out = []
    for t in range(len(x)):
        prev = x[t - 1] if t > 0 else 0.0
        out.append(kernel[1] * x[t] + kernel[0] * prev)
    return np.array(out)


def naive_complex_conv_power(x, real, imag):
    k, width = real.shape
    t_conv = len(x) - width + 1
    out = np.zeros((k, t_conv))
    for f in range(k):
        for t in range(t_conv):
            acc_re = 0.0
            acc_im = 0.0
            for w in range(width):
                acc_re += real[f, w] * x[t + w]
                acc_im += imag[f, w] * x[t + w]
            out[f, t] = acc_re**2 + acc_im**2
    return out


def naive_lowpass_decimate(power, window, stride):
    k, t_conv = power.shape
    width = len(window)
    t_out = (t_conv - width) // stride + 1
    out = np.zeros((k, t_out))
    for f in range(k):
        for n in range(t_out):
            out[f, n] = sum(window[w] * power[f, n * stride + w] for w in range(width))
    return out


def naive_conv1d(x, weight, bias, stride=1, pad_left=0, pad_right=0):
    """Scalar-loop 1-D cross-correlation. x: (C_in, T); weight: (C_out, C_in, K)."""
    c_in, t_in = x.shape
    c_out, _, kw = weight.shape
    padded = np.zeros((c_in, t_in + pad_left + pad_right))
    padded[:, pad_left : pad_left + t_in] = x
    t_out = (padded.shape[1] - kw) // stride + 1
    out = np.zeros((c_out, t_out))
    for o in range(c_out):
        for t in range(t_out):
            acc = bias[o]
            for i in range(c_in):
                for w in range(kw):
                    acc += weight[o, i, w] * padded[i, t * stride + w]
            out[o, t] = acc
    return out


def naive_glu(pre):
    c = pre.shape[0] // 2
    a, b = pre[:c], pre[c:]
    return a * (1.0 / (1.0 + np.exp(-b)))


def logsumexp(values):
    values = [v for v in values]
    m = max(values)
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(sum(math.exp(v - m) for v in values))


def enumerate_graph_paths(graph, T):
    """All valid state sequences of length T through an AlignmentGraph."""
    S = len(graph.state_letters)
    paths = []
    for seq in itertools.product(range(S), repeat=T):
        if not graph.start[seq[0]] or not graph.final[seq[-1]]:
            continue
        if all(graph.allowed[seq[t - 1], seq[t]] for t in range(1, T)):
            paths.append(seq)
    return paths


def brute_force_graph_score(emissions, transitions, graph):
    """log-sum-exp over every path's emission + transition score."""
    T = emissions.shape[0]
    letters = graph.state_letters
    scores = []
    for seq in enumerate_graph_paths(graph, T):
        s = emissions[0, letters[seq[0]]]
        for t in range(1, T):
            s += emissions[t, letters[seq[t]]] + transitions[letters[seq[t - 1]], letters[seq[t]]]
        scores.append(s)
    if not scores:
        return NEG_INF
    return logsumexp(scores)


def brute_force_best_path(emissions, transitions, graph):
    """Max-scoring path (letters) with ties toward lower letter index."""
    T = emissions.shape[0]
    letters = graph.state_letters
    best = None
    best_score = NEG_INF
    for seq in enumerate_graph_paths(graph, T):
        s = emissions[0, letters[seq[0]]]
        for t in range(1, T):
            s += emissions[t, letters[seq[t]]] + transitions[letters[seq[t - 1]], letters[seq[t]]]
        path = tuple(int(letters[q]) for q in seq)
        if s > best_score or (s == best_score and best is not None and path < best):
            best_score = s
            best = path
    return best, best_score


def finite_difference(loss_fn, arrays, step=1e-5):
    """Central finite differences of a scalar loss over a dict of arrays.

    Mutates copies only; returns a dict of gradient arrays matching shapes.
    """
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            g.reshape(-1)[i] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def grad_close(analytic, numeric, rel_tol=1e-4):
    """Relative gradient agreement in the norm sense used throughout."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return np.linalg.norm(a - n) / denom <= rel_tol


def brute_force_edit_counts(ref, hyp):
    """Minimal substitutions+deletions+insertions by exhaustive alignment."""
    best = None

    def walk(i, j, s, d, ins):
        nonlocal best
        if best is not None and s + d + ins >= sum(best):
            return
        if i == len(ref) and j == len(hyp):
            cand = (s, d, ins)
            if best is None or sum(cand) < sum(best):
                best = cand
            return
        if i < len(ref) and j < len(hyp):
            walk(i + 1, j + 1, s + (ref[i] != hyp[j]), d, ins)
        if i < len(ref):
            walk(i + 1, j, s, d + 1, ins)
        if j < len(hyp):
            walk(i, j + 1, s, d, ins + 1)

    walk(0, 0, 0, 0, 0)
    return best
