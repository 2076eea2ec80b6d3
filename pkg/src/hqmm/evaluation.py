"""
Metrics, likelihood-based classification, the EM baseline and
trajectory-based speedup estimates.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import _rng, random_stochastic
from .errors import InputError, UnclassifiableError, ZeroProbabilityError
from .models import Hmm, log_likelihoods, sequence_log_likelihood

log = logging.getLogger(__name__)


def squash(x):
    """Map a length-normalized log-likelihood from (-inf, 1] to (-1, 1]."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, np.tanh(np.minimum(x, 0) / 8))


@dataclass
class DaScore:
    mean: float
    std: float
    length: float
    s: int
    per_sequence: np.ndarray = field(repr=False)
    zero_probability: int = 0


def da_from_log_likelihood(loglik, length, s):
    """Description accuracy of a natural-log likelihood over ``length`` symbols."""
    if np.any(np.asarray(length) <= 0):
        raise InputError("description accuracy needs at least one scored symbol")
    x = 1 + np.asarray(loglik) / (np.log(s) * length)
    return squash(x)


def description_accuracy(model, sequences, burn_in=0):
    """Description accuracy of each sequence, with mean and standard deviation.

    ``DA = f(1 + log_s P / l)`` where ``l`` is the number of symbols after
    burn-in and ``f`` is the identity on positive values and
    ``tanh(x / 8)`` otherwise.  A sequence with zero probability scores the
    limiting value -1 and is counted in ``zero_probability``.
    """
    sequences = [np.asarray(q, dtype=np.int64) for q in sequences]
    if not sequences:
        raise InputError("no sequences to evaluate")
    s = model.s
    zero = 0
    try:
        lls = log_likelihoods(model, sequences, burn_in)
    except ZeroProbabilityError:
        lls = []
        for q in sequences:
            try:
                lls.append(sequence_log_likelihood(model, q, burn_in))
            except ZeroProbabilityError:
                lls.append(-np.inf)
                zero += 1
        lls = np.array(lls)
    lengths = np.array([q.size - burn_in for q in sequences], dtype=float)
    if lengths.min() <= 0:
        raise InputError("burn-in consumes an entire sequence")
    finite = np.isfinite(lls)
    das = np.where(finite, da_from_log_likelihood(np.where(finite, lls, 0.0), lengths, s), -1.0)
    if zero:
        log.warning("%d sequence(s) had zero probability; scored as DA = -1", zero)
    return DaScore(float(das.mean()), float(das.std()), float(lengths.mean()), s, das, zero)


# --------------------------------------------------------------------------
# Classification
# --------------------------------------------------------------------------


def _safe_loglik(model, seq, burn_in):
    try:
        return sequence_log_likelihood(model, seq, burn_in)
    except ZeroProbabilityError:
        return -np.inf


def classify(models, sequence, burn_in=0):
    """Index of the model assigning ``sequence`` the highest likelihood.

    Ties go to the lowest index.
    """
    if len(models) < 2:
        raise InputError("classification needs at least two models")
    lls = np.array([_safe_loglik(m, sequence, burn_in) for m in models])
    if not np.isfinite(lls).any():
        raise UnclassifiableError("every model assigns zero probability to the sequence")
    best = int(np.argmax(lls))
    if np.sum(lls == lls[best]) > 1:
        log.info("tie between labels %s; choosing %d", np.flatnonzero(lls == lls[best]).tolist(), best)
    return best


def classify_many(models, sequences, burn_in=0):
    """Vectorized :func:`classify` over many sequences (uses batched likelihoods)."""
    if len(models) < 2:
        raise InputError("classification needs at least two models")
    table = np.empty((len(sequences), len(models)))
    for j, m in enumerate(models):
        try:
            table[:, j] = log_likelihoods(m, sequences, burn_in)
        except ZeroProbabilityError:
            table[:, j] = [_safe_loglik(m, q, burn_in) for q in sequences]
    if (~np.isfinite(table).any(axis=1)).any():
        raise UnclassifiableError("every model assigns zero probability to some sequence")
    return np.argmax(table, axis=1)


@dataclass
class ClassificationResult:
    fold_accuracies: list
    confusion: np.ndarray
    labels: list
    models: list = field(default_factory=list, repr=False)

    @property
    def mean_accuracy(self):
        return float(np.mean(self.fold_accuracies))

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "mean_accuracy": self.mean_accuracy,
            "confusion": self.confusion.astype(int).tolist(),
        }


def kfold_split(labels, k, seed=None):
    """Stratified k-fold partition of item indices.

    Items of each label are shuffled and dealt round-robin into folds; the
    dealing position carries over from one label to the next so that fold
    sizes differ by at most one.

    Returns
    -------
    list of (train_indices, test_indices)
    """
    labels = np.asarray(labels)
    if k < 2:
        raise InputError("k must be at least 2")
    rng = _rng(seed)
    folds = [[] for _ in range(k)]
    pos = 0
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        if idx.size < k:
            raise InputError(f"label {lab!r} has {idx.size} examples, fewer than k={k}")
        for i in rng.permutation(idx):
            folds[pos % k].append(int(i))
            pos += 1
    everything = np.arange(labels.size)
    out = []
    for f in folds:
        test = np.sort(np.array(f, dtype=np.int64))
        out.append((np.setdiff1d(everything, test), test))
    return out


def cross_validate(sequences, labels, fit, k=5, seed=0, burn_in=0, folds=None, jobs=1):
    """Per-label generative models, maximum-likelihood labelling, k-fold CV.

    Parameters
    ----------
    fit : callable
        ``fit(train_sequences, fold, label_index) -> model``.
    folds : int, optional
        Evaluate only the first ``folds`` of the ``k`` partitions.
    jobs : int
        Per-label fits of a fold run on up to this many threads.
    """
    labels = np.asarray(labels)
    names = np.unique(labels).tolist()
    label_idx = np.array([names.index(l) for l in labels])
    confusion = np.zeros((len(names), len(names)), dtype=int)
    accs = []
    models = []
    splits = kfold_split(labels, k, seed)
    for f, (train_i, test_i) in enumerate(splits[: folds or k]):
        members = [[sequences[i] for i in train_i if label_idx[i] == j] for j in range(len(names))]
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                fold_models = list(pool.map(fit, members, [f] * len(names), range(len(names))))
        else:
            fold_models = [fit(members[j], f, j) for j in range(len(names))]
        pred = classify_many(fold_models, [sequences[i] for i in test_i], burn_in)
        truth = label_idx[test_i]
        np.add.at(confusion, (truth, pred), 1)
        accs.append(float(np.mean(pred == truth)))
        models.append(fold_models)
        log.info("fold %d accuracy %.4f", f, accs[-1])
    return ClassificationResult(accs, confusion, names, models)


# --------------------------------------------------------------------------
# Baum-Welch
# --------------------------------------------------------------------------


def _em_statistics(A, C, x0, seqs):
    """Scaled forward-backward for the transition-then-emit convention.

    The chain starts in ``h_0 ~ x0`` which emits nothing; ``y_t`` is emitted
    by ``h_t`` for ``t >= 1``.  Sequences of equal length are processed
    together.
    """
    n = A.shape[0]
    trans = np.zeros((n, n))
    emit = np.zeros_like(C)
    init = np.zeros(n)
    total = 0.0
    groups = {}
    for q in seqs:
        groups.setdefault(q.size, []).append(q)
    for T, group in groups.items():
        Y = np.stack(group)
        m = Y.shape[0]
        alpha = np.empty((T + 1, m, n))
        scale = np.empty((T, m))
        alpha[0] = x0
        for t in range(T):
            a = C[Y[:, t]] * (alpha[t] @ A.T)
            scale[t] = a.sum(axis=1)
            alpha[t + 1] = a / scale[t][:, None]
        total += np.log(scale).sum()
        beta = np.ones((m, n))
        for t in range(T, 0, -1):
            # posterior over h_t
            gamma = alpha[t] * beta
            np.add.at(emit, Y[:, t - 1], gamma / gamma.sum(axis=1, keepdims=True))
            b = C[Y[:, t - 1]] * beta / scale[t - 1][:, None]
            # xi[i, j] = P(h_t = i, h_{t-1} = j | Y)
            trans += (b.T @ alpha[t - 1]) * A
            beta = b @ A
        post0 = x0 * beta
        init += (post0 / post0.sum(axis=1, keepdims=True)).sum(axis=0)
    return trans, emit, init, total


def baum_welch(data, n, s, restarts=5, seed=None, max_iter=100, tol=1e-6):
    """Maximum-likelihood HMM by EM with random restarts.

    Returns
    -------
    model : Hmm
        The restart with the highest final training log-likelihood.
    histories : list of list of float
        Training log-likelihood after every iteration, per restart.
    """
    seqs = [np.asarray(q, dtype=np.int64) for q in data]
    if not seqs or all(q.size == 0 for q in seqs):
        raise InputError("Baum-Welch needs non-empty data")
    seqs = [q for q in seqs if q.size]
    if max(int(q.max()) for q in seqs) >= s or min(int(q.min()) for q in seqs) < 0:
        raise InputError(f"symbols must lie in [0, {s})")
    if restarts < 1:
        raise InputError("restarts must be >= 1")
    rng = _rng(seed)
    best = None
    histories = []
    for _ in range(restarts):
        A = random_stochastic(n, n, rng)
        C = random_stochastic(s, n, rng)
        x0 = random_stochastic(n, 1, rng)[:, 0]
        history = []
        for it in range(max_iter):
            trans, emit, init, ll = _em_statistics(A, C, x0, seqs)
            if history and ll - history[-1] < tol:
                history.append(ll)
                break
            history.append(ll)
            A = trans / np.maximum(trans.sum(axis=0, keepdims=True), 1e-300)
            C = emit / np.maximum(emit.sum(axis=0, keepdims=True), 1e-300)
            x0 = init / init.sum()
            # states that are never visited keep a valid (uniform) column
            A[:, trans.sum(axis=0) == 0] = 1.0 / n
            C[:, emit.sum(axis=0) == 0] = 1.0 / s
        else:
            history.append(_em_statistics(A, C, x0, seqs)[3])
        histories.append(history)
        if best is None or history[-1] > best[0]:
            best = (history[-1], Hmm(A, C, x0))
    return best[1], histories


# --------------------------------------------------------------------------
# Speedup extrapolation
# --------------------------------------------------------------------------


@dataclass
class SpeedupEstimate:
    speedup: float
    baseline_time: float
    target_time: float
    goal_da: float
    extrapolated: bool
    infinite: bool = False
    note: str = "linear extrapolation is optimistic for the baseline"


def convergence_time(times, das, tol=1e-5):
    """Earliest time after which the trajectory stays within ``tol`` of its final value."""
    das = np.asarray(das, dtype=float)
    times = np.asarray(times, dtype=float)
    off = np.abs(das - das[-1]) > tol
    if not off.any():
        return float(times[0])
    last_off = int(np.flatnonzero(off)[-1])
    # a single settled point is not evidence of convergence
    if last_off >= das.size - 2:
        raise InputError("target trajectory has not converged")
    return float(times[last_off + 1])


def estimate_speedup(baseline, target, solution_fraction=1.0, tol=1e-5, window=10):
    """Estimated ratio of baseline to target time-to-solution.

    Parameters
    ----------
    baseline, target : array_like, shape (k, 2)
        ``(seconds, da)`` trajectories.
    solution_fraction : float
        The baseline must reach this fraction of the target's final DA.

    The target's time is its convergence time (DA within ``tol`` of its
    final value from then on).  If the baseline reaches the goal within its
    recorded trajectory, the first such time is used; otherwise a
    least-squares line through its last ``window`` points is extrapolated.
    """
    base = np.asarray(baseline, dtype=float)
    targ = np.asarray(target, dtype=float)
    if base.ndim != 2 or base.shape[1] != 2 or targ.ndim != 2 or targ.shape[1] != 2:
        raise InputError("trajectories must be (time, da) pairs")
    if base.shape[0] < window:
        raise InputError(f"baseline needs at least {window} points")
    t_target = convergence_time(targ[:, 0], targ[:, 1], tol)
    goal = solution_fraction * targ[-1, 1]
    reached = np.flatnonzero(base[:, 1] >= goal - tol)
    if reached.size:
        t_base = float(base[reached[0], 0])
        return SpeedupEstimate(t_base / t_target, t_base, t_target, goal, extrapolated=False)
    tail = base[-window:]
    slope, intercept = np.polyfit(tail[:, 0], tail[:, 1], 1)
    # rises smaller than rounding noise over the window count as flat
    span = tail[-1, 0] - tail[0, 0]
    if slope * span <= 1e-12 * max(1.0, np.abs(tail[:, 1]).max()):
        return SpeedupEstimate(np.inf, np.inf, t_target, goal, extrapolated=True, infinite=True)
    t_base = float((goal - intercept) / slope)
    return SpeedupEstimate(t_base / t_target, t_base, t_target, goal, extrapolated=True)
