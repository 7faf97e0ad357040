"""Training: maximum-likelihood SGD and noise contrastive estimation.

Gradient conventions
--------------------
All objectives are maximized; ``train`` takes ascent steps ``theta += lr * g``.
A batch of m instances contributes::

    sum_i log-term_i  -  (l2 * m / 2) * ||theta||^2

so ``l2`` is a per-example coefficient. Gradient functions return the data
term's value and gradients of the full penalized objective.

NCE
---
Instead of normalizing over the vocabulary, each observed word is
discriminated against k samples from a fixed noise distribution P_n::

    P(observed | w, h) = sigmoid(phi(w, h) - log(k * P_n(w)))

with the model's normalizer fixed to 1. The class-factored variant runs one
discrimination at the class level (noise = class unigram) and one within the
target's class (noise = within-class unigram).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import BOS_ID
from .errors import DataError, TrainingDivergedError
from .model import (REGIME_CLASS, REGIME_STANDARD, REGIME_TREE, MacCounter,
                    ModelParameters, project_batch)

ALGORITHMS = ("ml_sgd", "nce")


@dataclass
class TrainingConfig:
    algorithm: str = "nce"
    learning_rate: float = 0.1
    minibatch_size: int = 64
    epochs: int = 10
    l2_strength: float = 1e-5      # per example
    noise_samples: int = 10        # k
    rng_seed: int = 1
    validation_fraction: float = 0.05

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise DataError(f"unknown algorithm {self.algorithm!r}")
        if self.learning_rate <= 0 or self.minibatch_size < 1 or self.epochs < 0:
            raise DataError("bad optimizer settings")
        if self.l2_strength < 0:
            raise DataError("l2_strength must be >= 0")
        if self.algorithm == "nce" and self.noise_samples < 1:
            raise DataError("NCE needs noise_samples >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise DataError("validation_fraction must be in [0, 1)")


def empirical_unigram(targets, vocab_size: int) -> np.ndarray:
    """Relative frequency of prediction targets (includes </s> mass)."""
    counts = np.bincount(np.asarray(targets, dtype=np.int64), minlength=vocab_size)
    total = counts.sum()
    if total == 0:
        raise DataError("no targets")
    return counts.astype(np.float64) / total


# ---------------------------------------------------------------------------
# sampling


class AliasSampler:
    """Walker alias tables: O(n) setup, O(1) categorical draws."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        total = probs.sum()
        if total <= 0 or (probs < 0).any():
            raise DataError("need non-negative probs with positive mass")
        n = len(probs)
        q = probs * (n / total)
        J = np.zeros(n, dtype=np.int64)
        small = [i for i in range(n) if q[i] < 1.0]
        large = [i for i in range(n) if q[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            J[s] = l
            q[l] = q[l] - (1.0 - q[s])
            (small if q[l] < 1.0 else large).append(l)
        for i in small + large:  # numerical leftovers
            q[i] = 1.0
        self.q = q
        self.J = J

    def draw(self, rng, shape):
        idx = rng.integers(0, len(self.q), size=shape)
        keep = rng.random(shape) < self.q[idx]
        return np.where(keep, idx, self.J[idx])


class NoiseSampler:
    """A fixed categorical distribution plus alias tables and a shared rng."""

    def __init__(self, probs, rng):
        probs = np.asarray(probs, dtype=np.float64)
        self.probs = probs / probs.sum()
        with np.errstate(divide="ignore"):
            self.log_probs = np.where(self.probs > 0, np.log(self.probs), -np.inf)
        self._alias = AliasSampler(self.probs)
        self.rng = rng

    def sample(self, shape) -> np.ndarray:
        return self._alias.draw(self.rng, shape)


class ClassNoiseSampler:
    """Class-level and within-class noise for class-factored NCE."""

    def __init__(self, probs, classing, rng):
        probs = np.asarray(probs, dtype=np.float64)
        self.classing = classing
        class_mass = np.bincount(classing.class_of, weights=probs,
                                 minlength=classing.num_classes)
        self.class_sampler = NoiseSampler(class_mass, rng)
        with np.errstate(divide="ignore"):
            log_mass = np.where(class_mass > 0, np.log(class_mass), -np.inf)
            log_word = np.where(probs > 0, np.log(probs), -np.inf)
        self.log_class_probs = log_mass - math.log(class_mass.sum())
        # log P_n(w | class(w)); -inf for zero-probability words. The shared
        # scale of probs cancels in the ratio.
        with np.errstate(invalid="ignore"):
            ratio = log_word - log_mass[classing.class_of]
        self.log_within_probs = np.where(probs > 0, ratio, -np.inf)
        self._within = []
        for c, mem in enumerate(classing.members):
            if class_mass[c] > 0:
                self._within.append(NoiseSampler(probs[mem], rng))
            else:
                self._within.append(None)
        self.rng = rng

    def sample_classes(self, m, k) -> np.ndarray:
        return self.class_sampler.sample((m, k))

    def sample_words(self, target_classes, k) -> np.ndarray:
        """Within-class draws, grouped by class in ascending order."""
        m = len(target_classes)
        out = np.empty((m, k), dtype=np.int64)
        for c in np.unique(target_classes):
            idx = np.nonzero(target_classes == c)[0]
            sampler = self._within[c]
            if sampler is None:
                raise DataError(f"class {c} has no noise mass")
            mem = self.classing.members[c]
            out[idx] = mem[sampler.sample((len(idx), k))]
        return out


# ---------------------------------------------------------------------------
# gradients


@dataclass
class Gradients:
    Q: np.ndarray
    R: np.ndarray
    b: np.ndarray
    C: list
    S: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None

    @classmethod
    def zeros_like(cls, params: ModelParameters) -> "Gradients":
        return cls(np.zeros_like(params.Q), np.zeros_like(params.R),
                   np.zeros_like(params.b), [np.zeros_like(c) for c in params.C],
                   None if params.S is None else np.zeros_like(params.S),
                   None if params.t is None else np.zeros_like(params.t))

    def arrays(self):
        out = [("Q", self.Q), ("R", self.R), ("b", self.b)]
        out += [(f"C{j}", Cj) for j, Cj in enumerate(self.C)]
        if self.S is not None:
            out += [("S", self.S), ("t", self.t)]
        return out

    def add_l2(self, params: ModelParameters, coeff: float) -> None:
        if coeff:
            for (_, g), (_, p) in zip(self.arrays(), params.arrays()):
                g -= (coeff * p).astype(g.dtype, copy=False)

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.arrays())

    def apply_to(self, params: ModelParameters, lr: float) -> None:
        for (_, g), (_, p) in zip(self.arrays(), params.arrays()):
            p += lr * g


def squared_norm(params: ModelParameters) -> float:
    return float(sum((a.astype(np.float64) ** 2).sum() for _, a in params.arrays()))


def _sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _log_one_minus_sigmoid(x):
    return -np.logaddexp(0.0, x)


def _softmax_rows(scores):
    m = scores.max(axis=1, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(scores - safe)
    z = e.sum(axis=1, keepdims=True)
    return e / z, (safe[:, 0] + np.log(z[:, 0]))


def _count_output(macs, pairs, dim):
    # forward scores + output-row gradient + projection gradient
    if macs is not None:
        macs.output += 3 * pairs * dim
        macs.output_rows += pairs


def _project_for_grad(params, contexts, macs):
    P, active = project_batch(params, contexts, macs)
    if macs is not None:  # backward transform/embedding passes
        cfg = params.config
        per = cfg.dim if cfg.diagonal else cfg.dim * cfg.dim
        macs.projection += 2 * len(contexts) * cfg.context_size * per
    return P, active


def _backprop_projection(params, grads, contexts, P, active, gP):
    """Push output-side gradient gP through the rectifier into C and Q."""
    gA = (gP * active).astype(params.dtype, copy=False)
    for j in range(params.config.context_size):
        ids = contexts[:, j]
        Qj = params.Q[ids]
        if params.config.diagonal:
            grads.C[j] += (gA * Qj).sum(axis=0)
            np.add.at(grads.Q, ids, gA * params.C[j])
        else:
            grads.C[j] += gA.T @ Qj
            np.add.at(grads.Q, ids, gA @ params.C[j])


def _check_targets(targets):
    if (np.asarray(targets) == BOS_ID).any():
        raise DataError("<s> cannot be a prediction target")


def ml_objective(params: ModelParameters, contexts, targets, l2: float = 0.0) -> float:
    """Batch log-likelihood minus the L2 penalty (finite-difference anchor)."""
    from .model import log_probs_batch
    lp = log_probs_batch(params, contexts, targets)
    return float(lp.sum()) - 0.5 * l2 * len(targets) * squared_norm(params)


def ml_gradient(params: ModelParameters, contexts, targets, l2: float = 0.0,
                macs: MacCounter = None):
    """Exact log-likelihood gradients for the model's regime.

    Returns (Gradients, batch log-likelihood). Only rows appearing in the
    batch (or scored against it) receive gradient; with ``l2 > 0`` the decay
    term additionally touches every parameter.
    """
    cfg = params.config
    layout = cfg.layout()
    targets = np.asarray(targets, dtype=np.int64)
    _check_targets(targets)
    grads = Gradients.zeros_like(params)
    P, active = _project_for_grad(params, contexts, macs)
    m, D = len(targets), cfg.dim
    gP = np.zeros_like(P, dtype=np.float64)
    loglik = 0.0

    if cfg.regime == REGIME_STANDARD:
        sup = layout.support
        scores = (P @ params.R[sup].T + params.b[sup]).astype(np.float64)
        probs, lz = _softmax_rows(scores)
        pos = layout.support_pos[targets]
        loglik = float(np.sum(scores[np.arange(m), pos] - lz))
        d = -probs
        d[np.arange(m), pos] += 1.0
        dd = d.astype(params.dtype)
        grads.R[sup] += dd.T @ P
        grads.b[sup] += dd.sum(axis=0)
        gP = d @ params.R[sup].astype(np.float64)
        _count_output(macs, m * len(sup), D)

    elif cfg.regime == REGIME_CLASS:
        K = cfg.classing.num_classes
        cls = cfg.classing.class_of[targets].astype(np.int64)
        if K > 1:
            psi = (P @ params.S.T + params.t).astype(np.float64)
            psi[:, ~layout.class_valid] = -np.inf
            cprobs, clz = _softmax_rows(psi)
            loglik += float(np.sum(psi[np.arange(m), cls] - clz))
            d = -cprobs
            d[np.arange(m), cls] += 1.0
            dd = d.astype(params.dtype)
            grads.S += dd.T @ P
            grads.t += dd.sum(axis=0)
            gP += d @ params.S.astype(np.float64)
            _count_output(macs, m * K, D)
        for c in np.unique(cls):
            idx = np.nonzero(cls == c)[0]
            mem = layout.members_eff[c]
            word = (P[idx] @ params.R[mem].T + params.b[mem]).astype(np.float64)
            wprobs, wlz = _softmax_rows(word)
            pos = layout.pos_in_class[targets[idx]]
            loglik += float(np.sum(word[np.arange(len(idx)), pos] - wlz))
            d = -wprobs
            d[np.arange(len(idx)), pos] += 1.0
            dd = d.astype(params.dtype)
            grads.R[mem] += dd.T @ P[idx]
            grads.b[mem] += dd.sum(axis=0)
            gP[idx] += d @ params.R[mem].astype(np.float64)
            _count_output(macs, len(idx) * len(mem), D)

    else:  # tree
        for w in np.unique(targets):
            idx = np.nonzero(targets == w)[0]
            nodes, sibs = cfg.tree.path(int(w))
            on = (P[idx] @ params.S[nodes].T + params.t[nodes]).astype(np.float64)
            off = (P[idx] @ params.S[sibs].T + params.t[sibs]).astype(np.float64)
            lz = np.logaddexp(on, off)
            loglik += float(np.sum(on - lz))
            p_off = np.exp(off - lz)
            d_on = p_off.astype(params.dtype)
            d_off = (-p_off).astype(params.dtype)
            grads.S[nodes] += d_on.T @ P[idx]
            grads.t[nodes] += d_on.sum(axis=0)
            grads.S[sibs] += d_off.T @ P[idx]
            grads.t[sibs] += d_off.sum(axis=0)
            gP[idx] += p_off @ params.S[nodes].astype(np.float64) \
                - p_off @ params.S[sibs].astype(np.float64)
            _count_output(macs, len(idx) * 2 * len(nodes), D)

    _backprop_projection(params, grads, contexts, P, active, gP)
    grads.add_l2(params, l2 * m)
    return grads, loglik


# ---------------------------------------------------------------------------
# NCE


def _nce_terms(scores64, log_pn_rows, k):
    """Per-row discrimination deltas, objective value and score gradients.

    Column 0 is the observed item, columns 1..k are noise. Returns
    (objective, dscore) where dscore has the same shape as scores64.
    """
    delta = scores64 - (math.log(k) + log_pn_rows)
    sig = _sigmoid(delta)
    value = float(np.sum(_log_sigmoid(delta[:, 0])))
    value += float(np.sum(_log_one_minus_sigmoid(delta[:, 1:])))
    d = -sig
    d[:, 0] += 1.0
    return value, d


def _scores_for(params, M, bias, P, ids):
    """Batched r_{ids} . p + b_{ids}: (m, w) scores for (m, w) id matrix."""
    return np.einsum("mwd,md->mw", M[ids], P) + bias[ids]


def nce_objective(params: ModelParameters, contexts, targets, noise,
                  noise_dist, l2: float = 0.0) -> float:
    """NCE objective for fixed noise draws (finite-difference anchor)."""
    targets = np.asarray(targets, dtype=np.int64)
    noise = np.asarray(noise, dtype=np.int64)
    log_pn = noise_dist.log_probs if hasattr(noise_dist, "log_probs") else np.asarray(noise_dist)
    P, _ = project_batch(params, contexts)
    ids = np.concatenate([targets[:, None], noise], axis=1)
    scores = _scores_for(params, params.R, params.b, P, ids).astype(np.float64)
    value, _ = _nce_terms(scores, log_pn[ids], noise.shape[1])
    return value - 0.5 * l2 * len(targets) * squared_norm(params)


def nce_gradient(params: ModelParameters, contexts, targets, noise,
                 noise_dist, l2: float = 0.0, macs: MacCounter = None):
    """NCE gradients against fixed noise draws.

    ``noise`` is an (m, k) id matrix; ``noise_dist`` supplies log P_n. Works
    for any regime's R/b parameters but is meant for standard/unnormalised
    models. Returns (Gradients, objective value without the L2 term).
    """
    cfg = params.config
    targets = np.asarray(targets, dtype=np.int64)
    _check_targets(targets)
    noise = np.asarray(noise, dtype=np.int64)
    if noise.ndim != 2 or noise.shape[0] != len(targets) or noise.shape[1] < 1:
        raise DataError("noise must be (batch, k) with k >= 1")
    log_pn = noise_dist.log_probs if hasattr(noise_dist, "log_probs") else np.asarray(noise_dist)
    grads = Gradients.zeros_like(params)
    P, active = _project_for_grad(params, contexts, macs)
    m, D = len(targets), cfg.dim

    ids = np.concatenate([targets[:, None], noise], axis=1)
    scores = _scores_for(params, params.R, params.b, P, ids).astype(np.float64)
    value, d = _nce_terms(scores, log_pn[ids], noise.shape[1])
    dd = d.astype(params.dtype)
    flat = ids.ravel()
    np.add.at(grads.R, flat, (dd[:, :, None] * P[:, None, :]).reshape(-1, D))
    np.add.at(grads.b, flat, dd.ravel())
    gP = np.einsum("mw,mwd->md", d, params.R[ids].astype(np.float64))
    _count_output(macs, ids.size, D)

    _backprop_projection(params, grads, contexts, P, active, gP)
    grads.add_l2(params, l2 * m)
    return grads, value


def nce_class_objective(params: ModelParameters, contexts, targets,
                        class_noise, word_noise, noise: ClassNoiseSampler,
                        l2: float = 0.0) -> float:
    """Class-factored NCE objective for fixed draws (finite-difference anchor)."""
    value = _nce_class_core(params, contexts, targets, class_noise, word_noise,
                            noise, None, None)
    return value - 0.5 * l2 * len(targets) * squared_norm(params)


def nce_gradient_class_factored(params: ModelParameters, contexts, targets,
                                class_noise, word_noise, noise: ClassNoiseSampler,
                                l2: float = 0.0, macs: MacCounter = None):
    """Two-level NCE: discriminate the class, then the word within its class.

    The class-level term is skipped when the partition has a single class;
    the word-level term is skipped for targets whose class has a single
    effective member (its conditional is the point mass either way).
    Returns (Gradients, objective value without the L2 term).
    """
    grads = Gradients.zeros_like(params)
    value = _nce_class_core(params, contexts, targets, class_noise, word_noise,
                            noise, grads, macs)
    grads.add_l2(params, l2 * len(targets))
    return grads, value


def _nce_class_core(params, contexts, targets, class_noise, word_noise, noise,
                    grads, macs):
    cfg = params.config
    if cfg.regime != REGIME_CLASS:
        raise DataError("class-factored NCE needs a class_factored model")
    layout = cfg.layout()
    targets = np.asarray(targets, dtype=np.int64)
    _check_targets(targets)
    m, D = len(targets), cfg.dim
    K = cfg.classing.num_classes
    cls = cfg.classing.class_of[targets].astype(np.int64)

    if grads is not None:
        P, active = _project_for_grad(params, contexts, macs)
    else:
        P, active = project_batch(params, contexts)
    gP = np.zeros_like(P, dtype=np.float64)
    value = 0.0

    if K > 1:
        class_noise = np.asarray(class_noise, dtype=np.int64)
        if class_noise.shape[0] != m or class_noise.shape[1] < 1:
            raise DataError("class noise must be (batch, k)")
        k = class_noise.shape[1]
        ids = np.concatenate([cls[:, None], class_noise], axis=1)
        scores = _scores_for(params, params.S, params.t, P, ids).astype(np.float64)
        v, d = _nce_terms(scores, noise.log_class_probs[ids], k)
        value += v
        if grads is not None:
            dd = d.astype(params.dtype)
            flat = ids.ravel()
            np.add.at(grads.S, flat, (dd[:, :, None] * P[:, None, :]).reshape(-1, D))
            np.add.at(grads.t, flat, dd.ravel())
            gP += np.einsum("mw,mwd->md", d, params.S[ids].astype(np.float64))
            _count_output(macs, ids.size, D)

    sizes = np.array([len(mem) for mem in layout.members_eff])
    rows = np.nonzero(sizes[cls] > 1)[0]
    if len(rows):
        word_noise = np.asarray(word_noise, dtype=np.int64)
        if word_noise.shape[0] != m or word_noise.shape[1] < 1:
            raise DataError("word noise must be (batch, k)")
        k = word_noise.shape[1]
        ids = np.concatenate([targets[rows, None], word_noise[rows]], axis=1)
        scores = _scores_for(params, params.R, params.b, P[rows], ids).astype(np.float64)
        v, d = _nce_terms(scores, noise.log_within_probs[ids], k)
        value += v
        if grads is not None:
            dd = d.astype(params.dtype)
            flat = ids.ravel()
            np.add.at(grads.R, flat, (dd[:, :, None] * P[rows][:, None, :]).reshape(-1, D))
            np.add.at(grads.b, flat, dd.ravel())
            gP[rows] += np.einsum("mw,mwd->md", d, params.R[ids].astype(np.float64))
            _count_output(macs, ids.size, D)

    if grads is not None:
        _backprop_projection(params, grads, contexts, P, active, gP)
    return value


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class EpochStats:
    epoch: int
    train_ppl: float
    valid_ppl: float
    learning_rate: float
    seconds: float


@dataclass
class TrainingResult:
    params: ModelParameters
    epochs: list
    macs: MacCounter
    final_learning_rate: float


def _ppl(params, contexts, targets) -> float:
    from .evaluation import perplexity_from_instances
    total, count = perplexity_from_instances(params, contexts, targets)
    try:
        return math.exp(-total / count)
    except OverflowError:
        return math.inf


def train(params: ModelParameters, contexts, targets, config: TrainingConfig,
          macs: MacCounter = None, log_file=None) -> TrainingResult:
    """SGD over shuffled minibatches with validation-driven step decay.

    Updates are ascent steps on the batch-averaged gradient,
    ``theta += (lr / m) * batch_gradient``, so the step scale is invariant
    to the minibatch size. A seeded instance-level split holds out
    ``validation_fraction`` of the data. After each epoch the learning rate
    halves if validation perplexity worsened; training aborts if it exceeds
    10x its pre-training value or a gradient goes non-finite. Identical
    inputs, config and seed reproduce the parameters bit for bit. ``macs``
    (or the counter in the result) tallies gradient-pass MACs only;
    validation passes are not counted.

    The per-epoch log line format is ``epoch<TAB>train_ppl<TAB>valid_ppl
    <TAB>lr<TAB>seconds``.
    """
    config.validate()
    cfg = params.config
    contexts = np.asarray(contexts, dtype=np.int32)
    targets = np.asarray(targets, dtype=np.int32)
    _check_targets(targets)
    if len(contexts) != len(targets) or contexts.shape[1] != cfg.context_size:
        raise DataError("instance arrays disagree with the model order")
    if config.algorithm == "nce" and cfg.regime == REGIME_TREE:
        raise DataError("NCE applies to standard or class_factored models")
    macs = macs if macs is not None else MacCounter()

    ss = np.random.SeedSequence(config.rng_seed)
    split_rng, order_rng, noise_rng = (np.random.default_rng(s) for s in ss.spawn(3))

    N = len(targets)
    perm = split_rng.permutation(N)
    n_valid = int(round(N * config.validation_fraction))
    valid_idx, train_idx = perm[:n_valid], perm[n_valid:]
    if len(train_idx) == 0:
        raise DataError("no training instances left after the validation split")
    tr_ctx, tr_tgt = contexts[train_idx], targets[train_idx]
    ev_ctx, ev_tgt = (contexts[valid_idx], targets[valid_idx]) if n_valid \
        else (tr_ctx, tr_tgt)

    sampler = None
    if config.algorithm == "nce":
        probs = empirical_unigram(tr_tgt, cfg.vocab_size)
        if cfg.regime == REGIME_CLASS:
            sampler = ClassNoiseSampler(probs, cfg.classing, noise_rng)
        else:
            sampler = NoiseSampler(probs, noise_rng)

    initial_ppl = _ppl(params, ev_ctx, ev_tgt)
    lr = config.learning_rate
    prev_ppl = initial_ppl
    records = []
    k = config.noise_samples

    if log_file is None:
        log_fh = None
    elif hasattr(log_file, "write"):
        log_fh = log_file
    else:
        log_fh = open(log_file, "a", encoding="utf-8")

    try:
        for epoch in range(1, config.epochs + 1):
            tick = time.perf_counter()
            order = order_rng.permutation(len(tr_tgt))
            for lo in range(0, len(order), config.minibatch_size):
                sel = order[lo:lo + config.minibatch_size]
                ctx_b, tgt_b = tr_ctx[sel], tr_tgt[sel]
                if config.algorithm == "ml_sgd":
                    grads, _ = ml_gradient(params, ctx_b, tgt_b,
                                           l2=config.l2_strength, macs=macs)
                elif cfg.regime == REGIME_CLASS:
                    cls_b = cfg.classing.class_of[tgt_b].astype(np.int64)
                    cnoise = sampler.sample_classes(len(sel), k) \
                        if cfg.classing.num_classes > 1 else np.empty((len(sel), 0), np.int64)
                    wnoise = sampler.sample_words(cls_b, k)
                    grads, _ = nce_gradient_class_factored(
                        params, ctx_b, tgt_b, cnoise, wnoise, sampler,
                        l2=config.l2_strength, macs=macs)
                else:
                    noise = sampler.sample((len(sel), k))
                    grads, _ = nce_gradient(params, ctx_b, tgt_b, noise, sampler,
                                            l2=config.l2_strength, macs=macs)
                if not grads.all_finite():
                    raise TrainingDivergedError(
                        f"non-finite gradient in epoch {epoch}; lower the learning rate")
                # averaged step: invariant to the minibatch size
                grads.apply_to(params, lr / len(sel))

            train_ppl = _ppl(params, tr_ctx, tr_tgt)
            valid_ppl = _ppl(params, ev_ctx, ev_tgt)
            seconds = time.perf_counter() - tick
            records.append(EpochStats(epoch, train_ppl, valid_ppl, lr, seconds))
            if log_fh is not None:
                log_fh.write(f"{epoch}\t{train_ppl:.6f}\t{valid_ppl:.6f}"
                             f"\t{lr:.6g}\t{seconds:.3f}\n")
            if not math.isfinite(valid_ppl) or valid_ppl > 10.0 * initial_ppl:
                raise TrainingDivergedError(
                    f"validation perplexity {valid_ppl:.3f} exceeds 10x its "
                    f"starting value {initial_ppl:.3f}")
            if valid_ppl > prev_ppl:
                lr *= 0.5
            prev_ppl = valid_ppl
    finally:
        if log_fh is not None and log_fh is not log_file:
            log_fh.close()

    return TrainingResult(params, records, macs, lr)
