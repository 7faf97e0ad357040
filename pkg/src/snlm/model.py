"""Model parameters and log-probabilities under each normalization regime.

The context words are embedded with ``Q``, combined by per-position
transforms ``C_j`` and rectified into a prediction vector::

    p = relu(sum_j C_j q_{h_j})

A word is scored as ``phi(w, h) = r_w . p + b_w``. The regimes differ in how
scores become probabilities:

* ``standard``        softmax over the whole support
* ``class_factored``  P(class | h) * P(w | class, h), two small softmaxes
* ``tree_factored``   product of two-way softmaxes along a tree path
* unnormalised        raw ``phi`` used directly (NCE-trained models)

``<s>`` is excluded from the prediction support everywhere: it gets
probability exactly 0 and is never a legal target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import BOS_ID
from .errors import DataError
from .partitioning import VocabularyTree, WordClassing

REGIME_STANDARD = "standard"
REGIME_CLASS = "class_factored"
REGIME_TREE = "tree_factored"
REGIMES = (REGIME_STANDARD, REGIME_CLASS, REGIME_TREE)

_PROB_FLOOR = 1e-10  # keeps log-space initializers finite


@dataclass
class MacCounter:
    """Analytic multiply-accumulate tallies; the toolkit's speed surrogate.

    ``projection`` counts context-combination MACs, ``output`` counts
    score MACs against word/class/node representations. ``output_rows``
    tallies output-layer rows receiving gradient during training.
    """

    projection: int = 0
    output: int = 0
    output_rows: int = 0

    @property
    def total(self) -> int:
        return self.projection + self.output

    def reset(self) -> None:
        self.projection = self.output = self.output_rows = 0


@dataclass
class ModelConfig:
    """Architecture hyper-parameters plus the structures a regime needs."""

    order: int = 5          # n: target plus n-1 context positions
    dim: int = 500          # D
    regime: str = REGIME_CLASS
    diagonal: bool = True
    vocab_size: int = 0
    classing: Optional[WordClassing] = None
    tree: Optional[VocabularyTree] = None

    def __post_init__(self):
        if self.order < 2:
            raise DataError("order must be >= 2")
        if self.dim < 1:
            raise DataError("dim must be >= 1")
        if self.regime not in REGIMES:
            raise DataError(f"unknown regime {self.regime!r}")

    @property
    def context_size(self) -> int:
        return self.order - 1

    def validate(self) -> None:
        """Check structural consistency (called by init / IO paths)."""
        if self.vocab_size < 3:
            raise DataError("vocabulary must hold at least the three specials")
        if self.regime == REGIME_CLASS:
            if self.classing is None:
                raise DataError("class_factored regime needs a WordClassing")
            if len(self.classing.class_of) != self.vocab_size:
                raise DataError("classing does not cover the vocabulary")
        if self.regime == REGIME_TREE:
            if self.tree is None:
                raise DataError("tree_factored regime needs a VocabularyTree")
            expect = np.array([w for w in range(self.vocab_size) if w != BOS_ID])
            if not np.array_equal(self.tree.words, expect):
                raise DataError("tree leaves must cover the vocabulary minus <s>")
        self.layout()

    def layout(self) -> "_Layout":
        cached = getattr(self, "_layout", None)
        if cached is None:
            cached = _Layout(self)
            self._layout = cached
        return cached


class _Layout:
    """Precomputed index structures shared by the scoring paths."""

    __slots__ = ("support", "support_pos", "members_eff", "class_valid", "pos_in_class")

    def __init__(self, config: ModelConfig):
        V = config.vocab_size
        self.support = np.array([w for w in range(V) if w != BOS_ID], dtype=np.int64)
        self.support_pos = np.full(V, -1, dtype=np.int64)
        self.support_pos[self.support] = np.arange(len(self.support))
        self.members_eff = None
        self.class_valid = None
        self.pos_in_class = None
        if config.regime == REGIME_CLASS and config.classing is not None:
            members = config.classing.members
            self.members_eff = [m[m != BOS_ID].astype(np.int64) for m in members]
            self.class_valid = np.array([len(m) > 0 for m in self.members_eff])
            self.pos_in_class = np.full(V, -1, dtype=np.int64)
            for mem in self.members_eff:
                self.pos_in_class[mem] = np.arange(len(mem))


@dataclass
class ModelParameters:
    """All trainable arrays. Shapes
    ``Q, R: (V, D); b: (V,); C: order-1 transforms (D,) or (D, D);
    S, t: class or tree score rows, None under the standard regime.``
    """

    config: ModelConfig
    Q: np.ndarray
    R: np.ndarray
    b: np.ndarray
    C: list
    S: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None

    def __post_init__(self):
        cfg = self.config
        V, D = cfg.vocab_size, cfg.dim
        if self.Q.shape != (V, D) or self.R.shape != (V, D) or self.b.shape != (V,):
            raise DataError("embedding/bias shape mismatch")
        if len(self.C) != cfg.context_size:
            raise DataError("one context transform per position required")
        want = (D,) if cfg.diagonal else (D, D)
        for Cj in self.C:
            if Cj.shape != want:
                raise DataError("context transform shape mismatch")
        if cfg.regime == REGIME_STANDARD:
            if self.S is not None or self.t is not None:
                raise DataError("standard regime carries no extra score rows")
        else:
            rows = _score_rows(cfg)
            if self.S is None or self.t is None or self.S.shape != (rows, D) or self.t.shape != (rows,):
                raise DataError("class/node score shape mismatch")

    @property
    def dtype(self):
        return self.Q.dtype

    def arrays(self):
        """(name, array) pairs in serialization order."""
        out = [("Q", self.Q), ("R", self.R), ("b", self.b)]
        out += [(f"C{j}", Cj) for j, Cj in enumerate(self.C)]
        if self.S is not None:
            out += [("S", self.S), ("t", self.t)]
        return out

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            self.config, self.Q.copy(), self.R.copy(), self.b.copy(),
            [Cj.copy() for Cj in self.C],
            None if self.S is None else self.S.copy(),
            None if self.t is None else self.t.copy())

    def astype(self, dtype) -> "ModelParameters":
        return ModelParameters(
            self.config, self.Q.astype(dtype), self.R.astype(dtype),
            self.b.astype(dtype), [Cj.astype(dtype) for Cj in self.C],
            None if self.S is None else self.S.astype(dtype),
            None if self.t is None else self.t.astype(dtype))


def _score_rows(config: ModelConfig) -> int:
    if config.regime == REGIME_CLASS:
        return config.classing.num_classes
    if config.regime == REGIME_TREE:
        return config.tree.num_nodes - 1  # every node but the root
    return 0


def _floored_log(p) -> np.ndarray:
    return np.log(np.maximum(p, _PROB_FLOOR))


def init_parameters(config: ModelConfig, seed: int = 0, unigram=None,
                    dtype=np.float32) -> ModelParameters:
    """Fresh parameters.

    Embeddings are drawn i.i.d. N(0, 0.1^2); context transforms start at
    (scaled) identity so the projection begins as the average context
    embedding; biases start at log prior mass so the initial model already
    matches the unigram distribution given by ``unigram`` (zeros when None).
    The draw order (Q, R, then S) is fixed, so a seed pins every array.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    V, D = config.vocab_size, config.dim
    Q = rng.normal(0.0, 0.1, (V, D)).astype(dtype)
    R = rng.normal(0.0, 0.1, (V, D)).astype(dtype)

    probs = None
    if unigram is not None:
        probs = np.asarray(getattr(unigram, "probs", unigram), dtype=np.float64)
        if probs.shape != (V,):
            raise DataError("unigram size mismatch")
        b = _floored_log(probs)
    else:
        b = np.zeros(V)
    b = b.astype(dtype)

    scale = 1.0 / config.context_size
    if config.diagonal:
        C = [np.full(D, scale, dtype=dtype) for _ in range(config.context_size)]
    else:
        C = [(np.eye(D) * scale).astype(dtype) for _ in range(config.context_size)]

    S = t = None
    if config.regime != REGIME_STANDARD:
        rows = _score_rows(config)
        S = rng.normal(0.0, 0.1, (rows, D)).astype(dtype)
        if config.regime == REGIME_CLASS:
            if probs is not None:
                layout = config.layout()
                mass = np.array([probs[m].sum() if len(m) else 0.0
                                 for m in layout.members_eff])
                t = _floored_log(mass)
            else:
                t = np.zeros(rows)
        else:
            t = _floored_log(_subtree_mass(config.tree, probs, V))[:rows]
        t = t.astype(dtype)
    return ModelParameters(config, Q, R, b, C, S, t)


def _subtree_mass(tree: VocabularyTree, probs, vocab_size: int) -> np.ndarray:
    """Prior mass under each node; uniform over leaves when probs is None."""
    mass = np.zeros(tree.num_nodes)
    leaves = np.nonzero(tree.leaf_word >= 0)[0]
    if probs is None:
        mass[leaves] = 1.0 / len(leaves)
    else:
        mass[leaves] = probs[tree.leaf_word[leaves]]
    depth = np.zeros(tree.num_nodes, dtype=np.int64)
    for node in range(tree.num_nodes):
        d, m = 0, node
        while tree.parent[m] != -1:
            d += 1
            m = tree.parent[m]
        depth[node] = d
    for node in np.argsort(-depth, kind="stable"):
        par = tree.parent[node]
        if par != -1:
            mass[par] += mass[node]
    return mass


# ---------------------------------------------------------------------------
# log-sum-exp helpers (max-subtracted, -inf safe)


def _lse(x: np.ndarray) -> float:
    m = float(np.max(x))
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.sum(np.exp(x - m))))


def _lse_rows(X: np.ndarray) -> np.ndarray:
    m = X.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    out = safe + np.log(np.exp(X - safe[:, None]).sum(axis=1))
    return np.where(m == -np.inf, -np.inf, out)


# ---------------------------------------------------------------------------
# projection


def project_context(params: ModelParameters, context, macs: MacCounter = None) -> np.ndarray:
    """Prediction vector p = relu(sum_j C_j q_{h_j}) for one context.

    ``context`` holds the n-1 context ids, most recent first. Cost is
    (n-1) * D MACs with diagonal transforms, (n-1) * D^2 with full ones.
    """
    cfg = params.config
    if len(context) != cfg.context_size:
        raise DataError("context length must be order - 1")
    acc = np.zeros(cfg.dim, dtype=params.dtype)
    for j, h in enumerate(context):
        q = params.Q[h]
        acc += params.C[j] * q if cfg.diagonal else params.C[j] @ q
    if macs is not None:
        per = cfg.dim if cfg.diagonal else cfg.dim * cfg.dim
        macs.projection += cfg.context_size * per
    return np.maximum(acc, 0)


def project_batch(params: ModelParameters, contexts: np.ndarray, macs: MacCounter = None):
    """Batched projection.

    Returns (P, active) where P is (m, D) and active marks strictly positive
    pre-activations (the rectifier's derivative is taken as 0 at 0).
    """
    cfg = params.config
    m = len(contexts)
    acc = np.zeros((m, cfg.dim), dtype=params.dtype)
    for j in range(cfg.context_size):
        q = params.Q[contexts[:, j]]
        acc += q * params.C[j] if cfg.diagonal else q @ params.C[j].T
    if macs is not None:
        per = cfg.dim if cfg.diagonal else cfg.dim * cfg.dim
        macs.projection += m * cfg.context_size * per
    active = acc > 0
    return np.maximum(acc, 0), active


def score_word(params: ModelParameters, p: np.ndarray, w: int, macs: MacCounter = None) -> float:
    """phi(w, h) = r_w . p + b_w given a projected context."""
    if macs is not None:
        macs.output += params.config.dim
    return float(params.R[w] @ p + params.b[w])


def unnormalised_log_score(params: ModelParameters, context, w: int,
                           macs: MacCounter = None) -> float:
    """Raw score phi(w, h); NCE training drives exp(phi) toward P(w | h)."""
    p = project_context(params, context, macs)
    return score_word(params, p, w, macs)


# ---------------------------------------------------------------------------
# per-regime log-probabilities


def _require(params, regime):
    if params.config.regime != regime:
        raise DataError(f"model regime is {params.config.regime!r}, not {regime!r}")


def log_prob_standard(params: ModelParameters, context, w: int,
                      macs: MacCounter = None) -> float:
    """log P(w | h) under the full-support softmax."""
    _require(params, REGIME_STANDARD)
    if w == BOS_ID:
        return -math.inf
    layout = params.config.layout()
    p = project_context(params, context, macs)
    scores = (params.R[layout.support] @ p + params.b[layout.support]).astype(np.float64)
    if macs is not None:
        macs.output += len(layout.support) * params.config.dim
    return float(scores[layout.support_pos[w]] - _lse(scores))


def _class_log_scores(params, p, layout):
    psi = (params.S @ p + params.t).astype(np.float64)
    return np.where(layout.class_valid, psi, -np.inf)


def log_prob_class_factored(params: ModelParameters, context, w: int,
                            macs: MacCounter = None) -> float:
    """log P(w | h) = log P(class(w) | h) + log P(w | class(w), h)."""
    _require(params, REGIME_CLASS)
    if w == BOS_ID:
        return -math.inf
    cfg = params.config
    layout = cfg.layout()
    p = project_context(params, context, macs)
    c = int(cfg.classing.class_of[w])
    mem = layout.members_eff[c]

    class_lp = 0.0
    if cfg.classing.num_classes > 1:
        psi = _class_log_scores(params, p, layout)
        class_lp = float(psi[c] - _lse(psi))
        if macs is not None:
            macs.output += cfg.classing.num_classes * cfg.dim
    word = (params.R[mem] @ p + params.b[mem]).astype(np.float64)
    word_lp = float(word[layout.pos_in_class[w]] - _lse(word))
    if macs is not None:
        macs.output += len(mem) * cfg.dim
    return class_lp + word_lp


def log_prob_tree_factored(params: ModelParameters, context, w: int,
                           macs: MacCounter = None) -> float:
    """log P(w | h) as a product of sibling softmaxes along the tree path."""
    _require(params, REGIME_TREE)
    if w == BOS_ID:
        return -math.inf
    cfg = params.config
    p = project_context(params, context, macs)
    nodes, sibs = cfg.tree.path(w)
    on = (params.S[nodes] @ p + params.t[nodes]).astype(np.float64)
    off = (params.S[sibs] @ p + params.t[sibs]).astype(np.float64)
    if macs is not None:
        macs.output += 2 * len(nodes) * cfg.dim
    return float(np.sum(on - np.logaddexp(on, off)))


_LOG_PROB = {}


def log_prob(params: ModelParameters, context, w: int, macs: MacCounter = None) -> float:
    """Regime-dispatching normalized log-probability."""
    fn = _LOG_PROB[params.config.regime]
    return fn(params, context, w, macs)


_LOG_PROB[REGIME_STANDARD] = log_prob_standard
_LOG_PROB[REGIME_CLASS] = log_prob_class_factored
_LOG_PROB[REGIME_TREE] = log_prob_tree_factored


def full_distribution(params: ModelParameters, context, macs: MacCounter = None) -> np.ndarray:
    """P(. | h) over the whole vocabulary (float64; ``<s>`` gets exactly 0)."""
    cfg = params.config
    layout = cfg.layout()
    p = project_context(params, context, macs)
    out = np.zeros(cfg.vocab_size)

    if cfg.regime == REGIME_STANDARD:
        scores = (params.R[layout.support] @ p + params.b[layout.support]).astype(np.float64)
        if macs is not None:
            macs.output += len(layout.support) * cfg.dim
        out[layout.support] = np.exp(scores - _lse(scores))
        return out

    if cfg.regime == REGIME_CLASS:
        psi = _class_log_scores(params, p, layout)
        logZ = _lse(psi)
        if macs is not None:
            macs.output += cfg.classing.num_classes * cfg.dim
        for c, mem in enumerate(layout.members_eff):
            if not len(mem):
                continue
            word = (params.R[mem] @ p + params.b[mem]).astype(np.float64)
            if macs is not None:
                macs.output += len(mem) * cfg.dim
            out[mem] = np.exp((psi[c] - logZ) + (word - _lse(word)))
        return out

    tree = cfg.tree
    logmass = np.zeros(tree.num_nodes)
    queue = [tree.root]
    while queue:
        node = queue.pop()
        l, r = int(tree.left[node]), int(tree.right[node])
        if l < 0:
            continue
        a = float(params.S[l] @ p + params.t[l])
        c = float(params.S[r] @ p + params.t[r])
        if macs is not None:
            macs.output += 2 * cfg.dim
        z = np.logaddexp(a, c)
        logmass[l] = logmass[node] + a - z
        logmass[r] = logmass[node] + c - z
        queue += [l, r]
    leaves = np.nonzero(tree.leaf_word >= 0)[0]
    out[tree.leaf_word[leaves]] = np.exp(logmass[leaves])
    return out


# ---------------------------------------------------------------------------
# batched scoring (evaluation and validation use this)


def log_probs_batch(params: ModelParameters, contexts: np.ndarray, targets: np.ndarray,
                    macs: MacCounter = None) -> np.ndarray:
    """log P(target_i | context_i) for a batch, as float64 (m,)."""
    cfg = params.config
    layout = cfg.layout()
    targets = np.asarray(targets, dtype=np.int64)
    P, _ = project_batch(params, contexts, macs)
    m = len(targets)
    out = np.full(m, -np.inf)
    valid = targets != BOS_ID

    if cfg.regime == REGIME_STANDARD:
        scores = (P @ params.R[layout.support].T + params.b[layout.support]).astype(np.float64)
        if macs is not None:
            macs.output += m * len(layout.support) * cfg.dim
        lz = _lse_rows(scores)
        rows = np.nonzero(valid)[0]
        out[rows] = scores[rows, layout.support_pos[targets[rows]]] - lz[rows]
        return out

    if cfg.regime == REGIME_CLASS:
        K = cfg.classing.num_classes
        cls = cfg.classing.class_of[targets]
        class_term = np.zeros(m)
        if K > 1:
            psi = (P @ params.S.T + params.t).astype(np.float64)
            psi[:, ~layout.class_valid] = -np.inf
            if macs is not None:
                macs.output += m * K * cfg.dim
            lz = _lse_rows(psi)
            class_term = psi[np.arange(m), cls] - lz
        for c in np.unique(cls[valid]):
            idx = np.nonzero(valid & (cls == c))[0]
            mem = layout.members_eff[c]
            word = (P[idx] @ params.R[mem].T + params.b[mem]).astype(np.float64)
            if macs is not None:
                macs.output += len(idx) * len(mem) * cfg.dim
            pos = layout.pos_in_class[targets[idx]]
            out[idx] = class_term[idx] + word[np.arange(len(idx)), pos] - _lse_rows(word)
        return out

    for w in np.unique(targets[valid]):
        idx = np.nonzero(targets == w)[0]
        nodes, sibs = cfg.tree.path(int(w))
        on = (P[idx] @ params.S[nodes].T + params.t[nodes]).astype(np.float64)
        off = (P[idx] @ params.S[sibs].T + params.t[sibs]).astype(np.float64)
        if macs is not None:
            macs.output += len(idx) * 2 * len(nodes) * cfg.dim
        out[idx] = np.sum(on - np.logaddexp(on, off), axis=1)
    return out
