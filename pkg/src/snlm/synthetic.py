"""Synthetic corpora with known structure, for demos and tests."""

from __future__ import annotations

import numpy as np


def markov_corpus(num_tokens: int, vocab_size: int = 100, branching: int = 5,
                  seed: int = 0, end_prob: float = 0.08):
    """Sentences from a random first-order Markov chain.

    Each word transitions to ``branching`` fixed successors with Dirichlet
    weights, so an order-2+ model can fit the data well while a unigram
    model cannot. Generation stops once ``num_tokens`` tokens are out.
    """
    rng = np.random.default_rng(seed)
    words = [f"w{i:03d}" for i in range(vocab_size)]
    succ = np.empty((vocab_size, branching), dtype=np.int64)
    trans = np.empty((vocab_size, branching))
    for w in range(vocab_size):
        succ[w] = rng.choice(vocab_size, size=branching, replace=False)
        trans[w] = rng.dirichlet(np.ones(branching))
    start_ids = rng.choice(vocab_size, size=branching, replace=False)
    start_probs = rng.dirichlet(np.ones(branching))

    sentences = []
    produced = 0
    while produced < num_tokens:
        cur = int(rng.choice(start_ids, p=start_probs))
        sent = [words[cur]]
        while rng.random() >= end_prob:
            cur = int(succ[cur][rng.choice(branching, p=trans[cur])])
            sent.append(words[cur])
        sentences.append(sent)
        produced += len(sent)
    return sentences


def template_corpus(num_sentences: int = 500, seed: int = 0):
    """Sentences "(a|b) X (c|d) Y": {a, b} and {c, d} are interchangeable."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(num_sentences):
        out.append([("a", "b")[rng.integers(2)], "X",
                    ("c", "d")[rng.integers(2)], "Y"])
    return out


def cyclic_corpus(num_sentences: int = 200, words=("e", "f", "g", "h")):
    """The same deterministic sentence repeated; an ideal model hits ppl 1."""
    return [list(words) for _ in range(num_sentences)]
