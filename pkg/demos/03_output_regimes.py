"""One context network, four output layers.

The same bilinear context projection can feed a full softmax, a
class-factored softmax, a tree-factored softmax, or be read out raw.
This script scores one context under each regime and counts the
multiply-accumulates a single query costs.
"""
import numpy as np

from snlm import (MacCounter, REGIME_CLASS, REGIME_STANDARD, REGIME_TREE,
                  ModelConfig, WordClassing, build_vocabulary,
                  full_distribution, huffman_tree, init_parameters, log_prob,
                  unnormalised_log_score)
from snlm.corpus import BOS_ID
from snlm.synthetic import markov_corpus

sentences = markov_corpus(20_000, vocab_size=120, seed=3)
vocab = build_vocabulary(sentences)
V = len(vocab)
support = np.array([w for w in range(V) if w != BOS_ID])
counts = np.maximum(vocab.counts, 1)

classing = WordClassing(np.arange(V) % 11, 11)
tree = huffman_tree({int(w): int(counts[w]) for w in support})

configs = {
    REGIME_STANDARD: ModelConfig(order=3, dim=24, regime=REGIME_STANDARD,
                                 diagonal=True, vocab_size=V),
    REGIME_CLASS: ModelConfig(order=3, dim=24, regime=REGIME_CLASS,
                              diagonal=True, vocab_size=V, classing=classing),
    REGIME_TREE: ModelConfig(order=3, dim=24, regime=REGIME_TREE,
                             diagonal=True, vocab_size=V, tree=tree),
}

context = np.array([vocab.lookup(sentences[0][1]), vocab.lookup(sentences[0][0])])
word = vocab.lookup(sentences[0][2])
print(f"scoring P({vocab.token_of(word)} | {sentences[0][1]}, {sentences[0][0]})")
print()

rows = []
for regime, cfg in configs.items():
    params = init_parameters(cfg, seed=1)
    macs = MacCounter()
    lp = log_prob(params, context, word, macs)
    dist = full_distribution(params, context)
    rows.append((regime, lp, float(dist.sum()), macs.total))

# raw readout: one dot product, no normalization anywhere
params = init_parameters(configs[REGIME_STANDARD], seed=1)
macs = MacCounter()
phi = unnormalised_log_score(params, context, word, macs)
rows.append(("unnormalised", phi, float("nan"), macs.total))

print(f"{'regime':14s} {'log score':>10s} {'sum over vocab':>15s} {'MACs/query':>11s}")
for regime, lp, total, cost in rows:
    s = f"{total:.12f}" if np.isfinite(total) else "(not a prob.)"
    print(f"{regime:14s} {lp:10.4f} {s:>15s} {cost:11.0f}")

print()
print("every normalized regime sums to one; they just pay different costs")
