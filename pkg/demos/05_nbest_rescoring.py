"""Rescoring candidate translations with a trained model.

A decoder emits several hypotheses per sentence in the usual pipe-separated
list format. We train a small model on Markov text, then score each
hypothesis; sentences the chain could actually generate outrank shuffles
of the same words. The unnormalised read-out gives the same ranking here
for a fraction of the query cost.
"""
import numpy as np

from snlm import (ModelConfig, REGIME_STANDARD, TrainingConfig,
                  build_vocabulary, empirical_unigram, init_parameters,
                  instance_arrays, score_nbest, train)
from snlm.synthetic import markov_corpus

sentences = markov_corpus(40_000, vocab_size=60, branching=4, seed=7)
vocab = build_vocabulary(sentences)
contexts, targets = instance_arrays(sentences, vocab, n=3)

cfg = ModelConfig(order=3, dim=16, regime=REGIME_STANDARD, diagonal=True,
                  vocab_size=len(vocab))
params = init_parameters(cfg, seed=2,
                         unigram=empirical_unigram(targets, len(vocab)))
schedule = TrainingConfig(algorithm="nce", learning_rate=0.3, epochs=3,
                          minibatch_size=64, noise_samples=10, rng_seed=9)
train(params, contexts, targets, schedule)

# fake n-best lists: the real continuation vs shuffles of its words
rng = np.random.default_rng(0)
lines = []
for sid, sent in enumerate(sentences[:3]):
    hyp = sent[:8]
    lines.append(f"{sid} ||| {' '.join(hyp)} ||| decoder=0.0")
    for _ in range(2):
        fake = list(hyp)
        rng.shuffle(fake)
        lines.append(f"{sid} ||| {' '.join(fake)} ||| decoder=0.0")

entries, errors = score_nbest(params, lines, vocab)
assert not errors

print("hypothesis scores (higher is better, first row is the true sentence):")
current = None
for e in entries:
    if e.sent_id != current:
        current = e.sent_id
        print(f"sentence {e.sent_id}:")
        best = max(x.score for x in entries if x.sent_id == e.sent_id)
    marker = "  <-- selected" if e.score == best else ""
    print(f"  {e.score:9.3f}  {e.hypothesis}{marker}")

fast = {e.line_no: e.score
        for e in score_nbest(params, lines, vocab, unnormalised=True)[0]}
order_exact = sorted(entries, key=lambda e: -e.score)
order_fast = sorted(entries, key=lambda e: -fast[e.line_no])
same = [e.line_no for e in order_exact] == [e.line_no for e in order_fast]
print()
print(f"unnormalised read-out reproduces the exact ranking: {same}")
