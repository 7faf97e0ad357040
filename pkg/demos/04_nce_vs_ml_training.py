"""Noise contrastive estimation against exact-gradient SGD.

Trains the same full-softmax model twice on a synthetic Markov corpus:
once with exact likelihood gradients (every update touches every word)
and once with NCE (each update touches the target plus k noise words).
NCE lands within a few percent of the exact model while doing an order
of magnitude less output-layer work.
"""
import numpy as np

from snlm import (ModelConfig, REGIME_STANDARD, TrainingConfig,
                  build_vocabulary, empirical_unigram, init_parameters,
                  instance_arrays, train)
from snlm.synthetic import markov_corpus

sentences = markov_corpus(60_000, vocab_size=100, branching=5, seed=1)
vocab = build_vocabulary(sentences)
contexts, targets = instance_arrays(sentences, vocab, n=3)
unigram = empirical_unigram(targets, len(vocab))
print(f"{len(targets)} instances over {len(vocab)} vocabulary entries")

results = {}
for algorithm in ("ml_sgd", "nce"):
    cfg = ModelConfig(order=3, dim=16, regime=REGIME_STANDARD, diagonal=True,
                      vocab_size=len(vocab))
    params = init_parameters(cfg, seed=11, unigram=unigram)
    schedule = TrainingConfig(algorithm=algorithm, learning_rate=0.3,
                              minibatch_size=64, epochs=4, l2_strength=1e-6,
                              noise_samples=10, rng_seed=5)
    print()
    print(f"--- {algorithm} ---")
    print("epoch  train ppl  valid ppl      lr   seconds")
    result = train(params, contexts, targets, schedule)
    for e in result.epochs:
        print(f"{e.epoch:5d} {e.train_ppl:10.3f} {e.valid_ppl:10.3f}"
              f" {e.learning_rate:7.3f} {e.seconds:9.2f}")
    results[algorithm] = result

ml, nce = results["ml_sgd"], results["nce"]
gap = abs(nce.epochs[-1].valid_ppl - ml.epochs[-1].valid_ppl) / ml.epochs[-1].valid_ppl
print()
print(f"validation perplexity gap: {gap:.1%}")
print(f"output-layer MACs: exact {ml.macs.output:.3e}, nce {nce.macs.output:.3e}"
      f" ({ml.macs.output / nce.macs.output:.1f}x less work)")
print("the noise model only ever sees 1 + k = 11 rows per instance,"
      " the exact gradient touches all of them")
