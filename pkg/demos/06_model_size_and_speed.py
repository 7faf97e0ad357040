"""What a model costs, on disk and per query.

Walks the memory estimate over growing vocabularies, shows that the
serialized file matches the estimate byte for byte, and benchmarks
query MACs across the output regimes.
"""
import os
import tempfile

import numpy as np

from snlm import (ModelConfig, REGIME_CLASS, REGIME_STANDARD, REGIME_TREE,
                  WordClassing, Vocabulary, huffman_tree, init_parameters,
                  load_model, memory_estimate, query_benchmark, save_model)

print("payload scaling, class-factored, order 5, D = 500, diagonal:")
print(f"{'|V|':>8s} {'K':>5s} {'params':>13s} {'payload':>10s}")
for v in (1_000, 10_000, 105_500):
    k = max(2, round(v ** 0.5))
    cfg = ModelConfig(order=5, dim=500, regime=REGIME_CLASS, diagonal=True,
                      vocab_size=v, classing=WordClassing(np.arange(v) % k, k))
    est = memory_estimate(cfg)
    print(f"{v:8d} {k:5d} {est.parameter_count:13,d} {est.megabytes:8.1f}MB")

# round trip a small model and compare the file against the estimate
words = {f"w{i:03d}": 200 - i for i in range(160)}
vocab = Vocabulary.from_counts(words)
cfg = ModelConfig(order=4, dim=32, regime=REGIME_STANDARD, diagonal=True,
                  vocab_size=len(vocab))
params = init_parameters(cfg, seed=5)
est = memory_estimate(cfg, vocab)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "demo.snlm")
    sizes = save_model(path, params, vocab)
    print()
    print(f"saved sections: {sizes}")
    print(f"estimated payload {est.payload_bytes} bytes,"
          f" serialized payload {sizes['payload']} bytes")
    assert sizes["payload"] == est.payload_bytes
    reloaded, vocab2 = load_model(path)
    assert reloaded.R.tobytes() == params.R.tobytes()
    print("reloaded bitwise identical")

# per-query costs for each regime over the same contexts
rng = np.random.default_rng(1)
contexts = rng.integers(0, len(vocab), size=(200, 3))
support = np.array([w for w in range(len(vocab)) if w != 1])
classing = WordClassing(np.arange(len(vocab)) % 13, 13)
tree = huffman_tree({int(w): int(max(vocab.counts[w], 1)) for w in support})

print()
print(f"{'regime':14s} {'MACs/query':>12s} {'unnormalised':>13s}")
for regime, extra in ((REGIME_STANDARD, {}),
                      (REGIME_CLASS, {"classing": classing}),
                      (REGIME_TREE, {"tree": tree})):
    cfg = ModelConfig(order=4, dim=32, regime=regime, diagonal=True,
                      vocab_size=len(vocab), **extra)
    report = query_benchmark(init_parameters(cfg, seed=5), contexts)
    print(f"{regime:14s} {report.macs_per_query:12.0f}"
          f" {report.macs_per_query_unnormalised:13.0f}")
print()
print("the raw read-out costs the same everywhere; normalization is what varies")
