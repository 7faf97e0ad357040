"""Three ways to partition a vocabulary.

Frequency binning groups by unigram mass, exchange clustering groups by
class-bigram likelihood, and the Huffman build turns counts into a binary
code tree. The corpus interleaves two interchangeable word pairs, so
there is a ground-truth grouping that only the exchange algorithm finds.
"""
from snlm import (brown_clustering, build_vocabulary, class_bigram_objective,
                  frequency_binning, huffman_tree, unigram_distribution)
from snlm.synthetic import template_corpus

sentences = template_corpus(400, seed=0)
vocab = build_vocabulary(sentences)
print("corpus: sentences like", " ".join(sentences[0]))
print("ground truth: {a, b} and {c, d} are interchangeable slots")


def show(classing, title):
    print()
    print(title)
    for c, members in enumerate(classing.members):
        names = [vocab.token_of(int(w)) for w in members]
        print(f"  class {c}: {names}")
    print(f"  class-bigram objective {class_bigram_objective(sentences, vocab, classing):.1f}")


unigram = unigram_distribution(vocab)
show(frequency_binning(unigram, 2), "frequency binning, 2 bins:")
print("  the frequent fillers soak up one bin; a, b, c, d stay lumped")

moved = {vocab.id_of(w) for w in "abcd"}
show(brown_clustering(sentences, vocab, 2, words=moved),
     "exchange clustering of {a, b, c, d}, 2 classes (rest frozen):")
print("  the interchangeable pairs come out exactly")

# Huffman: frequent words get short codes
tree = huffman_tree({w: int(c) for w, c in enumerate(vocab.counts) if c > 0})
print()
print("Huffman code depths (count -> depth):")
for w in sorted(tree.words, key=lambda w: -vocab.counts[w]):
    print(f"  {vocab.token_of(int(w)):3s} count {vocab.counts[w]:4d} depth {tree.depth(int(w))}")
