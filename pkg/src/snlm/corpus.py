"""Corpus ingestion: vocabularies, n-gram training instances, unigram statistics.

Conventions used throughout the package:

* token ids are dense integers; ids 0, 1, 2 are reserved for ``<unk>``,
  ``<s>`` and ``</s>`` in that order,
* a sentence ``w_1 .. w_L`` yields L+1 prediction instances: one per token
  plus one for the end-of-sentence marker; contexts are padded with ``<s>``,
* ``<s>`` is never predicted, so it is excluded from every distribution over
  words.
"""

from __future__ import annotations

import collections
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DataError

UNK_TOKEN = "<unk>"
BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"

UNK_ID = 0
BOS_ID = 1
EOS_ID = 2

SPECIAL_TOKENS = (UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)


class Vocabulary:
    """Bijection between tokens and dense integer ids, with occurrence counts.

    Ids 0..2 are always ``<unk>``, ``<s>``, ``</s>``. Counts record corpus
    occurrences; tokens dropped during thresholding have their counts folded
    into ``<unk>``. ``<s>`` and ``</s>`` carry count 0: they are sentence
    delimiters, not corpus tokens. Statistics about prediction *targets*
    (which do include ``</s>``) are derived from instance streams instead,
    see :mod:`snlm.training`.
    """

    def __init__(self, tokens: Sequence[str], counts):
        tokens = list(tokens)
        if len(tokens) < len(SPECIAL_TOKENS) or tuple(tokens[:3]) != SPECIAL_TOKENS:
            raise DataError("vocabulary must start with <unk>, <s>, </s>")
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (len(tokens),):
            raise DataError("one count per token required")
        if (counts < 0).any():
            raise DataError("negative token count")
        self.tokens = tokens
        self.counts = counts
        self._ids = {tok: i for i, tok in enumerate(tokens)}
        if len(self._ids) != len(tokens):
            raise DataError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        """Id of a known token; raises KeyError for unknown tokens."""
        return self._ids[token]

    def lookup(self, token: str) -> int:
        """Id of a token, falling back to the <unk> id."""
        return self._ids.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    @classmethod
    def from_counts(cls, counts: dict, unk_count: int = 0) -> "Vocabulary":
        """Build a vocabulary from a token -> count mapping (test/demo helper).

        Tokens are ordered by (count desc, token asc) after the specials.
        """
        items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        tokens = list(SPECIAL_TOKENS) + [t for t, _ in items]
        cnts = [unk_count, 0, 0] + [c for _, c in items]
        return cls(tokens, cnts)

    def save(self, path) -> None:
        """Write one ``token<TAB>count`` line per id, line number = id."""
        with open(path, "w", encoding="utf-8") as fh:
            for tok, cnt in zip(self.tokens, self.counts):
                fh.write(f"{tok}\t{int(cnt)}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 'token<TAB>count'")
                try:
                    counts.append(int(parts[1]))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad count {parts[1]!r}") from None
                tokens.append(parts[0])
        return cls(tokens, counts)


def read_sentences(path) -> Iterator[list]:
    """Yield whitespace-tokenized sentences from a UTF-8 text file.

    Blank lines are skipped.
    """
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    with fh:
        for line in fh:
            toks = line.split()
            if toks:
                yield toks


def build_vocabulary(corpus, min_count: int = 1, max_size=None) -> Vocabulary:
    """Count tokens and build a thresholded vocabulary.

    Parameters
    ----------
    corpus : path or iterable of token lists
    min_count : tokens occurring fewer times are dropped (folded into <unk>)
    max_size : keep at most this many non-special tokens, most frequent first

    The dropped occurrence mass is accumulated on ``<unk>`` so that the sum
    of all counts equals the corpus token count.
    """
    if min_count < 1:
        raise DataError("min_count must be >= 1")
    if max_size is not None and max_size < 0:
        raise DataError("max_size must be >= 0")
    sentences = read_sentences(corpus) if isinstance(corpus, (str, bytes)) or hasattr(corpus, "__fspath__") else corpus
    counter = collections.Counter()
    total = 0
    for sent in sentences:
        counter.update(sent)
        total += len(sent)
    if total == 0:
        raise DataError("empty corpus")

    special_counts = {tok: counter.pop(tok, 0) for tok in SPECIAL_TOKENS}
    items = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [(t, c) for t, c in items if c >= min_count]
    dropped = [(t, c) for t, c in items if c < min_count]
    if max_size is not None and len(kept) > max_size:
        dropped.extend(kept[max_size:])
        kept = kept[:max_size]

    unk = special_counts[UNK_TOKEN] + sum(c for _, c in dropped)
    tokens = list(SPECIAL_TOKENS) + [t for t, _ in kept]
    counts = [unk, special_counts[BOS_TOKEN], special_counts[EOS_TOKEN]]
    counts += [c for _, c in kept]
    return Vocabulary(tokens, counts)


class TrainingInstance(NamedTuple):
    """One prediction event: target word id given most-recent-first context."""

    context: tuple
    target: int


def extract_instances(sentence: Sequence[str], vocab: Vocabulary, n: int) -> list:
    """n-gram prediction instances for one sentence.

    A sentence of L tokens produces L+1 instances (each token plus ``</s>``).
    Context positions hold the n-1 preceding ids, most recent first, padded
    with ``<s>`` beyond the sentence start. OOV tokens map to ``<unk>``.
    """
    if n < 2:
        raise DataError("model order must be >= 2")
    ids = [vocab.lookup(t) for t in sentence]
    out = []
    for i in range(len(ids) + 1):
        target = ids[i] if i < len(ids) else EOS_ID
        ctx = tuple(ids[i - j] if i - j >= 0 else BOS_ID for j in range(1, n))
        out.append(TrainingInstance(ctx, target))
    return out


def instance_arrays(sentences: Iterable[Sequence[str]], vocab: Vocabulary, n: int):
    """Stack instances for many sentences into (contexts, targets) arrays.

    Returns
    -------
    contexts : int32 array of shape (N, n-1), most recent position first
    targets : int32 array of shape (N,)
    """
    ctx_rows, tgt = [], []
    for sent in sentences:
        for inst in extract_instances(sent, vocab, n):
            ctx_rows.append(inst.context)
            tgt.append(inst.target)
    if not tgt:
        raise DataError("empty corpus")
    return (np.asarray(ctx_rows, dtype=np.int32),
            np.asarray(tgt, dtype=np.int32))


class UnigramDistribution:
    """Fixed categorical distribution over word ids (float64, sums to 1)."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or len(probs) == 0:
            raise DataError("probs must be a non-empty vector")
        if (probs < 0).any() or not np.isfinite(probs).all():
            raise DataError("probs must be finite and non-negative")
        total = probs.sum()
        if total <= 0:
            raise DataError("zero total probability mass")
        self.probs = probs / total

    def __len__(self) -> int:
        return len(self.probs)

    @classmethod
    def from_counts(cls, counts, smoothing: float = 0.0, exclude=()) -> "UnigramDistribution":
        """Relative frequencies with add-``smoothing`` over the non-excluded ids.

        Excluded ids get probability exactly 0 and contribute nothing to the
        normalizer. With ``smoothing > 0`` every non-excluded word becomes
        sampleable, including zero-count ones.
        """
        counts = np.asarray(counts, dtype=np.float64)
        if smoothing < 0:
            raise DataError("smoothing must be >= 0")
        mask = np.ones(len(counts), dtype=bool)
        for i in exclude:
            mask[i] = False
        support = counts[mask] + smoothing
        total = support.sum()
        if total <= 0:
            raise DataError("zero total count and no smoothing")
        probs = np.zeros(len(counts))
        probs[mask] = support / total
        return cls(probs)


def unigram_distribution(vocab: Vocabulary, smoothing: float = 0.0) -> UnigramDistribution:
    """Unigram distribution over the vocabulary, ``<s>`` excluded.

    Note the vocabulary counts give corpus occurrences; ``</s>`` therefore
    carries zero mass here. Distributions over prediction targets should be
    built from instance targets via ``UnigramDistribution.from_counts``.
    """
    return UnigramDistribution.from_counts(vocab.counts, smoothing, exclude=(BOS_ID,))
