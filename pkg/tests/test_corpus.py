"""Vocabulary construction, instance extraction and unigram statistics."""
import collections

import numpy as np
import pytest

from snlm.corpus import (
    BOS_ID,
    BOS_TOKEN,
    EOS_ID,
    EOS_TOKEN,
    UNK_ID,
    UNK_TOKEN,
    UnigramDistribution,
    Vocabulary,
    build_vocabulary,
    extract_instances,
    instance_arrays,
    read_sentences,
    unigram_distribution,
)
from snlm.errors import DataError


class TestVocabulary:
    def test_specials_occupy_reserved_ids(self):
        vocab = build_vocabulary([["a", "a", "b"]])
        assert vocab.tokens[UNK_ID] == UNK_TOKEN
        assert vocab.tokens[BOS_ID] == BOS_TOKEN
        assert vocab.tokens[EOS_ID] == EOS_TOKEN
        assert vocab.id_of("a") == 3
        assert vocab.id_of("b") == 4
        assert len(vocab) == 5

    def test_counts_are_corpus_occurrences(self):
        vocab = build_vocabulary([["a", "a", "b"], ["b", "a"]])
        assert vocab.counts[vocab.id_of("a")] == 3
        assert vocab.counts[vocab.id_of("b")] == 2
        # markers never occur inside a sentence line
        assert vocab.counts[BOS_ID] == 0
        assert vocab.counts[EOS_ID] == 0
        assert vocab.counts[UNK_ID] == 0
        assert vocab.counts.sum() == 5

    def test_content_sorted_by_count_then_token(self):
        rng = np.random.default_rng(7)
        words = [f"w{i:02d}" for i in range(20)]
        sentences = []
        for _ in range(200):
            sentences.append(list(rng.choice(words, size=rng.integers(1, 9))))
        vocab = build_vocabulary(sentences)
        truth = collections.Counter(t for s in sentences for t in s)
        got = [(int(-vocab.counts[i]), vocab.tokens[i]) for i in range(3, len(vocab))]
        assert got == sorted(got)
        for tok, n in truth.items():
            assert vocab.counts[vocab.id_of(tok)] == n

    def test_min_count_folds_mass_into_unk(self):
        sentences = [["a"] * 5 + ["b"] * 2 + ["c"]]
        vocab = build_vocabulary(sentences, min_count=2)
        assert "c" not in vocab.tokens
        assert vocab.counts[UNK_ID] == 1
        assert vocab.counts.sum() == 8
        assert vocab.lookup("c") == UNK_ID

    def test_max_size_keeps_most_frequent(self):
        sentences = [["a"] * 5, ["b"] * 3, ["c"] * 2, ["d"]]
        vocab = build_vocabulary(sentences, max_size=2)
        assert len(vocab) == 5
        assert set(vocab.tokens) == {UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, "a", "b"}
        assert vocab.counts[UNK_ID] == 3
        assert vocab.counts.sum() == 11

    def test_id_of_unknown_raises_lookup_falls_back(self):
        vocab = build_vocabulary([["a"]])
        with pytest.raises(KeyError):
            vocab.id_of("zzz")
        assert vocab.lookup("zzz") == UNK_ID

    def test_round_trip_every_id(self):
        vocab = build_vocabulary([["a", "b", "c", "d"]])
        for i in range(len(vocab)):
            assert vocab.id_of(vocab.token_of(i)) == i

    def test_save_load_round_trip(self, tmp_path):
        vocab = build_vocabulary([["a", "a", "b"]])
        path = tmp_path / "vocab.tsv"
        vocab.save(path)
        again = Vocabulary.load(path)
        assert again.tokens == vocab.tokens
        np.testing.assert_array_equal(again.counts, vocab.counts)

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            build_vocabulary([])


class TestReadSentences:
    def test_skips_blank_lines(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("a b\n\n  \nc\n")
        assert list(read_sentences(path)) == [["a", "b"], ["c"]]

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(DataError):
            list(read_sentences(tmp_path / "nope.txt"))


class TestExtractInstances:
    def test_trigram_windows_most_recent_first(self):
        vocab = build_vocabulary([["a", "b"]])
        a, b = vocab.id_of("a"), vocab.id_of("b")
        inst = extract_instances(["a", "b"], vocab, n=3)
        got = [(list(x.context), x.target) for x in inst]
        assert got == [
            ([BOS_ID, BOS_ID], a),
            ([a, BOS_ID], b),
            ([b, a], EOS_ID),
        ]

    def test_instance_count_is_length_plus_one(self):
        vocab = build_vocabulary([["a", "b", "c"]])
        rng = np.random.default_rng(3)
        for _ in range(20):
            sent = list(rng.choice(["a", "b", "c"], size=rng.integers(1, 12)))
            inst = extract_instances(sent, vocab, n=4)
            assert len(inst) == len(sent) + 1
            assert inst[-1].target == EOS_ID

    def test_oov_tokens_become_unk(self):
        vocab = build_vocabulary([["a"]])
        inst = extract_instances(["q", "a"], vocab, n=2)
        assert inst[0].target == UNK_ID
        assert inst[1].context[0] == UNK_ID

    def test_arrays_shape_and_dtype(self):
        vocab = build_vocabulary([["a", "b"]])
        ctx, tgt = instance_arrays([["a", "b"], ["b"]], vocab, n=3)
        assert ctx.shape == (5, 2) and ctx.dtype == np.int32
        assert tgt.shape == (5,) and tgt.dtype == np.int32

    def test_order_below_two_rejected(self):
        vocab = build_vocabulary([["a"]])
        with pytest.raises(DataError):
            extract_instances(["a"], vocab, n=1)


class TestUnigram:
    def test_smoothed_example(self):
        # counts (2, 0) with smoothing 1 renormalise to (0.75, 0.25)
        dist = UnigramDistribution.from_counts(np.array([2.0, 0.0]), smoothing=1.0)
        np.testing.assert_allclose(dist.probs, [0.75, 0.25], atol=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            counts = rng.integers(0, 50, size=rng.integers(2, 30))
            for eps in (0.0, 0.5, 1.0):
                if eps == 0.0 and counts.sum() == 0:
                    continue
                dist = UnigramDistribution.from_counts(counts.astype(float), smoothing=eps)
                assert abs(dist.probs.sum() - 1.0) < 1e-9

    def test_excluded_ids_have_exactly_zero_mass(self):
        dist = UnigramDistribution.from_counts(
            np.array([3.0, 1.0, 2.0]), smoothing=1.0, exclude=(1,))
        assert dist.probs[1] == 0.0
        assert abs(dist.probs.sum() - 1.0) < 1e-12

    def test_vocab_unigram_masks_sentence_start(self):
        vocab = build_vocabulary([["a", "b", "a"]])
        dist = unigram_distribution(vocab, smoothing=1.0)
        assert dist.probs[BOS_ID] == 0.0
        assert dist.probs[vocab.id_of("a")] > dist.probs[vocab.id_of("b")]

    def test_all_zero_without_smoothing_rejected(self):
        with pytest.raises(DataError):
            UnigramDistribution.from_counts(np.zeros(4), smoothing=0.0)
