"""End-to-end checks of the command-line interface."""
import numpy as np
import pytest

from snlm.cli import build_parser, main
from snlm.corpus import Vocabulary
from snlm.evaluation import perplexity
from snlm.modelfile import load_model
from snlm.partitioning import VocabularyTree, WordClassing


@pytest.fixture
def corpus(tmp_path):
    rng = np.random.default_rng(20)
    words = ["red", "green", "blue", "cat", "dog", "bird", "runs", "sits"]
    lines = []
    for _ in range(120):
        n = rng.integers(2, 7)
        lines.append(" ".join(rng.choice(words, size=n)))
    path = tmp_path / "train.txt"
    path.write_text("\n".join(lines) + "\n")
    heldout = tmp_path / "heldout.txt"
    heldout.write_text("\n".join(lines[:20]) + "\n")
    return path, heldout


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestParserDefaults:
    def test_training_defaults(self):
        args = build_parser().parse_args(["train", "c.txt", "--model", "m.bin"])
        assert args.order == 5
        assert args.dim == 500
        assert args.regime == "class"
        assert args.algorithm == "nce"
        assert args.k == 10
        assert args.diagonal is True
        assert args.lr == 0.1
        assert args.batch == 64
        assert args.epochs == 10
        assert args.l2 == 1e-5
        assert args.threads == 1

    def test_diagonal_flag_parses_booleans(self):
        parser = build_parser()
        on = parser.parse_args(["train", "c", "--model", "m",
                                "--diagonal", "true"])
        off = parser.parse_args(["train", "c", "--model", "m",
                                 "--diagonal", "false"])
        assert on.diagonal is True and off.diagonal is False


class TestVocabCommand:
    def test_builds_and_saves(self, tmp_path, capsys):
        corpus = tmp_path / "c.txt"
        corpus.write_text("a a b\nb a c\n")
        out = tmp_path / "vocab.tsv"
        code, stdout, _ = run(capsys, "vocab", corpus, "-o", out)
        assert code == 0
        vocab = Vocabulary.load(out)
        assert vocab.id_of("a") == 3  # most frequent word first
        assert vocab.counts[vocab.id_of("a")] == 3
        assert "6 entries (3 words)" in stdout

    def test_min_count(self, tmp_path, capsys):
        corpus = tmp_path / "c.txt"
        corpus.write_text("a a b\n")
        out = tmp_path / "vocab.tsv"
        code, _, _ = run(capsys, "vocab", corpus, "-o", out, "--min-count", "2")
        assert code == 0
        vocab = Vocabulary.load(out)
        assert "b" not in vocab


class TestClassesCommand:
    def test_binning(self, tmp_path, capsys, corpus):
        train, _ = corpus
        vocab_path = tmp_path / "vocab.tsv"
        run(capsys, "vocab", train, "-o", vocab_path)
        out = tmp_path / "classes.tsv"
        code, stdout, _ = run(capsys, "classes", "--vocab", vocab_path,
                              "--method", "binning", "--num-classes", "3",
                              "-o", out)
        assert code == 0 and "3 classes" in stdout
        classing = WordClassing.load(out, Vocabulary.load(vocab_path))
        assert classing.num_classes == 3

    def test_huffman(self, tmp_path, capsys, corpus):
        train, _ = corpus
        vocab_path = tmp_path / "vocab.tsv"
        run(capsys, "vocab", train, "-o", vocab_path)
        out = tmp_path / "tree.txt"
        code, stdout, _ = run(capsys, "classes", "--vocab", vocab_path,
                              "--method", "huffman", "--corpus", train,
                              "-o", out)
        assert code == 0 and "huffman tree" in stdout
        vocab = Vocabulary.load(vocab_path)
        tree = VocabularyTree.load(out, vocab)
        assert tree.num_leaves == len(vocab) - 1

    def test_brown_requires_corpus(self, tmp_path, capsys, corpus):
        train, _ = corpus
        vocab_path = tmp_path / "vocab.tsv"
        run(capsys, "vocab", train, "-o", vocab_path)
        code, _, stderr = run(capsys, "classes", "--vocab", vocab_path,
                              "--method", "brown", "-o", tmp_path / "x")
        assert code == 2
        assert "brown clustering needs --corpus" in stderr


class TestTrainAndEvaluate:
    def train_model(self, tmp_path, capsys, corpus, *extra):
        train, _ = corpus
        model = tmp_path / "model.bin"
        code, stdout, stderr = run(
            capsys, "train", train, "--model", model, "--order", "3",
            "--dim", "8", "--epochs", "3", "--batch", "32", "--seed", "7",
            *extra)
        assert code == 0, stderr
        return model, stdout

    def test_train_writes_a_loadable_model(self, tmp_path, capsys, corpus):
        model, stdout = self.train_model(tmp_path, capsys, corpus)
        params, vocab = load_model(model)
        assert params.config.order == 3
        assert params.config.regime == "class_factored"
        assert "saved" in stdout
        # one table line per epoch
        lines = [l for l in stdout.splitlines()
                 if l.split("\t")[0].isdigit() and "\t" in l]
        assert len(lines) == 3

    def test_ppl_matches_library_evaluation(self, tmp_path, capsys, corpus):
        _, heldout = corpus
        model, _ = self.train_model(tmp_path, capsys, corpus)
        code, stdout, _ = run(capsys, "ppl", model, heldout)
        assert code == 0
        fields = dict(line.split("\t") for line in stdout.strip().splitlines())
        params, vocab = load_model(model)
        import snlm.corpus as corpus_mod
        sentences = list(corpus_mod.read_sentences(heldout))
        want = perplexity(params, sentences, vocab)
        assert float(fields["perplexity"]) == round(want.perplexity, 4)
        assert int(fields["tokens"]) == want.token_count

    def test_threaded_ppl_identical(self, tmp_path, capsys, corpus):
        _, heldout = corpus
        model, _ = self.train_model(tmp_path, capsys, corpus)
        _, out1, _ = run(capsys, "ppl", model, heldout)
        _, out3, _ = run(capsys, "ppl", model, heldout, "--threads", "3")
        keep = lambda s: [l for l in s.splitlines()
                          if not l.startswith("queries_per_sec")]
        assert keep(out1) == keep(out3)

    def test_same_seed_reproduces_the_model_file(self, tmp_path, capsys, corpus):
        model_a, _ = self.train_model(tmp_path, capsys, corpus)
        saved = model_a.read_bytes()
        model_b, _ = self.train_model(tmp_path, capsys, corpus)
        assert model_b.read_bytes() == saved

    def test_score_appends_scores(self, tmp_path, capsys, corpus):
        model, _ = self.train_model(tmp_path, capsys, corpus)
        nbest = tmp_path / "nbest.txt"
        nbest.write_text("1 ||| red cat runs ||| tm=0.5\n"
                         "mangled\n"
                         "1 ||| red dog\n")
        out = tmp_path / "scored.txt"
        code, _, stderr = run(capsys, "score", model, nbest, "-o", out)
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 2
        first = lines[0].split(" ||| ")
        assert first[:3] == ["1", "red cat runs", "tm=0.5"]
        float(first[3])
        assert "line 2" in stderr

    def test_unnormalised_scores_differ(self, tmp_path, capsys, corpus):
        model, _ = self.train_model(tmp_path, capsys, corpus)
        nbest = tmp_path / "nbest.txt"
        nbest.write_text("1 ||| red cat\n")
        out_n = tmp_path / "n.txt"
        out_u = tmp_path / "u.txt"
        run(capsys, "score", model, nbest, "-o", out_n)
        run(capsys, "score", model, nbest, "-o", out_u, "--unnormalised")
        norm = float(out_n.read_text().split(" ||| ")[-1])
        raw = float(out_u.read_text().split(" ||| ")[-1])
        assert norm != raw

    def test_info_reports_consistent_accounting(self, tmp_path, capsys, corpus):
        model, _ = self.train_model(tmp_path, capsys, corpus)
        code, stdout, _ = run(capsys, "info", model)
        assert code == 0
        fields = dict(line.split("\t") for line in stdout.strip().splitlines())
        assert fields["regime"] == "class_factored"
        assert int(fields["payload_bytes"]) == 4 * int(fields["parameter_count"])
        total = (int(fields["embedding_params"]) + int(fields["bias_params"])
                 + int(fields["context_params"]) + int(fields["structure_params"]))
        assert total == int(fields["parameter_count"])

    def test_bench_runs(self, tmp_path, capsys, corpus):
        model, _ = self.train_model(tmp_path, capsys, corpus)
        code, stdout, _ = run(capsys, "bench", model, "--queries", "50")
        assert code == 0
        fields = dict(line.split("\t") for line in stdout.strip().splitlines())
        assert int(fields["queries"]) == 50
        assert float(fields["macs_per_query"]) > float(
            fields["macs_per_query_unnorm"])

    def test_standard_and_tree_regimes_train(self, tmp_path, capsys, corpus):
        for regime, algo in (("standard", "nce"), ("tree", "ml_sgd")):
            model, _ = self.train_model(tmp_path, capsys, corpus,
                                        "--regime", regime,
                                        "--algorithm", algo, "--lr", "0.05")
            params, _ = load_model(model)
            assert params.config.regime.startswith(regime)


class TestExitCodes:
    def test_usage_errors_return_one(self, capsys):
        assert main(["definitely-not-a-command"]) == 1
        capsys.readouterr()
        assert main(["train"]) == 1  # missing required arguments
        capsys.readouterr()
        assert main([]) == 1
        capsys.readouterr()

    def test_data_errors_return_two(self, tmp_path, capsys):
        code, _, stderr = run(capsys, "ppl", tmp_path / "missing.bin",
                              tmp_path / "missing.txt")
        assert code == 2
        assert "error:" in stderr

    def test_bad_model_file_returns_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"not a model at all")
        code, _, stderr = run(capsys, "info", bad)
        assert code == 2
        assert "error:" in stderr
