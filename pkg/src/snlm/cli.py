"""Command-line interface.

Subcommands: ``vocab``, ``classes``, ``train``, ``ppl``, ``score``, ``info``,
``bench``. Exit codes: 0 success, 1 usage error, 2 data or model error.
Every subcommand is deterministic given identical inputs and ``--seed``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .corpus import (BOS_ID, EOS_ID, Vocabulary, build_vocabulary,
                     instance_arrays, read_sentences, unigram_distribution)
from .errors import SnlmError
from .evaluation import (memory_estimate, perplexity, query_benchmark,
                         score_nbest)
from .model import (REGIME_CLASS, REGIME_STANDARD, REGIME_TREE, ModelConfig,
                    init_parameters)
from .modelfile import load_model, payload_nbytes, save_model
from .partitioning import (VocabularyTree, WordClassing, brown_clustering,
                           frequency_binning, huffman_tree)
from .training import TrainingConfig, empirical_unigram, train

_REGIME_NAMES = {"standard": REGIME_STANDARD, "class": REGIME_CLASS,
                 "tree": REGIME_TREE}


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage failures exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _bool_flag(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snlm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("vocab", help="count tokens and write a vocabulary file")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--max-size", type=int, default=None)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("classes", help="build a word partition or tree")
    p.add_argument("--vocab", required=True)
    p.add_argument("--method", choices=("binning", "brown", "huffman"),
                   default="binning")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--num-classes", type=int, default=None,
                   help="default: ceil(sqrt(|V|))")
    p.add_argument("--corpus", help="required for brown; refines huffman counts")
    p.add_argument("--max-iterations", type=int, default=20)
    p.set_defaults(func=cmd_classes)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("corpus")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--vocab", help="vocabulary file (default: build from corpus)")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--max-size", type=int, default=None)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--dim", type=int, default=500)
    p.add_argument("--regime", choices=sorted(_REGIME_NAMES), default="class")
    p.add_argument("--diagonal", type=_bool_flag, default=True,
                   metavar="{true,false}")
    p.add_argument("--algorithm", choices=("nce", "ml_sgd"), default="nce")
    p.add_argument("--k", type=int, default=10, help="NCE noise samples")
    p.add_argument("--classes-file")
    p.add_argument("--tree-file")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--l2", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--valid-fraction", type=float, default=0.05)
    p.add_argument("--log-file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ppl", help="corpus perplexity")
    p.add_argument("model")
    p.add_argument("corpus")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_ppl)

    p = sub.add_parser("score", help="rescore an n-best list")
    p.add_argument("model")
    p.add_argument("nbest", help="lines 'sent_id ||| hypothesis ||| ...'")
    p.add_argument("--unnormalised", action="store_true",
                   help="sum raw scores instead of log-probabilities")
    p.add_argument("-o", "--output", help="default: stdout")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("info", help="describe a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("bench", help="query-cost benchmark")
    p.add_argument("model")
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def cmd_vocab(args) -> int:
    vocab = build_vocabulary(args.corpus, min_count=args.min_count,
                             max_size=args.max_size)
    vocab.save(args.output)
    print(f"{len(vocab)} entries ({len(vocab) - 3} words) -> {args.output}")
    return 0


def _default_num_classes(vocab_size: int) -> int:
    return max(1, math.ceil(math.sqrt(vocab_size)))


def cmd_classes(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    K = args.num_classes or _default_num_classes(len(vocab))

    if args.method == "huffman":
        counts = vocab.counts.copy()
        if args.corpus:
            counts[EOS_ID] = sum(1 for _ in read_sentences(args.corpus))
        support = {w: int(counts[w]) for w in range(len(vocab)) if w != BOS_ID}
        tree = huffman_tree(support)
        tree.save(args.output, vocab)
        print(f"huffman tree: {tree.num_leaves} leaves, "
              f"max depth {max(tree.depth(int(w)) for w in tree.words)} -> {args.output}")
        return 0

    if args.method == "brown":
        if not args.corpus:
            raise SnlmError("brown clustering needs --corpus")
        sentences = list(read_sentences(args.corpus))
        classing = brown_clustering(sentences, vocab, K,
                                    max_iterations=args.max_iterations)
    else:
        classing = frequency_binning(unigram_distribution(vocab), K)
    classing.save(args.output, vocab)
    print(f"{classing.num_classes} classes over {len(vocab)} words -> {args.output}")
    return 0


def cmd_train(args) -> int:
    sentences = list(read_sentences(args.corpus))
    if args.vocab:
        vocab = Vocabulary.load(args.vocab)
    else:
        vocab = build_vocabulary(sentences, min_count=args.min_count,
                                 max_size=args.max_size)
    contexts, targets = instance_arrays(sentences, vocab, args.order)
    target_probs = empirical_unigram(targets, len(vocab))

    regime = _REGIME_NAMES[args.regime]
    classing = tree = None
    if regime == REGIME_CLASS:
        if args.classes_file:
            classing = WordClassing.load(args.classes_file, vocab)
        else:
            classing = frequency_binning(target_probs,
                                         _default_num_classes(len(vocab)))
    elif regime == REGIME_TREE:
        if args.tree_file:
            tree = VocabularyTree.load(args.tree_file, vocab)
        else:
            counts = np.bincount(targets, minlength=len(vocab))
            tree = huffman_tree({w: int(counts[w]) for w in range(len(vocab))
                                 if w != BOS_ID})

    config = ModelConfig(order=args.order, dim=args.dim, regime=regime,
                         diagonal=args.diagonal, vocab_size=len(vocab),
                         classing=classing, tree=tree)
    params = init_parameters(config, seed=args.seed, unigram=target_probs)
    tconf = TrainingConfig(algorithm=args.algorithm, learning_rate=args.lr,
                           minibatch_size=args.batch, epochs=args.epochs,
                           l2_strength=args.l2, noise_samples=args.k,
                           rng_seed=args.seed,
                           validation_fraction=args.valid_fraction)
    if args.threads > 1:
        print("note: training runs single-worker; --threads applies to ppl")

    print(f"{len(targets)} instances, |V|={len(vocab)}, regime={args.regime}, "
          f"algorithm={args.algorithm}")
    print("epoch\ttrain_ppl\tvalid_ppl\tlr\tseconds")
    result = train(params, contexts, targets, tconf, log_file=args.log_file)
    for ep in result.epochs:
        print(f"{ep.epoch}\t{ep.train_ppl:.3f}\t{ep.valid_ppl:.3f}"
              f"\t{ep.learning_rate:.6g}\t{ep.seconds:.2f}")

    sizes = save_model(args.model, params, vocab)
    total = sum(sizes.values())
    print(f"saved {args.model}: {total} bytes "
          f"({sizes['payload']} parameter payload)")
    return 0


def cmd_ppl(args) -> int:
    params, vocab = load_model(args.model)
    sentences = list(read_sentences(args.corpus))
    report = perplexity(params, sentences, vocab, threads=args.threads)
    print(f"tokens\t{report.token_count}")
    print(f"oov\t{report.oov_count}")
    print(f"log_prob\t{report.total_log_prob:.4f}")
    print(f"perplexity\t{report.perplexity:.4f}")
    print(f"queries_per_sec\t{report.queries_per_second:.0f}")
    print(f"macs_per_query\t{report.macs_per_query:.0f}")
    return 0


def cmd_score(args) -> int:
    params, vocab = load_model(args.model)
    with open(args.nbest, encoding="utf-8") as fh:
        entries, errors = score_nbest(params, fh, vocab,
                                      unnormalised=args.unnormalised)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for e in entries:
            fields = [e.sent_id, e.hypothesis]
            if e.rest:
                fields.append(e.rest)
            fields.append(f"{e.score:.6f}")
            out.write(" ||| ".join(fields) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    for line_no, reason in errors:
        print(f"warning: line {line_no}: {reason}", file=sys.stderr)
    if errors and not entries:
        raise SnlmError("no scorable hypotheses in the n-best list")
    return 0


def cmd_info(args) -> int:
    params, vocab = load_model(args.model)
    cfg = params.config
    est = memory_estimate(cfg, vocab)
    print(f"order\t{cfg.order}")
    print(f"dim\t{cfg.dim}")
    print(f"regime\t{cfg.regime}")
    print(f"diagonal\t{cfg.diagonal}")
    print(f"vocab_size\t{cfg.vocab_size}")
    if cfg.classing is not None:
        print(f"classes\t{cfg.classing.num_classes}")
    if cfg.tree is not None:
        depths = [cfg.tree.depth(int(w)) for w in cfg.tree.words]
        print(f"tree_nodes\t{cfg.tree.num_nodes}")
        print(f"tree_depth_max\t{max(depths)}")
    print(f"embedding_params\t{est.embedding_params}")
    print(f"bias_params\t{est.bias_params}")
    print(f"context_params\t{est.context_params}")
    print(f"structure_params\t{est.structure_params}")
    print(f"parameter_count\t{est.parameter_count}")
    print(f"payload_bytes\t{est.payload_bytes}")
    print(f"payload_megabytes\t{est.megabytes:.2f}")
    print(f"file_bytes\t{os.path.getsize(args.model)}")
    assert est.payload_bytes == payload_nbytes(params)
    return 0


def cmd_bench(args) -> int:
    params, vocab = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    layout = params.config.layout()
    contexts = rng.choice(layout.support,
                          size=(args.queries, params.config.context_size))
    report = query_benchmark(params, contexts)
    print(f"queries\t{report.queries}")
    print(f"macs_per_query\t{report.macs_per_query:.0f}")
    print(f"macs_per_query_unnorm\t{report.macs_per_query_unnormalised:.0f}")
    print(f"queries_per_sec\t{report.queries_per_second:.0f}")
    print(f"queries_per_sec_unnorm\t{report.queries_per_second_unnormalised:.0f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (SnlmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
