"""Binary model files: a self-contained little-endian format.

Layout (all integers little-endian)::

    magic   "SNLM" | version u32 | order u32 | dim u32 | regime u8
    diagonal u8 | vocab_size u64
    vocab      [len u32, utf8 bytes] x V, then counts V x i64
    structure  class: K u32, class ids V x i32
               tree:  num_nodes u32, root u32,
                      [parent, left, right, leaf_word] x num_nodes (i32)
               standard: empty
    payload    parameter arrays as float32, fixed order (Q, R, b, C_j.., S, t)

Parameters are stored as 32-bit reals regardless of the in-memory dtype, so
float32 models round-trip bit for bit.
"""

from __future__ import annotations

import struct

import numpy as np

from .corpus import Vocabulary
from .errors import ModelFormatError
from .model import (REGIME_CLASS, REGIME_STANDARD, REGIME_TREE, ModelConfig,
                    ModelParameters)
from .partitioning import VocabularyTree, WordClassing

MAGIC = b"SNLM"
VERSION = 1
_HEADER = struct.Struct("<4sIIIBBQ")
_REGIME_CODE = {REGIME_STANDARD: 0, REGIME_CLASS: 1, REGIME_TREE: 2}
_CODE_REGIME = {v: k for k, v in _REGIME_CODE.items()}


def payload_nbytes(params: ModelParameters) -> int:
    return 4 * sum(a.size for _, a in params.arrays())


def save_model(path, params: ModelParameters, vocab: Vocabulary) -> dict:
    """Write a model file; returns the byte size of each section."""
    cfg = params.config
    if len(vocab) != cfg.vocab_size:
        raise ModelFormatError("vocabulary size disagrees with the model")
    sizes = {}
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, cfg.order, cfg.dim,
                              _REGIME_CODE[cfg.regime], int(cfg.diagonal),
                              cfg.vocab_size))
        sizes["header"] = _HEADER.size

        n = 0
        for tok in vocab.tokens:
            raw = tok.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            n += 4 + len(raw)
        counts = np.ascontiguousarray(vocab.counts, dtype="<i8").tobytes()
        fh.write(counts)
        sizes["vocab"] = n + len(counts)

        if cfg.regime == REGIME_CLASS:
            blob = struct.pack("<I", cfg.classing.num_classes)
            blob += np.ascontiguousarray(cfg.classing.class_of, dtype="<i4").tobytes()
            fh.write(blob)
            sizes["structure"] = len(blob)
        elif cfg.regime == REGIME_TREE:
            tree = cfg.tree
            blob = struct.pack("<II", tree.num_nodes, tree.root)
            nodes = np.stack([tree.parent, tree.left, tree.right, tree.leaf_word], axis=1)
            blob += np.ascontiguousarray(nodes, dtype="<i4").tobytes()
            fh.write(blob)
            sizes["structure"] = len(blob)
        else:
            sizes["structure"] = 0

        n = 0
        for _, arr in params.arrays():
            raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            fh.write(raw)
            n += len(raw)
        sizes["payload"] = n
    return sizes


def _read_exact(fh, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise ModelFormatError("truncated model file")
    return raw


def load_model(path):
    """Read a model file back into (ModelParameters, Vocabulary)."""
    with open(path, "rb") as fh:
        header = _read_exact(fh, _HEADER.size)
        magic, version, order, dim, regime_code, diagonal, vocab_size = \
            _HEADER.unpack(header)
        if magic != MAGIC:
            raise ModelFormatError("not a model file (bad magic)")
        if version != VERSION:
            raise ModelFormatError(f"unsupported model file version {version}")
        if regime_code not in _CODE_REGIME:
            raise ModelFormatError(f"unknown regime code {regime_code}")
        regime = _CODE_REGIME[regime_code]

        tokens = []
        for _ in range(vocab_size):
            (tlen,) = struct.unpack("<I", _read_exact(fh, 4))
            tokens.append(_read_exact(fh, tlen).decode("utf-8"))
        counts = np.frombuffer(_read_exact(fh, 8 * vocab_size), dtype="<i8")
        vocab = Vocabulary(tokens, counts.astype(np.int64))

        classing = tree = None
        if regime == REGIME_CLASS:
            (K,) = struct.unpack("<I", _read_exact(fh, 4))
            class_of = np.frombuffer(_read_exact(fh, 4 * vocab_size), dtype="<i4")
            classing = WordClassing(class_of.copy(), K)
        elif regime == REGIME_TREE:
            num_nodes, root = struct.unpack("<II", _read_exact(fh, 8))
            flat = np.frombuffer(_read_exact(fh, 16 * num_nodes), dtype="<i4")
            nodes = flat.reshape(num_nodes, 4)
            if root != num_nodes - 1:
                raise ModelFormatError("tree root must be the last node")
            tree = VocabularyTree(nodes[:, 0].copy(), nodes[:, 1].copy(),
                                  nodes[:, 2].copy(), nodes[:, 3].copy())

        config = ModelConfig(order=order, dim=dim, regime=regime,
                             diagonal=bool(diagonal), vocab_size=vocab_size,
                             classing=classing, tree=tree)
        config.validate()

        V, D = vocab_size, dim
        def block(shape):
            n = int(np.prod(shape))
            raw = _read_exact(fh, 4 * n)
            return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

        Q = block((V, D))
        R = block((V, D))
        b = block((V,))
        cshape = (D,) if diagonal else (D, D)
        C = [block(cshape) for _ in range(order - 1)]
        S = t = None
        if regime == REGIME_CLASS:
            S = block((classing.num_classes, D))
            t = block((classing.num_classes,))
        elif regime == REGIME_TREE:
            S = block((tree.num_nodes - 1, D))
            t = block((tree.num_nodes - 1,))
        if fh.read(1):
            raise ModelFormatError("trailing bytes after the parameter payload")

    params = ModelParameters(config, Q, R, b, C, S, t)
    return params, vocab
