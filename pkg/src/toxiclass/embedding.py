"""Token-sequence feature representations: lookup table, per-token vectors,
and sentence-level masked max pooling."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import PAD_ID, TokenSequence, Vocabulary
from .errors import DataError

DEFAULT_DIM = 768
INIT_SCALE = 0.05


@dataclass
class EmbeddingTable:
    """Vocabulary-indexed matrix of D-dimensional vectors.

    Row 0 (PAD) is pinned to zero and, when trainable, receives no gradient.
    """

    matrix: np.ndarray
    trainable: bool = True
    source: str = "random-init"  # random-init | file

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.matrix[PAD_ID, :] = 0.0

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def random_table(vocab_size: int, dim: int = DEFAULT_DIM, seed: int = 0,
                 trainable: bool = True) -> EmbeddingTable:
    """Seeded uniform init in [-0.05, 0.05]; PAD row zero."""
    rng = np.random.default_rng(np.random.PCG64(seed))
    matrix = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, dim))
    return EmbeddingTable(matrix, trainable=trainable, source="random-init")


def load_table(path, vocab: Vocabulary, trainable: bool = False) -> EmbeddingTable:
    """Load per-token vectors from a text file.

    Format: first line ``vocab_size D``, then one ``token v1 ... vD`` row per
    token, space-delimited decimal floats. Vocabulary tokens absent from the
    file fall back to the file's UNK row (zeros if the file has none); the PAD
    row is forced to zero regardless of file content.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read embedding file {path}: {exc}") from exc
    if not lines:
        raise DataError(f"embedding file {path} is empty")
    header = lines[0].split()
    if len(header) != 2:
        raise DataError(f"embedding file {path}: bad header {lines[0]!r}")
    try:
        declared, dim = int(header[0]), int(header[1])
    except ValueError as exc:
        raise DataError(f"embedding file {path}: bad header {lines[0]!r}") from exc

    vectors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        token, values = parts[0], parts[1:]
        if len(values) != dim:
            raise DataError(
                f"embedding file {path} line {lineno}: expected {dim} values, "
                f"got {len(values)}"
            )
        try:
            row = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"embedding file {path} line {lineno}: {exc}") from exc
        if not np.all(np.isfinite(row)):
            raise DataError(f"embedding file {path} line {lineno}: non-finite value")
        vectors[token] = row
    if len(vectors) != declared:
        raise DataError(
            f"embedding file {path}: header declares {declared} tokens, "
            f"file holds {len(vectors)}"
        )

    from .corpus import UNK_TOKEN

    unk_row = vectors.get(UNK_TOKEN, np.zeros(dim))
    matrix = np.empty((len(vocab), dim), dtype=np.float64)
    for idx, token in enumerate(vocab.id_to_token):
        matrix[idx] = vectors.get(token, unk_row)
    return EmbeddingTable(matrix, trainable=trainable, source="file")


def write_table(path, table: EmbeddingTable, vocab: Vocabulary) -> None:
    """Write the table in the load_table text format (floats via repr)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{table.vocab_size} {table.dim}\n")
        for token, row in zip(vocab.id_to_token, table.matrix):
            fh.write(token + " " + " ".join(repr(float(v)) for v in row) + "\n")


@dataclass
class SequenceEmbedding:
    """Per-token vectors for one sequence; masked rows are zero."""

    matrix: np.ndarray  # (L, D)
    mask: np.ndarray  # (L,)


def embed_sequence(seq: TokenSequence, table: EmbeddingTable) -> SequenceEmbedding:
    """Row i = table[input_ids[i]] * mask[i]."""
    ids = seq.input_ids
    if ids.min() < 0 or ids.max() >= table.vocab_size:
        raise DataError(
            f"token id out of range for table of size {table.vocab_size}"
        )
    matrix = table.matrix[ids] * seq.mask[:, None]
    return SequenceEmbedding(matrix, seq.mask.copy())


def pool_max(emb: SequenceEmbedding) -> np.ndarray:
    """Elementwise maximum over mask=1 positions only.

    A fully masked sequence yields the zero vector and a warning (degenerate
    sentence).
    """
    valid = emb.mask > 0.5
    if not valid.any():
        warnings.warn("pool_max over a fully masked sequence; returning zeros",
                      RuntimeWarning, stacklevel=2)
        return np.zeros(emb.matrix.shape[1], dtype=np.float64)
    return emb.matrix[valid].max(axis=0)
