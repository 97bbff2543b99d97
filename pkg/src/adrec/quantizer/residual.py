"""Residual-quantization codebooks over item embeddings.

Three fitting modes:

* ``fixed`` — every level is a codebook fitted on the previous levels'
  residuals, no constraint on sizes.
* ``mr`` — multi-resolution: level sizes must be non-increasing, so early
  levels carry the dominant structure.
* ``mgmr`` — ``mr`` on all levels but the last, which is not fitted at
  all: its token is a salted hash of the item's discrete non-semantic
  fields, splitting items whose content embeddings coincide.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from adrec import _kernels
from adrec.quantizer.balanced_kmeans import balanced_kmeans
from adrec.quantizer.hashing import _splitmix64, hash_final_level

MODES = ("fixed", "mr", "mgmr")

_FORMAT_VERSION = 1


@dataclass
class Item:
    item_id: str
    embedding: np.ndarray
    non_semantic: dict
    latent_value: float = 0.0

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        if self.embedding.ndim != 1 or not np.isfinite(self.embedding).all():
            raise ValueError(f"item {self.item_id}: embedding must be a finite vector")
        if self.latent_value < 0:
            raise ValueError(f"item {self.item_id}: latent_value must be >= 0")


@dataclass(frozen=True)
class SemanticId:
    """A per-level token sequence with its per-level vocabulary sizes."""

    tokens: tuple
    level_vocab_sizes: tuple

    def __post_init__(self):
        if len(self.tokens) != len(self.level_vocab_sizes) or not self.tokens:
            raise ValueError("tokens and level_vocab_sizes must be equal, nonzero length")
        for t, (tok, size) in enumerate(zip(self.tokens, self.level_vocab_sizes)):
            if not 0 <= tok < size:
                raise ValueError(f"token {tok} out of range [0, {size}) at level {t}")

    def __len__(self):
        return len(self.tokens)


@dataclass
class QuantizerModel:
    mode: str
    level_vocab_sizes: tuple
    level_codebooks: list  # one (V_t, d) float64 matrix per semantic level
    hash_vocab_size: int | None
    hash_salt: int
    embedding_dim: int

    @property
    def n_levels(self):
        return len(self.level_vocab_sizes)

    @property
    def n_semantic_levels(self):
        return len(self.level_codebooks)


@dataclass
class FitTrace:
    """Per-level balanced assignments and residuals from fitting."""

    assignments: list = field(default_factory=list)
    mean_sq_residual: list = field(default_factory=list)
    final_residual: np.ndarray | None = None


def _validate_sizes(level_vocab_sizes, mode):
    sizes = tuple(int(s) for s in level_vocab_sizes)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError("level vocab sizes must be positive")
    if mode == "mgmr" and len(sizes) < 2:
        raise ValueError("mgmr needs at least one semantic level plus the hashed level")
    semantic = sizes[:-1] if mode == "mgmr" else sizes
    if mode in ("mr", "mgmr") and any(a < b for a, b in zip(semantic, semantic[1:])):
        raise ValueError(f"{mode} requires non-increasing semantic level sizes, got {semantic}")
    return sizes


def fit_quantizer(items, level_vocab_sizes, mode="mgmr", seed=0, max_iters=50,
                  return_trace=False):
    """Fit the residual codebook chain over a catalog's embeddings.

    Level 1 clusters the embeddings; each later semantic level clusters
    what the previous levels left unexplained. In ``mgmr`` the last level
    gets no codebook. Deterministic given the seed.
    """
    mode = str(mode).lower()
    sizes = _validate_sizes(level_vocab_sizes, mode)
    items = list(items)
    if not items:
        raise ValueError("cannot fit a quantizer on an empty catalog")
    emb = np.stack([it.embedding for it in items]).astype(np.float64)
    dim = emb.shape[1]

    n_semantic = len(sizes) - 1 if mode == "mgmr" else len(sizes)
    trace = FitTrace()
    residual = emb.copy()
    codebooks = []
    for t in range(n_semantic):
        centroids, assign = balanced_kmeans(residual, sizes[t], max_iters=max_iters,
                                            seed=seed + t)
        codebooks.append(centroids)
        residual = residual - centroids[assign]
        trace.assignments.append(assign)
        trace.mean_sq_residual.append(float(np.mean(np.einsum("nd,nd->n", residual, residual))))
    trace.final_residual = residual

    model = QuantizerModel(
        mode=mode,
        level_vocab_sizes=sizes,
        level_codebooks=codebooks,
        hash_vocab_size=sizes[-1] if mode == "mgmr" else None,
        hash_salt=int(_splitmix64(seed) % (1 << 32)),
        embedding_dim=dim,
    )
    return (model, trace) if return_trace else model


def _semantic_tokens(model, embeddings):
    residual = np.ascontiguousarray(embeddings, dtype=np.float64)
    tokens = np.empty((embeddings.shape[0], model.n_semantic_levels), dtype=np.int64)
    for t, centroids in enumerate(model.level_codebooks):
        idx = _kernels.nearest_centroid(residual, np.ascontiguousarray(centroids))
        tokens[:, t] = idx
        residual = residual - centroids[idx]
    return tokens


def encode_item(model, item):
    """Assign the item's semantic ID: nearest-centroid walk down the
    residual chain, plus the hashed token in ``mgmr`` mode."""
    if item.embedding.shape[0] != model.embedding_dim:
        raise ValueError(
            f"embedding dim {item.embedding.shape[0]} != model dim {model.embedding_dim}")
    toks = _semantic_tokens(model, item.embedding[None, :])[0]
    tokens = [int(t) for t in toks]
    if model.mode == "mgmr":
        tokens.append(hash_final_level(item.non_semantic, model.hash_vocab_size,
                                       model.hash_salt))
    return SemanticId(tuple(tokens), model.level_vocab_sizes)


def encode_items(model, items):
    """Batch ``encode_item``; one pass over the catalog per level."""
    items = list(items)
    if not items:
        return []
    emb = np.stack([it.embedding for it in items]).astype(np.float64)
    if emb.shape[1] != model.embedding_dim:
        raise ValueError(f"embedding dim {emb.shape[1]} != model dim {model.embedding_dim}")
    toks = _semantic_tokens(model, emb)
    sids = []
    for i, it in enumerate(items):
        tokens = [int(t) for t in toks[i]]
        if model.mode == "mgmr":
            tokens.append(hash_final_level(it.non_semantic, model.hash_vocab_size,
                                           model.hash_salt))
        sids.append(SemanticId(tuple(tokens), model.level_vocab_sizes))
    return sids


def save_quantizer(model, path):
    """Persist to a single .npz; round-trips losslessly (float64 binary)."""
    header = {
        "format_version": _FORMAT_VERSION,
        "mode": model.mode,
        "level_vocab_sizes": list(model.level_vocab_sizes),
        "hash_vocab_size": model.hash_vocab_size,
        "hash_salt": model.hash_salt,
        "embedding_dim": model.embedding_dim,
    }
    arrays = {f"codebook_{t}": cb for t, cb in enumerate(model.level_codebooks)}
    buf = io.BytesIO()
    np.savez(buf, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
             **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_quantizer(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header["format_version"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported quantizer format {header['format_version']}")
        codebooks = [data[f"codebook_{t}"]
                     for t in range(len([k for k in data.files if k.startswith("codebook_")]))]
    return QuantizerModel(
        mode=header["mode"],
        level_vocab_sizes=tuple(header["level_vocab_sizes"]),
        level_codebooks=codebooks,
        hash_vocab_size=header["hash_vocab_size"],
        hash_salt=header["hash_salt"],
        embedding_dim=header["embedding_dim"],
    )
