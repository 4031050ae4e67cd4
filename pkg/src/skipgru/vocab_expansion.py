"""Vocabulary expansion: map an external word-embedding space into the trained
RNN embedding space with un-regularized least squares over shared words, then
encode sentences whose words were never seen in training.

The fitted map W solves min_W sum_shared ||W v_ext - v_rnn||^2.  An expanded
lookup resolves each token by precedence: native RNN embedding, else W v_ext,
else the unk embedding, trying the exact token before its lowercased form at
each stage.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary, tokenize
from .encoder import encode_vectors
from .errors import CheckpointError, ConfigError, InputError, ShapeError
from .fileio import canonical_json
from .trainer import SkipGruModel


@dataclass
class ExternalEmbeddings:
    tokens: list[str]
    vectors: np.ndarray  # (n_tokens, ext_dim)
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.tokens):
            raise InputError(f"need one vector row per token: {len(self.tokens)} "
                             f"tokens, vectors {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise InputError("external embedding vectors contain non-finite entries")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise InputError("external embedding tokens are not unique")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def read_embeddings_text(path) -> tuple[ExternalEmbeddings, int]:
    """Parse the textual interchange format: a "count dim" header line, then
    one token and dim floats per line.  Multi-word entries (embedded spaces or
    underscores) are skipped; returns (embeddings, skipped_count)."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise InputError(f"{path}: header must be 'count dim'")
        try:
            declared, dim = int(head[0]), int(head[1])
        except ValueError as exc:
            raise InputError(f"{path}: non-integer header") from exc
        tokens: list[str] = []
        rows: list[list[float]] = []
        skipped = 0
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) > dim + 1 or "_" in parts[0]:
                skipped += 1
                continue
            if len(parts) < dim + 1:
                raise InputError(f"{path}:{lineno}: expected {dim} floats after "
                                 f"the token, found {len(parts) - 1}")
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad float") from exc
            tokens.append(parts[0])
    if len(tokens) + skipped != declared:
        raise InputError(f"{path}: header declares {declared} entries, "
                         f"found {len(tokens) + skipped}")
    vectors = np.asarray(rows, dtype=np.float64).reshape(len(tokens), dim)
    return ExternalEmbeddings(tokens=tokens, vectors=vectors), skipped


@dataclass
class ExpansionMap:
    W: np.ndarray           # (rnn_embed_dim, ext_dim)
    shared_count: int
    residual_rms: float
    rank_deficient: bool = False


def shared_tokens(ext: ExternalEmbeddings, vocab: Vocabulary) -> list[str]:
    """Training-vocab tokens (reserved ids excluded) present verbatim in ext."""
    return [t for t in vocab.id_to_token[2:] if t in ext.index]


def fit_expansion(ext: ExternalEmbeddings, model: SkipGruModel) -> ExpansionMap:
    """Least-squares fit of W on the tokens both vocabularies share.

    Solved per output dimension from one SVD factorization (numpy lstsq),
    which doubles as the pseudoinverse fallback when the shared-token design
    matrix is rank deficient.
    """
    shared = shared_tokens(ext, model.vocab)
    if not shared:
        raise ConfigError("no tokens shared between the external embeddings "
                          "and the model vocabulary")
    if len(shared) < model.config.embed_dim:
        warnings.warn(f"only {len(shared)} shared tokens for a "
                      f"{model.config.embed_dim}-dim embedding space; "
                      f"the fitted map will be underdetermined")
    X = ext.vectors[[ext.index[t] for t in shared]]          # (s, ext_dim)
    Y = model.embedding[[model.vocab.token_to_id[t] for t in shared]]
    sol, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)      # sol: (ext_dim, rnn_dim)
    W = np.ascontiguousarray(sol.T)
    residual = X @ sol - Y
    rms = float(np.sqrt(np.mean(residual * residual)))
    return ExpansionMap(W=W, shared_count=len(shared), residual_rms=rms,
                        rank_deficient=bool(rank < min(X.shape)))


NATIVE, MAPPED, UNK = "native", "mapped", "unk"


@dataclass
class ExpandedLookup:
    """Total token-to-vector resolver over the union vocabulary."""

    model: SkipGruModel
    ext: ExternalEmbeddings
    map: ExpansionMap

    def __post_init__(self):
        emb = self.model.embedding
        if self.map.W.shape != (emb.shape[1], self.ext.dim):
            raise ShapeError(f"expansion map is {self.map.W.shape}, expected "
                             f"({emb.shape[1]}, {self.ext.dim})")

    def resolve(self, token: str) -> tuple[str, np.ndarray]:
        """(source, vector) where source is "native", "mapped", or "unk"."""
        vocab, emb = self.model.vocab, self.model.embedding
        for cand in (token, token.lower()):
            if cand in vocab:
                return NATIVE, emb[vocab.token_to_id[cand]]
        for cand in (token, token.lower()):
            i = self.ext.index.get(cand)
            if i is not None:
                return MAPPED, self.map.W @ self.ext.vectors[i]
        return UNK, emb[vocab.unk_id]

    def vector(self, token: str) -> np.ndarray:
        return self.resolve(token)[1]

    def all_tokens(self) -> list[str]:
        """Union vocabulary: native words first, then ext-only words."""
        native = self.model.vocab.id_to_token[2:]
        seen = set(native)
        return native + [t for t in self.ext.tokens if t not in seen]


def expand(model: SkipGruModel, ext: ExternalEmbeddings,
           map: ExpansionMap) -> ExpandedLookup:
    return ExpandedLookup(model=model, ext=ext, map=map)


def encode_text(sentence: str, model: SkipGruModel,
                lookup: ExpandedLookup | None = None) -> np.ndarray:
    """Encode a raw sentence; with a lookup, out-of-vocabulary words resolve
    through the expansion map instead of collapsing to unk."""
    tokens = tokenize(sentence)
    emb = model.embedding
    if lookup is None:
        ids = model.vocab.ids_for(tokens) + [model.vocab.eos_id]
        X = emb[ids]
    else:
        rows = [lookup.vector(t) for t in tokens]
        rows.append(emb[model.vocab.eos_id])
        X = np.vstack(rows)
    return encode_vectors(X, model.encoder)


def _cosine_to_bank(q: np.ndarray, bank: np.ndarray) -> np.ndarray:
    qn = float(np.linalg.norm(q))
    norms = np.linalg.norm(bank, axis=1)
    denom = np.where(norms == 0.0, 1.0, norms) * (qn if qn > 0 else 1.0)
    return (bank @ q) / denom


def nearest_words(query: str, lookup: ExpandedLookup,
                  k: int) -> list[tuple[str, float]]:
    """Top-k tokens of the expanded vocabulary by cosine similarity to the
    query in RNN embedding space; the query itself is excluded."""
    source, qvec = lookup.resolve(query)
    if source == UNK:
        raise InputError(f"query {query!r} is in neither vocabulary")
    candidates = [t for t in lookup.all_tokens() if t != query]
    bank = np.vstack([lookup.vector(t) for t in candidates])
    sims = _cosine_to_bank(qvec, bank)
    order = np.argsort(-sims, kind="stable")[:max(k, 0)]
    return [(candidates[i], float(sims[i])) for i in order]


@dataclass
class SentenceBank:
    sentences: list[str]
    vectors: np.ndarray  # (n, enc_dim)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.sentences):
            raise InputError(f"need one vector row per sentence: "
                             f"{len(self.sentences)} sentences, "
                             f"vectors {self.vectors.shape}")


def nearest_sentences(query: str, model: SkipGruModel, bank: SentenceBank,
                      k: int, lookup: ExpandedLookup | None = None,
                      ) -> list[tuple[str, float]]:
    """Top-k bank sentences by cosine similarity to the encoded query."""
    if len(bank.sentences) == 0:
        raise InputError("sentence bank is empty")
    q = encode_text(query, model, lookup)
    sims = _cosine_to_bank(q, bank.vectors)
    order = np.argsort(-sims, kind="stable")[:max(k, 0)]
    return [(bank.sentences[i], float(sims[i])) for i in order]


EXPANSION_MAGIC = b"SKIPGRUX"
EXPANSION_VERSION = 1


def write_expansion(map: ExpansionMap, ext: ExternalEmbeddings, path) -> None:
    """Self-contained map file: the fitted W plus the external tokens and
    vectors it applies to, with a sha256 trailer.  Same layout discipline as
    checkpoints: magic, version, canonical-JSON header, float64 blobs."""
    header = {
        "ext_dim": int(ext.dim),
        "rank_deficient": bool(map.rank_deficient),
        "residual_rms": float(map.residual_rms),
        "rnn_dim": int(map.W.shape[0]),
        "shared_count": int(map.shared_count),
        "tokens": ext.tokens,
    }
    head = canonical_json(header)
    body = bytearray()
    body += EXPANSION_MAGIC
    body += struct.pack("<I", EXPANSION_VERSION)
    body += struct.pack("<Q", len(head))
    body += head
    body += np.ascontiguousarray(map.W, dtype="<f8").tobytes()
    body += np.ascontiguousarray(ext.vectors, dtype="<f8").tobytes()
    body += hashlib.sha256(bytes(body)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def read_expansion(path) -> tuple[ExpansionMap, ExternalEmbeddings]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(EXPANSION_MAGIC) + 12 + 32:
        raise CheckpointError(f"{path}: file too short to be an expansion map")
    if raw[:len(EXPANSION_MAGIC)] != EXPANSION_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    if hashlib.sha256(raw[:-32]).digest() != raw[-32:]:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupt)")
    off = len(EXPANSION_MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != EXPANSION_VERSION:
        raise CheckpointError(f"{path}: unsupported expansion-map version {version}")
    (head_len,) = struct.unpack_from("<Q", raw, off)
    off += 8
    try:
        header = json.loads(raw[off:off + head_len].decode("ascii"))
        off += head_len
        tokens = [str(t) for t in header["tokens"]]
        rnn_dim, ext_dim = int(header["rnn_dim"]), int(header["ext_dim"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from exc
    need = (rnn_dim * ext_dim + len(tokens) * ext_dim) * 8
    if len(raw) - 32 - off != need:
        raise CheckpointError(f"{path}: blob section has the wrong length")
    W = np.frombuffer(raw[off:off + rnn_dim * ext_dim * 8],
                      dtype="<f8").reshape(rnn_dim, ext_dim).copy()
    off += rnn_dim * ext_dim * 8
    vectors = np.frombuffer(raw[off:len(raw) - 32],
                            dtype="<f8").reshape(len(tokens), ext_dim).copy()
    ext = ExternalEmbeddings(tokens=tokens, vectors=vectors)
    map = ExpansionMap(W=W, shared_count=int(header["shared_count"]),
                       residual_rms=float(header["residual_rms"]),
                       rank_deficient=bool(header["rank_deficient"]))
    return map, ext
