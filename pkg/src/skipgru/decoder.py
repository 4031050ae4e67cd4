"""Conditional GRU decoders: language models over neighboring sentences.

Each decoder is a GRU whose reset gate, update gate, and candidate state are
additively biased by the encoder's sentence vector through matrices C_r, C_z,
and C:

    r^t = sigmoid(W_r^d x^{t-1} + U_r^d h^{t-1} + C_r h_enc)
    z^t = sigmoid(W_z^d x^{t-1} + U_z^d h^{t-1} + C_z h_enc)
    hbar^t = tanh(W^d x^{t-1} + U^d (r^t * h^{t-1}) + C h_enc)
    h^t = (1 - z^t) * h^{t-1} + z^t * hbar^t

The word distribution at step t is softmax(V h^t), sharing one output matrix V
between both decoders.  At t = 1 the input is a learned begin-of-decode
vector; afterwards it is the embedding of the ground-truth previous word
(teacher forcing).  There are no bias terms and V has no bias column.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParameterError, RangeError, ShapeError, StateError
from .numerics import (ParamSet, get_rng, log_softmax, orthogonal_init, sigmoid,
                       softmax, uniform_init)

INIT_RANGE = 0.1

COND_INPUT_KEYS = ("W_r", "W_z", "W")
COND_RECURRENT_KEYS = ("U_r", "U_z", "U")
COND_CONDITIONING_KEYS = ("C_r", "C_z", "C")
COND_MATRIX_KEYS = COND_INPUT_KEYS + COND_RECURRENT_KEYS + COND_CONDITIONING_KEYS
COND_KEYS = COND_MATRIX_KEYS + ("begin",)


@dataclass
class ConditionalGruParams:
    """Nine weight matrices plus the learned begin-of-decode input vector."""

    W_r: np.ndarray   # (hidden, embed)
    W_z: np.ndarray
    W: np.ndarray
    U_r: np.ndarray   # (hidden, hidden)
    U_z: np.ndarray
    U: np.ndarray
    C_r: np.ndarray   # (hidden, enc_dim)
    C_z: np.ndarray
    C: np.ndarray
    begin: np.ndarray  # (embed,)

    def __post_init__(self):
        h, e = self.W_r.shape
        enc = self.C_r.shape[1]
        for key in COND_INPUT_KEYS:
            if getattr(self, key).shape != (h, e):
                raise ShapeError(f"{key} must have shape {(h, e)}, "
                                 f"got {getattr(self, key).shape}")
        for key in COND_RECURRENT_KEYS:
            if getattr(self, key).shape != (h, h):
                raise ShapeError(f"{key} must have shape {(h, h)}, "
                                 f"got {getattr(self, key).shape}")
        for key in COND_CONDITIONING_KEYS:
            if getattr(self, key).shape != (h, enc):
                raise ShapeError(f"{key} must have shape {(h, enc)}, "
                                 f"got {getattr(self, key).shape}")
        if self.begin.shape != (e,):
            raise ShapeError(f"begin vector must have shape ({e},), "
                             f"got {self.begin.shape}")

    @property
    def hidden_dim(self) -> int:
        return self.W_r.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.W_r.shape[1]

    @property
    def enc_dim(self) -> int:
        return self.C_r.shape[1]

    def as_dict(self, prefix: str = "") -> ParamSet:
        return {prefix + k: getattr(self, k) for k in COND_KEYS}

    @classmethod
    def from_dict(cls, d: ParamSet, prefix: str = "") -> "ConditionalGruParams":
        return cls(**{k: np.asarray(d[prefix + k], dtype=np.float64) for k in COND_KEYS})


def init_conditional_gru(embed_dim: int, hidden_dim: int, enc_dim: int,
                         seed) -> ConditionalGruParams:
    """Recurrent matrices orthogonal; everything else uniform [-0.1, 0.1)."""
    rng = get_rng(seed)
    fields = {}
    for key in COND_INPUT_KEYS:
        fields[key] = uniform_init(hidden_dim, embed_dim, -INIT_RANGE, INIT_RANGE, rng)
    for key in COND_RECURRENT_KEYS:
        fields[key] = orthogonal_init(hidden_dim, hidden_dim, rng)
    for key in COND_CONDITIONING_KEYS:
        fields[key] = uniform_init(hidden_dim, enc_dim, -INIT_RANGE, INIT_RANGE, rng)
    fields["begin"] = uniform_init(1, embed_dim, -INIT_RANGE, INIT_RANGE, rng)[0]
    return ConditionalGruParams(**fields)


@dataclass
class DecoderPair:
    """Next- and previous-sentence decoders sharing one output matrix V."""

    next_params: ConditionalGruParams
    prev_params: ConditionalGruParams
    V: np.ndarray  # (vocab, hidden)

    def __post_init__(self):
        if self.next_params is self.prev_params:
            raise ParameterError("decoders must not share parameter storage")
        if self.V.ndim != 2 or self.V.shape[1] != self.next_params.hidden_dim:
            raise ShapeError(f"V must be (vocab, {self.next_params.hidden_dim}), "
                             f"got {self.V.shape}")

    @property
    def vocab_size(self) -> int:
        return self.V.shape[0]


def init_decoder_pair(vocab_size: int, embed_dim: int, hidden_dim: int,
                      enc_dim: int, seed) -> DecoderPair:
    rng = get_rng(seed)
    nxt = init_conditional_gru(embed_dim, hidden_dim, enc_dim, rng)
    prv = init_conditional_gru(embed_dim, hidden_dim, enc_dim, rng)
    V = uniform_init(vocab_size, hidden_dim, -INIT_RANGE, INIT_RANGE, rng)
    return DecoderPair(next_params=nxt, prev_params=prv, V=V)


class _CondStep(NamedTuple):
    h: np.ndarray
    r: np.ndarray
    z: np.ndarray
    hbar: np.ndarray


def _cond_core(x: np.ndarray, h_prev: np.ndarray, h_enc: np.ndarray,
               p: ConditionalGruParams) -> _CondStep:
    r = sigmoid(p.W_r @ x + p.U_r @ h_prev + p.C_r @ h_enc)
    z = sigmoid(p.W_z @ x + p.U_z @ h_prev + p.C_z @ h_enc)
    hbar = np.tanh(p.W @ x + p.U @ (r * h_prev) + p.C @ h_enc)
    h = (1.0 - z) * h_prev + z * hbar
    return _CondStep(h=h, r=r, z=z, hbar=hbar)


def cond_gru_step(x: np.ndarray, h_prev: np.ndarray, h_enc: np.ndarray,
                  p: ConditionalGruParams) -> np.ndarray:
    """One conditioned GRU step; with h_enc = 0 this is the plain GRU step."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    h_enc = np.asarray(h_enc, dtype=np.float64)
    if x.shape != (p.embed_dim,):
        raise ShapeError(f"input has shape {x.shape}, expected ({p.embed_dim},)")
    if h_prev.shape != (p.hidden_dim,):
        raise ShapeError(f"state has shape {h_prev.shape}, expected ({p.hidden_dim},)")
    if h_enc.shape != (p.enc_dim,):
        raise ShapeError(f"conditioning vector has shape {h_enc.shape}, "
                         f"expected ({p.enc_dim},)")
    return _cond_core(x, h_prev, h_enc, p).h


def _check_target(target: Sequence[int], vocab_size: int) -> tuple[int, ...]:
    ids = tuple(int(t) for t in target)
    if not ids:
        raise RangeError("target sentence is empty")
    for t in ids:
        if t < 0 or t >= vocab_size:
            raise RangeError(f"token id {t} outside vocabulary of size {vocab_size}")
    return ids


@dataclass
class DecoderCache:
    """Teacher-forced forward activations needed by decoder_backward."""

    target: tuple[int, ...]
    h_enc: np.ndarray
    X: np.ndarray        # (T, embed) inputs: begin, then target[:-1] embeddings
    H_prev: np.ndarray   # (T, hidden)
    R: np.ndarray
    Z: np.ndarray
    Hbar: np.ndarray
    H: np.ndarray        # (T, hidden) post-step states
    probs: np.ndarray    # (T, vocab) softmax rows
    log_prob: float


def _decode_forward(target: tuple[int, ...], h_enc: np.ndarray,
                    p: ConditionalGruParams, V: np.ndarray,
                    embedding: np.ndarray) -> DecoderCache:
    T = len(target)
    hid = p.hidden_dim
    X = np.empty((T, p.embed_dim))
    X[0] = p.begin
    if T > 1:
        X[1:] = embedding[list(target[:-1])]
    H_prev = np.empty((T, hid))
    R = np.empty((T, hid))
    Z = np.empty((T, hid))
    Hbar = np.empty((T, hid))
    H = np.empty((T, hid))
    h = np.zeros(hid)
    for t in range(T):
        H_prev[t] = h
        step = _cond_core(X[t], h, h_enc, p)
        R[t], Z[t], Hbar[t] = step.r, step.z, step.hbar
        h = step.h
        H[t] = h
    logits = H @ V.T                      # (T, vocab)
    logp = log_softmax(logits, axis=1)
    total = float(logp[np.arange(T), list(target)].sum())
    return DecoderCache(target=target, h_enc=np.asarray(h_enc, dtype=np.float64),
                        X=X, H_prev=H_prev, R=R, Z=Z, Hbar=Hbar, H=H,
                        probs=np.exp(logp), log_prob=total)


def sentence_log_prob_with_cache(target: Sequence[int], h_enc: np.ndarray,
                                 p: ConditionalGruParams, V: np.ndarray,
                                 embedding: np.ndarray) -> tuple[float, DecoderCache]:
    ids = _check_target(target, V.shape[0])
    h_enc = np.asarray(h_enc, dtype=np.float64)
    if h_enc.shape != (p.enc_dim,):
        raise ShapeError(f"conditioning vector has shape {h_enc.shape}, "
                         f"expected ({p.enc_dim},)")
    cache = _decode_forward(ids, h_enc, p, V, embedding)
    return cache.log_prob, cache


def sentence_log_prob(target: Sequence[int], h_enc: np.ndarray,
                      p: ConditionalGruParams, V: np.ndarray,
                      embedding: np.ndarray) -> float:
    """Teacher-forced log P(target | h_enc) = sum_t log softmax(V h^t)[w^t]; <= 0."""
    logp, _ = sentence_log_prob_with_cache(target, h_enc, p, V, embedding)
    return logp


def decoder_backward(cache: DecoderCache, p: ConditionalGruParams, V: np.ndarray,
                     embedding: np.ndarray) -> tuple[ParamSet, np.ndarray]:
    """Gradients of the negative log-likelihood from a cached forward pass.

    Returns (grads, grad_h_enc) where grads holds the nine decoder matrices,
    "begin", the shared "V", and a full-table "emb" gradient.  grad_h_enc is
    the conditioning gradient that flows back into the encoder.
    """
    if not isinstance(cache, DecoderCache):
        raise StateError("decoder_backward needs the cache from "
                         "sentence_log_prob_with_cache")
    T = len(cache.target)
    grads = {k: np.zeros_like(getattr(p, k)) for k in COND_KEYS}
    dV = np.zeros_like(V)
    demb = np.zeros_like(embedding)
    g_henc = np.zeros_like(cache.h_enc)

    # Softmax cross-entropy: d(-log p)/dlogits = probs - onehot(target).
    dlogits = cache.probs.copy()
    dlogits[np.arange(T), list(cache.target)] -= 1.0
    dV += dlogits.T @ cache.H
    dH = dlogits @ V                      # (T, hidden) direct path into each h^t

    g = np.zeros(p.hidden_dim)
    for t in range(T - 1, -1, -1):
        g = g + dH[t]
        x, h_prev = cache.X[t], cache.H_prev[t]
        r, z, hbar = cache.R[t], cache.Z[t], cache.Hbar[t]

        dz = g * (hbar - h_prev)
        dhbar = g * z
        dh_prev = g * (1.0 - z)

        da_h = dhbar * (1.0 - hbar * hbar)
        grads["W"] += np.outer(da_h, x)
        grads["U"] += np.outer(da_h, r * h_prev)
        grads["C"] += np.outer(da_h, cache.h_enc)
        g_henc += p.C.T @ da_h
        drh = p.U.T @ da_h
        dr = drh * h_prev
        dh_prev += drh * r

        da_r = dr * r * (1.0 - r)
        grads["W_r"] += np.outer(da_r, x)
        grads["U_r"] += np.outer(da_r, h_prev)
        grads["C_r"] += np.outer(da_r, cache.h_enc)
        g_henc += p.C_r.T @ da_r
        dh_prev += p.U_r.T @ da_r

        da_z = dz * z * (1.0 - z)
        grads["W_z"] += np.outer(da_z, x)
        grads["U_z"] += np.outer(da_z, h_prev)
        grads["C_z"] += np.outer(da_z, cache.h_enc)
        g_henc += p.C_z.T @ da_z
        dh_prev += p.U_z.T @ da_z

        dx = p.W.T @ da_h + p.W_r.T @ da_r + p.W_z.T @ da_z
        if t == 0:
            grads["begin"] += dx
        else:
            demb[cache.target[t - 1]] += dx
        g = dh_prev

    grads["V"] = dV
    grads["emb"] = demb
    return grads, g_henc


def sample_sentence(h_enc: np.ndarray, p: ConditionalGruParams, V: np.ndarray,
                    embedding: np.ndarray, max_len: int, temperature: float,
                    seed, eos_id: int = 0) -> list[int]:
    """Autoregressive sampling from softmax(V h / temperature) until eos or
    max_len tokens.  temperature = 0 means greedy argmax (no randomness)."""
    if max_len < 1:
        raise ParameterError(f"max_len must be >= 1, got {max_len}")
    if temperature < 0:
        raise ParameterError(f"temperature must be >= 0, got {temperature}")
    h_enc = np.asarray(h_enc, dtype=np.float64)
    rng = get_rng(seed)
    vocab = V.shape[0]
    h = np.zeros(p.hidden_dim)
    x = p.begin
    out: list[int] = []
    for _ in range(max_len):
        h = _cond_core(x, h, h_enc, p).h
        logits = V @ h
        if temperature == 0.0:
            w = int(np.argmax(logits))
        else:
            w = int(rng.choice(vocab, p=softmax(logits / temperature)))
        out.append(w)
        if w == eos_id:
            break
        x = embedding[w]
    return out
