"""GRU sentence encoder: unidirectional, bidirectional, and combined variants.

The recurrence has no bias terms anywhere:

    r^t = sigmoid(W_r x^t + U_r h^{t-1})
    z^t = sigmoid(W_z x^t + U_z h^{t-1})
    hbar^t = tanh(W x^t + U (r^t * h^{t-1}))
    h^t = (1 - z^t) * h^{t-1} + z^t * hbar^t

with h^0 = 0.  The final hidden state is the sentence vector.  The
bidirectional variant runs a second, separately parameterized GRU over the
reversed token sequence and concatenates both final states.  The terminal eos
token is consumed like any other token.

The backward pass is backpropagation through time, written out by hand so the
whole model trains without autodiff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, InputError, RangeError, ShapeError, StateError
from .numerics import ParamSet, get_rng, orthogonal_init, sigmoid, uniform_init

INIT_RANGE = 0.1

GRU_INPUT_KEYS = ("W_r", "W_z", "W")
GRU_RECURRENT_KEYS = ("U_r", "U_z", "U")
GRU_KEYS = GRU_INPUT_KEYS + GRU_RECURRENT_KEYS


@dataclass
class GruParams:
    """The six weight matrices of one (unconditioned) GRU direction."""

    W_r: np.ndarray  # (hidden, embed)
    W_z: np.ndarray
    W: np.ndarray
    U_r: np.ndarray  # (hidden, hidden)
    U_z: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        h, e = self.W_r.shape
        for key in GRU_INPUT_KEYS:
            if getattr(self, key).shape != (h, e):
                raise ShapeError(f"{key} must have shape {(h, e)}, "
                                 f"got {getattr(self, key).shape}")
        for key in GRU_RECURRENT_KEYS:
            if getattr(self, key).shape != (h, h):
                raise ShapeError(f"{key} must have shape {(h, h)}, "
                                 f"got {getattr(self, key).shape}")

    @property
    def hidden_dim(self) -> int:
        return self.W_r.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.W_r.shape[1]

    def as_dict(self, prefix: str = "") -> ParamSet:
        return {prefix + k: getattr(self, k) for k in GRU_KEYS}

    @classmethod
    def from_dict(cls, d: ParamSet, prefix: str = "") -> "GruParams":
        return cls(**{k: np.asarray(d[prefix + k], dtype=np.float64) for k in GRU_KEYS})


def init_gru_params(embed_dim: int, hidden_dim: int, seed) -> GruParams:
    """Input matrices uniform [-0.1, 0.1); recurrent matrices orthogonal."""
    rng = get_rng(seed)
    fields = {}
    for key in GRU_INPUT_KEYS:
        fields[key] = uniform_init(hidden_dim, embed_dim, -INIT_RANGE, INIT_RANGE, rng)
    for key in GRU_RECURRENT_KEYS:
        fields[key] = orthogonal_init(hidden_dim, hidden_dim, rng)
    return GruParams(**fields)


class GruStep(NamedTuple):
    """One step's state and gate activations (kept for the backward pass)."""

    h: np.ndarray
    r: np.ndarray
    z: np.ndarray
    hbar: np.ndarray


def _gru_core(x: np.ndarray, h_prev: np.ndarray, p: GruParams) -> GruStep:
    r = sigmoid(p.W_r @ x + p.U_r @ h_prev)
    z = sigmoid(p.W_z @ x + p.U_z @ h_prev)
    hbar = np.tanh(p.W @ x + p.U @ (r * h_prev))
    h = (1.0 - z) * h_prev + z * hbar
    return GruStep(h=h, r=r, z=z, hbar=hbar)


def gru_step(x: np.ndarray, h_prev: np.ndarray, p: GruParams) -> GruStep:
    """One GRU step; gates come out strictly inside (0, 1) for finite inputs."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape != (p.embed_dim,):
        raise ShapeError(f"input has shape {x.shape}, expected ({p.embed_dim},)")
    if h_prev.shape != (p.hidden_dim,):
        raise ShapeError(f"state has shape {h_prev.shape}, expected ({p.hidden_dim},)")
    return _gru_core(x, h_prev, p)


@dataclass
class EncoderModel:
    """Embedding table plus one GRU (uni) or a forward/backward pair (bi)."""

    embedding: np.ndarray  # (vocab, embed)
    forward: GruParams
    backward: GruParams | None = None

    def __post_init__(self):
        if self.embedding.ndim != 2:
            raise ShapeError("embedding must be a 2-D (vocab, embed) matrix")
        for p in (self.forward, self.backward):
            if p is not None and p.embed_dim != self.embedding.shape[1]:
                raise ShapeError(f"GRU input width {p.embed_dim} does not match "
                                 f"embedding width {self.embedding.shape[1]}")
        if self.backward is not None and self.backward.hidden_dim != self.forward.hidden_dim:
            raise ShapeError("forward and backward hidden dims differ")

    @property
    def mode(self) -> str:
        return "uni" if self.backward is None else "bi"

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.forward.hidden_dim

    @property
    def output_dim(self) -> int:
        return self.hidden_dim * (2 if self.backward is not None else 1)


def init_encoder(vocab_size: int, embed_dim: int, hidden_dim: int, mode: str,
                 seed) -> EncoderModel:
    if mode not in ("uni", "bi"):
        raise ConfigError(f"encoder mode must be 'uni' or 'bi', got {mode!r}")
    rng = get_rng(seed)
    emb = uniform_init(vocab_size, embed_dim, -INIT_RANGE, INIT_RANGE, rng)
    fwd = init_gru_params(embed_dim, hidden_dim, rng)
    bwd = init_gru_params(embed_dim, hidden_dim, rng) if mode == "bi" else None
    return EncoderModel(embedding=emb, forward=fwd, backward=bwd)


def _check_tokens(tokens: Sequence[int], vocab_size: int) -> tuple[int, ...]:
    ids = tuple(int(t) for t in tokens)
    if not ids:
        raise InputError("cannot encode an empty token sequence")
    for t in ids:
        if t < 0 or t >= vocab_size:
            raise RangeError(f"token id {t} outside vocabulary of size {vocab_size}")
    return ids


class DirectionCache(NamedTuple):
    """Stacked forward-pass activations for one GRU direction."""

    ids: tuple[int, ...]      # in the order the direction consumed them
    X: np.ndarray             # (T, embed) inputs
    H_prev: np.ndarray        # (T, hidden) state entering each step
    R: np.ndarray             # (T, hidden)
    Z: np.ndarray
    Hbar: np.ndarray
    h_final: np.ndarray       # (hidden,)


def _run_direction(ids: tuple[int, ...], embedding: np.ndarray,
                   p: GruParams) -> DirectionCache:
    T = len(ids)
    hid = p.hidden_dim
    X = embedding[list(ids)]
    H_prev = np.empty((T, hid))
    R = np.empty((T, hid))
    Z = np.empty((T, hid))
    Hbar = np.empty((T, hid))
    h = np.zeros(hid)
    for t in range(T):
        H_prev[t] = h
        step = _gru_core(X[t], h, p)
        R[t], Z[t], Hbar[t] = step.r, step.z, step.hbar
        h = step.h
    return DirectionCache(ids=ids, X=X, H_prev=H_prev, R=R, Z=Z, Hbar=Hbar, h_final=h)


def run_embedded(X: np.ndarray, p: GruParams) -> DirectionCache:
    """Run one direction over pre-built input vectors (used after vocabulary
    expansion, where tokens resolve to vectors rather than embedding rows)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != p.embed_dim:
        raise ShapeError(f"inputs must be (T, {p.embed_dim}), got {X.shape}")
    if X.shape[0] == 0:
        raise InputError("cannot encode an empty input sequence")
    T, hid = X.shape[0], p.hidden_dim
    H_prev = np.empty((T, hid))
    R = np.empty((T, hid))
    Z = np.empty((T, hid))
    Hbar = np.empty((T, hid))
    h = np.zeros(hid)
    for t in range(T):
        H_prev[t] = h
        step = _gru_core(X[t], h, p)
        R[t], Z[t], Hbar[t] = step.r, step.z, step.hbar
        h = step.h
    return DirectionCache(ids=(), X=X, H_prev=H_prev, R=R, Z=Z, Hbar=Hbar, h_final=h)


@dataclass
class EncoderCache:
    """Forward activations needed by encoder_backward."""

    tokens: tuple[int, ...]
    fwd: DirectionCache
    bwd: DirectionCache | None


def encode_with_cache(tokens: Sequence[int],
                      model: EncoderModel) -> tuple[np.ndarray, EncoderCache]:
    ids = _check_tokens(tokens, model.vocab_size)
    fwd = _run_direction(ids, model.embedding, model.forward)
    if model.backward is None:
        return fwd.h_final, EncoderCache(tokens=ids, fwd=fwd, bwd=None)
    bwd = _run_direction(ids[::-1], model.embedding, model.backward)
    vec = np.concatenate([fwd.h_final, bwd.h_final])
    return vec, EncoderCache(tokens=ids, fwd=fwd, bwd=bwd)


def encode(tokens: Sequence[int], model: EncoderModel) -> np.ndarray:
    """Sentence vector: final state (uni) or forward||reverse final states (bi)."""
    vec, _ = encode_with_cache(tokens, model)
    return vec


def encode_vectors(X: np.ndarray, model: EncoderModel) -> np.ndarray:
    """Encode from per-token input vectors instead of token ids."""
    fwd = run_embedded(X, model.forward)
    if model.backward is None:
        return fwd.h_final
    bwd = run_embedded(np.asarray(X)[::-1], model.backward)
    return np.concatenate([fwd.h_final, bwd.h_final])


def encode_combined(tokens: Sequence[int], uni: EncoderModel,
                    bi: EncoderModel) -> np.ndarray:
    """Concatenation of an unidirectional and a bidirectional encoding."""
    if uni.vocab_size != bi.vocab_size:
        raise ConfigError(f"encoders index different vocabularies "
                          f"({uni.vocab_size} vs {bi.vocab_size} rows)")
    return np.concatenate([encode(tokens, uni), encode(tokens, bi)])


def _direction_backward(cache: DirectionCache, grad_h: np.ndarray, p: GruParams,
                        demb: np.ndarray | None) -> ParamSet:
    """BPTT through one direction.  Accumulates embedding-row gradients into
    `demb` (if given) and returns gradients for the six GRU matrices."""
    grads = {k: np.zeros_like(getattr(p, k)) for k in GRU_KEYS}
    g = np.asarray(grad_h, dtype=np.float64)
    for t in range(len(cache.X) - 1, -1, -1):
        x, h_prev = cache.X[t], cache.H_prev[t]
        r, z, hbar = cache.R[t], cache.Z[t], cache.Hbar[t]

        dz = g * (hbar - h_prev)
        dhbar = g * z
        dh_prev = g * (1.0 - z)

        da_h = dhbar * (1.0 - hbar * hbar)
        grads["W"] += np.outer(da_h, x)
        grads["U"] += np.outer(da_h, r * h_prev)
        drh = p.U.T @ da_h
        dr = drh * h_prev
        dh_prev += drh * r

        da_r = dr * r * (1.0 - r)
        grads["W_r"] += np.outer(da_r, x)
        grads["U_r"] += np.outer(da_r, h_prev)
        dh_prev += p.U_r.T @ da_r

        da_z = dz * z * (1.0 - z)
        grads["W_z"] += np.outer(da_z, x)
        grads["U_z"] += np.outer(da_z, h_prev)
        dh_prev += p.U_z.T @ da_z

        if demb is not None:
            demb[cache.ids[t]] += p.W.T @ da_h + p.W_r.T @ da_r + p.W_z.T @ da_z
        g = dh_prev
    return grads


def encoder_backward(cache: EncoderCache, grad_output: np.ndarray,
                     model: EncoderModel) -> ParamSet:
    """Gradients of a scalar loss with upstream `grad_output` = dL/d(encoding).

    Keys: "emb" (full embedding-table gradient; untouched rows stay zero),
    "enc.W_r" ... "enc.U" for the forward GRU, and "enc_rev.*" when
    bidirectional.
    """
    if not isinstance(cache, EncoderCache):
        raise StateError("encoder_backward needs the cache from encode_with_cache")
    if (cache.bwd is None) != (model.backward is None):
        raise StateError("cache direction structure does not match the model")
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.shape != (model.output_dim,):
        raise ShapeError(f"grad_output has shape {grad_output.shape}, "
                         f"expected ({model.output_dim},)")
    demb = np.zeros_like(model.embedding)
    hid = model.hidden_dim
    out: ParamSet = {"emb": demb}
    fwd_grads = _direction_backward(cache.fwd, grad_output[:hid], model.forward, demb)
    out.update({"enc." + k: v for k, v in fwd_grads.items()})
    if model.backward is not None:
        bwd_grads = _direction_backward(cache.bwd, grad_output[hid:],
                                        model.backward, demb)
        out.update({"enc_rev." + k: v for k, v in bwd_grads.items()})
    return out
