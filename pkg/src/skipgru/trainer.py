"""Neighbor-reconstruction training: the twin-decoder objective, Adam steps
with gradient clipping, the epoch loop, and versioned binary checkpoints.

The loss for one triple (s_prev, s_curr, s_next) is

    -[log P(s_next | h) + log P(s_prev | h)],  h = encode(s_curr)

and a batch optimizes the mean over its triples (the corpus objective is the
sum; the mean keeps the learning rate independent of batch size).  Per-triple
gradients are accumulated in batch order, so runs are reproducible bit for bit
given a seed, and a checkpointed run resumed mid-stream matches an unbroken
run exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import time
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import SentenceTriple, Vocabulary
from .decoder import (ConditionalGruParams, DecoderPair, decoder_backward,
                      init_decoder_pair, sentence_log_prob,
                      sentence_log_prob_with_cache)
from .encoder import (EncoderModel, GruParams, encode, encode_with_cache,
                      encoder_backward, init_encoder)
from .errors import CheckpointError, ConfigError, InputError, NumericError
from .fileio import canonical_json
from .numerics import (AdamState, ParamSet, adam_step, clip_gradients,
                       get_rng, global_norm, seed_tuple)

CHECKPOINT_MAGIC = b"SKIPGRUC"
CHECKPOINT_VERSION = 1

METRICS_HEADER = "step,loss,grad_norm,clipped,wall_ms"


@dataclass
class TrainConfig:
    embed_dim: int
    hidden_dim: int
    vocab_size: int
    batch_size: int = 128
    clip_threshold: float = 10.0
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_steps: int = 0
    seed: int = 0
    mode: str = "uni"
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.clip_threshold <= 0:
            raise ConfigError(f"clip_threshold must be > 0, got {self.clip_threshold}")
        if self.mode not in ("uni", "bi"):
            raise ConfigError(f"mode must be 'uni' or 'bi', got {self.mode!r}")
        if min(self.embed_dim, self.hidden_dim) < 1:
            raise ConfigError("embed_dim and hidden_dim must be positive")
        if self.vocab_size < 3:
            raise ConfigError(f"vocab_size must be >= 3, got {self.vocab_size}")

    @property
    def encoder_dim(self) -> int:
        return self.hidden_dim * (2 if self.mode == "bi" else 1)


def param_order(config: TrainConfig) -> list[str]:
    """Canonical parameter names; also the checkpoint blob order."""
    names = ["emb"]
    names += ["enc." + k for k in ("W_r", "W_z", "W", "U_r", "U_z", "U")]
    if config.mode == "bi":
        names += ["enc_rev." + k for k in ("W_r", "W_z", "W", "U_r", "U_z", "U")]
    dec_keys = ("W_r", "W_z", "W", "U_r", "U_z", "U", "C_r", "C_z", "C", "begin")
    names += ["dec_next." + k for k in dec_keys]
    names += ["dec_prev." + k for k in dec_keys]
    names.append("V")
    return names


@dataclass
class SkipGruModel:
    """Encoder, twin decoders, vocabulary, and the config that shaped them."""

    config: TrainConfig
    vocab: Vocabulary
    encoder: EncoderModel
    decoders: DecoderPair

    def __post_init__(self):
        c = self.config
        if self.vocab.size != c.vocab_size or self.encoder.vocab_size != c.vocab_size:
            raise ConfigError(f"vocabulary size mismatch: config {c.vocab_size}, "
                              f"vocab {self.vocab.size}, "
                              f"embedding {self.encoder.vocab_size}")
        if self.encoder.output_dim != self.decoders.next_params.enc_dim:
            raise ConfigError(f"encoder output dim {self.encoder.output_dim} does "
                              f"not match decoder conditioning dim "
                              f"{self.decoders.next_params.enc_dim}")
        if self.decoders.vocab_size != c.vocab_size:
            raise ConfigError("output matrix V rows do not match the vocabulary")

    @property
    def embedding(self) -> np.ndarray:
        return self.encoder.embedding

    @classmethod
    def init(cls, vocab: Vocabulary, config: TrainConfig) -> "SkipGruModel":
        if vocab.size != config.vocab_size:
            raise ConfigError(f"vocabulary has {vocab.size} tokens but config "
                              f"says {config.vocab_size}")
        rng = get_rng(seed_tuple(config.seed, "init"))
        enc = init_encoder(config.vocab_size, config.embed_dim, config.hidden_dim,
                           config.mode, rng)
        dec = init_decoder_pair(config.vocab_size, config.embed_dim,
                                config.hidden_dim, config.encoder_dim, rng)
        return cls(config=config, vocab=vocab, encoder=enc, decoders=dec)

    def param_dict(self) -> ParamSet:
        params: ParamSet = {"emb": self.encoder.embedding}
        params.update(self.encoder.forward.as_dict("enc."))
        if self.encoder.backward is not None:
            params.update(self.encoder.backward.as_dict("enc_rev."))
        params.update(self.decoders.next_params.as_dict("dec_next."))
        params.update(self.decoders.prev_params.as_dict("dec_prev."))
        params["V"] = self.decoders.V
        return {k: params[k] for k in param_order(self.config)}


def model_from_params(config: TrainConfig, vocab: Vocabulary,
                      params: ParamSet) -> SkipGruModel:
    fwd = GruParams.from_dict(params, "enc.")
    bwd = GruParams.from_dict(params, "enc_rev.") if config.mode == "bi" else None
    enc = EncoderModel(embedding=np.asarray(params["emb"], dtype=np.float64),
                       forward=fwd, backward=bwd)
    dec = DecoderPair(next_params=ConditionalGruParams.from_dict(params, "dec_next."),
                      prev_params=ConditionalGruParams.from_dict(params, "dec_prev."),
                      V=np.asarray(params["V"], dtype=np.float64))
    return SkipGruModel(config=config, vocab=vocab, encoder=enc, decoders=dec)


def triple_loss(model: SkipGruModel, triple: SentenceTriple) -> float:
    """-[log P(next | h) + log P(prev | h)] with h = encode(curr); >= 0."""
    h = encode(triple.curr, model.encoder)
    emb, V = model.embedding, model.decoders.V
    lp_next = sentence_log_prob(triple.next, h, model.decoders.next_params, V, emb)
    lp_prev = sentence_log_prob(triple.prev, h, model.decoders.prev_params, V, emb)
    return -(lp_next + lp_prev)


def triple_grads(model: SkipGruModel,
                 triple: SentenceTriple) -> tuple[float, ParamSet]:
    """Loss and full-model gradients for one triple.

    The conditioning gradients of both decoders are summed before flowing back
    through the encoder; V and embedding gradients accumulate across all three
    passes.
    """
    emb, V = model.embedding, model.decoders.V
    h, enc_cache = encode_with_cache(triple.curr, model.encoder)
    lp_next, cache_n = sentence_log_prob_with_cache(
        triple.next, h, model.decoders.next_params, V, emb)
    lp_prev, cache_p = sentence_log_prob_with_cache(
        triple.prev, h, model.decoders.prev_params, V, emb)
    g_next, gh_next = decoder_backward(cache_n, model.decoders.next_params, V, emb)
    g_prev, gh_prev = decoder_backward(cache_p, model.decoders.prev_params, V, emb)
    g_enc = encoder_backward(enc_cache, gh_next + gh_prev, model.encoder)

    grads: ParamSet = {}
    grads["emb"] = g_enc["emb"] + g_next["emb"] + g_prev["emb"]
    for k, v in g_enc.items():
        if k != "emb":
            grads[k] = v
    for k in ("W_r", "W_z", "W", "U_r", "U_z", "U", "C_r", "C_z", "C", "begin"):
        grads["dec_next." + k] = g_next[k]
        grads["dec_prev." + k] = g_prev[k]
    grads["V"] = g_next["V"] + g_prev["V"]
    return -(lp_next + lp_prev), grads


class TrainStepResult(NamedTuple):
    model: SkipGruModel
    opt: AdamState
    batch_loss: float
    grad_norm: float
    clipped: bool


def train_step(model: SkipGruModel, batch: Sequence[SentenceTriple],
               opt: AdamState, config: TrainConfig) -> TrainStepResult:
    """One optimizer step on the mean triple loss over `batch`.

    Returns the loss measured before the update.  Per-triple gradients are
    reduced in batch order (fixed reduction order keeps runs deterministic).
    """
    if not batch:
        raise InputError("train_step needs a nonempty batch")
    params = model.param_dict()
    total: ParamSet = {k: np.zeros_like(v) for k, v in params.items()}
    loss_sum = 0.0
    for triple in batch:
        loss, grads = triple_grads(model, triple)
        loss_sum += loss
        for k in total:
            total[k] += grads[k]
    mean_loss = loss_sum / len(batch)
    if not math.isfinite(mean_loss):
        raise NumericError(f"non-finite batch loss {mean_loss} at step "
                           f"{opt.step + 1}; training aborted")
    scale = 1.0 / len(batch)
    for k in total:
        total[k] *= scale
    norm = global_norm(total)
    clipped = norm > config.clip_threshold
    total = clip_gradients(total, config.clip_threshold)
    new_params, new_opt = adam_step(params, total, opt)
    new_model = model_from_params(config, model.vocab, new_params)
    return TrainStepResult(model=new_model, opt=new_opt, batch_loss=mean_loss,
                           grad_norm=norm, clipped=clipped)


class TrainResult(NamedTuple):
    model: SkipGruModel
    opt: AdamState
    history: list


def make_optimizer(model: SkipGruModel) -> AdamState:
    c = model.config
    return AdamState.initial(model.param_dict(), alpha=c.alpha, beta1=c.beta1,
                             beta2=c.beta2, epsilon=c.epsilon)


def train(model: SkipGruModel, triples: Sequence[SentenceTriple],
          opt: AdamState | None = None, metrics_path=None,
          checkpoint_path=None) -> TrainResult:
    """Run from opt.step up to config.max_steps over shuffled triples.

    Each epoch is a fresh seeded permutation of the triples, consumed in
    batch_size slices; the current position is derived from opt.step alone, so
    resuming from a checkpoint continues the identical batch stream.  Appends
    one metrics row per step when metrics_path is given (header written only
    for a fresh run) and checkpoints every config.checkpoint_every steps plus
    at the end when checkpoint_path is given.
    """
    config = model.config
    if not triples:
        raise InputError("no training triples")
    if opt is None:
        opt = make_optimizer(model)
    n = len(triples)
    steps_per_epoch = -(-n // config.batch_size)
    history: list = []
    cached_epoch, perm = -1, None
    metrics = None
    if metrics_path is not None:
        metrics = open(metrics_path, "a" if opt.step > 0 else "w")
        if opt.step == 0:
            metrics.write(METRICS_HEADER + "\n")
    try:
        while opt.step < config.max_steps:
            epoch = opt.step // steps_per_epoch
            if epoch != cached_epoch:
                rng = get_rng(seed_tuple(config.seed, "epoch", epoch))
                perm = rng.permutation(n)
                cached_epoch = epoch
            slot = opt.step % steps_per_epoch
            idx = perm[slot * config.batch_size:(slot + 1) * config.batch_size]
            batch = [triples[i] for i in idx]
            t0 = time.perf_counter()
            res = train_step(model, batch, opt, config)
            wall_ms = (time.perf_counter() - t0) * 1000.0
            model, opt = res.model, res.opt
            row = {"step": opt.step, "loss": res.batch_loss,
                   "grad_norm": res.grad_norm, "clipped": res.clipped,
                   "wall_ms": wall_ms}
            history.append(row)
            if metrics is not None:
                metrics.write(f"{opt.step},{res.batch_loss:.17g},"
                              f"{res.grad_norm:.17g},{int(res.clipped)},"
                              f"{wall_ms:.3f}\n")
            if (checkpoint_path is not None and config.checkpoint_every > 0
                    and opt.step % config.checkpoint_every == 0):
                save_checkpoint(model, opt, checkpoint_path)
    finally:
        if metrics is not None:
            metrics.close()
    if checkpoint_path is not None:
        save_checkpoint(model, opt, checkpoint_path)
    return TrainResult(model=model, opt=opt, history=history)


def save_checkpoint(model: SkipGruModel, opt: AdamState, path) -> None:
    """Magic, version, canonical-JSON header, float64 blobs, sha256 trailer.

    Blob order: every parameter in declared order, then the Adam first-moment
    buffers, then the second-moment buffers.  Identical model state always
    produces identical bytes.
    """
    params = model.param_dict()
    names = list(params)
    header = {
        "adam": {"alpha": opt.alpha, "beta1": opt.beta1, "beta2": opt.beta2,
                 "epsilon": opt.epsilon, "step": opt.step},
        "config": asdict(model.config),
        "params": [[k, list(params[k].shape)] for k in names],
        "vocab": model.vocab.id_to_token,
    }
    head = canonical_json(header)
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += struct.pack("<I", CHECKPOINT_VERSION)
    body += struct.pack("<Q", len(head))
    body += head
    for group in (params, opt.m, opt.v):
        for k in names:
            body += np.ascontiguousarray(group[k], dtype="<f8").tobytes()
    body += hashlib.sha256(bytes(body)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_checkpoint(path) -> tuple[SkipGruModel, AdamState]:
    """Inverse of save_checkpoint; never returns a partially restored model."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CHECKPOINT_MAGIC) + 12 + 32:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    if hashlib.sha256(raw[:-32]).digest() != raw[-32:]:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupt)")
    off = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (head_len,) = struct.unpack_from("<Q", raw, off)
    off += 8
    try:
        header = json.loads(raw[off:off + head_len].decode("ascii"))
        off += head_len
        config = TrainConfig(**header["config"])
        vocab = Vocabulary(list(header["vocab"]))
        entries = [(str(k), tuple(int(s) for s in shape))
                   for k, shape in header["params"]]
    except (ValueError, KeyError, TypeError, ConfigError, InputError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from exc
    if [k for k, _ in entries] != param_order(config):
        raise CheckpointError(f"{path}: parameter list does not match the config")

    def read_group():
        nonlocal off
        group: ParamSet = {}
        for k, shape in entries:
            count = int(np.prod(shape)) if shape else 1
            end = off + count * 8
            if end > len(raw) - 32:
                raise CheckpointError(f"{path}: blob section truncated")
            arr = np.frombuffer(raw[off:end], dtype="<f8").reshape(shape).copy()
            group[k] = arr
            off = end
        return group

    params = read_group()
    m = read_group()
    v = read_group()
    if off != len(raw) - 32:
        raise CheckpointError(f"{path}: trailing bytes after parameter blobs")
    model = model_from_params(config, vocab, params)
    adam = header["adam"]
    opt = AdamState(step=int(adam["step"]), m=m, v=v, alpha=float(adam["alpha"]),
                    beta1=float(adam["beta1"]), beta2=float(adam["beta2"]),
                    epsilon=float(adam["epsilon"]))
    return model, opt
