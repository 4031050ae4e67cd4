"""Image-sentence retrieval: a linear embedding of both modalities trained
with a pairwise hinge ranking loss, and Recall@K / median-rank evaluation.

Images x and sentence vectors y are projected to a shared space by U and V
and scored by cosine similarity.  For each positive pair the loss draws k
contrastive sentences and k contrastive images from within the batch:

    sum_k max(0, alpha - s(Ux, Vy) + s(Ux, Vy_k))
  + sum_k max(0, alpha - s(Ux, Vy) + s(Ux_k, Vy))

Gradients are worked out by hand through the cosine and the hinges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (ConfigError, InputError, MetricError, NumericError,
                     ParameterError, ShapeError)
from .numerics import AdamState, adam_step, get_rng, seed_tuple, uniform_init

DEFAULT_RECALL_KS = (1, 5, 10)


@dataclass
class RankingModel:
    U: np.ndarray  # (embed_dim, image_dim)
    V: np.ndarray  # (embed_dim, sentence_dim)
    alpha: float = 0.2
    k_contrastive: int = 50

    def __post_init__(self):
        if self.U.ndim != 2 or self.V.ndim != 2:
            raise ShapeError("U and V must be matrices")
        if self.U.shape[0] != self.V.shape[0] or self.U.shape[0] < 1:
            raise ShapeError(f"U and V must share a positive embedding dim, "
                             f"got {self.U.shape} and {self.V.shape}")
        if self.alpha <= 0:
            raise ParameterError(f"margin must be positive, got {self.alpha}")
        if self.k_contrastive < 1:
            raise ParameterError(f"k_contrastive must be >= 1, "
                                 f"got {self.k_contrastive}")

    @property
    def embed_dim(self) -> int:
        return self.U.shape[0]

    def copy(self) -> "RankingModel":
        return RankingModel(U=self.U.copy(), V=self.V.copy(), alpha=self.alpha,
                            k_contrastive=self.k_contrastive)


def init_ranking_model(image_dim: int, sentence_dim: int, embed_dim: int,
                       alpha: float, k_contrastive: int, seed) -> RankingModel:
    rng = get_rng(seed_tuple(seed, "rank-init"))
    return RankingModel(U=uniform_init(embed_dim, image_dim, -0.1, 0.1, rng),
                        V=uniform_init(embed_dim, sentence_dim, -0.1, 0.1, rng),
                        alpha=alpha, k_contrastive=k_contrastive)


def pair_score(x: np.ndarray, y: np.ndarray, model: RankingModel) -> float:
    """cosine(Ux, Vy) in [-1, 1]."""
    a = model.U @ np.asarray(x, dtype=np.float64)
    b = model.V @ np.asarray(y, dtype=np.float64)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise MetricError("zero-norm embedded vector; cosine score undefined")
    return float(a @ b) / (na * nb)


def _embed_rows(X: np.ndarray, M: np.ndarray,
                what: str) -> tuple[np.ndarray, np.ndarray]:
    A = X @ M.T
    norms = np.linalg.norm(A, axis=1)
    if np.any(norms == 0.0):
        raise MetricError(f"zero-norm embedded {what} at rows "
                          f"{np.flatnonzero(norms == 0.0)[:5].tolist()}")
    return A / norms[:, None], norms


def _contrastive_draws(n: int, k: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """For each i: k sentence indices then k image indices, all != i, drawn
    without replacement.  Draw order is fixed so a seed pins the samples."""
    sent = np.empty((n, k), dtype=int)
    img = np.empty((n, k), dtype=int)
    for i in range(n):
        s = rng.choice(n - 1, size=k, replace=False)
        m = rng.choice(n - 1, size=k, replace=False)
        sent[i] = s + (s >= i)
        img[i] = m + (m >= i)
    return sent, img


def _loss_and_weights(X: np.ndarray, Y: np.ndarray, model: RankingModel,
                      contrastive_seed):
    n = len(X)
    if n != len(Y):
        raise ShapeError(f"{n} images vs {len(Y)} sentences")
    if n <= model.k_contrastive:
        raise ConfigError(f"batch of {n} cannot supply {model.k_contrastive} "
                          f"contrastive terms")
    Ahat, na = _embed_rows(X, model.U, "image")
    Bhat, nb = _embed_rows(Y, model.V, "sentence")
    S = Ahat @ Bhat.T
    sent, img = _contrastive_draws(n, model.k_contrastive, get_rng(contrastive_seed))
    G = np.zeros((n, n))
    loss = 0.0
    for i in range(n):
        pos = S[i, i]
        for j in sent[i]:
            term = model.alpha - pos + S[i, j]
            if term > 0.0:
                loss += term
                G[i, i] -= 1.0
                G[i, j] += 1.0
        for j in img[i]:
            term = model.alpha - pos + S[j, i]
            if term > 0.0:
                loss += term
                G[i, i] -= 1.0
                G[j, i] += 1.0
    return loss, G, Ahat, Bhat, S, na, nb


def ranking_loss(X: np.ndarray, Y: np.ndarray, model: RankingModel,
                 contrastive_seed) -> float:
    """Summed hinge loss over both directions for aligned (image, sentence)
    rows; the contrastive draw depends only on the seed and batch size."""
    return _loss_and_weights(X, Y, model, contrastive_seed)[0]


def ranking_grads(X: np.ndarray, Y: np.ndarray, model: RankingModel,
                  contrastive_seed) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and dL/dU, dL/dV.

    With G[i, j] the net weight on score S[i, j] from the active hinges, the
    cosine backward per row is da_i = (sum_j G_ij bhat_j - (G S)_ii' ahat_i)
    / ||a_i|| and symmetrically for b.
    """
    loss, G, Ahat, Bhat, S, na, nb = _loss_and_weights(X, Y, model,
                                                       contrastive_seed)
    GS = G * S
    dA = (G @ Bhat - GS.sum(axis=1)[:, None] * Ahat) / na[:, None]
    dB = (G.T @ Ahat - GS.sum(axis=0)[:, None] * Bhat) / nb[:, None]
    return loss, {"U": dA.T @ X, "V": dB.T @ Y}


@dataclass
class RankTrainConfig:
    batch_size: int = 100
    learning_rate: float = 0.001
    seed: int = 0
    recall_ks: tuple = DEFAULT_RECALL_KS
    dev_group_size: int = 1

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class RetrievalResult:
    recall_at: dict  # K -> percentage in [0, 100]
    median_rank: float
    excluded: int = 0


class RankTrainResult(NamedTuple):
    model: RankingModel
    history: list


def dev_recall_at_1(X_dev: np.ndarray, Y_dev: np.ndarray, model: RankingModel,
                    group_size: int = 1) -> float:
    res = evaluate_retrieval(X_dev, Y_dev, model, group_size=group_size, ks=(1,))
    return (res["annotation"].recall_at[1] + res["search"].recall_at[1]) / 2.0


def train_ranker(pairs: tuple[np.ndarray, np.ndarray], model: RankingModel,
                 epochs: int, dev: tuple[np.ndarray, np.ndarray],
                 config: RankTrainConfig) -> RankTrainResult:
    """Adam on the hinge ranking loss over shuffled minibatches, keeping the
    snapshot with the best dev Recall@1 (mean of both directions).

    Trailing batches too small to supply the contrastive draws are skipped.
    epochs = 0 returns the model untouched.
    """
    X, Y = np.asarray(pairs[0], float), np.asarray(pairs[1], float)
    Xd, Yd = np.asarray(dev[0], float), np.asarray(dev[1], float)
    if len(Xd) == 0:
        raise InputError("dev set is empty")
    n = len(X)
    if n != len(Y):
        raise ShapeError(f"{n} images vs {len(Y)} sentences")
    params = {"U": model.U.copy(), "V": model.V.copy()}
    opt = AdamState.initial(params, alpha=config.learning_rate)
    best = model.copy()
    best_score = -math.inf
    history: list = []
    for epoch in range(epochs):
        perm = get_rng(seed_tuple(config.seed, "rank-epoch", epoch)).permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            if len(idx) <= model.k_contrastive:
                continue
            cur = RankingModel(U=params["U"], V=params["V"], alpha=model.alpha,
                               k_contrastive=model.k_contrastive)
            loss, grads = ranking_grads(X[idx], Y[idx], cur,
                                        seed_tuple(config.seed, "contrast",
                                                   epoch, b))
            if not math.isfinite(loss):
                raise NumericError(f"non-finite ranking loss at epoch {epoch}; "
                                   f"training aborted")
            losses.append(loss)
            params, opt = adam_step(params, grads, opt)
        cur = RankingModel(U=params["U"], V=params["V"], alpha=model.alpha,
                           k_contrastive=model.k_contrastive)
        score = dev_recall_at_1(Xd, Yd, cur, config.dev_group_size)
        history.append({"epoch": epoch, "dev_r1": score,
                        "mean_loss": float(np.mean(losses)) if losses else 0.0})
        if score > best_score:
            best_score = score
            best = cur.copy()
    return RankTrainResult(model=best, history=history)


def _ranks_of_best_truth(S: np.ndarray, truth: list[np.ndarray]) -> np.ndarray:
    """For each query row of S, the 1-based rank (stable descending order) of
    its best-ranked ground-truth candidate."""
    out = np.empty(len(S), dtype=int)
    for q in range(len(S)):
        order = np.argsort(-S[q], kind="stable")
        pos = np.empty(S.shape[1], dtype=int)
        pos[order] = np.arange(1, S.shape[1] + 1)
        out[q] = int(pos[truth[q]].min())
    return out


def _summarize(ranks: np.ndarray, ks: Sequence[int],
               excluded: int) -> RetrievalResult:
    recall = {int(k): 100.0 * float(np.mean(ranks <= k)) for k in ks}
    return RetrievalResult(recall_at=recall,
                           median_rank=float(np.median(ranks)),
                           excluded=excluded)


def evaluate_retrieval(images: np.ndarray, captions: np.ndarray,
                       model: RankingModel, group_size: int = 5,
                       ks: Sequence[int] = DEFAULT_RECALL_KS) -> dict:
    """Both retrieval directions; caption j belongs to image j // group_size.

    annotation: each image queries all captions and is scored by the rank of
    its best ground-truth caption.  search: each caption queries all images.
    Returns {"annotation": RetrievalResult, "search": RetrievalResult}.
    """
    X = np.asarray(images, dtype=np.float64)
    Y = np.asarray(captions, dtype=np.float64)
    if group_size < 1 or len(Y) != len(X) * group_size:
        raise InputError(f"need exactly {group_size} captions per image: "
                         f"{len(X)} images, {len(Y)} captions")
    Ahat, _ = _embed_rows(X, model.U, "image")
    Bhat, _ = _embed_rows(Y, model.V, "sentence")
    S = Ahat @ Bhat.T                           # (n_images, n_captions)
    ann_truth = [np.arange(i * group_size, (i + 1) * group_size)
                 for i in range(len(X))]
    ann = _ranks_of_best_truth(S, ann_truth)
    sea_truth = [np.array([j // group_size]) for j in range(len(Y))]
    sea = _ranks_of_best_truth(S.T, sea_truth)
    return {"annotation": _summarize(ann, ks, 0),
            "search": _summarize(sea, ks, 0)}
