"""Command-line surface for the whole pipeline.

Subcommands: build-vocab, train, encode, expand, nn-word, nn-sent, eval-sick,
eval-paraphrase, eval-classify, eval-rank, generate.  Every run is
deterministic given its flags and seeds and emits one JSON manifest recording
the config, input digests, and outputs.  Exit codes: 0 success, 2 usage or
config problems, 3 numeric failures, 4 I/O failures.

A --config FILE of key=value lines can supply any flag's value; explicit
flags override the file.  The SKIPGRU_THREADS environment variable caps
worker threads for the parallelizable evaluation paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import corpus, probes, ranking, trainer, vocab_expansion
from .decoder import sample_sentence
from .encoder import encode
from .errors import (CheckpointError, ConfigError, ConvergenceError, InputError,
                     MetricError, NumericError, ParameterError, RangeError,
                     ShapeError, SkipGruError, StateError)
from .fileio import read_vectors, sha256_path, write_vectors
from .numerics import seed_tuple
from .probes import DEFAULT_L2_GRID

USAGE_ERRORS = (ConfigError, ParameterError, InputError, RangeError, ShapeError,
                StateError)
NUMERIC_ERRORS = (NumericError, ConvergenceError, MetricError)
IO_ERRORS = (CheckpointError, OSError, UnicodeDecodeError)

METRIC_CSV_HEADER = "task,variant,metric,value"


def _threads() -> int:
    raw = os.environ.get("SKIPGRU_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SKIPGRU_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError(f"SKIPGRU_THREADS must be >= 1, got {n}")
    return n


def _require_inputs(*paths) -> None:
    missing = [str(p) for p in paths if p is not None and not os.path.exists(str(p))]
    if missing:
        raise ConfigError("input path does not exist: " + ", ".join(missing))


def _write_manifest(args, command: str, inputs, outputs, seeds, t0) -> str:
    config = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "command", "manifest", "config_file"):
            continue
        config[k] = list(v) if isinstance(v, tuple) else v
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): sha256_path(p) for p in inputs if p is not None},
        "outputs": [str(p) for p in outputs],
        "seeds": seeds,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    path = args.manifest
    if path is None:
        path = (str(outputs[0]) + ".manifest.json" if outputs
                else f"skipgru-{command}.manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _parse_l2_grid(raw: str) -> tuple:
    try:
        grid = tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad --l2-grid value {raw!r}")
    if not grid:
        raise ConfigError("--l2-grid is empty")
    return grid


def _load_models(args):
    """Primary checkpoint, optional second one (combine mode), and their
    expansion lookups.  Returns (models, lookups, variant_name)."""
    _require_inputs(args.ckpt, getattr(args, "ckpt2", None),
                    getattr(args, "expansion", None),
                    getattr(args, "expansion2", None))
    model, _ = trainer.load_checkpoint(args.ckpt)
    models = [model]
    if getattr(args, "ckpt2", None):
        model2, _ = trainer.load_checkpoint(args.ckpt2)
        if model2.vocab.id_to_token != model.vocab.id_to_token:
            raise ConfigError("--ckpt and --ckpt2 use different vocabularies")
        models.append(model2)
    lookups = []
    for m, path in zip(models, [getattr(args, "expansion", None),
                                getattr(args, "expansion2", None)]):
        if path:
            emap, ext = vocab_expansion.read_expansion(path)
            lookups.append(vocab_expansion.expand(m, ext, emap))
        else:
            lookups.append(None)
    variant = "combine" if len(models) == 2 else models[0].config.mode
    return models, lookups, variant


def _encode_lines(lines, models, lookups) -> np.ndarray:
    cache: dict[str, np.ndarray] = {}
    rows = []
    for line in lines:
        if line not in cache:
            cache[line] = np.concatenate([
                vocab_expansion.encode_text(line, m, lk)
                for m, lk in zip(models, lookups)])
        rows.append(cache[line])
    return np.vstack(rows)


def _count_oov(lines, vocab) -> int:
    return sum(1 for line in lines for t in corpus.tokenize(line) if t not in vocab)


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _write_metric_rows(path, rows) -> None:
    """rows: (task, variant, metric, value); value formatted stably."""
    def fmt(v):
        return v if isinstance(v, str) else f"{v:.10g}"
    lines = [METRIC_CSV_HEADER] + [f"{t},{va},{m},{fmt(v)}" for t, va, m, v in rows]
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_build_vocab(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.corpus)
    docs = corpus.read_documents(args.corpus)
    vocab = corpus.build_vocab((s for doc in docs for s in doc), args.size)
    corpus.save_vocab(vocab, args.out)
    stats = corpus.corpus_stats(docs)
    stats["documents"] = len(docs)
    stats["vocab_size"] = vocab.size
    print(json.dumps(stats, sort_keys=True))
    _write_manifest(args, "build-vocab", [args.corpus], [args.out],
                    {}, t0)


def cmd_train(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.corpus, args.vocab)
    vocab = corpus.load_vocab(args.vocab)
    docs = corpus.read_documents(args.corpus)
    stats: dict = {}
    triples = list(corpus.iter_triples(docs, vocab, stats=stats))
    if not triples:
        raise InputError("corpus contains no 3-sentence documents; "
                         "nothing to train on")
    if args.resume:
        _require_inputs(args.out)
        model, opt = trainer.load_checkpoint(args.out)
        config = replace(model.config, max_steps=args.steps,
                         checkpoint_every=args.checkpoint_every)
        model = trainer.model_from_params(config, model.vocab, model.param_dict())
    else:
        config = trainer.TrainConfig(
            embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
            vocab_size=vocab.size, batch_size=args.batch, clip_threshold=args.clip,
            alpha=args.lr, max_steps=args.steps, seed=args.seed, mode=args.mode,
            checkpoint_every=args.checkpoint_every)
        model, opt = trainer.SkipGruModel.init(vocab, config), None
    metrics_path = args.metrics or args.out + ".metrics.csv"
    result = trainer.train(model, triples, opt, metrics_path=metrics_path,
                           checkpoint_path=args.out)
    summary = {"steps": result.opt.step, "triples": stats.get("triples", 0)}
    if result.history:
        summary["first_loss"] = result.history[0]["loss"]
        summary["final_loss"] = result.history[-1]["loss"]
    print(json.dumps(summary, sort_keys=True))
    _write_manifest(args, "train", [args.corpus, args.vocab],
                    [args.out, metrics_path], {"seed": args.seed}, t0)


def cmd_encode(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.input)
    models, lookups, _ = _load_models(args)
    lines = _read_lines(args.input)
    for m, lk in zip(models, lookups):
        if lk is None:
            oov = _count_oov(lines, m.vocab)
            if oov:
                print(f"warning: {oov} out-of-vocabulary token(s) fell back "
                      f"to unk (no expansion map given)", file=sys.stderr)
    vectors = _encode_lines(lines, models, lookups)
    write_vectors(args.out, vectors)
    outputs = [args.out]
    if args.text_out:
        with open(args.text_out, "w", encoding="utf-8") as fh:
            for row in vectors:
                fh.write(" ".join(f"{x:.8e}" for x in row) + "\n")
        outputs.append(args.text_out)
    print(json.dumps({"sentences": len(lines), "dim": int(vectors.shape[1])},
                     sort_keys=True))
    _write_manifest(args, "encode",
                    [args.input, args.ckpt, args.ckpt2, args.expansion,
                     args.expansion2], outputs, {}, t0)


def cmd_expand(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.ckpt, args.embeddings)
    model, _ = trainer.load_checkpoint(args.ckpt)
    ext, skipped = vocab_expansion.read_embeddings_text(args.embeddings)
    emap = vocab_expansion.fit_expansion(ext, model)
    vocab_expansion.write_expansion(emap, ext, args.out)
    print(json.dumps({"shared_count": emap.shared_count,
                      "residual_rms": emap.residual_rms,
                      "rank_deficient": emap.rank_deficient,
                      "skipped_multiword": skipped,
                      "expanded_vocab": len(set(ext.tokens)
                                            | set(model.vocab.id_to_token[2:]))},
                     sort_keys=True))
    _write_manifest(args, "expand", [args.ckpt, args.embeddings], [args.out],
                    {}, t0)


def _native_only_lookup(model) -> vocab_expansion.ExpandedLookup:
    """Lookup over just the training vocabulary (no expansion map given)."""
    ext = vocab_expansion.ExternalEmbeddings(
        tokens=[], vectors=np.zeros((0, 1)))
    emap = vocab_expansion.ExpansionMap(
        W=np.zeros((model.config.embed_dim, 1)), shared_count=0,
        residual_rms=0.0)
    return vocab_expansion.ExpandedLookup(model=model, ext=ext, map=emap)


def cmd_nn_word(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.ckpt, args.expansion)
    model, _ = trainer.load_checkpoint(args.ckpt)
    if args.expansion:
        emap, ext = vocab_expansion.read_expansion(args.expansion)
        lookup = vocab_expansion.expand(model, ext, emap)
    else:
        lookup = _native_only_lookup(model)
    for token, sim in vocab_expansion.nearest_words(args.query, lookup, args.k):
        print(f"{token}\t{sim:.6f}")
    _write_manifest(args, "nn-word", [args.ckpt, args.expansion], [], {}, t0)


def cmd_nn_sent(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.bank)
    models, lookups, _ = _load_models(args)
    lines = [line for line in _read_lines(args.bank) if line.strip()]
    if not lines:
        raise InputError(f"{args.bank}: no sentences")
    vectors = _encode_lines(lines, models, lookups)
    if len(models) == 2:
        # Combined vectors: query through the same two-model concatenation.
        q = np.concatenate([vocab_expansion.encode_text(args.query, m, lk)
                            for m, lk in zip(models, lookups)])
        sims = vocab_expansion._cosine_to_bank(q, vectors)
        order = np.argsort(-sims, kind="stable")[:max(args.k, 0)]
        ranked = [(lines[i], float(sims[i])) for i in order]
    else:
        bank = vocab_expansion.SentenceBank(sentences=lines, vectors=vectors)
        ranked = vocab_expansion.nearest_sentences(args.query, models[0], bank,
                                                   args.k, lookups[0])
    for sentence, sim in ranked:
        print(f"{sim:.6f}\t{sentence}")
    _write_manifest(args, "nn-sent",
                    [args.bank, args.ckpt, args.ckpt2, args.expansion,
                     args.expansion2], [], {}, t0)


def _pair_features_matrix(left, right, models, lookups) -> np.ndarray:
    uniq = sorted(set(left) | set(right))
    vecs = _encode_lines(uniq, models, lookups)
    index = {s: i for i, s in enumerate(uniq)}
    return np.vstack([probes.pair_features(vecs[index[a]], vecs[index[b]])
                      for a, b in zip(left, right)])


def cmd_eval_sick(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.train, args.test)
    models, lookups, variant = _load_models(args)
    grid = _parse_l2_grid(args.l2_grid)
    ltr, rtr, ytr = probes.read_pair_dataset(args.train)
    lte, rte, yte = probes.read_pair_dataset(args.test)
    Xtr = _pair_features_matrix(ltr, rtr, models, lookups)
    Xte = _pair_features_matrix(lte, rte, models, lookups)
    best = probes.select_l2_relatedness(Xtr, ytr, args.folds, grid, args.seed)
    probe = probes.fit_relatedness(Xtr, ytr, best)
    pred = probes.predict_scores(probe, Xte)
    rows = [("sick", variant, "best_l2", best)]
    for name, fn in (("pearson", probes.pearson), ("spearman", probes.spearman),
                     ("mse", probes.mse)):
        try:
            rows.append(("sick", variant, name, fn(pred, yte)))
        except MetricError as exc:
            print(f"warning: {name}: {exc}", file=sys.stderr)
            rows.append(("sick", variant, name, "nan"))
    _write_metric_rows(args.out, rows)
    _write_manifest(args, "eval-sick",
                    [args.train, args.test, args.ckpt, args.ckpt2,
                     args.expansion, args.expansion2],
                    [args.out] if args.out else [], {"seed": args.seed}, t0)


def cmd_eval_paraphrase(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.train, args.test)
    models, lookups, variant = _load_models(args)
    grid = _parse_l2_grid(args.l2_grid)
    ltr, rtr, ytr = probes.read_pair_dataset(args.train)
    lte, rte, yte = probes.read_pair_dataset(args.test)
    ytr_i, yte_i = ytr.astype(int), yte.astype(int)
    Xtr = _pair_features_matrix(ltr, rtr, models, lookups)
    Xte = _pair_features_matrix(lte, rte, models, lookups)
    best = probes.select_l2(Xtr, ytr_i, args.folds, grid, args.seed)
    probe = probes.fit_logreg(Xtr, ytr_i, best, n_classes=int(ytr_i.max()) + 1)
    pred = probes.predict(probe, Xte)
    rows = [("paraphrase", variant, "best_l2", best),
            ("paraphrase", variant, "accuracy", probes.accuracy(pred, yte_i)),
            ("paraphrase", variant, "f1", probes.f1(pred, yte_i))]
    _write_metric_rows(args.out, rows)
    _write_manifest(args, "eval-paraphrase",
                    [args.train, args.test, args.ckpt, args.ckpt2,
                     args.expansion, args.expansion2],
                    [args.out] if args.out else [], {"seed": args.seed}, t0)


def cmd_eval_classify(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.data)
    models, lookups, variant = _load_models(args)
    grid = _parse_l2_grid(args.l2_grid)
    labels, sentences, names = probes.read_label_dataset(args.data)
    X = _encode_lines(sentences, models, lookups)
    res = probes.cross_validate(X, labels, args.folds, grid, args.seed,
                                threads=_threads())
    rows = [("classify", variant, "accuracy", res["mean_accuracy"]),
            ("classify", variant, "best_l2", res["best_l2"])]
    rows += [("classify", variant, f"fold{f}_accuracy", s)
             for f, s in enumerate(res["fold_scores"])]
    _write_metric_rows(args.out, rows)
    _write_manifest(args, "eval-classify",
                    [args.data, args.ckpt, args.ckpt2, args.expansion,
                     args.expansion2],
                    [args.out] if args.out else [],
                    {"seed": args.seed, "classes": names}, t0)


def cmd_eval_rank(args) -> None:
    t0 = time.perf_counter()
    _require_inputs(args.images, args.captions)
    models, lookups, _ = _load_models(args)
    X = read_vectors(args.images)
    captions = [line for line in _read_lines(args.captions)]
    g = args.group_size
    if len(captions) != len(X) * g:
        raise InputError(f"{len(X)} images need {len(X) * g} caption lines "
                         f"({g} per image), found {len(captions)}")
    Y = _encode_lines(captions, models, lookups)
    n = len(X)
    n_train, n_dev = args.train_items, args.dev_items
    if n_train + n_dev > n:
        raise ConfigError(f"train ({n_train}) + dev ({n_dev}) items exceed "
                          f"the {n} available")
    if args.init == "identity":
        if not (X.shape[1] == Y.shape[1] == args.embed_dim):
            raise ConfigError("--init identity needs image, sentence, and "
                              "embedding dims to be equal")
        model = ranking.RankingModel(U=np.eye(args.embed_dim),
                                     V=np.eye(args.embed_dim),
                                     alpha=args.alpha,
                                     k_contrastive=args.k_contrastive)
    else:
        model = ranking.init_ranking_model(X.shape[1], Y.shape[1],
                                           args.embed_dim, args.alpha,
                                           args.k_contrastive, args.seed)
    if args.epochs > 0 and n_train > 0:
        if n_dev == 0:
            raise ConfigError("training needs --dev-items > 0")
        tr_imgs = np.repeat(np.arange(n_train), g)
        pairs = (X[tr_imgs], Y[:n_train * g])
        dev_slice = slice(n_train, n_train + n_dev)
        dev = (X[dev_slice], Y[n_train * g:(n_train + n_dev) * g])
        config = ranking.RankTrainConfig(batch_size=args.batch,
                                         learning_rate=args.lr, seed=args.seed,
                                         dev_group_size=g)
        result = ranking.train_ranker(pairs, model, args.epochs, dev, config)
        model = result.model
        for row in result.history:
            print(f"epoch {row['epoch']}: dev R@1 {row['dev_r1']:.2f}, "
                  f"mean loss {row['mean_loss']:.4f}", file=sys.stderr)
    lo = n_train + n_dev
    split = "test" if lo < n else "dev"
    if split == "dev":
        lo = n_train
    Xe, Ye = X[lo:], Y[lo * g:]
    res = ranking.evaluate_retrieval(Xe, Ye, model, group_size=g)
    rows = []
    for direction in ("annotation", "search"):
        r = res[direction]
        for k in sorted(r.recall_at):
            rows.append(("rank", f"{direction}-{split}", f"R@{k}",
                         r.recall_at[k]))
        rows.append(("rank", f"{direction}-{split}", "medr", r.median_rank))
    _write_metric_rows(args.out, rows)
    _write_manifest(args, "eval-rank",
                    [args.images, args.captions, args.ckpt, args.ckpt2,
                     args.expansion, args.expansion2],
                    [args.out] if args.out else [], {"seed": args.seed}, t0)


def generate_story(model, seed_sentence: str, n_sentences: int,
                   temperature: float, seed, max_len: int = 100,
                   lookup=None) -> list[list[int]]:
    """The iterative generation loop: encode, sample the next sentence from
    the next-sentence decoder, re-encode the sample, repeat.

    Every returned sentence is eos-terminated; a sample cut off at max_len
    gets the eos appended so downstream re-encoding sees a complete sentence.
    """
    if n_sentences < 1:
        raise ParameterError(f"need at least 1 sentence, got {n_sentences}")
    h = vocab_expansion.encode_text(seed_sentence, model, lookup)
    out: list[list[int]] = []
    for i in range(n_sentences):
        ids = sample_sentence(h, model.decoders.next_params, model.decoders.V,
                              model.embedding, max_len, temperature,
                              seed_tuple(seed, "generate", i),
                              eos_id=model.vocab.eos_id)
        if ids[-1] != model.vocab.eos_id:
            ids.append(model.vocab.eos_id)
        out.append(ids)
        h = encode(ids, model.encoder)
    return out


def cmd_generate(args) -> None:
    t0 = time.perf_counter()
    models, lookups, _ = _load_models(args)
    model = models[0]
    story = generate_story(model, args.seed_sentence, args.sentences,
                           args.temperature, args.seed, args.max_len,
                           lookups[0])
    for ids in story:
        print(corpus.detokenize(model.vocab.tokens_for(ids[:-1])))
    _write_manifest(args, "generate", [args.ckpt], [],
                    {"seed": args.seed}, t0)


# ---------------------------------------------------------------- parser


def _add_model_flags(p, combine: bool = True):
    p.add_argument("--ckpt", required=True, help="model checkpoint")
    if combine:
        p.add_argument("--ckpt2", default=None,
                       help="second checkpoint; outputs are concatenated")
        p.add_argument("--expansion2", default=None,
                       help="expansion map for --ckpt2")
    p.add_argument("--expansion", default=None,
                   help="vocabulary expansion map (from `expand`)")


def _add_common(p):
    p.add_argument("--config", dest="config_file", default=None,
                   help="key=value file supplying flag defaults")
    p.add_argument("--manifest", default=None,
                   help="manifest path (default: derived from the output)")


def _add_eval_flags(p):
    p.add_argument("--out", default=None, help="metrics CSV path")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--l2-grid", default=",".join(str(x) for x in DEFAULT_L2_GRID))
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="skipgru",
        description="Sentence-embedding toolkit: GRU encoder trained by "
                    "reconstructing neighboring sentences, with vocabulary "
                    "expansion and linear evaluation harnesses.")
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict = {}

    def sub(name, func, **kw):
        p = subs.add_parser(name, **kw)
        p.set_defaults(func=func)
        _add_common(p)
        registry[name] = p
        return p

    p = sub("build-vocab", cmd_build_vocab,
            help="build a frequency-ranked vocabulary from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub("train", cmd_train, help="train the sentence encoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--mode", choices=("uni", "bi"), default="uni")
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--clip", type=float, default=10.0)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--metrics", default=None,
                   help="metrics CSV (default: <out>.metrics.csv)")
    p.add_argument("--resume", action="store_true",
                   help="continue from the checkpoint at --out")
    p.add_argument("--out", required=True)

    p = sub("encode", cmd_encode, help="encode sentences to a vector file")
    _add_model_flags(p)
    p.add_argument("--input", required=True, help="one sentence per line")
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", default=None,
                   help="also write vectors as text")

    p = sub("expand", cmd_expand,
            help="fit the vocabulary-expansion map from external embeddings")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--embeddings", required=True,
                   help="textual word-vector file ('count dim' header)")
    p.add_argument("--out", required=True)

    p = sub("nn-word", cmd_nn_word, help="nearest words in embedding space")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--expansion", default=None)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)

    p = sub("nn-sent", cmd_nn_sent, help="nearest sentences from a bank")
    _add_model_flags(p)
    p.add_argument("--bank", required=True, help="one sentence per line")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=5)

    p = sub("eval-sick", cmd_eval_sick,
            help="semantic-relatedness probe (5-bin soft-target readout)")
    _add_model_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    _add_eval_flags(p)

    p = sub("eval-paraphrase", cmd_eval_paraphrase,
            help="paraphrase-detection probe")
    _add_model_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    _add_eval_flags(p)

    p = sub("eval-classify", cmd_eval_classify,
            help="classification probe with nested cross-validation")
    _add_model_flags(p)
    p.add_argument("--data", required=True, help="label TAB sentence rows")
    _add_eval_flags(p)

    p = sub("eval-rank", cmd_eval_rank,
            help="image-sentence retrieval with a trained linear embedding")
    _add_model_flags(p)
    p.add_argument("--images", required=True, help="image feature vector file")
    p.add_argument("--captions", required=True,
                   help="caption text, group-size lines per image")
    p.add_argument("--group-size", type=int, default=5)
    p.add_argument("--train-items", type=int, default=0)
    p.add_argument("--dev-items", type=int, default=0)
    p.add_argument("--embed-dim", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--k-contrastive", type=int, default=50)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("random", "identity"), default="random")
    p.add_argument("--out", default=None, help="metrics CSV path")

    p = sub("generate", cmd_generate,
            help="iteratively sample a continuation, one sentence at a time")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--expansion", default=None)
    p.add_argument("--seed-sentence", required=True)
    p.add_argument("--sentences", type=int, default=20)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=100)

    return parser, registry


def _read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config_file(sub: argparse.ArgumentParser, raw: dict) -> None:
    defaults = {}
    for key, sval in raw.items():
        action = next((a for a in sub._actions if a.dest == key), None)
        if action is None or key in ("config_file", "func"):
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction,
                               argparse._StoreFalseAction)):
            defaults[key] = sval.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(sval)
            except ValueError:
                raise ConfigError(f"bad value {sval!r} for config key {key!r}")
        else:
            defaults[key] = sval
        action.required = False  # the file satisfies this argument
    sub.set_defaults(**defaults)


def _find_config_arg(argv: list[str]):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, registry = build_parser()
    try:
        # Config defaults must land before parse_args so required flags that
        # the file supplies do not abort the parse; explicit flags still win.
        cfg_path = _find_config_arg(argv)
        if cfg_path is not None:
            if not argv or argv[0] not in registry:
                raise ConfigError("--config requires a subcommand")
            _require_inputs(cfg_path)
            _apply_config_file(registry[argv[0]], _read_config_file(cfg_path))
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except IO_ERRORS as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except SkipGruError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
