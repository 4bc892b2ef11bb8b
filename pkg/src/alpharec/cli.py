"""Command-line pipelines: data preparation, training, evaluation, intent
re-ranking, and representation export.

Exit codes: 0 success, 1 usage error, 2 data/content error. Every run writes a
manifest (resolved settings, seeds, input digests, output paths, wall clock)
alongside its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import corpus, embed, evaluate, intent, model, synth, train


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract wants 1 (2 means bad data)
    def exit(self, status=0, message=None):
        if message:
            self._print_message(message, sys.stderr)
        sys.exit(1 if status == 2 else status)


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    inputs: dict
    outputs: list
    wall_clock_seconds: float

    def write(self, path: str) -> None:
        payload = {
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_clock_seconds": self.wall_clock_seconds,
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _split_input_digests(split_dir: str) -> dict:
    names = ["train.tsv", "val.tsv", "test.tsv", "idmap.users.tsv", "idmap.items.tsv"]
    return {os.path.join(split_dir, n): _digest(os.path.join(split_dir, n)) for n in names}


def _matrix_input_digests(path: str) -> dict:
    out = {path: _digest(path)}
    side = embed.sidecar_path(path)
    if os.path.exists(side):
        out[side] = _digest(side)
    return out


def _config_of(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("ALPHAREC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValueError(f"ALPHAREC_THREADS={env!r} is not an integer") from exc
    return 1


def _load_features(path: str, id_maps: corpus.IdMaps) -> embed.EmbeddingMatrix:
    m = embed.load_matrix(path)
    if m.row_ids is not None:
        return embed.align_to_items(m, id_maps)
    if m.rows < len(id_maps.items):
        raise ValueError(f"{path}: {m.rows} rows for {len(id_maps.items)} items")
    return embed.EmbeddingMatrix(m.data[: len(id_maps.items)])


def _write_metrics(path: str, metrics: evaluate.RankingMetrics, dataset: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(metrics.to_dict(dataset), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_for_file(out_path: str) -> str:
    return f"{out_path}.manifest.json"


# ---------------------------------------------------------------- commands


def _cmd_synth(args) -> int:
    cfg = synth.SynthConfig(
        n_users=args.users,
        n_items=args.items,
        d_latent=args.d_latent,
        d_lang=args.d_lang,
        interactions_per_user=args.per_user,
        noise_sigma=args.noise,
        gen_temperature=args.gen_temperature,
        nonlinear=args.nonlinear,
        seed=args.seed,
    )
    tic = time.perf_counter()

    def write_domain(out_dir: str, domain, latent_seed: int | None) -> list[str]:
        raw, matrix, _ = domain
        os.makedirs(out_dir, exist_ok=True)
        inter_path = os.path.join(out_dir, "interactions.tsv")
        with open(inter_path, "w", encoding="utf-8", newline="\n") as fh:
            for user, item, _ts in raw.records:
                fh.write(f"{user}\t{item}\n")
        items_path = os.path.join(out_dir, "items.arec")
        embed.write_matrix(matrix, items_path)
        truth_path = os.path.join(out_dir, "truth.json")
        with open(truth_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(synth.config_echo(cfg, latent_seed), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return [inter_path, items_path, embed.sidecar_path(items_path), truth_path]

    if args.pair:
        pair = synth.make_domain_pair(cfg, args.seed_a, args.seed_b)
        outputs = write_domain(os.path.join(args.out_dir, "domain_a"), pair[0], args.seed_a)
        outputs += write_domain(os.path.join(args.out_dir, "domain_b"), pair[1], args.seed_b)
        seeds = {"seed": args.seed, "seed_a": args.seed_a, "seed_b": args.seed_b}
    else:
        outputs = write_domain(args.out_dir, synth.generate(cfg), None)
        seeds = {"seed": args.seed}
    RunManifest(
        "synth", _config_of(args), seeds, {}, outputs, time.perf_counter() - tic
    ).write(os.path.join(args.out_dir, "manifest.json"))
    return 0


def _cmd_ingest(args) -> int:
    tic = time.perf_counter()
    raw = corpus.parse_interactions(args.interactions)
    records, id_maps = corpus.filter_and_index(raw, args.min_interactions)
    os.makedirs(args.out_dir, exist_ok=True)
    indexed_path = os.path.join(args.out_dir, "interactions.indexed.tsv")
    with open(indexed_path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i, ts in records:
            fh.write(f"{u}\t{i}\n" if ts is None else f"{u}\t{i}\t{ts}\n")
    users_path = os.path.join(args.out_dir, "idmap.users.tsv")
    items_path = os.path.join(args.out_dir, "idmap.items.tsv")
    corpus._write_idmap(users_path, id_maps.users)
    corpus._write_idmap(items_path, id_maps.items)
    RunManifest(
        "ingest",
        _config_of(args),
        {},
        {args.interactions: _digest(args.interactions)},
        [indexed_path, users_path, items_path],
        time.perf_counter() - tic,
    ).write(os.path.join(args.out_dir, "manifest.json"))
    return 0


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"ratios must be three comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _cmd_split(args) -> int:
    tic = time.perf_counter()
    raw = corpus.parse_interactions(args.interactions)
    records, id_maps = corpus.filter_and_index(raw, args.min_interactions)
    split = corpus.split_dataset(
        records, id_maps, _parse_ratios(args.ratios), args.seed, order=args.order
    )
    corpus.write_split(split, args.out_dir)
    outputs = [
        os.path.join(args.out_dir, n)
        for n in ["train.tsv", "val.tsv", "test.tsv", "idmap.users.tsv", "idmap.items.tsv"]
    ]
    RunManifest(
        "split",
        _config_of(args),
        {"seed": args.seed},
        {args.interactions: _digest(args.interactions)},
        outputs,
        time.perf_counter() - tic,
    ).write(os.path.join(args.out_dir, "manifest.json"))
    return 0


def _load_training_data(args, need_features: bool):
    split_dirs: list[str] = args.split
    splits = [corpus.load_split(d, dataset_tag=k) for k, d in enumerate(split_dirs)]
    inputs: dict = {}
    for d in split_dirs:
        inputs.update(_split_input_digests(d))
    features = None
    if need_features:
        if not args.items or len(args.items) != len(split_dirs):
            raise ValueError("need one --items matrix per --split directory")
        blocks = []
        for s, path in zip(splits, args.items):
            blocks.append(_load_features(path, s.id_maps).data)
            inputs.update(_matrix_input_digests(path))
        dims = {b.shape[1] for b in blocks}
        if len(dims) != 1:
            raise ValueError(f"feature dims differ across datasets: {sorted(dims)}")
        features = embed.EmbeddingMatrix(np.vstack(blocks))
    data = splits[0] if len(splits) == 1 else corpus.merge_datasets(splits)
    return data, features, inputs


def _run_training(args, model_kind: str) -> int:
    tic = time.perf_counter()
    config = train.TrainConfig(
        temperature=args.temperature,
        n_negatives=args.negatives,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        max_epochs=args.epochs,
        eval_every=args.eval_every,
        patience=args.patience,
        n_layers=args.layers,
        loss_kind=args.loss,
        seed=args.seed,
    )
    data, features, inputs = _load_training_data(args, model_kind != "id")
    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, "train_log.jsonl")
    result = train.fit(
        model_kind,
        data,
        features,
        config,
        hidden_dim=args.hidden,
        out_dim=args.dim,
        log_path=log_path,
    )
    ckpt_path = os.path.join(args.out_dir, "checkpoint.arck")
    extra = {"trained_epochs": len(result.log), "best_epoch": result.best_epoch}
    if result.best_val_recall is not None:
        extra["best_val_recall"] = result.best_val_recall
    model.save_checkpoint(ckpt_path, result.params, config.n_layers, extra)
    RunManifest(
        model_kind if model_kind != "mlp" else "train",
        _config_of(args),
        {"seed": args.seed},
        inputs,
        [ckpt_path, log_path],
        time.perf_counter() - tic,
    ).write(os.path.join(args.out_dir, "manifest.json"))
    return 0


def _cmd_train(args) -> int:
    kind = "probe" if args.no_mlp else args.model
    return _run_training(args, kind)


def _cmd_probe_train(args) -> int:
    return _run_training(args, "probe")


def _load_checkpoint_for_split(args, split: corpus.DatasetSplit):
    params, meta = model.load_checkpoint(args.checkpoint)
    n_layers = args.layers if getattr(args, "layers", None) is not None else meta["n_layers"]
    features = None
    if not isinstance(params, model.IdEmbeddingParams):
        if not args.items:
            raise ValueError("language-feature checkpoints need --items")
        features = _load_features(args.items, split.id_maps)
        if features.dim != params.input_dim:
            raise ValueError(
                f"feature dim {features.dim} != model input dim {params.input_dim}"
            )
    else:
        if params.user_table.shape[0] != split.n_users or params.item_table.shape[0] != split.n_items:
            raise ValueError("identifier-table checkpoint does not match this split")
    return params, meta, n_layers, features


def _cmd_eval(args) -> int:
    tic = time.perf_counter()
    split = corpus.load_split(args.split)
    params, _meta, n_layers, features = _load_checkpoint_for_split(args, split)
    g = train.build_graph(split)
    output = model.full_forward(params, features, g, n_layers, keep_layers=False)
    metrics = evaluate.evaluate_output(
        output, split, args.k, "test", args.mask_val, _resolve_threads(args.threads)
    )
    dataset = args.dataset_name or os.path.basename(os.path.normpath(args.split))
    _write_metrics(args.out, metrics, dataset)
    inputs = _split_input_digests(args.split)
    inputs[args.checkpoint] = _digest(args.checkpoint)
    if args.items:
        inputs.update(_matrix_input_digests(args.items))
    RunManifest(
        "eval", _config_of(args), {}, inputs, [args.out], time.perf_counter() - tic
    ).write(_manifest_for_file(args.out))
    return 0


def _cmd_baseline(args) -> int:
    tic = time.perf_counter()
    split = corpus.load_split(args.split)
    metrics = evaluate.strategy_baseline(args.kind, split, args.k, args.seed)
    dataset = args.dataset_name or os.path.basename(os.path.normpath(args.split))
    _write_metrics(args.out, metrics, dataset)
    RunManifest(
        "baseline",
        _config_of(args),
        {"seed": args.seed},
        _split_input_digests(args.split),
        [args.out],
        time.perf_counter() - tic,
    ).write(_manifest_for_file(args.out))
    return 0


def _cmd_zero_shot_eval(args) -> int:
    tic = time.perf_counter()
    split = corpus.load_split(args.split)
    params, meta = model.load_checkpoint(args.checkpoint)
    n_layers = args.layers if args.layers is not None else meta["n_layers"]
    if isinstance(params, model.IdEmbeddingParams):
        raise ValueError("identifier-table models cannot transfer to a new dataset")
    features = _load_features(args.items, split.id_maps)
    metrics = evaluate.zero_shot_evaluate(
        params, split, features, n_layers, args.k, threads=_resolve_threads(args.threads)
    )
    dataset = args.dataset_name or os.path.basename(os.path.normpath(args.split))
    _write_metrics(args.out, metrics, dataset)
    inputs = _split_input_digests(args.split)
    inputs[args.checkpoint] = _digest(args.checkpoint)
    inputs.update(_matrix_input_digests(args.items))
    RunManifest(
        "zero-shot-eval", _config_of(args), {}, inputs, [args.out], time.perf_counter() - tic
    ).write(_manifest_for_file(args.out))
    return 0


def _forward_with_layers(args, split):
    params, meta, n_layers, features = _load_checkpoint_for_split(args, split)
    g = train.build_graph(split)
    output = model.full_forward(params, features, g, n_layers, keep_layers=True)
    return params, output, g


def _cmd_intent_eval(args) -> int:
    tic = time.perf_counter()
    split = corpus.load_split(args.split)
    params, output, _g = _forward_with_layers(args, split)
    queries_path = args.queries or args.items
    queries = intent.IntentQuerySet(_load_features(queries_path, split.id_maps))
    metrics = intent.intent_evaluate(params, output, queries, split, args.alpha, args.k)
    dataset = args.dataset_name or os.path.basename(os.path.normpath(args.split))
    _write_metrics(args.out, metrics, dataset)
    inputs = _split_input_digests(args.split)
    inputs[args.checkpoint] = _digest(args.checkpoint)
    inputs.update(_matrix_input_digests(args.items))
    if args.queries:
        inputs.update(_matrix_input_digests(args.queries))
    RunManifest(
        "intent-eval", _config_of(args), {}, inputs, [args.out], time.perf_counter() - tic
    ).write(_manifest_for_file(args.out))
    return 0


def _cmd_intent_rank(args) -> int:
    tic = time.perf_counter()
    split = corpus.load_split(args.split)
    params, output, g = _forward_with_layers(args, split)
    queries_path = args.queries or args.items
    queries = _load_features(queries_path, split.id_maps)
    if not 0 <= args.user < split.n_users:
        raise ValueError(f"user index {args.user} outside [0, {split.n_users})")
    if not 0 <= args.query_row < queries.rows:
        raise ValueError(f"query row {args.query_row} outside [0, {queries.rows})")
    e_int = intent.project_query(params, queries.data[args.query_row])
    topk = intent.intent_rank(
        output,
        args.user,
        e_int,
        args.alpha,
        split.train[args.user],
        args.k,
        g=g,
        repropagate=args.repropagate,
    )
    lines = [
        f"{rank}\t{item}\t{split.id_maps.items[item]}"
        for rank, item in enumerate(topk.tolist(), start=1)
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        inputs = _split_input_digests(args.split)
        inputs[args.checkpoint] = _digest(args.checkpoint)
        RunManifest(
            "intent-rank", _config_of(args), {}, inputs, [args.out], time.perf_counter() - tic
        ).write(_manifest_for_file(args.out))
    else:
        sys.stdout.write(text)
    return 0


def _cmd_export_reps(args) -> int:
    tic = time.perf_counter()
    split = corpus.load_split(args.split)
    params, meta, n_layers, features = _load_checkpoint_for_split(args, split)
    g = train.build_graph(split)
    output = model.full_forward(params, features, g, n_layers, keep_layers=False)
    os.makedirs(args.out_dir, exist_ok=True)
    users_path = os.path.join(args.out_dir, "reps.users.tsv")
    items_path = os.path.join(args.out_dir, "reps.items.tsv")
    evaluate.export_representations(output, users_path, items_path)
    inputs = _split_input_digests(args.split)
    inputs[args.checkpoint] = _digest(args.checkpoint)
    if args.items:
        inputs.update(_matrix_input_digests(args.items))
    RunManifest(
        "export-reps",
        _config_of(args),
        {},
        inputs,
        [users_path, items_path],
        time.perf_counter() - tic,
    ).write(os.path.join(args.out_dir, "manifest.json"))
    return 0


def _cmd_shuffle_embeddings(args) -> int:
    tic = time.perf_counter()
    m = embed.load_matrix(args.input)
    shuffled = embed.shuffle_rows(m, args.seed)
    embed.write_matrix(shuffled, args.out)
    outputs = [args.out]
    if shuffled.row_ids is not None:
        outputs.append(embed.sidecar_path(args.out))
    RunManifest(
        "shuffle-embeddings",
        _config_of(args),
        {"seed": args.seed},
        _matrix_input_digests(args.input),
        outputs,
        time.perf_counter() - tic,
    ).write(_manifest_for_file(args.out))
    return 0


# ---------------------------------------------------------------- parser


def _add_training_args(p: _Parser, default_layers: int) -> None:
    p.add_argument("--split", nargs="+", required=True, metavar="DIR",
                   help="split directory; repeat for mixed co-training")
    p.add_argument("--items", nargs="*", default=[], metavar="FILE",
                   help="item feature matrix per split (unused by --model id)")
    p.add_argument("--out-dir", required=True,
                   help="directory for checkpoint, log, and manifest")
    p.add_argument("--loss", choices=["infonce", "bpr"], default="infonce",
                   help="training objective (bpr pairs one negative per positive)")
    p.add_argument("--layers", type=int, default=default_layers,
                   help="neighborhood smoothing steps")
    p.add_argument("--temperature", type=float, default=0.15,
                   help="contrastive temperature")
    p.add_argument("--negatives", type=int, default=256,
                   help="sampled negatives per positive (infonce)")
    p.add_argument("--batch-size", type=int, default=1024,
                   help="positive pairs per optimization step")
    p.add_argument("--lr", type=float, default=5e-4, help="Adam learning rate")
    p.add_argument("--epochs", type=int, default=300, help="maximum epochs")
    p.add_argument("--eval-every", type=int, default=1,
                   help="epochs between validation evaluations")
    p.add_argument("--patience", type=int, default=20,
                   help="non-improving evaluations before stopping")
    p.add_argument("--hidden", type=int, default=1536, help="projection hidden width")
    p.add_argument("--dim", type=int, default=64, help="representation width")
    p.add_argument("--seed", type=int, default=0,
                   help="root of every random stream in the run")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="alpharec",
        description="Train and evaluate collaborative filtering on language-embedding item features.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic corpus",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--out-dir", required=True,
                   help="directory for interactions, features, truth, manifest")
    p.add_argument("--users", type=int, default=500, help="number of users")
    p.add_argument("--items", type=int, default=300, help="number of items")
    p.add_argument("--d-latent", type=int, default=8, help="latent preference width")
    p.add_argument("--d-lang", type=int, default=64, help="feature width")
    p.add_argument("--per-user", type=int, default=30, help="interactions per user")
    p.add_argument("--noise", type=float, default=0.1, help="feature noise scale")
    p.add_argument("--gen-temperature", type=float, default=0.2,
                   help="softmax temperature of the interaction sampler")
    p.add_argument("--nonlinear", action="store_true",
                   help="cubic latent distortion before the mixing map")
    p.add_argument("--seed", type=int, default=0, help="root of every random stream")
    p.add_argument("--pair", action="store_true",
                   help="write two domains sharing the mixing map")
    p.add_argument("--seed-a", type=int, default=1, help="latent seed of domain A")
    p.add_argument("--seed-b", type=int, default=2, help="latent seed of domain B")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="parse, filter, and index interactions",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--interactions", required=True, help="user<TAB>item[<TAB>time] TSV")
    p.add_argument("--out-dir", required=True, help="directory for indexed output")
    p.add_argument("--min-interactions", type=int, default=20,
                   help="drop users and items below this count")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("split", help="full corpus pipeline ending in a split directory",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--interactions", required=True, help="user<TAB>item[<TAB>time] TSV")
    p.add_argument("--out-dir", required=True, help="directory for the split files")
    p.add_argument("--min-interactions", type=int, default=20,
                   help="drop users and items below this count")
    p.add_argument("--ratios", default="0.4,0.3,0.3",
                   help="train,validation,test fractions")
    p.add_argument("--order", choices=["random", "time"], default="random",
                   help="per-user ordering before cutting")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed for random order")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train a model (default: projection + smoothing)",
                       description="Train on a split directory. Defaults target 3072-wide "
                                   "language features projected 3072 -> 1536 -> 64, with 2 "
                                   "smoothing steps.",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_training_args(p, default_layers=2)
    p.add_argument("--model", choices=["mlp", "probe", "id"], default="mlp",
                   help="parameterization of layer-0 representations")
    p.add_argument("--no-mlp", action="store_true",
                   help="linear item projection inside the full pipeline")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("probe-train", help="train the plain linear probe (no smoothing)",
                       description="Linear probe: one 3072 -> 64 projection by default, "
                                   "no smoothing steps.",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_training_args(p, default_layers=0)
    p.set_defaults(func=_cmd_probe_train)

    def eval_like(name: str, help_text: str) -> _Parser:
        q = sub.add_parser(name, help=help_text,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        q.add_argument("--checkpoint", required=True, help="trained model file")
        q.add_argument("--split", required=True, help="split directory")
        q.add_argument("--items", default=None,
                       help="item feature matrix (unneeded for id checkpoints)")
        q.add_argument("--layers", type=int, default=None,
                       help="override the checkpoint's smoothing depth")
        q.add_argument("--dataset-name", default=None,
                       help="name recorded in the metrics (default: split directory)")
        q.add_argument("--threads", type=int, default=None,
                       help="worker cap (or ALPHAREC_THREADS)")
        return q

    p = eval_like("eval", "held-out ranking metrics for a checkpoint")
    p.add_argument("--k", type=int, default=20, help="ranking cutoff")
    p.add_argument("--mask-val", action="store_true",
                   help="also mask validation positives")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="score-free ranking baselines",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--kind", choices=["random", "pop"], required=True,
                   help="uniform random or training popularity ranking")
    p.add_argument("--split", required=True, help="split directory")
    p.add_argument("--k", type=int, default=20, help="ranking cutoff")
    p.add_argument("--seed", type=int, default=0, help="seed for the random baseline")
    p.add_argument("--dataset-name", default=None,
                   help="name recorded in the metrics (default: split directory)")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=_cmd_baseline)

    p = eval_like("zero-shot-eval", "evaluate a frozen checkpoint on an unseen dataset")
    p.add_argument("--k", type=int, default=20, help="ranking cutoff")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=_cmd_zero_shot_eval)

    p = eval_like("intent-eval", "single-target evaluation with blended queries")
    p.add_argument("--queries", default=None,
                   help="query matrix (defaults to --items)")
    p.add_argument("--alpha", type=float, default=0.8, help="blend strength")
    p.add_argument("--k", type=int, default=5, help="ranking cutoff")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=_cmd_intent_eval)

    p = eval_like("intent-rank", "top-k list for one user and one query")
    p.add_argument("--queries", default=None,
                   help="query matrix (defaults to --items)")
    p.add_argument("--alpha", type=float, default=0.8, help="blend strength")
    p.add_argument("--k", type=int, default=10, help="list length")
    p.add_argument("--user", type=int, required=True, help="user index")
    p.add_argument("--query-row", type=int, required=True,
                   help="row of the query matrix to blend in")
    p.add_argument("--repropagate", action="store_true",
                   help="re-run smoothing with the blended user state")
    p.add_argument("--out", default=None, help="output TSV (default stdout)")
    p.set_defaults(func=_cmd_intent_rank)

    p = eval_like("export-reps", "write final user/item representations as TSV")
    p.add_argument("--out-dir", required=True, help="directory for the two TSV files")
    p.set_defaults(func=_cmd_export_reps)

    p = sub.add_parser("shuffle-embeddings", help="seeded row shuffle of a feature matrix",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--input", required=True, dest="input", help="matrix to permute")
    p.add_argument("--out", required=True, help="permuted matrix path")
    p.add_argument("--seed", type=int, default=0, help="permutation seed")
    p.set_defaults(func=_cmd_shuffle_embeddings)

    return parser


def dispatch(argv: list[str]) -> int:
    """Parse and run one command, mapping failures to the exit-code contract."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (
        corpus.ParseError,
        train.TrainingDiverged,
        ValueError,
        OSError,
        KeyError,
        json.JSONDecodeError,
    ) as exc:
        print(f"alpharec: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
