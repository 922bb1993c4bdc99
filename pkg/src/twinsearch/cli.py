"""Command-line surface: train, index, query, eval, stump, synth, serve.

Conventions shared by the data-bound subcommands:
  - images are resized on load to the checkpoint's input shape;
  - index and eval re-derive the train/test split from the checkpoint's
    training seed, so the indexed store never leaks test patches.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

from .data import load_dataset, load_patch_dir, split_dataset, synth_generate, write_dataset
from .errors import ConfigError, TwinsearchError
from .evaluation import (
    confusion_csv,
    run_retrieval_eval,
    save_reports_json,
    save_retrieval_results,
    format_report_text,
    uncertain_query_report,
    uncertain_report_csv,
)
from .network import load_checkpoint, preset_config, preset_names, save_checkpoint
from .store import FeatureStore, index_build
from .training import TrainConfig, train
from .service.schemas import QueryRequest
from .service.state import AppState, handle_query


def _parse_size(text: str) -> tuple[int, int]:
    """Accept '32x32' (HxW) or a bare side length."""
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            side = int(parts[0])
            return side, side
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise ConfigError(f"size must look like 32x32, got {text!r}")


def _parse_k_list(text: str) -> list[int]:
    try:
        ks = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"k-list must be comma-separated ints, got {text!r}")
    if not ks:
        raise ConfigError("k-list is empty")
    return ks


def _labelled_split(root, network, seed: int, train_fraction: float):
    """Load a dataset at the network's input size and split it like training did."""
    h, w, _ = network.config.input_shape
    manifest = load_dataset(root, image_size=(h, w))
    train_recs, holdout = split_dataset(manifest.all_records(), train_fraction, seed)
    test_recs = [r for r in holdout if r.label is not None]
    return manifest, train_recs, test_recs


def cmd_train(args) -> int:
    manifest = load_dataset(args.data)
    records = manifest.all_records()
    train_recs, _ = split_dataset(records, args.train_fraction, args.seed)
    shape = train_recs[0].pixels.shape
    net_config = preset_config(args.preset, input_shape=shape)
    train_config = TrainConfig(
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size,
        margin=args.margin,
        initial_lr=args.lr,
    )

    def on_epoch(epoch, mean_loss, lr, _network):
        print(f"epoch {epoch + 1}/{args.epochs}  loss {mean_loss:.6f}  lr {lr:.6f}")

    network, report = train(train_recs, net_config, train_config, on_epoch=on_epoch)
    save_checkpoint(network, args.out)
    print(f"saved checkpoint to {args.out} ({len(train_recs)} training patches)")
    if args.loss_csv:
        lines = ["epoch,mean_loss,lr"]
        lines += [f"{i + 1},{loss!r},{lr!r}"
                  for i, (loss, lr) in enumerate(zip(report.loss_history, report.lr_history))]
        Path(args.loss_csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_index(args) -> int:
    network = load_checkpoint(args.ckpt)
    _, train_recs, _ = _labelled_split(args.data, network, network.seed,
                                       args.train_fraction)
    store = index_build(network, train_recs, checkpoint=Path(args.ckpt).name)
    store.save(args.out)
    print(f"indexed {len(store)} patches into {args.out}")
    return 0


def cmd_query(args) -> int:
    state = AppState.from_files(args.ckpt, args.store)
    blob = Path(args.image).read_bytes()
    req = QueryRequest(image=base64.b64encode(blob).decode("ascii"), k=args.k)
    resp = handle_query(req, state)
    print(resp.model_dump_json(indent=2))
    return 0


def cmd_eval(args) -> int:
    network = load_checkpoint(args.ckpt)
    store = FeatureStore.load(args.store)
    _, _, test_recs = _labelled_split(args.data, network, network.seed,
                                      args.train_fraction)
    ks = _parse_k_list(args.k_list)
    run = run_retrieval_eval(network, store, test_recs, ks=ks)

    out = Path(args.out)
    save_reports_json(run.reports, out)
    save_retrieval_results(run.results, run.query_labels, out.with_suffix(".results.jsonl"))
    for k, report in sorted(run.reports.items()):
        out.with_name(f"{out.stem}.confusion_k{k}.csv").write_text(
            confusion_csv(report), encoding="utf-8")
    print(format_report_text(run.reports, n_queries=len(run.results)), end="")
    print(f"wrote {out}")
    return 0


def cmd_stump(args) -> int:
    network = load_checkpoint(args.ckpt)
    store = FeatureStore.load(args.store)
    h, w, _ = network.config.input_shape
    patches = load_patch_dir(args.uncertain_dir, image_size=(h, w),
                             class_name="uncertain")
    report = uncertain_query_report(store, network, patches, args.k)
    csv_text = uncertain_report_csv(report)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(csv_text, end="")
    return 0


def cmd_synth(args) -> int:
    size = _parse_size(args.size)
    manifest = synth_generate(n_per_class=args.n, size=size, seed=args.seed)
    out = Path(args.out)
    write_dataset(manifest, out)
    summary = {
        "classes": manifest.classes,
        "n_per_class": args.n,
        "size": list(size),
        "seed": args.seed,
        "records": len(manifest.records),
        "uncertain": len(manifest.uncertain),
    }
    (out / "manifest.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    print(f"wrote {len(manifest.all_records())} patches under {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    state = AppState.from_files(args.ckpt, args.store, report_path=args.report)
    static_dir = args.frontend
    if static_dir is None:
        candidate = Path("frontend") / "dist"
        static_dir = candidate if candidate.is_dir() else None
    app = create_app(state, static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twinsearch",
        description="Patch retrieval by learned embedding distance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a network on a labelled patch directory")
    p.add_argument("--data", required=True, help="dataset root (class subdirectories)")
    p.add_argument("--preset", required=True, choices=preset_names())
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--margin", type=float, default=0.9)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--loss-csv", default=None, help="optional epoch loss curve CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="embed the training split into a store file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="store output path (JSONL)")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="rank stored patches against one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="score retrieval quality on the test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k-list", default="1,3,5")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stump", help="triage unlabelled patches against a binary store")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--uncertain-dir", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_stump)

    p = sub.add_parser("synth", help="generate the synthetic blob/speckle corpus")
    p.add_argument("--n", type=int, required=True, help="patches per class")
    p.add_argument("--size", default="32x32", help="patch size, HxW")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset root")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP API over a checkpoint and store")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--report", default=None, help="evaluation report JSON to expose")
    p.add_argument("--frontend", default=None, help="static UI directory to mount at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TwinsearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
