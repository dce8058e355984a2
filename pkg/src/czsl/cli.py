"""Command-line interface.

Subcommands: gen-data, train, eval, ablate, export-reps. Every
ExperimentConfig field is exposed as a flag (underscores become dashes;
booleans take --flag / --no-flag form); a --config JSON file supplies a
base that explicit flags override.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import ExperimentConfig
from .data import generate_dataset
from .evaluation import evaluate_model
from .experiment import export_representations, run_ablations, run_experiment
from .model import CompositionModel
from .training import fit


def _parse_branch_layers(text):
    parts = tuple(int(x) for x in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("branch-layers needs three comma-separated depths")
    return parts


def _add_config_flags(parser):
    group = parser.add_argument_group("config", "ExperimentConfig fields")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif f.name == "branch_layers":
            group.add_argument(flag, dest=f.name, type=_parse_branch_layers, default=None)
        elif isinstance(f.default, int):
            group.add_argument(flag, dest=f.name, type=int, default=None)
        elif isinstance(f.default, float):
            group.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            group.add_argument(flag, dest=f.name, type=str, default=None)


def _config_from_args(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    if overrides:
        cfg = cfg.replace(**overrides)
    return cfg.validate()


def _cmd_gen_data(args):
    cfg = _config_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset, splits = generate_dataset(cfg)
    np.savez(
        out / "dataset.npz",
        images=dataset.images,
        y_attr=dataset.y_attr,
        y_obj=dataset.y_obj,
        attr_prototypes=dataset.attr_prototypes,
        obj_prototypes=dataset.obj_prototypes,
    )
    with open(out / "splits.json", "w") as fh:
        json.dump(
            {
                "seen_pairs": splits.seen_pairs.tolist(),
                "unseen_pairs": splits.unseen_pairs.tolist(),
                "test_seen_pairs": splits.test_seen_pairs.tolist(),
                "train_indices": splits.train_indices.tolist(),
                "test_indices": splits.test_indices.tolist(),
                "n_attributes": splits.n_attributes,
                "n_objects": splits.n_objects,
            },
            fh,
            indent=2,
        )
    (out / "config.json").write_text(cfg.to_json() + "\n")
    print(
        f"wrote {len(dataset.images)} samples "
        f"({len(splits.train_indices)} train / {len(splits.test_indices)} test), "
        f"{len(splits.seen_pairs)} seen + {len(splits.unseen_pairs)} unseen compositions "
        f"to {out}"
    )
    return 0


def _cmd_train(args):
    cfg = _config_from_args(args).replace(seed=args.seed).validate()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    log_path = out / "metrics.jsonl"
    if log_path.exists():
        log_path.unlink()
    dataset, splits = generate_dataset(cfg)
    model = CompositionModel(cfg)
    history = fit(model, dataset, splits, cfg, log_path=log_path)
    from .checkpoint import save_checkpoint

    save_checkpoint(model, out / "checkpoint.bin")
    last = history[-1]
    print(f"trained {cfg.epochs} epochs; final total loss {last['loss_total']:.4f}")
    print(f"checkpoint: {out / 'checkpoint.bin'}")
    return 0


def _cmd_eval(args):
    model, cfg = load_checkpoint(args.checkpoint)
    dataset, splits = generate_dataset(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    worlds = ("closed", "open") if args.world == "both" else (args.world,)
    for world in worlds:
        _, report = evaluate_model(model, dataset, splits, world=world)
        suffix = "" if world == "closed" else "_open"
        report.write_json(out / f"report_{world}.json")
        report.write_curve_csv(out / f"curve{suffix}.csv")
        print(
            f"{world:6s} S={report.best_seen:.4f} U={report.best_unseen:.4f} "
            f"HM={report.best_hm:.4f} AUC={report.auc:.4f}"
        )
    return 0


def _cmd_ablate(args):
    cfg = _config_from_args(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    summary = run_ablations(cfg, seeds, args.out_dir)
    for name, entry in summary["branch_variants"].items():
        print(f"branches {name:10s} median closed AUC {entry['median_closed_auc']:.4f}")
    for name, entry in summary["gate_variants"].items():
        print(f"gate {name:14s} median closed AUC {entry['median_closed_auc']:.4f}")
    print(f"summary: {Path(args.out_dir) / 'ablation_summary.json'}")
    return 0


def _cmd_export_reps(args):
    model, cfg = load_checkpoint(args.checkpoint)
    dataset, splits = generate_dataset(cfg)
    export_representations(model, dataset, splits, args.out)
    print(f"wrote representations for {len(splits.test_indices)} test samples to {args.out}")
    return 0


def _cmd_run(args):
    cfg = _config_from_args(args).replace(seed=args.seed).validate()
    result = run_experiment(cfg, args.out_dir)
    for world in ("closed", "open"):
        report = result[world]
        print(
            f"{world:6s} S={report.best_seen:.4f} U={report.best_unseen:.4f} "
            f"HM={report.best_hm:.4f} AUC={report.auc:.4f}"
        )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="czsl",
        description="Synthetic compositional zero-shot learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint (closed/open world)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--world", choices=("closed", "open", "both"), default="both")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run branch and gate ablations over seeds")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seed list")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("export-reps", help="export branch representations to CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_export_reps)

    p = sub.add_parser("run", help="full pipeline: train, checkpoint, evaluate, export")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
