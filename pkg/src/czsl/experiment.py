"""Experiment orchestration: one run = generate data, train, checkpoint,
evaluate both worlds, and export representations, all under a single run
directory:

    config.json         the exact configuration (seed included)
    metrics.jsonl       one JSON object per training epoch
    checkpoint.bin      every named parameter array + config hash
    report_closed.json  closed-world sweep metrics + curve
    report_open.json    open-world sweep metrics + curve
    curve.csv           closed-world (bias, seen_acc, unseen_acc) rows
    curve_open.csv      open-world rows
    reps.csv            per-test-sample branch representation vectors

The ablation driver reruns the same seed set over branch subsets and the
gate switch, mirroring the structure of the branch/gate ablation tables.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .data import generate_dataset
from .evaluation import evaluate_model
from .model import CompositionModel
from .tensor import no_grad
from .training import fit

ABLATION_VARIANTS = {
    "g": dict(enable_g=True, enable_c=False, enable_a=False, enable_o=False),
    "a+o": dict(enable_g=False, enable_c=False, enable_a=True, enable_o=True),
    "g+a+o": dict(enable_g=True, enable_c=False, enable_a=True, enable_o=True),
    "c+a+o": dict(enable_g=False, enable_c=True, enable_a=True, enable_o=True),
    "g+c+a+o": dict(enable_g=True, enable_c=True, enable_a=True, enable_o=True),
}

GATE_VARIANTS = {
    "with_gate": dict(enable_gate=True),
    "without_gate": dict(enable_gate=False),
}


def export_representations(model, dataset, splits, path, batch_size=256):
    """Write per-test-sample branch vectors to CSV (for external projection)."""
    test = splits.test_indices
    seen = {tuple(map(int, p)) for p in splits.seen_pairs}
    enabled = [b for b in ("a", "o", "c", "g") if getattr(model.cfg, f"enable_{b}")]
    blocks = {b: [] for b in enabled}
    with no_grad():
        for start in range(0, len(test), batch_size):
            idx = test[start : start + batch_size]
            reps = model.image_representations(dataset.images[idx])
            for b in enabled:
                blocks[b].append(reps.get(b).data)
    vectors = {b: np.vstack(blocks[b]) for b in enabled}
    d_t = model.cfg.d_t
    header = ["sample_index", "y_attr", "y_obj", "composition_seen"]
    for b in enabled:
        header.extend(f"f{b}_{j}" for j in range(d_t))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, sample in enumerate(test):
            a = int(dataset.y_attr[sample])
            o = int(dataset.y_obj[sample])
            line = [int(sample), a, o, int((a, o) in seen)]
            for b in enabled:
                line.extend(vectors[b][row].tolist())
            writer.writerow(line)


def run_experiment(cfg, out_dir):
    """Full pipeline for one config; returns the reports and history."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    log_path = out / "metrics.jsonl"
    if log_path.exists():
        log_path.unlink()

    dataset, splits = generate_dataset(cfg)
    model = CompositionModel(cfg)
    history = fit(model, dataset, splits, cfg, log_path=log_path)
    save_checkpoint(model, out / "checkpoint.bin")

    _, report_closed = evaluate_model(model, dataset, splits, world="closed")
    report_closed.write_json(out / "report_closed.json")
    report_closed.write_curve_csv(out / "curve.csv")

    _, report_open = evaluate_model(model, dataset, splits, world="open")
    report_open.write_json(out / "report_open.json")
    report_open.write_curve_csv(out / "curve_open.csv")

    export_representations(model, dataset, splits, out / "reps.csv")
    return {
        "out_dir": str(out),
        "history": history,
        "closed": report_closed,
        "open": report_open,
    }


def _metric_rows(results):
    rows = {}
    for world in ("closed", "open"):
        report = results[world]
        rows[world] = {
            "best_seen": report.best_seen,
            "best_unseen": report.best_unseen,
            "best_hm": report.best_hm,
            "auc": report.auc,
        }
    return rows


def run_ablations(base_cfg, seeds, out_dir, variants=None, gate_variants=None):
    """Branch-subset and gate ablations over a fixed seed set.

    Writes one run directory per (variant, seed) plus ablation_summary.json
    holding per-seed closed/open metrics and the per-variant median closed
    AUC. Returns the summary dict.
    """
    variants = dict(ABLATION_VARIANTS if variants is None else variants)
    gate_variants = dict(GATE_VARIANTS if gate_variants is None else gate_variants)
    out = Path(out_dir)
    summary = {"branch_variants": {}, "gate_variants": {}, "seeds": list(map(int, seeds))}

    def sweep(group, name, overrides):
        runs = {}
        for seed in seeds:
            cfg = base_cfg.replace(seed=int(seed), **overrides)
            result = run_experiment(cfg, out / group / name / f"seed-{seed}")
            runs[str(seed)] = _metric_rows(result)
        median_auc = float(np.median([r["closed"]["auc"] for r in runs.values()]))
        return {"runs": runs, "median_closed_auc": median_auc}

    for name, overrides in variants.items():
        summary["branch_variants"][name] = sweep("branches", name, overrides)
    for name, overrides in gate_variants.items():
        summary["gate_variants"][name] = sweep("gate", name, overrides)

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary
