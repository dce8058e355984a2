"""Seen/unseen evaluation protocol with a calibration-bias sweep.

A bias added to every unseen candidate's score trades seen accuracy
against unseen accuracy. Sweeping it from one extreme to the other
traces a monotone (seen, unseen) accuracy curve; the reported metrics
are the curve's best seen accuracy, best unseen accuracy, best harmonic
mean, and the area under its staircase frontier.

Two routes compute the same report:

- `bias_sweep` (production): evaluates only where the curve can change —
  each sample's critical bias (max seen score minus max unseen score),
  the midpoints between consecutive critical values, and one point past
  each end. Ties in every argmax go to the lowest candidate index.
- `oracle_sweep` (verification): brute-force re-argmax at every point of
  a caller-supplied dense grid, written with independent plain loops.

`dense_grid` builds a grid that includes all critical values and
midpoints, so the two routes must agree to floating-point accuracy.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np


class ProtocolError(ValueError):
    """The evaluation table cannot support the requested protocol."""


class SplitError(ValueError):
    """Seen/unseen composition sets violate the split contract."""


@dataclass
class EvalTable:
    """Fused scores over a candidate set, one row per test sample.

    `unseen` flags each candidate column; the complement is the seen set,
    so the flags partition the candidates. A sample is "seen-truth" when
    its true pair is a seen candidate.
    """

    scores: np.ndarray  # (N, C)
    truth: np.ndarray  # (N,) candidate index of the true pair
    unseen: np.ndarray  # (C,) bool

    def validate(self):
        if self.scores.ndim != 2 or len(self.scores) == 0:
            raise ProtocolError(f"scores must be a nonempty (N, C) matrix, got {self.scores.shape}")
        n, c = self.scores.shape
        if self.truth.shape != (n,):
            raise ProtocolError(f"truth must have shape ({n},), got {self.truth.shape}")
        if self.unseen.shape != (c,) or self.unseen.dtype != bool:
            raise ProtocolError(f"unseen must be a ({c},) bool mask")
        if self.truth.min() < 0 or self.truth.max() >= c:
            raise ProtocolError("a true pair lies outside the candidate set")
        if not self.unseen.any() or self.unseen.all():
            raise ProtocolError("candidate set needs both seen and unseen candidates")
        return self

    @property
    def unseen_truth(self):
        return self.unseen[self.truth]


@dataclass
class MetricReport:
    best_seen: float
    best_unseen: float
    best_hm: float
    auc: float
    curve: list = field(default_factory=list)  # (bias, seen_acc, unseen_acc) rows

    def to_dict(self):
        return {
            "best_seen": self.best_seen,
            "best_unseen": self.best_unseen,
            "best_hm": self.best_hm,
            "auc": self.auc,
            "curve": [list(point) for point in self.curve],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def write_json(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    def write_curve_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bias", "seen_acc", "unseen_acc"])
            writer.writerows(self.curve)


def harmonic_mean(seen, unseen):
    if seen + unseen == 0.0:
        return 0.0
    return 2.0 * seen * unseen / (seen + unseen)


def _staircase_area(points):
    """Area of the union of rectangles [0, s] x [0, u] over curve points."""
    area = 0.0
    best_u = 0.0
    for s, u in sorted(set(points), key=lambda p: -p[0]):
        if u > best_u:
            area += s * (u - best_u)
            best_u = u
    return area


def _accuracies_at(table, biases):
    """Literal evaluation: add each bias to unseen columns, argmax, score.

    Returns (seen_accs, unseen_accs) over the bias vector. Accuracy over
    an empty truth class is reported as 0.
    """
    biases = np.asarray(biases, dtype=float)
    seen_truth = ~table.unseen_truth
    n_seen = int(seen_truth.sum())
    n_unseen = int((~seen_truth).sum())
    offsets = biases[:, None] * table.unseen[None, :].astype(float)
    seen_accs = np.zeros(len(biases))
    unseen_accs = np.zeros(len(biases))
    for i, off in enumerate(offsets):
        pred = np.argmax(table.scores + off[None, :], axis=1)
        correct = pred == table.truth
        seen_accs[i] = correct[seen_truth].sum() / n_seen if n_seen else 0.0
        unseen_accs[i] = correct[~seen_truth].sum() / n_unseen if n_unseen else 0.0
    return seen_accs, unseen_accs


def critical_biases(table):
    """Per-sample flip points: max seen-candidate minus max unseen-candidate."""
    max_seen = table.scores[:, ~table.unseen].max(axis=1)
    max_unseen = table.scores[:, table.unseen].max(axis=1)
    return max_seen - max_unseen


def _candidate_biases(table):
    crit = np.unique(critical_biases(table))
    mids = (crit[:-1] + crit[1:]) / 2.0
    return np.unique(np.concatenate([[crit[0] - 1.0], crit, mids, [crit[-1] + 1.0]]))


def _report_from_curve(biases, seen_accs, unseen_accs):
    points = list(zip(seen_accs, unseen_accs))
    best_hm = max(harmonic_mean(s, u) for s, u in points)
    return MetricReport(
        best_seen=float(max(seen_accs)),
        best_unseen=float(max(unseen_accs)),
        best_hm=float(best_hm),
        auc=float(_staircase_area(points)),
        curve=[(float(b), float(s), float(u)) for b, s, u in zip(biases, seen_accs, unseen_accs)],
    )


def bias_sweep(table):
    """Exact sweep over the finite biases where any sample's argmax can flip."""
    table.validate()
    unseen_truth = table.unseen_truth
    if not unseen_truth.any():
        raise ProtocolError("evaluation needs at least one unseen-truth sample")
    if unseen_truth.all():
        raise ProtocolError("evaluation needs at least one seen-truth sample")
    biases = _candidate_biases(table)
    seen_accs, unseen_accs = _accuracies_at(table, biases)
    return _report_from_curve(biases, seen_accs, unseen_accs)


def dense_grid(table, points=10001):
    """An oracle grid: evenly spaced over the critical range, padded one unit
    past each end, with every critical value and midpoint included."""
    crit = np.unique(critical_biases(table))
    lo, hi = crit[0] - 1.0, crit[-1] + 1.0
    mids = (crit[:-1] + crit[1:]) / 2.0
    return np.unique(np.concatenate([np.linspace(lo, hi, points), crit, mids]))


def oracle_sweep(table, grid):
    """Brute-force reference: exhaustive re-argmax at every grid point.

    Kept deliberately naive and separate from the production sweep: plain
    python loops, first-lowest-index argmax, and its own area formula.
    """
    table.validate()
    scores = table.scores
    unseen = table.unseen
    n, c = scores.shape
    seen_truth = [not unseen[t] for t in table.truth]
    curve = []
    for b in np.asarray(grid, dtype=float):
        seen_ok = seen_total = 0
        unseen_ok = unseen_total = 0
        for i in range(n):
            best_j, best_v = 0, -np.inf
            for j in range(c):
                v = scores[i, j] + (b if unseen[j] else 0.0)
                if v > best_v:
                    best_j, best_v = j, v
            correct = best_j == table.truth[i]
            if seen_truth[i]:
                seen_total += 1
                seen_ok += int(correct)
            else:
                unseen_total += 1
                unseen_ok += int(correct)
        s = seen_ok / seen_total if seen_total else 0.0
        u = unseen_ok / unseen_total if unseen_total else 0.0
        curve.append((float(b), s, u))

    best_seen = max(s for _, s, _ in curve)
    best_unseen = max(u for _, _, u in curve)
    best_hm = max(harmonic_mean(s, u) for _, s, u in curve)

    # area under the staircase, integrated along the unseen axis
    pts = sorted({(s, u) for _, s, u in curve}, key=lambda p: p[1])
    u_values = sorted({u for _, u in pts})
    area = 0.0
    prev_u = 0.0
    for u_k in u_values:
        s_max = max((s for s, u in pts if u >= u_k), default=0.0)
        area += (u_k - prev_u) * s_max
        prev_u = u_k
    return MetricReport(best_seen, best_unseen, best_hm, float(area), curve)


def closed_open_candidates(splits):
    """Candidate pair lists for the two worlds.

    Closed world: the compositions present in the test split (a subset of
    the seen pairs plus every unseen pair). Open world: the full
    attribute x object product.
    """
    seen = {tuple(map(int, p)) for p in splits.seen_pairs}
    unseen = {tuple(map(int, p)) for p in splits.unseen_pairs}
    overlap = seen & unseen
    if overlap:
        raise SplitError(f"seen and unseen compositions overlap: {sorted(overlap)[:5]}")
    test_seen = {tuple(map(int, p)) for p in splits.test_seen_pairs}
    closed = sorted(test_seen | unseen)
    full = [(a, o) for a in range(splits.n_attributes) for o in range(splits.n_objects)]
    return np.array(closed, dtype=np.intp), np.array(full, dtype=np.intp)


def build_eval_table(model, dataset, splits, world="closed", batch_size=256):
    """Score the test split against a world's candidate set."""
    closed, full = closed_open_candidates(splits)
    if world == "closed":
        candidates = closed
    elif world == "open":
        candidates = full
    else:
        raise ValueError(f"world must be 'closed' or 'open', got {world!r}")
    pair_to_col = {tuple(map(int, p)): i for i, p in enumerate(candidates)}
    test = splits.test_indices
    try:
        truth = np.array(
            [
                pair_to_col[(int(a), int(o))]
                for a, o in zip(dataset.y_attr[test], dataset.y_obj[test])
            ],
            dtype=np.intp,
        )
    except KeyError as exc:
        raise ProtocolError(f"true pair {exc} missing from the candidate set") from None
    seen = {tuple(map(int, p)) for p in splits.seen_pairs}
    unseen_flags = np.array([tuple(map(int, p)) not in seen for p in candidates])
    chunks = [
        model.score_candidates(dataset.images[test[i : i + batch_size]], candidates)
        for i in range(0, len(test), batch_size)
    ]
    return EvalTable(scores=np.vstack(chunks), truth=truth, unseen=unseen_flags).validate()


def evaluate_model(model, dataset, splits, world="closed"):
    table = build_eval_table(model, dataset, splits, world=world)
    return table, bias_sweep(table)
