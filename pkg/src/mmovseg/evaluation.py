"""Confusion-matrix metrics, seen/unseen reports, evaluation runs and ablation grids."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
import torch

from .config import RunConfig, ValidationError
from .data import make_batches
from .vocab import ClassVocabulary, DatasetManifest, resolve_vocabulary

# Reference numbers for side-by-side comparison in reports (mIoU, %).
REFERENCE_SETTINGS = {
    "1": "PIE-cloud -> PIE-cloud (varied clouds)",
    "2": "DDHR-SK -> DDHR-SK (varied clouds)",
    "3": "OEM thick clouds",
    "4": "OEM thin clouds",
    "5": "PIE clean",
    "6": "DDHR-SK -> DDHR-CH (cross-domain)",
}
REFERENCE_SETTING_MIOU = {"1": 57.7, "2": 73.1, "3": 36.6, "4": 40.2, "5": 59.7, "6": 42.6}
REFERENCE_MEAN_MIOU = 51.7
REFERENCE_COMPONENT_ABLATION = {"full": 73.1, "w/o CMU": 64.1, "w/o CMU&DEF": 55.0}
REFERENCE_LOSS_ABLATION = {"none": 64.1, "mse": 67.7, "l1": 69.0, "infonce": 73.1}
REFERENCE_TARGET_ABLATION = {"none": 64.1, "global": 65.4, "dense": 73.1, "both": 66.5}


def reference_table() -> list[tuple[str, float]]:
    """Per-setting rows followed by the overall mean."""
    rows = [(k, REFERENCE_SETTING_MIOU[k]) for k in sorted(REFERENCE_SETTING_MIOU)]
    return rows + [("mean", REFERENCE_MEAN_MIOU)]


# -- confusion matrix -------------------------------------------------------------------

class ConfusionMatrix:
    """Rows are ground truth, columns prediction."""

    def __init__(self, num_classes: int, ignore_index: int = 255):
        if num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def update(self, pred, gt) -> "ConfusionMatrix":
        self.counts = update_confusion(self.counts, pred, gt, self.ignore_index)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        out = ConfusionMatrix(self.num_classes, self.ignore_index)
        out.counts = self.counts + other.counts
        return out


def update_confusion(cm: np.ndarray, pred, gt, ignore_index: int = 255) -> np.ndarray:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"prediction {pred.shape} and label {gt.shape} shapes differ")
    k = cm.shape[0]
    keep = gt != ignore_index
    g, p = gt[keep].astype(np.int64), pred[keep].astype(np.int64)
    for name, v in (("label", g), ("prediction", p)):
        if v.size and (v.min() < 0 or v.max() >= k):
            raise ValidationError(f"{name} index outside [0, {k})")
    return cm + np.bincount(g * k + p, minlength=k * k).reshape(k, k)


def compute_iou(cm) -> tuple[list[float | None], float]:
    """Per-class IoU (None for zero union) and mean over defined classes."""
    cm = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=np.int64)
    inter = np.diag(cm)
    union = cm.sum(0) + cm.sum(1) - inter
    ious = [float(i) / float(u) if u > 0 else None for i, u in zip(inter, union)]
    defined = [x for x in ious if x is not None]
    if not defined:
        raise ValidationError("every class has zero union; IoU undefined")
    return ious, sum(defined) / len(defined)


def _mean(values):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


@dataclass(frozen=True)
class IoUReport:
    setting: str
    classes: tuple[str, ...]
    seen: tuple[bool, ...]
    iou: tuple[float | None, ...]
    miou: float
    seen_mean: float | None
    unseen_mean: float | None


def split_report(ious, vocabulary: ClassVocabulary) -> tuple[float | None, float | None]:
    seen = _mean(v for v, s in zip(ious, vocabulary.seen) if s)
    unseen = _mean(v for v, s in zip(ious, vocabulary.seen) if not s)
    return seen, unseen


def make_report(cm, vocabulary: ClassVocabulary, setting: str) -> IoUReport:
    ious, miou = compute_iou(cm)
    if len(ious) != len(vocabulary):
        raise ValidationError("confusion matrix size does not match vocabulary")
    seen_mean, unseen_mean = split_report(ious, vocabulary)
    return IoUReport(str(setting), tuple(vocabulary.names), tuple(vocabulary.seen), tuple(ious), miou,
                     seen_mean, unseen_mean)


# -- evaluation runs --------------------------------------------------------------------

def predict(logits: torch.Tensor) -> np.ndarray:
    """Argmax over classes; ties go to the lowest index (torch.argmax returns the first max)."""
    return torch.argmax(logits, dim=1).cpu().numpy()


@torch.no_grad()
def evaluate_samples(model, samples, vocabulary: ClassVocabulary, setting: str = "toy",
                     split: str = "test", cloud=None, cloud_splits=("train", "test"),
                     batch_size: int = 8) -> IoUReport:
    if not samples:
        raise ValidationError("nothing to evaluate: empty split")
    model.eval()
    z_t = model.text_embeddings(vocabulary)
    cm = ConfusionMatrix(len(vocabulary), vocabulary.ignore_index)
    for batch in make_batches(samples, split, batch_size, 0, cloud=cloud, cloud_splits=cloud_splits,
                              shuffle=False, epochs=1):
        rgb, sar, label = model.to_tensors(batch)
        cm.update(predict(model(rgb, sar, z_t).logits), label.numpy())
    return make_report(cm, vocabulary, setting)


def run_evaluation(state, manifest: DatasetManifest, vocabulary: ClassVocabulary | None = None,
                   setting: str = "toy", domain: str | None = None, split: str = "test") -> IoUReport:
    """Evaluate a full-stage state (or checkpoint path) on one split of a manifest.

    ``domain`` selects tiles by domain tag: the training domain gives an
    intra-domain report, any other tag a cross-domain one.
    """
    from .data import load_split
    from .engine import load_state

    if isinstance(state, (str, Path)):
        state = load_state(state, with_optimizer=False)
    if state.stage != "full":
        raise ValidationError(f"evaluation needs a full-stage checkpoint, got stage {state.stage!r}")
    cfg: RunConfig = state.cfg
    vocabulary = vocabulary or resolve_vocabulary(cfg)
    subset = manifest.filter(split=split, domain=domain)
    if not subset.entries:
        raise ValidationError(f"no {split!r} tiles" + (f" with domain {domain!r}" if domain else ""))
    samples = load_split(subset, split, len(vocabulary), cfg.ignore_index)
    return evaluate_samples(state.model, samples, vocabulary, setting, split, cfg.cloud, cfg.cloud_splits,
                            cfg.batch_size)


# -- ablation grids ---------------------------------------------------------------------

COMPONENT_VARIANTS = ("full", "w/o CMU", "w/o CMU&DEF")


def variant_config(base: RunConfig, variant: str) -> RunConfig:
    """The component-ablation rows: full pipeline; no alignment stage; RGB-only
    fusion with no SAR branch at all."""
    if variant == "full":
        cfg = base if base.cmu_target != "none" else replace(base, cmu_target="dense")
    elif variant == "w/o CMU":
        cfg = replace(base, cmu_target="none")
    elif variant == "w/o CMU&DEF":
        cfg = replace(base, cmu_target="none", fusion="rgb_only")
    else:
        raise ValidationError(f"unknown variant {variant!r}; expected one of {COMPONENT_VARIANTS}")
    return cfg.validate()


def ablation_grid(base: RunConfig, variants=COMPONENT_VARIANTS, losses=None, targets=None) -> list[dict]:
    """Expand the selected axes into tagged configs.

    Loss and target axes only vary runs that use the alignment stage; each
    combination appears once.
    """
    rows, seen = [], set()
    for variant in variants:
        cfg_v = variant_config(base, variant)
        loss_axis = losses if (losses and cfg_v.cmu_target != "none") else [cfg_v.cmu_loss]
        target_axis = targets if (targets and variant == "full") else [cfg_v.cmu_target]
        for loss in loss_axis:
            for target in target_axis:
                cfg = replace(cfg_v, cmu_loss=loss, cmu_target=target).validate()
                if target == "none":
                    loss = "-"
                key = (variant, loss, target)
                if key in seen:
                    continue
                seen.add(key)
                rows.append({"variant": variant, "loss": loss, "target": target, "config": cfg})
    return rows


def train_and_evaluate(cfg: RunConfig, train_samples, test_samples, setting: str,
                       vocabulary: ClassVocabulary | None = None):
    from .engine import run_stage1_cmu, run_stage2_full

    stage1 = run_stage1_cmu(cfg, train_samples) if cfg.cmu_target != "none" else None
    state = run_stage2_full(cfg, train_samples, stage1)
    vocabulary = vocabulary or resolve_vocabulary(cfg)
    report = evaluate_samples(state.model, test_samples, vocabulary, setting, "test", cfg.cloud,
                              cfg.cloud_splits, cfg.batch_size)
    return state, report


def run_ablation_matrix(base: RunConfig, manifest_or_samples, variants=COMPONENT_VARIANTS, losses=None,
                        targets=None, test_samples=None) -> list[tuple[dict, IoUReport]]:
    """Train and evaluate every grid row with the shared seed of ``base``."""
    from .data import load_split

    vocab = resolve_vocabulary(base)
    if isinstance(manifest_or_samples, DatasetManifest):
        train = load_split(manifest_or_samples, "train", len(vocab), base.ignore_index)
        test = load_split(manifest_or_samples, "test", len(vocab), base.ignore_index)
    else:
        train, test = list(manifest_or_samples), list(test_samples or manifest_or_samples)
    out = []
    for row in ablation_grid(base, variants, losses, targets):
        tag = f"{row['variant']}|{row['loss']}|{row['target']}"
        _, report = train_and_evaluate(row["config"], train, test, tag, vocab)
        out.append((row, report))
    return out


# -- report files -----------------------------------------------------------------------

def _fmt(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.6f}"


def _parse(s: str) -> float | None:
    return None if s == "n/a" else float(s)


def _slug(setting: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in setting) or "report"


def emit_report(reports: list[IoUReport], out_dir: str | Path) -> list[Path]:
    """Per-class CSV + summary CSV + one SVG bar chart per report."""
    if not reports:
        raise ValidationError("emit_report needs at least one report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot write reports to {out}: {exc}") from None
    paths = [out / "per_class.csv", out / "summary.csv"]
    with paths[0].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "class", "seen", "iou"])
        for r in reports:
            for name, s, v in zip(r.classes, r.seen, r.iou):
                w.writerow([r.setting, name, int(s), _fmt(v)])
    with paths[1].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "miou", "seen_mean", "unseen_mean"])
        for r in reports:
            w.writerow([r.setting, _fmt(r.miou), _fmt(r.seen_mean), _fmt(r.unseen_mean)])
    for r in reports:
        p = out / f"iou_{_slug(r.setting)}.svg"
        p.write_text(bar_chart_svg(r))
        paths.append(p)
    return paths


def load_report(out_dir: str | Path) -> list[IoUReport]:
    out = Path(out_dir)
    per_class: dict[str, list] = {}
    with (out / "per_class.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            per_class.setdefault(row["setting"], []).append(row)
    reports = []
    with (out / "summary.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows = per_class.get(row["setting"], [])
            reports.append(IoUReport(
                row["setting"], tuple(r["class"] for r in rows), tuple(r["seen"] == "1" for r in rows),
                tuple(_parse(r["iou"]) for r in rows), _parse(row["miou"]),
                _parse(row["seen_mean"]), _parse(row["unseen_mean"])))
    return reports


SEEN_COLOR = "#3b6ea5"
UNSEEN_COLOR = "#d9822b"


def bar_chart_svg(report: IoUReport, width: int = 480, height: int = 240) -> str:
    n = len(report.classes)
    left, bottom, top = 40, 40, 20
    plot_h = height - bottom - top
    slot = (width - left - 10) / max(n, 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{left}" y="14" font-size="12">{escape(report.setting)}  mIoU {report.miou:.3f}</text>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{width - 10}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for i, (name, s, v) in enumerate(zip(report.classes, report.seen, report.iou)):
        x = left + i * slot + slot * 0.15
        color = SEEN_COLOR if s else UNSEEN_COLOR
        h = 0.0 if v is None else plot_h * v
        parts.append(f'<rect x="{x:.1f}" y="{top + plot_h - h:.1f}" width="{slot * 0.7:.1f}" '
                     f'height="{h:.1f}" fill="{color}"/>')
        label = "n/a" if v is None else f"{v:.2f}"
        parts.append(f'<text x="{x:.1f}" y="{top + plot_h - h - 3:.1f}" font-size="9">{label}</text>')
        parts.append(f'<text x="{x:.1f}" y="{height - bottom + 14}" font-size="9">{escape(name)}</text>')
    parts.append(f'<text x="{left}" y="{height - 6}" font-size="9" fill="{SEEN_COLOR}">seen</text>')
    parts.append(f'<text x="{left + 40}" y="{height - 6}" font-size="9" fill="{UNSEEN_COLOR}">unseen</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def is_close_report(a: IoUReport, b: IoUReport, tol: float = 1e-6) -> bool:
    def close(x, y):
        return (x is None and y is None) or (x is not None and y is not None and math.isclose(x, y, abs_tol=tol))
    return (a.setting == b.setting and a.classes == b.classes and a.seen == b.seen
            and all(close(x, y) for x, y in zip(a.iou, b.iou)) and close(a.miou, b.miou)
            and close(a.seen_mean, b.seen_mean) and close(a.unseen_mean, b.unseen_mean))
