"""Component, loss or target ablation on thick-cloud toy data over several seeds.

Prints per-seed mIoU, the median per row, and the reference numbers for the
matching real-data ablation next to them. Reports go to --out if given.
"""

import argparse
import statistics
from pathlib import Path

from mmovseg.config import load_config
from mmovseg.evaluation import (
    COMPONENT_VARIANTS,
    REFERENCE_COMPONENT_ABLATION,
    REFERENCE_LOSS_ABLATION,
    REFERENCE_TARGET_ABLATION,
    emit_report,
    run_ablation_matrix,
)
from mmovseg.toy import ToySceneSpec, make_toy_sample


def reference_for(row):
    if row["variant"] != "full":
        return REFERENCE_COMPONENT_ABLATION[row["variant"]]
    if row["target"] != "dense":
        return REFERENCE_TARGET_ABLATION.get(row["target"])
    return REFERENCE_LOSS_ABLATION.get(row["loss"])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axis", choices=["component", "loss", "target"], default="component")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--config", default=str(Path(__file__).parents[1] / "configs" / "toy_thick_ablation.json"))
    ap.add_argument("--set", action="append", default=[], help="config override KEY=VALUE")
    ap.add_argument("--out")
    args = ap.parse_args()

    variants, losses, targets = COMPONENT_VARIANTS, None, None
    if args.axis == "loss":
        variants, losses = ("full",), ["mse", "l1", "infonce"]
    elif args.axis == "target":
        variants, targets = ("full",), ["global", "dense", "both"]

    table, reports = {}, []
    for seed in (int(s) for s in args.seeds.split(",")):
        cfg = load_config(args.config, [f"seed={seed}", *args.set])
        spec = ToySceneSpec(class_names=list(cfg.seen_classes) + list(cfg.novel_classes),
                            num_novel=len(cfg.novel_classes), num_samples=48, seed=seed)
        samples = [make_toy_sample(spec, i) for i in range(48)]
        for row, rep in run_ablation_matrix(cfg, samples[:32], variants, losses, targets, samples[32:]):
            table.setdefault(rep.setting, (row, []))[1].append(rep.miou)
            reports.append(rep)
            print(f"seed {seed}  {rep.setting:28s} mIoU {rep.miou:.3f}", flush=True)

    print(f"\n{'row':28s} {'median':>7s} {'reference %':>12s}")
    for tag, (row, vals) in table.items():
        ref = reference_for(row)
        print(f"{tag:28s} {statistics.median(vals):7.3f} {'' if ref is None else f'{ref:12.1f}'}")
    if args.out:
        emit_report(reports, args.out)


if __name__ == "__main__":
    main()
