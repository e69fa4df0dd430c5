"""Stage-1 alignment on the toy set: matched-minus-mismatched cosine before and after."""

import argparse
import logging

from mmovseg.cmu import alignment_gap
from mmovseg.config import load_config
from mmovseg.data import make_batches
from mmovseg.engine import run_stage1_cmu
from mmovseg.model import MMOVSeg
from mmovseg.toy import ToySceneSpec, make_toy_sample


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=400)
    ap.add_argument("--samples", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--set", action="append", default=[], help="config override KEY=VALUE")
    ap.add_argument("--out", help="run directory for the checkpoint and cmu_steps.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(None, [f"seed={args.seed}", f"stage1_iters={args.iters}", *args.set])
    spec = ToySceneSpec(num_samples=args.samples, seed=args.seed)
    samples = [make_toy_sample(spec, i) for i in range(args.samples)]
    everything = next(make_batches(samples, "train", len(samples), 0, shuffle=False))

    def gap(model):
        rgb, sar, _ = model.to_tensors(everything)
        matched, mismatched = alignment_gap(model.dense_sar(sar), model.dense_rgb(rgb))
        return matched, mismatched

    m0, x0 = gap(MMOVSeg(cfg))
    state = run_stage1_cmu(cfg, samples, args.out)
    m1, x1 = gap(state.model)
    print(f"{'':10s} matched  mismatched  gap")
    print(f"{'untrained':10s} {m0:+.3f}   {x0:+.3f}     {m0 - x0:+.3f}")
    print(f"{'aligned':10s} {m1:+.3f}   {x1:+.3f}     {m1 - x1:+.3f}")
    for _, it, loss in state.losses[::max(1, args.iters // 8)]:
        print(f"iter {it:5d}  loss {loss:.4f}")


if __name__ == "__main__":
    main()
