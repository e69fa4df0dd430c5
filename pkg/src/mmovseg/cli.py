"""Command-line entry point: ``mmovseg <subcommand> ...``.

Exit codes: 0 ok, 1 validation error (bad flags, config, manifest, checkpoint),
2 runtime failure. Default output root comes from ``$MMOVSEG_OUT`` (else ./runs).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

from .config import CloudParams, RunConfig, ValidationError, load_config

OUT_ENV = "MMOVSEG_OUT"
log = logging.getLogger("mmovseg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _out_dir(args, name: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV, "runs")) / name


def _config(args) -> RunConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _dump_config(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    run_path = out / "run.json"
    run = json.loads(run_path.read_text()) if run_path.exists() else {}
    run.update({"config": cfg.to_dict(), "seed": cfg.seed, "config_hash": cfg.model_hash()})
    run_path.write_text(json.dumps(run, indent=1, sort_keys=True) + "\n")


# -- subcommands ------------------------------------------------------------------------

def cmd_toygen(args) -> int:
    from .toy import ToySceneSpec, generate_toy_dataset

    default_names = ToySceneSpec().class_names
    names = args.class_names.split(",") if args.class_names else default_names[:args.classes]
    if len(names) < args.classes:
        names = names + [f"Class{i}" for i in range(len(names), args.classes)]
    spec = ToySceneSpec(class_names=names, num_novel=args.novel, num_samples=args.num,
                        num_test=args.num_test, tile_size=args.tile, domain=args.domain,
                        palette_shift=args.palette_shift, seed=args.seed or 0)
    _, path = generate_toy_dataset(spec, _out_dir(args, "toy"))
    print(path)
    return 0


def cmd_cloudgen(args) -> int:
    from PIL import Image

    from .clouds import synthesize_clouds
    from .data import load_paired_sample, to_uint8
    from .vocab import DatasetManifest, load_manifest, save_manifest

    manifest = load_manifest(args.manifest)
    params = CloudParams(profile=args.profile, alpha_max=args.alpha_max, seed=args.seed or 0)
    params.validate()
    out = _out_dir(args, "clouded")
    for i, entry in enumerate(manifest.entries):
        for rel in (entry.rgb, entry.sar, entry.label):
            (out / rel).parent.mkdir(parents=True, exist_ok=True)
        if params.profile == "none":
            shutil.copyfile(manifest.resolve(entry.rgb), out / entry.rgb)
        else:
            sample = synthesize_clouds(load_paired_sample(entry, manifest.root), params, key=i)
            Image.fromarray(to_uint8(sample.rgb), mode="RGB").save(out / entry.rgb)
        # SAR and labels are copied byte for byte: clouds never touch them
        shutil.copyfile(manifest.resolve(entry.sar), out / entry.sar)
        shutil.copyfile(manifest.resolve(entry.label), out / entry.label)
    src_vocab = Path(manifest.root) / "vocab.json"
    if src_vocab.exists():
        shutil.copyfile(src_vocab, out / "vocab.json")
    print(save_manifest(DatasetManifest(manifest.image_size, manifest.entries, out), out / "manifest.json"))
    return 0


def _manifest(args, cfg: RunConfig):
    from .vocab import load_manifest

    manifest = load_manifest(args.manifest)
    if tuple(manifest.image_size) != tuple(cfg.image_size):
        raise ValidationError(f"manifest image size {manifest.image_size} != config {cfg.image_size}")
    return manifest


def cmd_cmu_train(args) -> int:
    from .engine import run_stage1_cmu

    cfg = _config(args)
    out = _out_dir(args, "cmu")
    _dump_config(cfg, out)
    run_stage1_cmu(cfg, _manifest(args, cfg), out)
    print(out / "stage1.ckpt")
    return 0


def cmd_train(args) -> int:
    from .engine import load_state, run_stage1_cmu, run_stage2_full

    cfg = _config(args)
    manifest = _manifest(args, cfg)
    out = _out_dir(args, "train")
    _dump_config(cfg, out)
    if args.resume:
        state = load_state(args.resume, cfg)
        if state.stage == "cmu":
            stage1 = run_stage1_cmu(cfg, manifest, out, resume=state)
            run_stage2_full(cfg, manifest, stage1, out)
        else:
            run_stage2_full(cfg, manifest, out_dir=out, resume=state)
    else:
        stage1 = args.stage1
        if stage1 is None and cfg.cmu_target != "none":
            stage1 = run_stage1_cmu(cfg, manifest, out)
        run_stage2_full(cfg, manifest, stage1, out)
    print(out / "final.ckpt")
    return 0


def cmd_eval(args) -> int:
    from .engine import load_state
    from .evaluation import emit_report, run_evaluation

    state = load_state(args.checkpoint, with_optimizer=False)
    if args.set or args.config:
        # eval-time overrides (e.g. cloud profile) must keep the architecture
        cfg = _config(args)
        if cfg.model_hash() != state.config_hash:
            raise ValidationError("config overrides change the architecture of the checkpoint")
        state.cfg = cfg
    from .vocab import load_manifest

    manifest = load_manifest(args.manifest)
    report = run_evaluation(state, manifest, setting=args.setting, domain=args.domain, split=args.split)
    out = _out_dir(args, "eval")
    _dump_config(state.cfg, out)
    emit_report([report], out)
    print(f"{report.setting}: mIoU {report.miou:.4f}")
    return 0


def cmd_ablate(args) -> int:
    from .evaluation import emit_report, run_ablation_matrix

    cfg = _config(args)
    manifest = _manifest(args, cfg)
    out = _out_dir(args, "ablate")
    _dump_config(cfg, out)
    split = lambda s: s.split(",") if s else None  # noqa: E731
    rows = run_ablation_matrix(cfg, manifest, variants=split(args.variants) or ("full", "w/o CMU", "w/o CMU&DEF"),
                               losses=split(args.losses), targets=split(args.targets))
    emit_report([r for _, r in rows], out)
    for _, r in rows:
        print(f"{r.setting}: mIoU {r.miou:.4f}")
    return 0


def cmd_plot(args) -> int:
    from .evaluation import bar_chart_svg, load_report

    reports = load_report(args.report_dir)
    if not reports:
        raise ValidationError(f"no reports in {args.report_dir}")
    out = Path(args.out) if args.out else Path(args.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, r in enumerate(reports):
        path = out / f"plot_{i:02d}.svg"
        path.write_text(bar_chart_svg(r))
        print(path)
    return 0


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmovseg", description="Two-stage RGB+SAR open-vocabulary segmentation")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command> or runs/<command>)")
        sp.add_argument("--seed", type=int, help="random seed (overrides config)")
        if config:
            sp.add_argument("--config", help="run config JSON")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override a config key, e.g. --set cloud.profile=\"thick\" (repeatable)")

    sp = sub.add_parser("toygen", help="generate a procedural paired toy dataset")
    common(sp, config=False)
    sp.add_argument("--classes", type=int, default=5, help="number of classes K")
    sp.add_argument("--class-names", help="comma-separated class names (overrides defaults)")
    sp.add_argument("--novel", type=int, default=2, help="how many of the last classes are novel")
    sp.add_argument("--num", type=int, default=32, help="number of tiles")
    sp.add_argument("--num-test", type=int, default=0, help="tiles assigned to the test split")
    sp.add_argument("--tile", type=int, default=32, help="tile size in pixels")
    sp.add_argument("--domain", default="toy-a", help="domain tag written to the manifest")
    sp.add_argument("--palette-shift", type=float, default=0.0, help="RGB colour shift for a second domain")
    sp.set_defaults(func=cmd_toygen)

    sp = sub.add_parser("cloudgen", help="write a cloud-contaminated copy of a dataset")
    common(sp, config=False)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--profile", default="thick", choices=["none", "thin", "thick", "varied"])
    sp.add_argument("--alpha-max", type=float, default=-1.0, help="peak opacity (default: profile value)")
    sp.set_defaults(func=cmd_cloudgen)

    sp = sub.add_parser("cmu-train", help="stage 1: align the SAR encoder to the frozen RGB encoder")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.set_defaults(func=cmd_cmu_train)

    sp = sub.add_parser("train", help="stage 2 (running stage 1 first unless --stage1 or cmu_target none)")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--stage1", help="stage-1 checkpoint to start from")
    sp.add_argument("--resume", help="checkpoint to resume from (either stage)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a trained checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--setting", default="toy", help="setting tag written to the report")
    sp.add_argument("--domain", help="only evaluate tiles with this domain tag")
    sp.add_argument("--split", default="test", choices=["train", "test"])
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="train and evaluate an ablation grid")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--variants", help="comma list from: full,w/o CMU,w/o CMU&DEF")
    sp.add_argument("--losses", help="comma list from: infonce,mse,l1")
    sp.add_argument("--targets", help="comma list from: none,dense,global,both")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("plot", help="redraw SVG bar charts from report CSVs")
    sp.add_argument("--report-dir", required=True)
    sp.add_argument("--out", help="directory for the SVGs (default: the report dir)")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
