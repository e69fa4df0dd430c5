"""Two-stage training: cross-modal unification, then full fusion training."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .cmu import AlignmentLossConfig, cmu_targets, cmu_train_step
from .config import RunConfig, ValidationError, config_from_dict
from .data import PairedSample, load_split, make_batches
from .head import cross_entropy_loss
from .model import MMOVSeg, _seed_for
from .optim import FreezePolicy, build_optimizer, effective_lrs, optimizer_step
from .vocab import DatasetManifest, resolve_vocabulary

log = logging.getLogger(__name__)


@dataclass
class TrainState:
    cfg: RunConfig
    model: MMOVSeg
    optimizer: torch.optim.Optimizer | None = None
    stage: str = "init"
    iteration: int = 0
    losses: list[tuple[str, int, float]] = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return self.cfg.model_hash()


def stage1_policy(cfg: RunConfig) -> FreezePolicy:
    targets = cmu_targets(cfg.cmu_target)
    lrs = {}
    if "dense" in targets and cfg.fusion == "dual":
        lrs["dense_sar"] = cfg.stage1_lr
    if "global" in targets:
        lrs["global_sar"] = cfg.stage1_lr
    return FreezePolicy(lrs)


def stage2_policy(cfg: RunConfig, model: MMOVSeg) -> FreezePolicy:
    lrs = {"head": cfg.stage2_lr, "global_rgb": cfg.encoder_lr, "text": cfg.encoder_lr}
    if model.use_global_sar:
        lrs["global_sar"] = cfg.encoder_lr
    return FreezePolicy(lrs)


def make_optimizer(cfg: RunConfig, model: MMOVSeg, policy: FreezePolicy):
    return build_optimizer(model.groups(), policy, cfg.weight_decay, cfg.betas, cfg.eps)


# -- checkpoint <-> state ---------------------------------------------------------------

def state_arrays(state: TrainState) -> dict[str, np.ndarray]:
    arrays = {f"model/{k}": v.detach().cpu().numpy() for k, v in state.model.state_dict().items()}
    if state.optimizer is not None:
        names = {id(p): n for n, p in state.model.named_parameters()}
        for group in state.optimizer.param_groups:
            for p in group["params"]:
                for key, value in state.optimizer.state.get(p, {}).items():
                    arrays[f"optim/{names[id(p)]}/{key}"] = value.detach().cpu().numpy()
    return arrays


def save_state(state: TrainState, path: str | Path) -> Path:
    meta = {
        "stage": state.stage,
        "iteration": state.iteration,
        "seed": state.cfg.seed,
        "config_hash": state.config_hash,
        "config": state.cfg.to_dict(),
        "losses": [list(x) for x in state.losses],
    }
    return save_checkpoint(path, state_arrays(state), meta)


def load_state(path: str | Path, cfg: RunConfig | None = None, override: bool = False,
               with_optimizer: bool = True) -> TrainState:
    """Rebuild model (and optimizer, for resuming) from a checkpoint."""
    expected = cfg.model_hash() if cfg is not None else None
    arrays, meta = load_checkpoint(path, expected, override)
    if cfg is None:
        cfg = config_from_dict(meta["config"])
    model = MMOVSeg(cfg)
    state_dict = {k[len("model/"):]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("model/")}
    try:
        model.load_state_dict(state_dict)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: weights do not fit this model ({exc})") from None
    state = TrainState(cfg, model, None, meta["stage"], meta["iteration"],
                       [tuple(x) for x in meta.get("losses", [])])
    if with_optimizer:
        policy = stage1_policy(cfg) if meta["stage"] == "cmu" else stage2_policy(cfg, model)
        if policy.lrs:
            state.optimizer = make_optimizer(cfg, model, policy)
            _restore_optimizer(state.optimizer, model, arrays)
    return state


def _restore_optimizer(optimizer, model, arrays) -> None:
    params = dict(model.named_parameters())
    for key, value in arrays.items():
        if not key.startswith("optim/"):
            continue
        name, slot = key[len("optim/"):].rsplit("/", 1)
        optimizer.state[params[name]][slot] = torch.from_numpy(value.copy())


# -- training loops ---------------------------------------------------------------------

def _train_samples(data, cfg: RunConfig) -> list[PairedSample]:
    if isinstance(data, DatasetManifest):
        return load_split(data, "train", len(resolve_vocabulary(cfg)), cfg.ignore_index)
    return list(data)


def init_state(cfg: RunConfig) -> TrainState:
    return TrainState(cfg, MMOVSeg(cfg))


def run_stage1_cmu(cfg: RunConfig, data, out_dir: str | Path | None = None,
                   resume: TrainState | None = None, iters: int | None = None) -> TrainState:
    """Align the SAR encoder(s) to the frozen RGB encoder(s) on clear paired data."""
    cfg.validate()
    iters = cfg.stage1_iters if iters is None else iters
    targets = cmu_targets(cfg.cmu_target)
    if cfg.fusion != "dual":
        targets = tuple(t for t in targets if t != "dense")
    state = resume or init_state(cfg)
    state.stage = "cmu"
    policy = stage1_policy(cfg)
    if targets and state.optimizer is None:
        state.optimizer = make_optimizer(cfg, state.model, policy)
    if targets and iters > state.iteration:
        samples = _train_samples(data, cfg)
        loss_cfg = AlignmentLossConfig(cfg.cmu_loss, cfg.temperature)
        # the alignment corpus is clear-sky: no clouds in this stage
        stream = make_batches(samples, "train", cfg.batch_size, _seed_for(cfg.seed, "cmu-data"),
                              augment=cfg.augment, cloud=None, start=state.iteration)
        state.model.train()
        for it in range(state.iteration, iters):
            rgb, sar, _ = state.model.to_tensors(next(stream))
            loss = cmu_train_step(rgb, sar, state.model, state.optimizer, loss_cfg, targets)
            state.iteration = it + 1
            state.losses.append(("cmu", it + 1, loss))
            if (it + 1) % 100 == 0:
                log.info("cmu iter %d loss %.4f", it + 1, loss)
    if out_dir is not None:
        write_run(state, out_dir, "stage1.ckpt")
    return state


def remap_train_labels(label: torch.Tensor, num_seen: int, ignore_index: int) -> torch.Tensor:
    """Pixels of novel classes are not supervised."""
    return torch.where((label >= num_seen) & (label != ignore_index),
                       torch.full_like(label, ignore_index), label)


def run_stage2_full(cfg: RunConfig, data, stage1: TrainState | str | Path | None = None,
                    out_dir: str | Path | None = None, resume: TrainState | None = None,
                    iters: int | None = None) -> TrainState:
    """Train fusion head + global/text encoders with both dense encoders frozen."""
    cfg.validate()
    iters = cfg.stage2_iters if iters is None else iters
    if resume is not None:
        state = resume
    else:
        model = MMOVSeg(cfg)
        if stage1 is not None:
            src = load_state(stage1, cfg, with_optimizer=False) if isinstance(stage1, (str, Path)) else stage1
            if src.stage != "cmu":
                raise ValidationError(f"expected a stage-1 (cmu) checkpoint, got stage {src.stage!r}")
            model.load_state_dict(src.model.state_dict())
        elif cfg.cmu_target != "none" and cfg.fusion == "dual":
            raise ValidationError("stage 2 needs a stage-1 checkpoint unless cmu_target is 'none'")
        state = TrainState(cfg, model)
        state.optimizer = make_optimizer(cfg, model, stage2_policy(cfg, model))
    state.stage = "full"
    model = state.model
    train_vocab = resolve_vocabulary(cfg).train_view()
    if iters > state.iteration:
        samples = _train_samples(data, cfg)
        stream = make_batches(samples, "train", cfg.batch_size, _seed_for(cfg.seed, "full-data"),
                              augment=cfg.augment, cloud=cfg.cloud, cloud_splits=cfg.cloud_splits,
                              start=state.iteration)
        model.train()
        for it in range(state.iteration, iters):
            rgb, sar, label = model.to_tensors(next(stream))
            label = remap_train_labels(label, len(train_vocab), cfg.ignore_index)
            if not (label != cfg.ignore_index).any():
                # nothing supervised in this batch; still counts so resumes stay aligned
                state.iteration = it + 1
                continue
            out = model(rgb, sar, model.text_embeddings(train_vocab))
            loss = cross_entropy_loss(out.logits, label, cfg.ignore_index)
            state.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer_step(state.optimizer)
            state.iteration = it + 1
            state.losses.append(("full", it + 1, loss.item()))
            if (it + 1) % 100 == 0:
                log.info("full iter %d loss %.4f", it + 1, loss.item())
    model.eval()
    if out_dir is not None:
        write_run(state, out_dir, "final.ckpt")
    return state


# -- run directory ----------------------------------------------------------------------

def write_run(state: TrainState, out_dir: str | Path, ckpt_name: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_state(state, out / ckpt_name)
    run = {"config": state.cfg.to_dict(), "seed": state.cfg.seed, "config_hash": state.config_hash}
    if state.optimizer is not None:
        run[f"lrs_{state.stage}"] = effective_lrs(state.optimizer)
    run_path = out / "run.json"
    if run_path.exists():
        prev = json.loads(run_path.read_text())
        prev.update(run)
        run = prev
    run_path.write_text(json.dumps(run, indent=1, sort_keys=True) + "\n")
    write_loss_csv(state.losses, out / f"loss_{state.stage}.csv")
    if state.stage == "cmu":
        with (out / "cmu_steps.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss"])
            w.writerows([it, repr(float(loss))] for _, it, loss in state.losses)
    return out


def write_loss_csv(losses, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "iter", "loss"])
        for stage, it, loss in losses:
            w.writerow([stage, it, repr(float(loss))])
