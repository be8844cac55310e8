"""Training, evaluation, and sequential inference over dataset directories.

Frames are consumed in temporal order inside each sequence; the BEV state
of the previous frame is carried (detached) and aligned by recorded
ego-motion. Training uses plain SGD with momentum, cross-entropy first
and focal loss afterwards, with random history dropout for ego-motion
diversity. Report paths emit CSVs plus rendered figures.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .bev_geometry import EgoMotion, build_reference_table
from .classes import BACKGROUND_CLASS, HEIGHT_PALETTE, PALETTE, class_names
from .diffcore import Tensor, no_grad, save_checkpoint, load_checkpoint
from .heads import HeadOutput, task_classes
from .metrics import (
    confusion_matrix,
    cross_entropy,
    downscale_nearest,
    focal_loss,
    iou_from_confusion,
    upscale_nearest,
)
from .model import BevModel, ModelConfig, load_model_config, save_model_config
from .netpbm import write_pgm, write_ppm
from .plots import save_iou_figure, save_loss_curve
from .synth.dataset import SequenceData, load_dataset


@dataclass
class TrainConfig:
    task: str = "segmentation"
    head: str = "conv"
    steps: int = 2000
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    ce_fraction: float = 0.6          # fraction of steps on cross-entropy
    gamma: float = 2.0                # focal loss exponent
    split: tuple[float, float, float] = (0.7, 0.15, 0.15)
    ckpt_every: int = 0               # 0 = final checkpoint only
    history_dropout: float = 0.25

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def split_frames(n_frames: int, ratios=(0.7, 0.15, 0.15), seed: int = 0) -> dict[str, range]:
    """Contiguous train/val/test frame ranges within one sequence.

    Deterministic in (n_frames, seed); the chunks stay in temporal order
    (train first) so sequential inference sees contiguous history, and the
    seed is accepted for interface stability though the boundaries do not
    depend on it.
    """
    n_train = int(n_frames * ratios[0])
    n_val = int(n_frames * ratios[1])
    if n_frames >= 3:
        n_train = max(n_train, 1)
        n_val = max(n_val, 1)
    return {
        "train": range(0, n_train),
        "val": range(n_train, n_train + n_val),
        "test": range(n_train + n_val, n_frames),
        "all": range(0, n_frames),
    }


def normalize_image(img: np.ndarray) -> np.ndarray:
    """uint8 [H, W, 3] -> float32 [3, H, W] in [-1, 1]."""
    x = img.astype(np.float32) / 255.0
    return ((x - 0.5) / 0.5).transpose(2, 0, 1)


def _fit_target(target: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Resize a ground-truth class map to a head's output resolution."""
    h, w = target.shape
    ho, wo = out_hw
    if (ho, wo) == (h, w):
        return target
    if ho > h:
        if ho % h or wo % w:
            raise ValueError("output resolution must be an integer multiple of the grid")
        return upscale_nearest(target, ho // h)
    return downscale_nearest(target, out_hw)


def head_loss(output: HeadOutput, target: np.ndarray, loss_kind: str,
              gamma: float = 2.0, grid_hw: tuple[int, int] | None = None) -> Tensor:
    """Primary loss plus equally weighted deep-supervision terms."""

    def one(logits, tgt):
        if loss_kind == "ce":
            return cross_entropy(logits, tgt)
        return focal_loss(logits, tgt, gamma)

    total = one(output.primary, _fit_target(target, output.primary.shape[1:]))
    for aux in output.auxiliary:
        if aux is output.primary:
            continue
        total = total + one(aux, _fit_target(target, aux.shape[1:]))
    return total


def frame_losses(outputs, targets: dict[str, np.ndarray], task: str,
                 loss_kind: str, gamma: float) -> Tensor:
    """Combined loss for one frame; multitask sums both heads unweighted."""
    if task == "multitask":
        height_out, seg_out = outputs
        return (head_loss(height_out, targets["height"], loss_kind, gamma)
                + head_loss(seg_out, targets["segmentation"], loss_kind, gamma))
    return head_loss(outputs, targets[task], loss_kind, gamma)


class SGD:
    """Stochastic gradient descent with classical momentum."""

    def __init__(self, params: dict, lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self):
        for name, p in self.params.items():
            if p.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v += p.grad
            p.data = p.data - self.lr * v

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def _frame_targets(frame) -> dict[str, np.ndarray]:
    return {
        "height": frame.bev_height.astype(np.int64),
        "segmentation": frame.bev_seg.astype(np.int64),
    }


def _check_grid(model: BevModel, sequences: list[SequenceData]) -> None:
    for seq in sequences:
        g = seq.grid
        if (g.h, g.w) != (model.grid.h, model.grid.w) or abs(g.l - model.grid.l) > 1e-12:
            raise ValueError(
                f"sequence {seq.seq_id} grid {(g.h, g.w, g.l)} does not match "
                f"model grid {(model.grid.h, model.grid.w, model.grid.l)}")


def train(dataset_path, cfg: TrainConfig, model_cfg: ModelConfig, out_dir) -> dict:
    """Train a model on a dataset directory; returns output file paths."""
    os.makedirs(out_dir, exist_ok=True)
    sequences = load_dataset(dataset_path)
    model = BevModel(model_cfg, seed=cfg.seed)
    _check_grid(model, sequences)
    tables = {seq.seq_id: build_reference_table(model.grid, seq.cameras)
              for seq in sequences}

    params = model.params()
    opt = SGD(params, cfg.lr, cfg.momentum)
    rng = np.random.default_rng(cfg.seed)
    ce_steps = int(cfg.steps * cfg.ce_fraction)

    loss_rows = []
    step = 0
    done = False
    while not done:
        order = rng.permutation(len(sequences))
        for seq_idx in order:
            seq = sequences[seq_idx]
            table = tables[seq.seq_id]
            frames = split_frames(len(seq.frames), cfg.split, cfg.seed)["train"]
            state = None
            for k in frames:
                frame = seq.frames[k]
                use_history = state is not None and rng.random() >= cfg.history_dropout
                motion = None
                if use_history:
                    motion = EgoMotion.between(
                        state.ego_rotation, state.ego_translation,
                        frame.ego_rotation, frame.ego_translation)
                images = [normalize_image(img) for img in frame.images]
                feats, new_state = model.encode(
                    images, table, state if use_history else None, motion,
                    t=k, ego_rotation=frame.ego_rotation,
                    ego_translation=frame.ego_translation)
                outputs = model.run_head(feats, training=True, rng=rng)
                loss_kind = "ce" if step < ce_steps else "focal"
                loss = frame_losses(outputs, _frame_targets(frame), cfg.task,
                                    loss_kind, cfg.gamma)
                loss_value = float(loss.data)
                if not np.isfinite(loss_value):
                    raise RuntimeError(
                        f"non-finite loss {loss_value} at step {step} "
                        f"(seq {seq.seq_id}, frame {k})")
                opt.zero_grad()
                loss.backward()
                opt.step()
                state = new_state.detached()
                loss_rows.append((step, loss_kind, loss_value))
                step += 1
                if cfg.ckpt_every and step % cfg.ckpt_every == 0:
                    save_checkpoint(os.path.join(out_dir, f"step_{step:06d}.ckpt"), params)
                if step >= cfg.steps:
                    done = True
                    break
            if done:
                break

    ckpt_path = os.path.join(out_dir, "model.ckpt")
    save_checkpoint(ckpt_path, params)
    cfg_path = os.path.join(out_dir, "model.cfg")
    save_model_config(cfg_path, model_cfg)

    csv_path = os.path.join(out_dir, "loss_curve.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "phase", "loss"])
        writer.writerows(loss_rows)
    fig_path = os.path.join(out_dir, "loss_curve.png")
    save_loss_curve(loss_rows, fig_path)

    return {"checkpoint": ckpt_path, "config": cfg_path,
            "loss_csv": csv_path, "loss_fig": fig_path}


def _load_model(checkpoint_path, model_cfg) -> BevModel:
    if not isinstance(model_cfg, ModelConfig):
        model_cfg = load_model_config(model_cfg)
    model = BevModel(model_cfg, seed=0)
    model.load_state(load_checkpoint(checkpoint_path))
    return model


def _predict_maps(model: BevModel, outputs) -> dict[str, np.ndarray]:
    """argmax class maps per task from head outputs."""
    if model.cfg.task == "multitask":
        height_out, seg_out = outputs
        return {"height": np.argmax(height_out.primary.data, axis=0),
                "segmentation": np.argmax(seg_out.primary.data, axis=0)}
    out = outputs
    return {model.cfg.task: np.argmax(out.primary.data, axis=0)}


def _sequence_states(model: BevModel, seq: SequenceData, table, frames,
                     with_history: bool):
    """Yield (frame, predicted maps) running sequential inference."""
    state = None
    for k in frames:
        frame = seq.frames[k]
        motion = None
        if state is not None:
            motion = EgoMotion.between(state.ego_rotation, state.ego_translation,
                                       frame.ego_rotation, frame.ego_translation)
        images = [normalize_image(img) for img in frame.images]
        feats, new_state = model.encode(
            images, table, state if with_history else None,
            motion if with_history else None,
            t=k, ego_rotation=frame.ego_rotation,
            ego_translation=frame.ego_translation)
        outputs = model.run_head(feats, training=False)
        yield frame, _predict_maps(model, outputs)
        state = new_state.detached() if with_history else None


def _tasks_of(model: BevModel) -> list[str]:
    return ["height", "segmentation"] if model.cfg.task == "multitask" else [model.cfg.task]


def evaluate(dataset_path, checkpoint_path, model_cfg, split: str = "test",
             out_dir=None, with_history: bool = True) -> dict:
    """Sequential evaluation; pools confusion counts over all frames.

    Returns {task: {"overall": IoUReport, sequence_id: IoUReport}} and,
    when out_dir is given, writes one CSV per task plus a figure.
    """
    model = _load_model(checkpoint_path, model_cfg)
    sequences = load_dataset(dataset_path)
    _check_grid(model, sequences)
    tasks = _tasks_of(model)

    pooled = {t: np.zeros((task_classes(t), task_classes(t)), dtype=np.int64)
              for t in tasks}
    per_seq = {t: {} for t in tasks}
    with no_grad():
        for seq in sequences:
            table = build_reference_table(model.grid, seq.cameras)
            frames = split_frames(len(seq.frames), seed=0)[split]
            seq_conf = {t: np.zeros_like(pooled[t]) for t in tasks}
            for frame, preds in _sequence_states(model, seq, table, frames, with_history):
                targets = _frame_targets(frame)
                for t in tasks:
                    pred = preds[t]
                    tgt = _fit_target(targets[t], pred.shape)
                    conf = confusion_matrix(pred, tgt, task_classes(t))
                    seq_conf[t] += conf
                    pooled[t] += conf
            for t in tasks:
                per_seq[t][seq.seq_id] = iou_from_confusion(
                    seq_conf[t], excluded=(BACKGROUND_CLASS[t],))

    results = {}
    for t in tasks:
        reports = dict(per_seq[t])
        reports["overall"] = iou_from_confusion(pooled[t], excluded=(BACKGROUND_CLASS[t],))
        results[t] = reports

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for t in tasks:
            names = class_names(t)
            path = os.path.join(out_dir, f"iou_{t}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["sequence", "task", *names,
                                 "mean_iou", "freq_weighted_iou"])
                for key, rep in results[t].items():
                    writer.writerow([key, t, *[f"{x:.6f}" for x in rep.per_class],
                                     f"{rep.mean_iou:.6f}",
                                     f"{rep.freq_weighted_iou:.6f}"])
        save_iou_figure({t: results[t]["overall"] for t in tasks},
                        {t: class_names(t) for t in tasks},
                        os.path.join(out_dir, "iou_report.png"))
    return results


def _colorize(class_map: np.ndarray, task: str) -> np.ndarray:
    palette = HEIGHT_PALETTE if task == "height" else PALETTE
    out = np.zeros(class_map.shape + (3,), dtype=np.uint8)
    for cls, color in palette.items():
        out[class_map == cls] = color
    return out


def infer_sequence(dataset_path, checkpoint_path, model_cfg, out_dir,
                   split: str = "all", with_history: bool = True) -> list[str]:
    """Write per-frame BEV map PGMs plus a side-by-side PPM collage."""
    model = _load_model(checkpoint_path, model_cfg)
    sequences = load_dataset(dataset_path)
    _check_grid(model, sequences)
    tasks = _tasks_of(model)
    os.makedirs(out_dir, exist_ok=True)

    written = []
    with no_grad():
        for seq in sequences:
            table = build_reference_table(model.grid, seq.cameras)
            frames = split_frames(len(seq.frames), seed=0)[split]
            seq_out = os.path.join(out_dir, f"seq_{seq.seq_id:03d}")
            os.makedirs(seq_out, exist_ok=True)
            for frame, preds in _sequence_states(model, seq, table, frames, with_history):
                panels = [img for img in frame.images]
                for t in tasks:
                    path = os.path.join(seq_out, f"frame_{frame.index:05d}_{t}.pgm")
                    write_pgm(path, preds[t].astype(np.uint8))
                    written.append(path)
                    panels.append(_colorize(preds[t], t))
                collage_path = os.path.join(seq_out, f"frame_{frame.index:05d}_collage.ppm")
                write_ppm(collage_path, _collage(panels))
                written.append(collage_path)
    return written


def _collage(panels: list[np.ndarray]) -> np.ndarray:
    height = max(p.shape[0] for p in panels)
    scaled = []
    for p in panels:
        if p.shape[0] != height:
            reps = int(np.ceil(height / p.shape[0]))
            p = np.repeat(np.repeat(p, reps, axis=0), reps, axis=1)[:height]
        pad = np.zeros((height, p.shape[1], 3), dtype=np.uint8)
        pad[: p.shape[0]] = p
        scaled.append(pad)
        scaled.append(np.full((height, 2, 3), 255, dtype=np.uint8))
    return np.concatenate(scaled[:-1], axis=1)
