"""Training losses and IoU evaluation.

Losses take [C, H, W] logit tensors against [H, W] integer class maps and
softmax internally. IoU reports pool a confusion matrix, score classes
absent from both maps as 1.0, average the mean IoU over all classes, and
frequency-weight over non-excluded (non-background) classes only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, log_softmax


def _one_hot(target: np.ndarray, n_classes: int, dtype) -> np.ndarray:
    target = np.asarray(target)
    if target.min() < 0 or target.max() >= n_classes:
        raise ValueError("target class index out of range")
    oh = np.zeros((n_classes,) + target.shape, dtype=dtype)
    idx = np.indices(target.shape)
    oh[(target,) + tuple(idx)] = 1
    return oh


def cross_entropy(logits: Tensor, target: np.ndarray) -> Tensor:
    """Mean over pixels of -log softmax(logits)[target]."""
    c = logits.shape[0]
    oh = _one_hot(target, c, logits.dtype)
    lp = log_softmax(logits, axis=0)
    n_pix = float(np.prod(logits.shape[1:]))
    return (lp * Tensor(oh)).sum() * (-1.0 / n_pix)


def focal_loss(logits: Tensor, target: np.ndarray, gamma: float = 2.0) -> Tensor:
    """Mean over pixels of -(1 - p_t)^gamma * log p_t; gamma=0 is exactly
    cross entropy."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    c = logits.shape[0]
    oh = _one_hot(target, c, logits.dtype)
    lp = log_softmax(logits, axis=0)
    lpt = (lp * Tensor(oh)).sum(axis=0)        # [H, W]
    pt = lpt.exp()
    weight = (1.0 - pt) ** float(gamma)
    n_pix = float(np.prod(logits.shape[1:]))
    return (weight * lpt).sum() * (-1.0 / n_pix)


@dataclass
class IoUReport:
    per_class: np.ndarray        # [C] in [0, 1]
    mean_iou: float              # unweighted over all classes
    freq_weighted_iou: float     # over non-excluded classes, gt-frequency weights
    excluded: tuple[int, ...]
    pixel_counts: np.ndarray     # ground-truth pixels per class


def confusion_matrix(pred: np.ndarray, target: np.ndarray, n_classes: int) -> np.ndarray:
    pred = np.asarray(pred).ravel()
    target = np.asarray(target).ravel()
    if pred.shape != target.shape:
        raise ValueError("prediction/target shape mismatch")
    idx = target.astype(np.int64) * n_classes + pred.astype(np.int64)
    return np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def iou_from_confusion(conf: np.ndarray, excluded: tuple[int, ...] = ()) -> IoUReport:
    n_classes = conf.shape[0]
    inter = np.diag(conf).astype(np.float64)
    gt_count = conf.sum(axis=1).astype(np.float64)
    pred_count = conf.sum(axis=0).astype(np.float64)
    union = gt_count + pred_count - inter

    per_class = np.ones(n_classes)
    present = union > 0
    per_class[present] = inter[present] / union[present]

    keep = np.ones(n_classes, dtype=bool)
    keep[list(excluded)] = False
    weights = gt_count * keep
    total = weights.sum()
    fw = float((weights / total) @ per_class) if total > 0 else 0.0
    return IoUReport(
        per_class=per_class,
        mean_iou=float(per_class.mean()),
        freq_weighted_iou=fw,
        excluded=tuple(excluded),
        pixel_counts=gt_count.astype(np.int64),
    )


def iou_report(pred: np.ndarray, target: np.ndarray, n_classes: int,
               excluded: tuple[int, ...] = ()) -> IoUReport:
    """Class-wise/mean/frequency-weighted IoU of two class-index maps.

    Classes absent from both maps score 1.0 and carry zero frequency
    weight; `excluded` lists background classes left out of the
    frequency-weighted score.
    """
    return iou_from_confusion(confusion_matrix(pred, target, n_classes), excluded)


def downscale_nearest(class_map: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of a class-index map (used to compare
    grid-resolution predictions against higher-resolution ground truth)."""
    class_map = np.asarray(class_map)
    h_in, w_in = class_map.shape
    h_out, w_out = out_hw
    rows = np.clip(((np.arange(h_out) + 0.5) * h_in / h_out).astype(np.int64), 0, h_in - 1)
    cols = np.clip(((np.arange(w_out) + 0.5) * w_in / w_out).astype(np.int64), 0, w_in - 1)
    return class_map[rows[:, None], cols[None, :]]


def upscale_nearest(class_map: np.ndarray, factor: int) -> np.ndarray:
    """Block-replicate a class-index map by an integer factor."""
    return np.repeat(np.repeat(np.asarray(class_map), factor, axis=0), factor, axis=1)
