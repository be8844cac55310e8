"""Task heads mapping BEV features to class-logit maps.

Attention heads emit at grid resolution: learnable per-class queries run
through three stacked multi-head attention modules over the BEV features,
and every module's head-averaged attention map (scaled by sqrt(d)) is kept
as an auxiliary logit map for deep supervision; the last one is the
primary output. Convolution heads emit at 8x grid resolution through
three upsampling blocks (2x bilinear, dropout, 3x3 conv, ReLU) and a
prediction block; logits stay raw, losses apply softmax internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import MhaParams, multi_head_attention
from .classes import N_HEIGHT_CLASSES, N_SEG_CLASSES
from .diffcore import Param, Tensor, conv3x3, dropout, relu, upsample2x
from .diffcore.tensor import kaiming_uniform, normal_init

N_ATTN_MODULES = 3
N_UPSAMPLE_BLOCKS = 3
DROPOUT_P = 0.1


@dataclass
class HeadOutput:
    primary: Tensor                      # [n_classes, H_out, W_out]
    auxiliary: list = field(default_factory=list)
    task: str = "segmentation"


def task_classes(task: str) -> int:
    if task == "height":
        return N_HEIGHT_CLASSES
    if task == "segmentation":
        return N_SEG_CLASSES
    raise ValueError(f"unknown task {task!r}")


class _AttnStack:
    """Three chained attention modules for one task's class queries."""

    def __init__(self, task: str, d: int, n_heads: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.task = task
        self.d = d
        self.n_classes = task_classes(task)
        self.queries = Param(normal_init(rng, (self.n_classes, d), dtype=dtype))
        self.modules = [MhaParams.create(d, n_heads, rng, dtype)
                        for _ in range(N_ATTN_MODULES)]

    def params(self, prefix: str) -> dict[str, Param]:
        out = {f"{prefix}/class_queries": self.queries}
        for i, m in enumerate(self.modules):
            out.update(m.params(f"{prefix}/mha{i}"))
        return out

    def __call__(self, bev: Tensor, grid_hw: tuple[int, int]) -> HeadOutput:
        h, w = grid_hw
        scale = float(np.sqrt(self.d))
        q = self.queries
        aux = []
        for m in self.modules:
            q, attn = multi_head_attention(q, bev, bev, m)
            maps = attn.mean(axis=0).reshape(self.n_classes, h, w) * scale
            aux.append(maps)
        return HeadOutput(primary=aux[-1], auxiliary=aux, task=self.task)


class AttnHeadSingle:
    def __init__(self, task: str, d: int, n_heads: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.stack = _AttnStack(task, d, n_heads, rng, dtype)

    def params(self, prefix: str = "head") -> dict[str, Param]:
        return self.stack.params(prefix)

    def __call__(self, bev: Tensor, grid_hw, training=False, rng=None) -> HeadOutput:
        return self.stack(bev, grid_hw)


class AttnHeadMulti:
    """Parallel height and segmentation stacks over the same BEV features."""

    def __init__(self, d: int, n_heads: int, rng: np.random.Generator, dtype=np.float32):
        self.height = _AttnStack("height", d, n_heads, rng, dtype)
        self.segmentation = _AttnStack("segmentation", d, n_heads, rng, dtype)

    def params(self, prefix: str = "head") -> dict[str, Param]:
        out = self.height.params(f"{prefix}/height")
        out.update(self.segmentation.params(f"{prefix}/segmentation"))
        return out

    def __call__(self, bev: Tensor, grid_hw, training=False, rng=None):
        return self.height(bev, grid_hw), self.segmentation(bev, grid_hw)


class _UpsampleTrunk:
    """Shared cascade: (2x bilinear -> dropout -> conv3x3 -> ReLU) x 3."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32):
        self.width = max(d // 2, 8)
        self.convs = []
        c_prev = d
        for _ in range(N_UPSAMPLE_BLOCKS):
            w = Param(kaiming_uniform(rng, (self.width, c_prev, 3, 3), c_prev * 9, dtype))
            b = Param(np.zeros(self.width, dtype=dtype))
            self.convs.append((w, b))
            c_prev = self.width

    def params(self, prefix: str) -> dict[str, Param]:
        out = {}
        for i, (w, b) in enumerate(self.convs):
            out[f"{prefix}/up{i}_w"] = w
            out[f"{prefix}/up{i}_b"] = b
        return out

    def __call__(self, x: Tensor, training: bool, rng) -> Tensor:
        for w, b in self.convs:
            x = upsample2x(x)
            if training:
                x = dropout(x, DROPOUT_P, rng=rng)
            x = relu(conv3x3(x, w, b))
        return x


class _PredictBlock:
    """conv3x3 to n_classes; the activation at the logit interface is the
    identity (losses softmax internally)."""

    def __init__(self, c_in: int, n_classes: int, rng: np.random.Generator, dtype=np.float32):
        self.w = Param(kaiming_uniform(rng, (n_classes, c_in, 3, 3), c_in * 9, dtype))
        self.b = Param(np.zeros(n_classes, dtype=dtype))

    def params(self, prefix: str) -> dict[str, Param]:
        return {f"{prefix}/predict_w": self.w, f"{prefix}/predict_b": self.b}

    def __call__(self, x: Tensor) -> Tensor:
        return conv3x3(x, self.w, self.b)


class ConvHeadSingle:
    def __init__(self, task: str, d: int, rng: np.random.Generator, dtype=np.float32):
        self.task = task
        self.trunk = _UpsampleTrunk(d, rng, dtype)
        self.predict = _PredictBlock(self.trunk.width, task_classes(task), rng, dtype)

    def params(self, prefix: str = "head") -> dict[str, Param]:
        out = self.trunk.params(prefix)
        out.update(self.predict.params(prefix))
        return out

    def __call__(self, bev: Tensor, grid_hw, training=False, rng=None) -> HeadOutput:
        h, w = grid_hw
        x = bev.reshape(h, w, bev.shape[-1]).transpose((2, 0, 1))
        x = self.trunk(x, training, rng)
        return HeadOutput(primary=self.predict(x), auxiliary=[], task=self.task)


class ConvHeadMulti:
    """One shared upsampling trunk splitting into two prediction blocks."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32):
        self.trunk = _UpsampleTrunk(d, rng, dtype)
        self.predict_height = _PredictBlock(self.trunk.width, N_HEIGHT_CLASSES, rng, dtype)
        self.predict_seg = _PredictBlock(self.trunk.width, N_SEG_CLASSES, rng, dtype)

    def params(self, prefix: str = "head") -> dict[str, Param]:
        out = self.trunk.params(f"{prefix}/shared")
        out.update(self.predict_height.params(f"{prefix}/height"))
        out.update(self.predict_seg.params(f"{prefix}/segmentation"))
        return out

    def __call__(self, bev: Tensor, grid_hw, training=False, rng=None):
        h, w = grid_hw
        x = bev.reshape(h, w, bev.shape[-1]).transpose((2, 0, 1))
        x = self.trunk(x, training, rng)
        return (
            HeadOutput(primary=self.predict_height(x), auxiliary=[], task="height"),
            HeadOutput(primary=self.predict_seg(x), auxiliary=[], task="segmentation"),
        )


def make_head(head_type: str, task: str, d: int, n_heads: int,
              rng: np.random.Generator, dtype=np.float32):
    """Factory over the four head variants; task 'multitask' selects the
    dual-output heads."""
    if head_type == "attn":
        if task == "multitask":
            return AttnHeadMulti(d, n_heads, rng, dtype)
        return AttnHeadSingle(task, d, n_heads, rng, dtype)
    if head_type == "conv":
        if task == "multitask":
            return ConvHeadMulti(d, rng, dtype)
        return ConvHeadSingle(task, d, rng, dtype)
    raise ValueError(f"unknown head type {head_type!r}")
