"""Image backbone and the repeated BEV transformer block.

The backbone is a small conv trunk with lateral top-down fusion producing
three feature levels at strides 4/8/16, each `d` channels wide; it stands
in for a full-scale pretrained network at desk scale. The encoder block
applies temporal self attention, spatial cross attention, and a
feedforward network, each with a residual connection followed by layer
normalization, repeated n_blocks times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import DeformableAttnParams, da_sca, temporal_self_attention
from .bev_geometry import BevGrid, EgoMotion, ReferencePointTable, align_previous
from .diffcore import (
    Param,
    Tensor,
    avg_pool2x2,
    conv3x3,
    layer_norm,
    linear,
    relu,
    upsample2x,
)
from .diffcore.tensor import kaiming_uniform, normal_init

PYRAMID_STRIDES = (4, 8, 16)


@dataclass
class EncoderConfig:
    d: int = 32
    n_blocks: int = 3
    ffn_hidden: int = 0  # 0 = default 2*d
    n_heads: int = 4
    n_points: int = 4

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("need at least one encoder block")
        if not self.ffn_hidden:
            self.ffn_hidden = 2 * self.d


@dataclass
class BevState:
    """BEV features of one timestep plus the ego pose they were computed at."""

    features: Tensor          # [h*w, d]
    t: int
    ego_rotation: np.ndarray
    ego_translation: np.ndarray

    def detached(self) -> "BevState":
        return BevState(self.features.detach(), self.t,
                        self.ego_rotation, self.ego_translation)


@dataclass
class FeaturePyramid:
    """Multi-scale features of one camera view."""

    levels: list          # [d, H_s, W_s] tensors, finest first
    strides: tuple = PYRAMID_STRIDES

    def __post_init__(self):
        for a, b in zip(self.levels, self.levels[1:]):
            ha, wa = a.shape[1:]
            hb, wb = b.shape[1:]
            if (hb, wb) != ((ha + 1) // 2, (wa + 1) // 2):
                raise ValueError("pyramid levels must halve (rounded up)")


class Backbone:
    """Six-conv trunk with avg-pool downsampling and top-down lateral fusion."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32):
        self.d = d
        base = max(d // 2, 8)
        chans = (base, base, 2 * base, 2 * base, 3 * base, 4 * base)
        self.convs = []
        c_prev = 3
        for c in chans:
            w = Param(kaiming_uniform(rng, (c, c_prev, 3, 3), c_prev * 9, dtype))
            b = Param(np.zeros(c, dtype=dtype))
            self.convs.append((w, b))
            c_prev = c
        # laterals map trunk taps (strides 4/8/16) to d channels
        self.laterals = []
        for c in (chans[3], chans[4], chans[5]):
            w = Param(kaiming_uniform(rng, (c, d), c, dtype))
            b = Param(np.zeros(d, dtype=dtype))
            self.laterals.append((w, b))
        self.smooths = []
        for _ in range(3):
            w = Param(kaiming_uniform(rng, (d, d, 3, 3), d * 9, dtype))
            b = Param(np.zeros(d, dtype=dtype))
            self.smooths.append((w, b))

    def params(self, prefix: str) -> dict[str, Param]:
        out = {}
        for i, (w, b) in enumerate(self.convs):
            out[f"{prefix}/conv{i}_w"] = w
            out[f"{prefix}/conv{i}_b"] = b
        for i, (w, b) in enumerate(self.laterals):
            out[f"{prefix}/lateral{i}_w"] = w
            out[f"{prefix}/lateral{i}_b"] = b
        for i, (w, b) in enumerate(self.smooths):
            out[f"{prefix}/smooth{i}_w"] = w
            out[f"{prefix}/smooth{i}_b"] = b
        return out

    def __call__(self, image: Tensor) -> FeaturePyramid:
        """Extract the three-level pyramid from a [3, H, W] image.

        H and W must be divisible by 16.
        """
        _, h, w = image.shape
        if h % 16 or w % 16:
            raise ValueError("image dims must be divisible by 16")
        x = image
        taps = []
        for i, (cw, cb) in enumerate(self.convs):
            x = relu(conv3x3(x, cw, cb))
            if i >= 3:
                taps.append(x)
            if i in (1, 2, 3, 4):
                x = avg_pool2x2(x)
        # taps: stride 4, 8, 16 (pooling happens after the tap is taken)
        laterals = [self._conv1x1(t, *lw) for t, lw in zip(taps, self.laterals)]
        p2 = laterals[2]
        p1 = laterals[1] + upsample2x(p2)
        p0 = laterals[0] + upsample2x(p1)
        levels = [conv3x3(p, sw, sb) for p, (sw, sb) in zip((p0, p1, p2), self.smooths)]
        return FeaturePyramid(levels=levels)

    @staticmethod
    def _conv1x1(x: Tensor, w: Param, b: Param) -> Tensor:
        c, hh, ww = x.shape
        flat = x.reshape(c, hh * ww).transpose((1, 0))
        return linear(flat, w, b).transpose((1, 0)).reshape(w.shape[1], hh, ww)


class EncoderBlock:
    """temporal self attention -> spatial cross attention -> FFN, each
    residual-added then layer-normalized."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        d = cfg.d
        self.tsa = DeformableAttnParams.create(d, cfg.n_heads, cfg.n_points, 1, rng, dtype)
        self.sca = DeformableAttnParams.create(d, cfg.n_heads, cfg.n_points,
                                               len(PYRAMID_STRIDES), rng, dtype)
        self.ffn_w1 = Param(kaiming_uniform(rng, (d, cfg.ffn_hidden), d, dtype))
        self.ffn_b1 = Param(np.zeros(cfg.ffn_hidden, dtype=dtype))
        self.ffn_w2 = Param(kaiming_uniform(rng, (cfg.ffn_hidden, d), cfg.ffn_hidden, dtype))
        self.ffn_b2 = Param(np.zeros(d, dtype=dtype))
        self.norms = [
            (Param(np.ones(d, dtype=dtype)), Param(np.zeros(d, dtype=dtype)))
            for _ in range(3)
        ]

    def params(self, prefix: str) -> dict[str, Param]:
        out = {}
        out.update(self.tsa.params(f"{prefix}/tsa"))
        out.update(self.sca.params(f"{prefix}/sca"))
        out[f"{prefix}/ffn_w1"] = self.ffn_w1
        out[f"{prefix}/ffn_b1"] = self.ffn_b1
        out[f"{prefix}/ffn_w2"] = self.ffn_w2
        out[f"{prefix}/ffn_b2"] = self.ffn_b2
        for i, (g, b) in enumerate(self.norms):
            out[f"{prefix}/ln{i}_g"] = g
            out[f"{prefix}/ln{i}_b"] = b
        return out

    def __call__(self, x: Tensor, pyramids, table: ReferencePointTable,
                 aligned_prev, history_valid, grid_hw) -> Tensor:
        g0, b0 = self.norms[0]
        x = layer_norm(x + temporal_self_attention(x, aligned_prev, history_valid,
                                                   grid_hw, self.tsa), g0, b0)
        g1, b1 = self.norms[1]
        x = layer_norm(x + da_sca(x, pyramids, table, self.sca), g1, b1)
        g2, b2 = self.norms[2]
        ffn = linear(relu(linear(x, self.ffn_w1, self.ffn_b1)), self.ffn_w2, self.ffn_b2)
        return layer_norm(x + ffn, g2, b2)


class BevEncoder:
    """Learned BEV queries refined by the stacked encoder blocks."""

    def __init__(self, cfg: EncoderConfig, grid: BevGrid,
                 rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.grid = grid
        self.query_embed = Param(normal_init(rng, (grid.n_cells, cfg.d), dtype=dtype))
        self.pos_embed = Param(normal_init(rng, (grid.n_cells, cfg.d), dtype=dtype))
        self.blocks = [EncoderBlock(cfg, rng, dtype) for _ in range(cfg.n_blocks)]

    def params(self, prefix: str = "encoder") -> dict[str, Param]:
        out = {f"{prefix}/query_embed": self.query_embed,
               f"{prefix}/pos_embed": self.pos_embed}
        for i, blk in enumerate(self.blocks):
            out.update(blk.params(f"{prefix}/block{i}"))
        return out

    def __call__(self, pyramids, table: ReferencePointTable,
                 prev: BevState | None, motion: EgoMotion | None) -> Tensor:
        """Produce [h*w, d] BEV features from per-camera pyramids.

        Previous-frame features enter detached (truncated backprop through
        time of length 1): only their values are consumed.
        """
        grid = self.grid
        if prev is not None:
            aligned_prev, history_valid = align_previous(
                prev.features.data, motion or EgoMotion.identity(), grid)
        else:
            aligned_prev, history_valid = None, None

        x = self.query_embed + self.pos_embed
        for blk in self.blocks:
            x = blk(x, pyramids, table, aligned_prev, history_valid, (grid.h, grid.w))
        return x
