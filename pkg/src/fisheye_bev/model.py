"""Model configuration and assembly: backbone + BEV encoder + task head."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .bev_geometry import BevGrid, EgoMotion, ReferencePointTable
from .diffcore import Tensor
from .encoder import Backbone, BevEncoder, BevState, EncoderConfig
from .heads import make_head

TASKS = ("height", "segmentation", "multitask")
HEAD_TYPES = ("attn", "conv")


@dataclass
class ModelConfig:
    d: int = 32
    n_blocks: int = 3
    ffn_hidden: int = 0          # 0 = 2*d
    n_heads: int = 4
    n_points: int = 4
    grid_h: int = 50
    grid_w: int = 50
    cell: float = 0.33
    anchors: tuple[float, ...] = (0.0, 0.25, 1.8)
    head: str = "conv"
    task: str = "segmentation"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.head not in HEAD_TYPES:
            raise ValueError(f"head must be one of {HEAD_TYPES}")
        if not self.ffn_hidden:
            self.ffn_hidden = 2 * self.d

    def make_grid(self) -> BevGrid:
        return BevGrid(h=self.grid_h, w=self.grid_w, l=self.cell,
                       anchors=self.anchors, d=self.d)


def save_model_config(path, cfg: ModelConfig) -> None:
    with open(path, "w") as fh:
        fh.write(f"d = {cfg.d}\n")
        fh.write(f"n_blocks = {cfg.n_blocks}\n")
        fh.write(f"ffn_hidden = {cfg.ffn_hidden}\n")
        fh.write(f"n_heads = {cfg.n_heads}\n")
        fh.write(f"n_points = {cfg.n_points}\n")
        fh.write(f"grid_h = {cfg.grid_h}\n")
        fh.write(f"grid_w = {cfg.grid_w}\n")
        fh.write(f"cell = {cfg.cell!r}\n")
        fh.write("anchors = " + ",".join(repr(a) for a in cfg.anchors) + "\n")
        fh.write(f"head = {cfg.head}\n")
        fh.write(f"task = {cfg.task}\n")


def load_model_config(path) -> ModelConfig:
    entries: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line and "=" in line:
                key, value = (p.strip() for p in line.split("=", 1))
                entries[key] = value
    return ModelConfig(
        d=int(entries["d"]),
        n_blocks=int(entries["n_blocks"]),
        ffn_hidden=int(entries["ffn_hidden"]),
        n_heads=int(entries["n_heads"]),
        n_points=int(entries["n_points"]),
        grid_h=int(entries["grid_h"]),
        grid_w=int(entries["grid_w"]),
        cell=float(entries["cell"]),
        anchors=tuple(float(a) for a in entries["anchors"].split(",")),
        head=entries["head"],
        task=entries["task"],
    )


class BevModel:
    """The full image-to-BEV-maps network."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.grid = cfg.make_grid()
        rng = np.random.default_rng(seed)
        enc_cfg = EncoderConfig(d=cfg.d, n_blocks=cfg.n_blocks,
                                ffn_hidden=cfg.ffn_hidden, n_heads=cfg.n_heads,
                                n_points=cfg.n_points)
        self.backbone = Backbone(cfg.d, rng, dtype)
        self.encoder = BevEncoder(enc_cfg, self.grid, rng, dtype)
        self.head = make_head(cfg.head, cfg.task, cfg.d, cfg.n_heads, rng, dtype)

    def params(self) -> dict:
        out = {}
        out.update(self.backbone.params("backbone"))
        out.update(self.encoder.params("encoder"))
        head = self.head.params("head")
        if set(out) & set(head):
            raise RuntimeError("parameter name collision")
        out.update(head)
        return out

    def zero_grad(self):
        for p in self.params().values():
            p.grad = None

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.params()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, "
                             f"unused {sorted(extra)}")
        for name, p in params.items():
            arr = state[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def encode(self, images: list[np.ndarray], table: ReferencePointTable,
               prev: BevState | None, motion: EgoMotion | None,
               t: int, ego_rotation, ego_translation) -> tuple[Tensor, BevState]:
        """Images (normalized float [3, H, W]) to BEV features + state."""
        pyramids = [self.backbone(Tensor(img.astype(self.dtype))) for img in images]
        feats = self.encoder(pyramids, table, prev, motion)
        state = BevState(feats, t, np.asarray(ego_rotation), np.asarray(ego_translation))
        return feats, state

    def run_head(self, feats: Tensor, training=False, rng=None):
        return self.head(feats, (self.grid.h, self.grid.w), training=training, rng=rng)
