"""Deformable attention, distortion-aware spatial cross attention, temporal
self attention, and standard multi-head attention.

All sampling-based kernels share one core: offsets and attention weights
are predicted from the query alone, weights softmax-normalize over
(levels x points) per head, and per-level value projections feed the
bilinear sampler. Spatial cross attention averages per-camera deformable
attention over the set of valid views; a cell with no valid view outputs
the zero vector. Masked views are excluded by multiplying their sampled
contributions with an exact 0, so their features never influence the
output, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bev_geometry import ReferencePointTable
from .diffcore import Tensor, Param, linear, softmax, bilinear_sample, concat
from .diffcore.tensor import kaiming_uniform


@dataclass
class DeformableAttnParams:
    """Projections for one deformable-attention module."""

    d: int
    n_heads: int
    n_points: int
    n_levels: int
    offset_w: Param
    offset_b: Param
    weight_w: Param
    weight_b: Param
    value_w: list          # one [d, d] per level
    value_b: list
    out_w: Param
    out_b: Param

    @property
    def d_head(self) -> int:
        return self.d // self.n_heads

    @staticmethod
    def create(d: int, n_heads: int, n_points: int, n_levels: int,
               rng: np.random.Generator, dtype=np.float32) -> "DeformableAttnParams":
        if d % n_heads:
            raise ValueError("d must be divisible by n_heads")
        n_off = n_heads * n_levels * n_points
        # offsets start at a ring of radius k+1 around the reference,
        # rotated per head; weight projection starts uniform
        angles = 2.0 * np.pi * np.arange(n_heads) / n_heads
        ring = np.zeros((n_heads, n_levels, n_points, 2))
        for h in range(n_heads):
            for k in range(n_points):
                ring[h, :, k] = (k + 1) * np.array([np.cos(angles[h]), np.sin(angles[h])])
        return DeformableAttnParams(
            d=d, n_heads=n_heads, n_points=n_points, n_levels=n_levels,
            offset_w=Param(np.zeros((d, n_off * 2), dtype=dtype)),
            offset_b=Param(ring.reshape(-1).astype(dtype)),
            weight_w=Param(np.zeros((d, n_off), dtype=dtype)),
            weight_b=Param(np.zeros(n_off, dtype=dtype)),
            value_w=[Param(kaiming_uniform(rng, (d, d), d, dtype)) for _ in range(n_levels)],
            value_b=[Param(np.zeros(d, dtype=dtype)) for _ in range(n_levels)],
            out_w=Param(kaiming_uniform(rng, (d, d), d, dtype)),
            out_b=Param(np.zeros(d, dtype=dtype)),
        )

    def params(self, prefix: str) -> dict[str, Param]:
        out = {
            f"{prefix}/offset_w": self.offset_w,
            f"{prefix}/offset_b": self.offset_b,
            f"{prefix}/weight_w": self.weight_w,
            f"{prefix}/weight_b": self.weight_b,
            f"{prefix}/out_w": self.out_w,
            f"{prefix}/out_b": self.out_b,
        }
        for s, (vw, vb) in enumerate(zip(self.value_w, self.value_b)):
            out[f"{prefix}/value{s}_w"] = vw
            out[f"{prefix}/value{s}_b"] = vb
        return out


def _value_map(level: Tensor, w: Param, b: Param) -> Tensor:
    """Per-level value projection of a [d, H, W] feature map."""
    d, hh, ww = level.shape
    flat = level.reshape(d, hh * ww).transpose((1, 0))
    return linear(flat, w, b).transpose((1, 0)).reshape(d, hh, ww)


def _deform_core(queries: Tensor, refs_per_level: list[np.ndarray],
                 value_maps: list[Tensor], params: DeformableAttnParams) -> Tensor:
    """Deformable attention of [P, d] queries against precomputed value maps.

    refs_per_level[s] is [P, n_a, 2] in level-s pixel coordinates; the
    output is [P, n_a, d], the full module output (including the output
    projection) for every (query, reference) pair.
    """
    P = queries.shape[0]
    n_a = refs_per_level[0].shape[1]
    H, L, K, dh = params.n_heads, params.n_levels, params.n_points, params.d_head

    off = linear(queries, params.offset_w, params.offset_b).reshape(P, H, L, K, 2)
    w_raw = linear(queries, params.weight_w, params.weight_b).reshape(P, H, L * K)
    weights = softmax(w_raw, axis=-1).reshape(P, H, L, K)

    head_outputs = []
    for h in range(H):
        acc = None
        for s in range(L):
            refs = Tensor(refs_per_level[s][:, :, None, :].astype(queries.dtype))
            pts = (refs + off[:, h, s].reshape(P, 1, K, 2)).reshape(P * n_a * K, 2)
            feat = value_maps[s][h * dh:(h + 1) * dh]
            sampled = bilinear_sample(feat, pts).reshape(P, n_a, K, dh)
            term = (sampled * weights[:, h, s].reshape(P, 1, K, 1)).sum(axis=2)
            acc = term if acc is None else acc + term
        head_outputs.append(acc)  # [P, n_a, dh]
    merged = concat(head_outputs, axis=-1)  # [P, n_a, d]
    return linear(merged, params.out_w, params.out_b)


def level_reference(uv: np.ndarray, stride: float) -> np.ndarray:
    """Rescale full-resolution pixels into a pyramid level's pixel frame."""
    return (uv + 0.5) / stride - 0.5


def deformable_attention(query: Tensor, ref_pixels, pyramid: list[Tensor],
                         params: DeformableAttnParams) -> Tensor:
    """Single-query deformable attention.

    ref_pixels is a sequence of (u, v) per level, already in each level's
    pixel coordinates; pyramid holds the [d, H_s, W_s] feature maps of one
    view. Returns the attended [d] vector.
    """
    refs = [np.asarray(r, dtype=np.float64).reshape(1, 1, 2) for r in ref_pixels]
    if len(refs) != params.n_levels:
        raise ValueError("one reference per level required")
    values = [_value_map(lvl, params.value_w[s], params.value_b[s])
              for s, lvl in enumerate(pyramid)]
    q = query.reshape(1, query.shape[-1])
    return _deform_core(q, refs, values, params).reshape(query.shape[-1])


def da_sca(queries: Tensor, pyramids, table: ReferencePointTable,
           params: DeformableAttnParams) -> Tensor:
    """Distortion-aware spatial cross attention over all cameras.

    queries is [h*w, d]; pyramids is one FeaturePyramid per camera (same
    order as the table). Per cell the per-camera deformable attention
    outputs are summed over valid (camera, anchor) pairs and divided by
    the number of valid views; empty-view cells output zeros.
    """
    P, d = queries.shape
    if P != table.grid.n_cells:
        raise ValueError("query count does not match the grid")
    dtype = queries.dtype

    uv = np.where(table.valid[..., None], table.uv, 0.0)  # sanitize NaNs
    inv_views = np.zeros(P, dtype=dtype)
    nz = table.n_valid_views > 0
    inv_views[nz] = 1.0 / table.n_valid_views[nz]
    inv_views = Tensor(inv_views[:, None])

    total = None
    for i, pyramid in enumerate(pyramids):
        strides = pyramid.strides
        refs = [level_reference(uv[:, :, i, :], strides[s]) for s in range(params.n_levels)]
        values = [_value_map(lvl, params.value_w[s], params.value_b[s])
                  for s, lvl in enumerate(pyramid.levels)]
        per_pair = _deform_core(queries, refs, values, params)  # [P, n_a, d]
        mask = Tensor(table.valid[:, :, i].astype(dtype)[:, :, None])
        contrib = (per_pair * mask).sum(axis=1)  # [P, d]
        total = contrib if total is None else total + contrib
    return total * inv_views


def temporal_self_attention(queries: Tensor, aligned_prev: np.ndarray | None,
                            history_valid: np.ndarray | None, grid_hw: tuple[int, int],
                            params: DeformableAttnParams) -> Tensor:
    """Deformable attention of BEV queries into the current query map and
    the ego-motion-aligned previous BEV features, averaged.

    Where history is absent (t = 0) or its validity raster is false, the
    history source falls back to the current queries, reducing to plain
    self attention.
    """
    if params.n_levels != 1:
        raise ValueError("temporal attention treats the BEV plane as one level")
    h, w = grid_hw
    P, d = queries.shape
    if P != h * w:
        raise ValueError("query count does not match the grid")

    xs = np.arange(P) % w
    ys = np.arange(P) // w
    refs = [np.stack([xs, ys], axis=-1).astype(np.float64)[:, None, :]]  # [P, 1, 2]

    cur_map = queries.reshape(h, w, d).transpose((2, 0, 1))
    cur_values = [_value_map(cur_map, params.value_w[0], params.value_b[0])]
    out_cur = _deform_core(queries, refs, cur_values, params)

    if aligned_prev is None:
        out_hist = out_cur
    else:
        keep = history_valid.astype(queries.dtype)[:, None] if history_valid is not None \
            else np.ones((P, 1), dtype=queries.dtype)
        hist = Tensor((aligned_prev * keep).astype(queries.dtype)) + queries * Tensor(1.0 - keep)
        hist_map = hist.reshape(h, w, d).transpose((2, 0, 1))
        hist_values = [_value_map(hist_map, params.value_w[0], params.value_b[0])]
        out_hist = _deform_core(queries, refs, hist_values, params)

    return ((out_cur + out_hist) * 0.5).reshape(P, d)


@dataclass
class MhaParams:
    """Projections for standard multi-head attention."""

    d: int
    n_heads: int
    wq: Param
    bq: Param
    wk: Param
    bk: Param
    wv: Param
    bv: Param
    wo: Param
    bo: Param

    @staticmethod
    def create(d: int, n_heads: int, rng: np.random.Generator,
               dtype=np.float32) -> "MhaParams":
        if d % n_heads:
            raise ValueError("d must be divisible by n_heads")

        def w():
            return Param(kaiming_uniform(rng, (d, d), d, dtype))

        def b():
            return Param(np.zeros(d, dtype=dtype))

        return MhaParams(d=d, n_heads=n_heads, wq=w(), bq=b(), wk=w(), bk=b(),
                         wv=w(), bv=b(), wo=w(), bo=b())

    def params(self, prefix: str) -> dict[str, Param]:
        return {
            f"{prefix}/wq": self.wq, f"{prefix}/bq": self.bq,
            f"{prefix}/wk": self.wk, f"{prefix}/bk": self.bk,
            f"{prefix}/wv": self.wv, f"{prefix}/bv": self.bv,
            f"{prefix}/wo": self.wo, f"{prefix}/bo": self.bo,
        }


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, params: MhaParams):
    """Scaled dot-product attention returning (output, attention maps).

    q is [Nq, d], k/v are [Nk, d]; the returned maps are the post-softmax
    weights [n_heads, Nq, Nk], kept for deep supervision.
    """
    nq, d = q.shape
    nk = k.shape[0]
    H = params.n_heads
    dh = d // H

    def split(x, w, b, n):
        return linear(x, w, b).reshape(n, H, dh).transpose((1, 0, 2))

    qh = split(q, params.wq, params.bq, nq)
    kh = split(k, params.wk, params.bk, nk)
    vh = split(v, params.wv, params.bv, nk)

    scores = (qh @ kh.transpose((0, 2, 1))) * (1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1)  # [H, Nq, Nk]
    ctx = (attn @ vh).transpose((1, 0, 2)).reshape(nq, d)
    return linear(ctx, params.wo, params.bo), attn
