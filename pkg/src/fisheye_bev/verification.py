"""Gradient verification suite run by the `gradcheck` CLI command and the
acceptance tests: every differentiable primitive, both attention kernels,
all four heads, and both losses, in single or double precision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    DeformableAttnParams,
    MhaParams,
    deformable_attention,
    multi_head_attention,
    temporal_self_attention,
)
from .diffcore import (
    Tensor,
    avg_pool2x2,
    bilinear_sample,
    conv3x3,
    dropout,
    grad_check,
    layer_norm,
    linear,
    log_softmax,
    relu,
    softmax,
    upsample2x,
)
from .heads import AttnHeadMulti, AttnHeadSingle, ConvHeadMulti, ConvHeadSingle
from .metrics import cross_entropy, focal_loss


@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst_rel_err: float

    def line(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return f"[{state}] {self.name:<28s} max rel err {self.worst_rel_err:.3e}"


def _dtype_of(precision: str):
    if precision == "double":
        return np.float64
    if precision == "single":
        return np.float32
    raise ValueError("precision must be 'single' or 'double'")


def _tol_of(dtype) -> float:
    return 1e-6 if dtype == np.float64 else 1e-3


def run_gradient_suite(precision: str = "double", seed: int = 0) -> list[SuiteResult]:
    dtype = _dtype_of(precision)
    tol = _tol_of(dtype)
    rng = np.random.default_rng(seed)

    def t(shape, scale=1.0):
        return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=dtype)

    def const(shape):
        return Tensor(rng.standard_normal(shape), dtype=dtype)

    results: list[SuiteResult] = []

    def run(name, f, inputs, eps=None):
        # heads pass eps explicitly: their many relu pre-activations need a
        # narrow kink band, and the f64 difference evaluation keeps small
        # steps accurate
        rep = grad_check(f, inputs, tol=tol, eps=eps)
        worst = max(rep.max_rel_err.values()) if rep.max_rel_err else 0.0
        results.append(SuiteResult(name, rep.passed, worst))

    # --- diffcore primitives -------------------------------------------------
    coef = const((4, 3))
    run("linear", lambda i: (linear(i["x"], i["w"], i["b"]) * coef).sum(),
        {"x": t((4, 8)), "w": t((8, 3)), "b": t(3)})

    coef_c = const((3, 5, 5))
    run("conv3x3", lambda i: (conv3x3(i["x"], i["w"], i["b"]) * coef_c).sum(),
        {"x": t((2, 5, 5)), "w": t((3, 2, 3, 3)), "b": t(3)})

    pts = Tensor(rng.uniform(0.3, 3.3, (6, 2)), requires_grad=True, dtype=np.float64
                 if dtype == np.float64 else np.float32)
    coef_s = const((6, 3))
    run("bilinear_sample", lambda i: (bilinear_sample(i["f"], i["p"]) * coef_s).sum(),
        {"f": t((3, 5, 6)), "p": pts})

    coef_sm = const((4, 6))
    run("softmax", lambda i: (softmax(i["x"], axis=-1) * coef_sm).sum(), {"x": t((4, 6))})
    run("softmax_constant", lambda i: softmax(i["x"], axis=-1).sum(), {"x": t((3, 5))})
    run("log_softmax", lambda i: (log_softmax(i["x"], axis=0) * coef_sm.transpose((1, 0))).sum(),
        {"x": t((6, 4))})

    offset = Tensor(rng.uniform(0.1, 0.4, (5, 7)), dtype=dtype)
    run("relu", lambda i: ((relu(i["x"] + offset)) ** 2.0).sum(), {"x": t((5, 7))})

    p_drop = 0.3
    mask = (rng.random((4, 6)) >= p_drop).astype(dtype) / (1 - p_drop)
    coef_d = const((4, 6))
    run("dropout", lambda i: (dropout(i["x"], p_drop, mask=mask) * coef_d).sum(),
        {"x": t((4, 6))})

    coef_u = const((2, 8, 12))
    run("upsample2x", lambda i: (upsample2x(i["x"]) * coef_u).sum(), {"x": t((2, 4, 6))})
    coef_p = const((2, 2, 3))
    run("avg_pool2x2", lambda i: (avg_pool2x2(i["x"]) * coef_p).sum(), {"x": t((2, 4, 6))})

    coef_ln = const((5, 8))
    run("layer_norm", lambda i: (layer_norm(i["x"], i["g"], i["b"]) * coef_ln).sum(),
        {"x": t((5, 8)), "g": t(8, 0.5), "b": t(8, 0.5)})

    run("matmul", lambda i: ((i["a"] @ i["b"]) ** 2.0).sum(),
        {"a": t((2, 3, 4)), "b": t((2, 4, 5))})

    # --- attention kernels -----------------------------------------------------
    d, heads, points, levels = 8, 2, 2, 2
    params = DeformableAttnParams.create(d, heads, points, levels, rng, dtype)
    params.offset_w.data = (rng.standard_normal(params.offset_w.shape) * 0.1).astype(dtype)
    params.weight_w.data = (rng.standard_normal(params.weight_w.shape) * 0.1).astype(dtype)
    pyramid = [t((d, 6, 6)), t((d, 3, 3))]
    coef_da = const(d)
    refs = [(2.3, 3.1), (1.2, 1.4)]

    def f_deform(i):
        return (deformable_attention(i["q"], refs, [i["f0"], i["f1"]], params) * coef_da).sum()

    run("deformable_attention", f_deform,
        {"q": t(d), "f0": pyramid[0], "f1": pyramid[1]})

    tsa = DeformableAttnParams.create(d, heads, points, 1, rng, dtype)
    tsa.offset_w.data = (rng.standard_normal(tsa.offset_w.shape) * 0.1).astype(dtype)
    tsa.weight_w.data = (rng.standard_normal(tsa.weight_w.shape) * 0.1).astype(dtype)
    h = w = 3
    prev = rng.standard_normal((h * w, d)).astype(dtype)
    hist_valid = rng.random(h * w) > 0.3
    coef_t = const((h * w, d))

    def f_tsa(i):
        return (temporal_self_attention(i["q"], prev, hist_valid, (h, w), tsa) * coef_t).sum()

    run("temporal_self_attention", f_tsa, {"q": t((h * w, d))})

    mha = MhaParams.create(d, heads, rng, dtype)
    coef_m = const((3, d))

    def f_mha(i):
        out, _ = multi_head_attention(i["q"], i["k"], i["v"], mha)
        return (out * coef_m).sum()

    run("multi_head_attention", f_mha, {"q": t((3, d)), "k": t((5, d)), "v": t((5, d))})

    # --- heads -------------------------------------------------------------------
    gh = gw = 4
    bev = t((gh * gw, d))

    head_as = AttnHeadSingle("height", d, heads, rng, dtype)
    coef_h = const((3, gh, gw))
    run("attn_head_single", lambda i: (head_as(i["bev"], (gh, gw)).primary * coef_h).sum(),
        {"bev": bev, "q": head_as.stack.queries})

    # conv heads: scalarize over an output window to keep |f| small (the FD
    # noise floor scales with |f|), eps well inside the relu kink margin
    head_cs = ConvHeadSingle("height", d, rng, dtype)
    coef_cs = const((3, 8, 8))
    run("conv_head_single",
        lambda i: (head_cs(i["bev"], (gh, gw)).primary[:, :8, :8] * coef_cs).sum(),
        {"bev": t((gh * gw, d)), "w": head_cs.predict.w}, eps=1e-5)

    head_am = AttnHeadMulti(d, heads, rng, dtype)
    coef_ah = const((3, gh, gw))
    coef_asg = const((5, gh, gw))

    def f_am(i):
        hgt, seg = head_am(i["bev"], (gh, gw))
        return (hgt.primary * coef_ah).sum() + (seg.primary * coef_asg).sum()

    run("attn_head_multi", f_am,
        {"bev": t((gh * gw, d)), "hq": head_am.height.queries, "sq": head_am.segmentation.queries})

    head_cm = ConvHeadMulti(d, rng, dtype)
    coef_ch = const((3, 8, 8))
    coef_csg = const((5, 8, 8))

    def f_cm(i):
        hgt, seg = head_cm(i["bev"], (gh, gw))
        return ((hgt.primary[:, :8, :8] * coef_ch).sum()
                + (seg.primary[:, :8, :8] * coef_csg).sum())

    run("conv_head_multi", f_cm,
        {"bev": t((gh * gw, d)), "w0": head_cm.trunk.convs[0][0]}, eps=1e-5)

    # --- losses --------------------------------------------------------------------
    target = rng.integers(0, 3, (4, 5))
    run("cross_entropy", lambda i: cross_entropy(i["x"], target), {"x": t((3, 4, 5))})
    run("focal_loss", lambda i: focal_loss(i["x"], target, gamma=2.0), {"x": t((3, 4, 5))})

    return results


def suite_passed(results: list[SuiteResult]) -> bool:
    return all(r.passed for r in results)
