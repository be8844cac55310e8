"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    max_rel_err: dict[str, float] = field(default_factory=dict)

    def __str__(self):
        worst = max(self.max_rel_err.values()) if self.max_rel_err else 0.0
        state = "PASS" if self.passed else "FAIL"
        return f"gradcheck {state} (worst rel err {worst:.3e}, tol {self.tol:.1e})"


def _default_eps(dtype) -> float:
    return 1e-6 if dtype == np.float64 else 1e-3


def grad_check(f, inputs: dict[str, Tensor], eps: float | None = None,
               tol: float | None = None) -> GradCheckReport:
    """Compare f's backward against central differences, input by input.

    f takes the inputs dict and returns a scalar Tensor; it must be
    deterministic (dropout disabled or mask-pinned). Relative error uses an
    absolute floor of sqrt(eps) so near-zero gradients compare absolutely.
    """
    for t in inputs.values():
        t.grad = None
    out = f(inputs)
    if out.size != 1:
        raise ValueError("grad_check requires a scalar-valued function")
    out.backward()

    if tol is None:
        tol = 1e-6 if all(t.dtype == np.float64 for t in inputs.values()) else 1e-3

    report = GradCheckReport(passed=True, tol=tol)
    for name, t in inputs.items():
        e = _default_eps(t.dtype) if eps is None else eps
        floor = np.sqrt(e)
        analytic = np.asarray(t.grad if t.grad is not None else np.zeros_like(t.data),
                              dtype=np.float64)
        numeric = np.zeros(t.data.shape, dtype=np.float64)
        # evaluate differences with the perturbed input upcast to float64:
        # single-precision constants cancel exactly between the two sides,
        # keeping the numeric reference accurate at single precision too
        original = t.data
        t.data = original.astype(np.float64)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        try:
            with no_grad():
                for j in range(flat.size):
                    orig = flat[j]
                    flat[j] = orig + e
                    hi = float(f(inputs).data)
                    flat[j] = orig - e
                    lo = float(f(inputs).data)
                    flat[j] = orig
                    nflat[j] = (hi - lo) / (2.0 * e)
        finally:
            t.data = original
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        rel = float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
        report.max_rel_err[name] = rel
        if rel > tol:
            report.passed = False
    return report
