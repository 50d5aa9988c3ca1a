"""Finite-difference verification of analytic gradients.

Compares reverse-mode gradients against central differences
(f(x+eps) - f(x-eps)) / (2 eps), coordinate by coordinate. Coordinates
where the two one-sided slopes disagree badly straddle a non-smooth
point (e.g. a relu kink at exactly 0); those are excluded from the
comparison and reported, not failed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from .tensor import Tensor

# relative disagreement of one-sided slopes above which a coordinate is
# treated as straddling a kink. For a smooth loss the disagreement is
# O(eps * f''); a relu flip inside the probe interval shifts the one-sided
# slopes by the flipped unit's whole contribution and biases the central
# difference by about half that, so the threshold sits close to the
# curvature floor. A genuine vjp bug leaves the one-sided slopes in
# agreement and is never masked by this exclusion.
KINK_RATIO = 0.002


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    checked: int
    excluded: list = field(default_factory=list)  # (tensor index, flat coordinate)
    worst: tuple = ()  # (tensor index, flat coordinate, analytic, numeric)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_err <= self.tol


def _default_eps(dtype):
    # float32 evaluations carry ~1e-7 relative noise, so the step must be
    # large enough that the central difference survives the cancellation,
    # yet small enough to keep relu-flip windows rare
    if np.dtype(dtype) == np.float32:
        return 1e-3
    # cube root of machine epsilon balances truncation and roundoff
    return float(np.finfo(dtype).eps) ** (1.0 / 3.0)


def grad_check(f, xs, eps=None, tol=1e-3, max_entries=None, rng=None,
               kink_ratio=KINK_RATIO):
    """Check df/dx for every tensor in ``xs`` against central differences.

    f: callable taking no arguments and returning a scalar Tensor; it must
       close over the tensors in ``xs`` and be deterministic (eval mode).
    xs: a Tensor or sequence of Tensors with requires_grad set.
    max_entries: optional cap on coordinates checked per tensor (sampled
       reproducibly from ``rng``).
    """
    if isinstance(xs, Tensor):
        xs = [xs]
    xs = list(xs)
    rng = np.random.default_rng(0 if rng is None else rng)

    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("grad_check: forward pass produced a non-finite loss")
    for x in xs:
        x.grad = None
    loss.backward()
    analytic = []
    for i, x in enumerate(xs):
        if x.grad is None:
            analytic.append(np.zeros_like(x.data))
        else:
            if not np.isfinite(x.grad).all():
                raise NumericError(f"grad_check: non-finite analytic gradient on input {i}")
            analytic.append(x.grad.copy())

    f0 = float(loss.data)
    report = GradCheckReport(max_rel_err=0.0, tol=tol, checked=0)
    for i, x in enumerate(xs):
        flat = x.data.reshape(-1)
        n = flat.size
        h = eps if eps is not None else _default_eps(x.data.dtype)
        if max_entries is not None and n > max_entries:
            coords = np.sort(rng.choice(n, size=max_entries, replace=False))
        else:
            coords = np.arange(n)
        for c in coords:
            orig = flat[c]
            hc = h * max(1.0, abs(float(orig)))  # relative step for large coords
            flat[c] = orig + hc
            fp = float(f().data)
            flat[c] = orig - hc
            fm = float(f().data)
            flat[c] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(
                    f"grad_check: non-finite perturbed loss at input {i}, coordinate {c}")
            fwd = (fp - f0) / hc
            bwd = (f0 - fm) / hc
            scale = max(1.0, abs(fwd), abs(bwd))
            if abs(fwd - bwd) > kink_ratio * scale:
                report.excluded.append((i, int(c)))
                continue
            numeric = (fp - fm) / (2.0 * hc)
            a = float(analytic[i].reshape(-1)[c])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            report.checked += 1
            if rel > report.max_rel_err:
                report.max_rel_err = rel
                report.worst = (i, int(c), a, numeric)
    return report
