"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .optim import ParamSet
from .tensor import Tensor, backward, no_trace, trace


@dataclass
class ParamError:
    name: str
    shape: tuple
    max_rel_error: float
    max_abs_error: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[ParamError] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    def failures(self) -> list[ParamError]:
        return [e for e in self.entries if not e.passed]

    def table(self) -> str:
        width = max([len(e.name) for e in self.entries] + [9])
        lines = [f"{'parameter':<{width}}  {'shape':<16} {'max_rel_err':>12}  status"]
        for e in self.entries:
            status = "ok" if e.passed else "FAIL"
            lines.append(f"{e.name:<{width}}  {str(e.shape):<16} {e.max_rel_error:12.3e}  {status}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| scaled by max(|a|, |n|, 1e-8), magnitudes taken over the tensor."""
    scale = max(float(np.abs(analytic).max(initial=0.0)),
                float(np.abs(numeric).max(initial=0.0)), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def finite_diff_check(fn: Callable[[ParamSet], Tensor], params: ParamSet,
                      tolerance: float = 1e-4, step: float = 1e-5,
                      progress: Callable[[str], None] | None = None) -> GradCheckReport:
    """Compare ``backward`` against central differences for every parameter element.

    ``fn`` must be deterministic and return a scalar tensor. ``params`` is
    restored to its original values on return.
    """
    with trace():
        loss = fn(params)
    analytic = backward(loss, params)
    report = GradCheckReport(tolerance)
    for name in list(params):
        base = params[name].data.copy()
        numeric = np.zeros_like(base, dtype=np.float64)
        flat = base.reshape(-1)
        with no_trace():
            for i in range(flat.size):
                probe = flat.copy()
                probe[i] = flat[i] + step
                params[name] = Tensor(probe.reshape(base.shape))
                f_plus = fn(params).item()
                probe[i] = flat[i] - step
                params[name] = Tensor(probe.reshape(base.shape))
                f_minus = fn(params).item()
                numeric.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * step)
        params[name] = Tensor(base)
        a = analytic[name].astype(np.float64)
        err = relative_error(a, numeric)
        report.entries.append(ParamError(name, tuple(base.shape), err,
                                         float(np.abs(a - numeric).max(initial=0.0)),
                                         err < tolerance))
        if progress is not None:
            progress(f"gradcheck {name} {err:.3e}")
    return report
