"""Central-difference gradient oracle for scalar losses over a ParamStore."""
from dataclasses import dataclass, field

import numpy as np

from .tensor import get_dtype


class DeterminismError(RuntimeError):
    """The loss function returned different values at the same parameters."""


@dataclass
class GradcheckReport:
    max_rel_error: float
    worst_name: str | None
    worst_index: tuple | None
    tol: float
    per_tensor: dict = field(default_factory=dict)
    checked: int = 0

    @property
    def passed(self):
        return self.max_rel_error <= self.tol


def finite_diff_gradcheck(loss_fn, params, h=1e-5, tol=1e-4, min_coords=32, corrupt=None):
    """Compare reverse-mode gradients of ``loss_fn(params)`` with central differences.

    ``loss_fn`` returns a scalar Tensor. Tensors with more than ``min_coords``
    entries are checked on a random coordinate subset of that size drawn
    from ``params.rng_seed``. ``corrupt`` names a tensor whose analytic
    gradient gets +1 on its first checked coordinate (harness self-test).
    """
    if get_dtype() != np.float64:
        raise RuntimeError("gradcheck requires float64 precision")
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"step h={h} outside [1e-6, 1e-4]")

    f0 = float(loss_fn(params).data)
    f1 = float(loss_fn(params).data)
    if f0 != f1:
        raise DeterminismError(f"loss_fn is not deterministic: {f0!r} != {f1!r}")

    params.zero_grad()
    loss_fn(params).backward()
    analytic = {name: t.grad.copy() for name, t in params.items()}

    rng = np.random.default_rng(params.rng_seed)
    report = GradcheckReport(0.0, None, None, tol)
    for name, t in params.items():
        size = t.data.size
        if size <= min_coords:
            coords = np.arange(size)
        else:
            coords = np.sort(rng.choice(size, size=min_coords, replace=False))
        ga = analytic[name].reshape(-1)
        if corrupt == name:
            ga = ga.copy()
            ga[coords[0]] += 1.0
        flat = t.data.reshape(-1)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp = float(loss_fn(params).data)
            flat[c] = orig - h
            fm = float(loss_fn(params).data)
            flat[c] = orig
            num = (fp - fm) / (2 * h)
            err = abs(ga[c] - num) / max(1.0, abs(ga[c]), abs(num))
            if err > worst:
                worst = err
            if err > report.max_rel_error:
                report.max_rel_error = err
                report.worst_name = name
                report.worst_index = np.unravel_index(c, t.data.shape)
        report.per_tensor[name] = worst
        report.checked += len(coords)
    params.clear_grad()
    return report
