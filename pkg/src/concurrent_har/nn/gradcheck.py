"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckResult:
    name: str
    checked: int = 0
    max_rel_error: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


def relative_error(analytic, numeric, floor=1e-7):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(loss_fn, params, n_samples=None, eps=1e-5, rtol=1e-4, rng=None,
                    name="gradcheck"):
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    ``params`` maps names to leaf tensors that ``loss_fn`` reads.  With
    ``n_samples`` set, that many random entries per tensor are perturbed;
    otherwise every entry is.
    """
    rng = np.random.default_rng(rng)
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for k, p in params.items()}

    res = GradCheckResult(name)
    for key, p in params.items():
        flat = p.data.reshape(-1)
        if n_samples is None or n_samples >= flat.size:
            picks = np.arange(flat.size)
        else:
            picks = rng.choice(flat.size, size=n_samples, replace=False)
        a_flat = analytic[key].reshape(-1)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + eps
            up = float(loss_fn().data)
            flat[idx] = orig - eps
            down = float(loss_fn().data)
            flat[idx] = orig
            numeric = (up - down) / (2 * eps)
            err = relative_error(float(a_flat[idx]), numeric)
            res.checked += 1
            res.max_rel_error = max(res.max_rel_error, err)
            if err > rtol:
                res.failures.append((key, int(idx), float(a_flat[idx]), numeric, err))
    for p in params.values():
        p.grad = None
    return res
