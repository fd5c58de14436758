from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Tensor, zero_grad


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    ``f`` is re-evaluated with each coordinate of each parameter nudged by
    ``+-h``; parameters must be float64. The per-coordinate error is
    ``|a - n| / (|a| + |n| + 1e-12)``.
    """
    params = list(params)
    for p in params:
        if p.data.dtype != np.float64:
            raise ContractError("grad_check requires float64 parameters")
    zero_grad(params)
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite at the check point")
    loss.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError("loss became non-finite during finite differences")
            numeric = (fp - fm) / (2 * h)
            a = float(aflat[i])
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    zero_grad(params)
    return worst
