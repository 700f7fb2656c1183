"""Central finite-difference gradient checker."""

from __future__ import annotations

from collections.abc import Callable, Iterable

import numpy as np

from uses_se.exceptions import ContractError, NumericError
from uses_se.numerics.tensor import Tape, Tensor


def grad_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    eps: float = 1e-5,
    coords: Iterable[int] | None = None,
    floor: float = 1e-8,
) -> float:
    """Compare the tape gradient of a scalar function against central differences.

    Args:
        fn: Function mapping a tensor shaped like ``point`` to a scalar tensor.
        point: Evaluation point; must be float64.
        eps: Finite-difference step, within [1e-6, 1e-4].
        coords: Flat coordinates to check (default: all of them).
        floor: Lower bound of the relative-error denominator.

    Returns:
        max |analytic - cd| / max(|analytic|, |cd|, floor) over the checked coordinates.
    """
    if point.dtype != np.float64:
        raise ContractError(f"grad_check needs float64 input, got {point.dtype}")
    if not 1e-6 <= eps <= 1e-4:
        raise ContractError(f"grad_check step {eps} outside [1e-6, 1e-4]")

    x = Tensor(point.data.copy(), requires_grad=True)
    with Tape() as tape:
        out = fn(x)
    tape.backward(out)
    assert x.grad is not None
    analytic = x.grad.reshape(-1)

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in coords if coords is not None else range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn(x).item()
        flat[i] = orig - eps
        f_minus = fn(x).item()
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        cd = (f_plus - f_minus) / (2.0 * eps)
        a = float(analytic[i])
        err = abs(a - cd) / max(abs(a), abs(cd), floor)
        worst = max(worst, err)
    return worst
