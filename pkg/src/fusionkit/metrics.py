"""TOSPA: an OSPA-family distance that also charges labelling errors.

With m = |X| <= n = |Y| (sides swapped internally) and the optimal
state-to-state assignment pi*,

    D = [ (1/n) ( sum_i d_c(x_i, y_pi(i))^p
                 + alpha^p * #(identity mismatches among matched pairs)
                 + c^p * (n - m) ) ]^(1/p)

where d_c is the p-norm distance cut off at c.  pi* minimizes only the
state term; distances are evaluated on planar positions (elements 0 and 2
of 4-D states).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import hungarian
from .errors import ValidationError
from .rfs import LabeledTrackSet

__all__ = ["TospaParams", "tospa"]


@dataclass(frozen=True)
class TospaParams:
    """Order p >= 1, cutoff c > 0 (meters), label penalty alpha in [0, c]."""

    p: float = 1.0
    c: float = 100.0
    alpha: float = 100.0

    def __post_init__(self):
        if self.p < 1:
            raise ValidationError(f"order must be >= 1, got {self.p}")
        if self.c <= 0:
            raise ValidationError(f"cutoff must be positive, got {self.c}")
        if not 0.0 <= self.alpha <= self.c:
            raise ValidationError(f"alpha must lie in [0, c], got {self.alpha}")


def _position(state: np.ndarray) -> np.ndarray:
    if state.shape[0] == 2:
        return state
    if state.shape[0] == 4:
        return state[[0, 2]]
    raise ValidationError(f"expected 2-D or 4-D state, got length {state.shape[0]}")


def tospa(X: LabeledTrackSet, Y: LabeledTrackSet, params: TospaParams = TospaParams()) -> float:
    """TOSPA distance between two labeled track sets (0 when both are empty)."""
    if len(X) > len(Y):
        X, Y = Y, X
    m, n = len(X), len(Y)
    if n == 0:
        return 0.0
    if m == 0:
        return float(params.c)
    px = np.array([_position(s) for s in X.states])
    py = np.array([_position(s) for s in Y.states])
    diff = np.abs(px[:, None, :] - py[None, :, :])
    dist = (diff**params.p).sum(axis=2) ** (1.0 / params.p)
    cut = np.minimum(dist, params.c) ** params.p
    assign = hungarian(cut)
    state_term = float(sum(cut[i, j] for i, j in assign.pairs))
    ids_x, ids_y = X.identities, Y.identities
    mismatches = sum(1 for i, j in assign.pairs if ids_x[i] != ids_y[j])
    total = state_term + params.alpha**params.p * mismatches + params.c**params.p * (n - m)
    return float((total / n) ** (1.0 / params.p))
