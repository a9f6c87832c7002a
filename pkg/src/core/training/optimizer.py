"""
Adam
First-order optimizer over named parameter tables. Moments live alongside
the parameters and are updated in place.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from src.core.errors import DimensionMismatchError


@dataclass
class AdamState:
    """
    Moment estimates and step counter.

    Attributes:
        beta1: Decay of the first moment
        beta2: Decay of the second moment
        epsilon: Denominator offset
        step: Number of updates applied so far
        m: First moment per parameter name
        v: Second moment per parameter name
    """
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    lr: float,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    Apply one bias-corrected Adam update to every parameter in place.

    Args:
        state: Optimizer state (moments created lazily)
        params: Parameter tables, updated in place
        grads: Gradients with matching names and shapes
        lr: Step size

    Returns:
        (params, state), the same objects that were passed in

    Raises:
        DimensionMismatchError: if a gradient's shape differs from its parameter
    """
    state.step += 1
    t = state.step
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise DimensionMismatchError(f"gradient of {name}", param.shape, grad.shape)
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        param -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state
