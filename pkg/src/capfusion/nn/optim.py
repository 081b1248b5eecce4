from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Moment buffers are created lazily as zeros the first time a key is seen.
    """
    if params.keys() != grads.keys():
        raise ValueError(f"parameter/gradient keys differ: {sorted(set(params) ^ set(grads))}")
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {key!r} has shape {g.shape}, parameter has {p.shape}")
        m = state.first_moment.get(key)
        if m is not None and m.shape != p.shape:
            raise ValueError(f"Adam moment for {key!r} has shape {m.shape}, parameter has {p.shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    for key, p in params.items():
        g = grads[key]
        m = state.first_moment.setdefault(key, np.zeros_like(p))
        v = state.second_moment.setdefault(key, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
    return params
