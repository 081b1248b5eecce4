"""Central finite-difference verification of analytic backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm1D, Dropout, MaxPool1D, ReLU
from .loss import softmax_cross_entropy


class GradCheckFailure(RuntimeError):
    def __init__(self, location: str, detail: str):
        super().__init__(f"{location}: {detail}")
        self.location = location


@dataclass
class GradCheckResult:
    errors: dict = field(default_factory=dict)  # tensor name -> worst relative error
    worst_location: str = ""
    checked: int = 0
    # coordinates sitting so close to a ReLU/max-pool kink that no step kept the
    # activation pattern fixed; finite differences say nothing there
    skipped_at_kink: int = 0

    @property
    def max_relative_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def iter_layers(obj):
    yield obj
    for child in obj.children():
        yield from iter_layers(child)


def _objective(out, targets):
    targets = np.asarray(targets)
    if np.issubdtype(targets.dtype, np.integer):
        return softmax_cross_entropy(out, targets)
    # regression-style objective for bare layers: 0.5 * ||out - targets||^2
    diff = out - targets
    return 0.5 * float(np.sum(diff * diff)), diff


def _where(name, flat_index, shape) -> str:
    return f"{name}{[int(j) for j in np.unravel_index(int(flat_index), shape)]}"


def relative_error(analytic, numeric):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / scale


def check_gradients(obj, x, targets, epsilon: float = 1e-5, train: bool = False,
                    max_coords: int | None = None, seed: int = 0, extrapolate: bool = True,
                    shrink_steps: int = 3) -> GradCheckResult:
    """Compare analytic parameter and input gradients with finite differences.

    ``obj`` is a layer or model exposing forward/backward/named_parameters.
    Integer ``targets`` select softmax cross-entropy over the output; float
    targets of the output's shape select a squared-error objective.
    ``max_coords`` samples that many coordinates per tensor instead of all.

    With ``extrapolate`` the numeric estimate is the Richardson combination
    (4 D(h/2) - D(h)) / 3 of two central differences, cancelling the O(h^2)
    truncation term so a larger step can be used against round-off.
    A stencil is only trusted if every ReLU mask and max-pool argmax matches
    the unperturbed pass; otherwise the step shrinks tenfold, up to
    ``shrink_steps`` times.
    """
    x = np.array(x, dtype=np.float64)
    layers = list(iter_layers(obj))
    bn_state = [(layer, {k: v.copy() for k, v in layer.buffers.items()})
                for layer in layers if isinstance(layer, BatchNorm1D)]
    dropouts = [layer for layer in layers if isinstance(layer, Dropout)]
    kinked = [layer for layer in layers if isinstance(layer, (ReLU, MaxPool1D))]
    rng = np.random.default_rng(seed)

    def evaluate():
        for layer in kinked:
            layer.pattern_log = []
        try:
            loss = _objective(obj.forward(x, train=train, record=False), targets)[0]
            pattern = [a for layer in kinked for a in layer.pattern_log]
        finally:
            for layer in kinked:
                layer.pattern_log = None
        return loss, pattern

    def same(p, q):
        return all(np.array_equal(a, b) for a, b in zip(p, q))

    result = GradCheckResult()
    try:
        if train:
            for layer in dropouts:
                layer.frozen_mask = None
            obj.forward(x, train=True, record=True)
            for layer in dropouts:
                if isinstance(layer._cache, np.ndarray):
                    layer.frozen_mask = layer._cache.copy()
        out = obj.forward(x, train=train, record=True)
        _, dout = _objective(out, targets)
        dx = obj.backward(dout)
        _, base_pattern = evaluate()

        tensors = [(name, layer.params[key], np.array(layer.grads[key]))
                   for name, layer, key in obj.named_parameters()]
        tensors.append(("input", x, np.array(dx)))
        worst_overall = -1.0
        for name, value, analytic in tensors:
            if not np.all(np.isfinite(analytic)):
                bad = int(np.flatnonzero(~np.isfinite(analytic))[0])
                raise GradCheckFailure(_where(name, bad, analytic.shape), "non-finite analytic gradient")
            n = value.size
            coords = np.arange(n)
            if max_coords is not None and n > max_coords:
                coords = np.sort(rng.choice(n, size=max_coords, replace=False))
            worst = 0.0
            for i in coords:
                orig = value.flat[i]

                def central(h):
                    value.flat[i] = orig + h
                    plus, p_plus = evaluate()
                    value.flat[i] = orig - h
                    minus, p_minus = evaluate()
                    value.flat[i] = orig
                    ok = same(p_plus, base_pattern) and same(p_minus, base_pattern)
                    return (plus - minus) / (2.0 * h), ok

                h = epsilon
                numeric = None
                for _ in range(shrink_steps + 1):
                    d_full, ok = central(h)
                    if ok and extrapolate:
                        d_half, ok = central(h / 2)
                        d_full = (4.0 * d_half - d_full) / 3.0
                    if ok:
                        numeric = d_full
                        break
                    h /= 10.0
                loc = _where(name, i, value.shape)
                if numeric is None:
                    result.skipped_at_kink += 1
                    continue
                if not np.isfinite(numeric):
                    raise GradCheckFailure(loc, "non-finite numeric gradient")
                err = float(relative_error(analytic.flat[i], numeric))
                result.checked += 1
                worst = max(worst, err)
                if err > worst_overall:
                    worst_overall = err
                    result.worst_location = loc
            result.errors[name] = worst
        return result
    finally:
        for layer in dropouts:
            layer.frozen_mask = None
        for layer, buffers in bn_state:
            layer.buffers.update(buffers)


def gradient_errors(obj, x, targets, **kwargs) -> dict[str, float]:
    """Worst relative error per parameter tensor (plus ``"input"``)."""
    return check_gradients(obj, x, targets, **kwargs).errors


def grad_check(obj, x, targets, epsilon: float = 1e-5, **kwargs) -> float:
    """Worst relative error |a - n| / max(|a|, |n|, 1e-8) over all checked coordinates."""
    return check_gradients(obj, x, targets, epsilon=epsilon, **kwargs).max_relative_error
