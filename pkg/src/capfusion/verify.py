"""Finite-difference verification suite over every layer kind and both architectures."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .models import FUSIONS, ModelSpec, build_model
from .nn import LSTM, BatchNorm1D, Conv1D, Dense, Flatten, MaxPool1D, ReLU, Sequential, check_gradients

TOLERANCE = 1e-5

# small layout: two devices, three IMU axes and one capacitance channel each
LAYOUT = [(f"{d}.{c}", "BCS" if c == "cap" else "IMU") for d in ("left", "right")
          for c in ("acc_x", "acc_y", "acc_z", "cap")]


@dataclass
class SuiteResult:
    worst: dict = field(default_factory=dict)  # component -> worst relative error over seeds
    where: dict = field(default_factory=dict)  # component -> location of that error
    skipped_at_kink: int = 0
    seconds: float = 0.0

    @property
    def max_error(self) -> float:
        return max(self.worst.values(), default=0.0)

    def passed(self, tol: float = TOLERANCE) -> bool:
        return self.max_error < tol


def _layer_cases(seed: int):
    rng = np.random.default_rng(seed)
    init = np.random.default_rng(seed + 1)
    yield "Conv1D", Conv1D(3, 4, 3, rng=init), rng.normal(size=(2, 3, 9)), rng.normal(size=(2, 4, 7)), False
    # train mode on a fixed batch: gradients flow through the batch statistics
    bn = BatchNorm1D(3)
    bn.params["gamma"][...] = rng.uniform(0.5, 1.5, 3)
    bn.params["beta"][...] = rng.normal(size=3)
    yield "BatchNorm1D", bn, rng.normal(size=(4, 3, 6)), rng.normal(size=(4, 3, 6)), True
    # distinct values keep max-pool away from ties
    x = rng.permutation(60).reshape(2, 3, 10) / 7.0 + rng.normal(scale=1e-3, size=(2, 3, 10))
    yield "MaxPool1D", MaxPool1D(2), x, rng.normal(size=(2, 3, 5)), False
    yield "Dense", Dense(6, 4, rng=init), rng.normal(size=(3, 6)), rng.normal(size=(3, 4)), False
    yield "LSTM", LSTM(3, 5, rng=init), rng.normal(size=(2, 6, 3)), rng.normal(size=(2, 6, 5)), False
    stack = Sequential([Conv1D(2, 3, 3, rng=init, name="conv"), ReLU(name="relu"), MaxPool1D(2, name="pool"),
                        Flatten(name="flat"), Dense(12, 3, rng=init, name="fc")])
    yield "Conv1D+MaxPool+Dense", stack, rng.normal(size=(3, 2, 10)), rng.integers(0, 3, size=3), False


def _model_cases(seed: int):
    rng = np.random.default_rng(seed)
    for arch in ("MCCNN", "DeepConvLSTM"):
        for fusion in FUSIONS:
            filters = [4, 4, 4] if arch == "MCCNN" else [4, 4]
            spec = ModelSpec(arch, fusion, 3, LAYOUT, window_len=16, filters=filters, bcs_filters=3,
                             kernel_length=3, lstm_hidden=5, dense_hidden=6)
            model = build_model(spec, seed=seed)
            x = rng.normal(size=(4, 16, len(LAYOUT)))
            # populate running statistics, then check the eval-mode function
            for _ in range(3):
                model.forward(rng.normal(size=x.shape), train=True)
            # zero biases put dense pre-activations exactly on the ReLU kink; move off it
            for _, layer, key in model.named_parameters():
                layer.params[key] += rng.normal(scale=0.1, size=layer.params[key].shape)
            yield f"{arch}/{fusion}", model, x, rng.integers(0, 3, size=4), False


def run_suite(seeds: int = 20, include_models: bool = True, epsilon: float = 1e-3,
              max_coords: int = 8) -> SuiteResult:
    out = SuiteResult()
    t0 = time.perf_counter()
    for seed in range(seeds):
        cases = list(_layer_cases(seed))
        if include_models:
            cases += list(_model_cases(seed))
        for name, obj, x, targets, train in cases:
            res = check_gradients(obj, x, targets, epsilon=epsilon, train=train, max_coords=max_coords, seed=seed)
            out.skipped_at_kink += res.skipped_at_kink
            if res.max_relative_error >= out.worst.get(name, -1.0):
                out.worst[name] = res.max_relative_error
                out.where[name] = f"seed {seed}: {res.worst_location}"
    out.seconds = time.perf_counter() - t0
    return out


def format_suite(result: SuiteResult, tol: float = TOLERANCE) -> str:
    width = max(len(k) for k in result.worst)
    lines = [f"{name.ljust(width)}  {err:.3e}  {'ok' if err < tol else 'FAIL'}  ({result.where[name]})"
             for name, err in result.worst.items()]
    lines.append(f"worst {result.max_error:.3e} (tolerance {tol:g}), {result.skipped_at_kink} coordinates "
                 f"skipped at kinks, {result.seconds:.1f} s")
    return "\n".join(lines)
