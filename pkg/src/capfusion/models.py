"""MC-CNN and DeepConvLSTM under early, late and IMU-only fusion."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import LSTM, BatchNorm1D, Conv1D, Dense, Dropout, Flatten, LastStep, MaxPool1D, ReLU, Sequential, ShapeError
from .nn.layers import DTYPE, Transpose
from .nn.serialize import read_cfh1, write_cfh1

ARCHITECTURES = ("MCCNN", "DeepConvLSTM")
FUSIONS = ("EarlyData", "LateFeature", "ImuOnly")
IMU, BCS = "IMU", "BCS"


class ModelSpecError(ValueError):
    pass


def modality_of(channel: str) -> str:
    """Capacitance channels are named ``cap*``/``bcs*`` (after any ``device.`` prefix)."""
    base = channel.rsplit(".", 1)[-1].lower()
    return BCS if base.startswith(("cap", "bcs")) else IMU


def tag_layout(channels) -> list[tuple[str, str]]:
    return [(name, modality_of(name)) for name in channels]


@dataclass
class ModelSpec:
    architecture: str
    fusion: str
    num_labels: int
    input_layout: list  # [(channel name, "IMU" | "BCS"), ...]
    window_len: int = 25
    filters: list | None = None  # per conv layer; None -> 64s
    bcs_filters: int = 16
    kernel_length: int = 5
    lstm_hidden: int = 128
    dense_hidden: int = 128
    dropout: float = 0.5
    pool_after: list | None = None  # per conv layer; None -> greedy schedule
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        self.input_layout = [tuple(entry) for entry in self.input_layout]
        if self.filters is None:
            self.filters = [64, 64, 64] if self.architecture == "MCCNN" else [64, 64]
        self.filters = list(self.filters)

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise ModelSpecError(f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}")
        if self.fusion not in FUSIONS:
            raise ModelSpecError(f"unknown fusion {self.fusion!r}; expected one of {FUSIONS}")
        if self.num_labels < 2:
            raise ModelSpecError(f"need at least 2 labels, got {self.num_labels}")
        tags = [tag for _, tag in self.input_layout]
        if any(tag not in (IMU, BCS) for tag in tags):
            raise ModelSpecError(f"modality tags must be IMU or BCS, got {sorted(set(tags))}")
        n_imu, n_bcs = tags.count(IMU), tags.count(BCS)
        if self.fusion in ("LateFeature", "ImuOnly") and n_imu == 0:
            raise ModelSpecError(f"{self.fusion} fusion needs at least one IMU channel")
        if self.fusion == "LateFeature" and n_bcs == 0:
            raise ModelSpecError("LateFeature fusion needs at least one BCS (capacitance) channel; "
                                 f"layout has {n_imu} IMU and 0 BCS channels")
        if not self.input_layout:
            raise ModelSpecError("input layout is empty")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelSpecError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.pool_after is not None and len(self.pool_after) != len(self.filters):
            raise ModelSpecError("pool_after needs one flag per conv layer")

    def channels(self, modality: str | None = None) -> np.ndarray:
        return np.array([i for i, (_, tag) in enumerate(self.input_layout)
                         if modality is None or tag == modality], dtype=np.int64)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_layout"] = [list(entry) for entry in self.input_layout]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def conv_schedule(window_len: int, n_convs: int, kernel_length: int, pool_after=None):
    """Pooling flags and the length trace through a stack of valid convs.

    Without explicit flags, each conv is followed by a 2-pool whenever the
    pooled length still leaves room for the remaining convs.
    """
    k = kernel_length
    trace = [window_len]
    flags = []
    length = window_len
    for i in range(n_convs):
        if length < k:
            raise ModelSpecError(f"window too short for conv/pool schedule: lengths {trace}, "
                                 f"conv {i + 1} needs >= {k}")
        length = length - k + 1
        trace.append(length)
        remaining = n_convs - 1 - i
        if pool_after is None:
            pool = length // 2 >= remaining * (k - 1) + 1
        else:
            pool = bool(pool_after[i])
        if pool:
            if length < 2:
                raise ModelSpecError(f"window too short for conv/pool schedule: lengths {trace}, "
                                     f"pool after conv {i + 1} needs >= 2")
            length //= 2
            trace.append(length)
        flags.append(pool)
    return flags, trace


@dataclass
class Branch:
    name: str
    channels: np.ndarray
    extractor: Sequential
    width: int  # features per time step (DeepConvLSTM) or flattened size (MC-CNN)
    length: int


@dataclass
class FusionModel:
    spec: ModelSpec
    branches: list
    head: Sequential
    trace: list = field(default_factory=list)

    def children(self):
        return [b.extractor for b in self.branches] + [self.head]

    def named_parameters(self, prefix: str = ""):
        for branch in self.branches:
            yield from branch.extractor.named_parameters(f"{prefix}{branch.name}.")
        yield from self.head.named_parameters(f"{prefix}head.")

    def named_buffers(self):
        for branch in self.branches:
            for layer in branch.extractor.layers:
                for key, value in layer.buffers.items():
                    yield f"{branch.name}.{layer.name}.{key}", layer, key
        for layer in self.head.layers:
            for key, value in layer.buffers.items():
                yield f"head.{layer.name}.{key}", layer, key

    def parameters(self) -> dict[str, np.ndarray]:
        return {name: layer.params[key] for name, layer, key in self.named_parameters()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {name: layer.grads[key] for name, layer, key in self.named_parameters()}

    def zero_grad(self):
        for child in self.children():
            child.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copies of every trainable tensor and buffer, keyed by qualified name."""
        state = {name: layer.params[key].copy() for name, layer, key in self.named_parameters()}
        state.update({name: layer.buffers[key].copy() for name, layer, key in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict):
        for name, layer, key in self.named_parameters():
            # in place, so optimizer references stay valid
            layer.params[key][...] = state[name]
        for name, layer, key in self.named_buffers():
            layer.buffers[key] = np.array(state[name], dtype=DTYPE)

    def _check_batch(self, batch):
        spec = self.spec
        C = len(spec.input_layout)
        if batch.ndim != 3 or batch.shape[1] != spec.window_len or batch.shape[2] != C:
            raise ShapeError(f"expected batch [B, {spec.window_len}, {C}], got {list(batch.shape)}")

    def branch_features(self, batch, branch: Branch, train=False, record=None):
        x = np.asarray(batch, dtype=DTYPE)
        self._check_batch(x)
        sub = np.ascontiguousarray(x[:, :, branch.channels].transpose(0, 2, 1))
        return branch.extractor.forward(sub, train=train, record=record)

    def forward(self, batch, train: bool = False, record: bool | None = None) -> np.ndarray:
        """[B, W, C] windows -> [B, K] logits."""
        feats = [self.branch_features(batch, b, train=train, record=record) for b in self.branches]
        axis = 1 if self.spec.architecture == "MCCNN" else 2
        joined = feats[0] if len(feats) == 1 else np.concatenate(feats, axis=axis)
        return self.head.forward(joined, train=train, record=record)

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the [B, W, C] input; discarded channels get zeros."""
        d = self.head.backward(dlogits)
        axis = 1 if self.spec.architecture == "MCCNN" else 2
        B, W, C = d.shape[0], self.spec.window_len, len(self.spec.input_layout)
        dx = np.zeros((B, C, W), dtype=DTYPE)
        start = 0
        for branch in self.branches:
            part = d[:, start:start + branch.width] if axis == 1 else d[:, :, start:start + branch.width]
            start += branch.width
            dx[:, branch.channels, :] += branch.extractor.backward(part)
        return dx.transpose(0, 2, 1)

    def predict_logits(self, windows, batch_size: int = 512) -> np.ndarray:
        out = [self.forward(windows[i:i + batch_size], train=False, record=False)
               for i in range(0, len(windows), batch_size)]
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.spec.num_labels))

    def predict(self, windows, batch_size: int = 512) -> np.ndarray:
        return self.predict_logits(windows, batch_size).argmax(axis=1)

    def manifest(self) -> dict:
        layers = []
        for branch in self.branches:
            layers += [{"name": f"{branch.name}.{l.name}", "kind": l.kind, "hyper": l.hyper()}
                       for l in branch.extractor.layers]
        layers += [{"name": f"head.{l.name}", "kind": l.kind, "hyper": l.hyper()} for l in self.head.layers]
        tensors = [{"name": n, "shape": list(l.params[k].shape), "trainable": True}
                   for n, l, k in self.named_parameters()]
        tensors += [{"name": n, "shape": list(l.buffers[k].shape), "trainable": False}
                    for n, l, k in self.named_buffers()]
        return {"format": "capfusion-model", "spec": self.spec.to_dict(), "layers": layers, "tensors": tensors}


def _extractor(in_channels, filters, spec, pools, rng, child_seeds):
    layers = []
    c = in_channels
    for i, (f, pool) in enumerate(zip(filters, pools), start=1):
        layers += [Conv1D(c, f, spec.kernel_length, rng=rng, name=f"conv{i}"),
                   BatchNorm1D(f, eps=spec.bn_eps, momentum=spec.bn_momentum, name=f"bn{i}"),
                   ReLU(name=f"relu{i}")]
        if pool:
            layers.append(MaxPool1D(2, name=f"pool{i}"))
        layers.append(Dropout(spec.dropout, rng=np.random.default_rng(child_seeds.pop(0)), name=f"drop{i}"))
        c = f
    return layers


def build_model(spec: ModelSpec, seed: int = 0) -> FusionModel:
    spec.validate()
    pools, trace = conv_schedule(spec.window_len, len(spec.filters), spec.kernel_length, spec.pool_after)
    out_len = trace[-1]
    rng = np.random.default_rng(seed)
    child_seeds = [int(s) for s in rng.integers(0, 2**63 - 1, size=4 * len(spec.filters))]

    if spec.fusion == "EarlyData":
        groups = [("main", spec.channels(), spec.filters)]
    elif spec.fusion == "ImuOnly":
        groups = [("imu", spec.channels(IMU), spec.filters)]
    else:
        groups = [("imu", spec.channels(IMU), spec.filters),
                  ("bcs", spec.channels(BCS), [spec.bcs_filters] * len(spec.filters))]

    branches = []
    for name, idx, filters in groups:
        layers = _extractor(len(idx), filters, spec, pools, rng, child_seeds)
        if spec.architecture == "MCCNN":
            layers.append(Flatten(name="flatten"))
            width = filters[-1] * out_len
        else:
            layers.append(Transpose(name="to_sequence"))
            width = filters[-1]
        branches.append(Branch(name, idx, Sequential(layers, name=name), width, out_len))

    in_width = sum(b.width for b in branches)
    if spec.architecture == "MCCNN":
        head = Sequential([Dense(in_width, spec.dense_hidden, rng=rng, name="fc1"),
                           ReLU(name="relu"),
                           Dense(spec.dense_hidden, spec.num_labels, rng=rng, name="fc2")], name="head")
    else:
        head = Sequential([LSTM(in_width, spec.lstm_hidden, rng=rng, name="lstm"),
                           LastStep(name="last"),
                           Dense(spec.lstm_hidden, spec.num_labels, rng=rng, name="fc")], name="head")
    return FusionModel(spec, branches, head, trace)


def count_parameters(model) -> int:
    return int(sum(layer.params[key].size for _, layer, key in model.named_parameters()))


def save_model(model: FusionModel, path) -> None:
    manifest = model.manifest()
    state = model.state_dict()
    write_cfh1(path, manifest, [state[t["name"]] for t in manifest["tensors"]])


def load_model(path) -> FusionModel:
    manifest, tensors = read_cfh1(path)
    model = build_model(ModelSpec.from_dict(manifest["spec"]))
    model.load_state_dict({t["name"]: arr for t, arr in zip(manifest["tensors"], tensors)})
    return model
