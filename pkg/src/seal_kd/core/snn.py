"""Leaky integrate-and-fire dynamics and the time-unrolled spiking classifier.

Each hidden layer is an affine map followed by a LIF layer. The readout is a
plain affine map applied to the last hidden spike vector at every timestep, so
the network emits real-valued logits ``z_t`` for t = 1..T.

Checkpoint format (JSON, shared with the training commands)::

    {
      "format": "seal-kd/spiking-net",
      "version": 1,
      "timesteps": T,
      "classes": C,
      "lif": {"leak_alpha": 0.5, "v_threshold": 1.0, "surrogate_width": 1.0},
      "layers": [
        {"kind": "spiking", "shape": [in, out], "weight": [...], "bias": [...]},
        ...
        {"kind": "readout", "shape": [in, C], "weight": [...], "bias": [...]}
      ]
    }

``weight`` is the (in, out) matrix in row-major order.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.io_utils import read_json, write_json
from .autodiff import (
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    as_tensor,
    getitem,
    reshape,
    spike,
    stack,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "seal-kd/spiking-net"
CHECKPOINT_VERSION = 1
ENCODINGS = ("constant-current", "rate-poisson")


class CheckpointError(ValueError):
    """A checkpoint file is malformed or does not fit the expected network."""


@dataclass(frozen=True)
class LIFParams:
    """Leak factor, firing threshold and surrogate window width."""
    leak_alpha: float = 0.5
    v_threshold: float = 1.0
    surrogate_width: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.leak_alpha < 1.0:
            raise ValueError(f"leak_alpha must lie in (0, 1), got {self.leak_alpha}")
        if self.v_threshold <= 0:
            raise ValueError(f"v_threshold must be positive, got {self.v_threshold}")
        if self.surrogate_width <= 0:
            raise ValueError(f"surrogate_width must be positive, got {self.surrogate_width}")


@dataclass(frozen=True)
class LIFState:
    """Membrane potentials of one LIF layer."""
    membrane: Tensor

    @classmethod
    def zeros(cls, shape: Tuple[int, ...]) -> "LIFState":
        return cls(Tensor(np.zeros(shape)))


def surrogate_spike(v_minus_threshold, width: float = 1.0) -> Tensor:
    """Exact Heaviside forward; (1/width)·1{|x| < width/2} backward."""
    return spike(v_minus_threshold, width)


def lif_step(state: LIFState, input_current, params: LIFParams) -> Tuple[Tensor, LIFState]:
    """Integrate, fire on the integrated potential, soft reset.

    v = α·u + I;  s = 1 iff v ≥ V_th;  u' = v − V_th·s
    """
    current = as_tensor(input_current)
    if current.shape != state.membrane.shape:
        raise ShapeError(f"lif_step: input current shape {current.shape} "
                         f"does not match membrane shape {state.membrane.shape}")
    if not np.all(np.isfinite(current.data)):
        raise NonFiniteError("lif_step: input current contains non-finite values")

    potential = state.membrane * params.leak_alpha + current
    spikes = surrogate_spike(potential - params.v_threshold, params.surrogate_width)
    membrane = potential - spikes * params.v_threshold
    return spikes, LIFState(membrane)


@dataclass
class DenseLayer:
    """Affine map ``x @ weight + bias`` with weight of shape (in, out)."""
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(f"dense layer: weight {self.weight.shape} and bias {self.bias.shape} do not fit")

    @property
    def in_features(self) -> int:
        return int(self.weight.shape[0])

    @property
    def out_features(self) -> int:
        return int(self.weight.shape[1])

    @classmethod
    def initialize(cls, fan_in: int, fan_out: int, rng: np.random.Generator, gain: float = 1.0) -> "DenseLayer":
        """Uniform in ±gain/sqrt(fan_in)."""
        bound = gain / math.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        bias = rng.uniform(-bound, bound, size=fan_out)
        return cls(weight, bias)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weight.copy(), self.bias.copy())

    def to_dict(self, kind: str) -> dict:
        return {
            "kind": kind,
            "shape": [self.in_features, self.out_features],
            "weight": self.weight.reshape(-1).tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseLayer":
        try:
            rows, cols = (int(v) for v in data["shape"])
            weight = np.array(data["weight"], dtype=np.float64)
            bias = np.array(data["bias"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"Malformed layer record: {e}") from e
        if weight.size != rows * cols or bias.size != cols:
            raise CheckpointError(f"Layer values do not match declared shape [{rows}, {cols}]")
        return cls(weight.reshape(rows, cols), bias)


@dataclass(frozen=True)
class NetSpec:
    """Architecture of a student network."""
    hidden: Tuple[int, ...] = (32,)
    timesteps: int = 4
    lif: LIFParams = field(default_factory=LIFParams)
    encoding: str = "constant-current"
    init_gain: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be positive and non-empty, got {self.hidden}")
        if self.timesteps < 1:
            raise ValueError(f"timesteps must be at least 1, got {self.timesteps}")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}, got '{self.encoding}'")
        if self.init_gain <= 0:
            raise ValueError(f"init_gain must be positive, got {self.init_gain}")


@dataclass
class SpikingNet:
    """Feedforward spiking classifier unrolled over ``timesteps``."""
    layers: List[DenseLayer]
    timesteps: int
    lif: LIFParams = field(default_factory=LIFParams)

    def __post_init__(self):
        if len(self.layers) < 2:
            raise ValueError("A spiking net needs at least one spiking layer and a readout layer")
        if self.timesteps < 1:
            raise ValueError(f"timesteps must be at least 1, got {self.timesteps}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_features != nxt.in_features:
                raise ShapeError(f"Layer shapes do not chain: {prev.weight.shape} -> {nxt.weight.shape}")
        if self.classes < 2:
            raise ValueError(f"A classifier needs at least 2 classes, got {self.classes}")

    @classmethod
    def initialize(cls, input_dim: int, classes: int, spec: NetSpec, rng: np.random.Generator) -> "SpikingNet":
        widths = [input_dim, *spec.hidden, classes]
        layers = [DenseLayer.initialize(fan_in, fan_out, rng, spec.init_gain)
                  for fan_in, fan_out in zip(widths, widths[1:])]
        return cls(layers, spec.timesteps, spec.lif)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_features

    @property
    def classes(self) -> int:
        return self.layers[-1].out_features

    @property
    def hidden_widths(self) -> Tuple[int, ...]:
        return tuple(layer.out_features for layer in self.layers[:-1])

    def parameters(self) -> List[np.ndarray]:
        """Mutable parameter arrays in (weight, bias) order per layer."""
        params = []
        for layer in self.layers:
            params.extend([layer.weight, layer.bias])
        return params

    def watch(self, tape: Tape) -> List[Tuple[Tensor, Tensor]]:
        return [(tape.watch(layer.weight), tape.watch(layer.bias)) for layer in self.layers]

    def constants(self) -> List[Tuple[Tensor, Tensor]]:
        return [(Tensor(layer.weight), Tensor(layer.bias)) for layer in self.layers]

    def copy(self) -> "SpikingNet":
        return SpikingNet([layer.copy() for layer in self.layers], self.timesteps, self.lif)

    def to_dict(self) -> dict:
        kinds = ["spiking"] * (len(self.layers) - 1) + ["readout"]
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "timesteps": self.timesteps,
            "classes": self.classes,
            "lif": {
                "leak_alpha": self.lif.leak_alpha,
                "v_threshold": self.lif.v_threshold,
                "surrogate_width": self.lif.surrogate_width,
            },
            "layers": [layer.to_dict(kind) for layer, kind in zip(self.layers, kinds)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpikingNet":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"Not a spiking-net checkpoint (format={data.get('format')!r})")
        if data.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"Unsupported checkpoint version {data.get('version')!r}")
        records = data.get("layers") or []
        kinds = [record.get("kind") for record in records]
        if len(records) < 2 or kinds[-1] != "readout" or any(k != "spiking" for k in kinds[:-1]):
            raise CheckpointError(f"Unexpected layer kinds {kinds}")
        try:
            lif = LIFParams(**data["lif"])
            net = cls([DenseLayer.from_dict(r) for r in records], int(data["timesteps"]), lif)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, CheckpointError):
                raise
            raise CheckpointError(f"Invalid checkpoint: {e}") from e
        if net.classes != data.get("classes"):
            raise CheckpointError(f"Checkpoint declares {data.get('classes')} classes "
                                  f"but its readout has {net.classes}")
        return net


def save_checkpoint(net: SpikingNet, path: Union[str, Path]) -> None:
    write_json(path, net.to_dict())
    logger.debug(f"Spiking net checkpoint written to {path}")


def load_checkpoint(path: Union[str, Path]) -> SpikingNet:
    if not Path(path).exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    return SpikingNet.from_dict(read_json(path))


@dataclass(frozen=True)
class TemporalLogits:
    """Per-timestep student logits of shape (batch, T, C).

    ``hidden_spikes`` is filled when the forward pass was asked to record
    spikes: one (batch, T, N) array per spiking layer.
    """
    values: Tensor
    hidden_spikes: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError(f"TemporalLogits must have shape (batch, T, C), got {self.values.shape}")

    @classmethod
    def from_array(cls, values) -> "TemporalLogits":
        tensor = as_tensor(values)
        if tensor.ndim == 2:
            tensor = reshape(tensor, (1,) + tensor.shape)
        return cls(tensor)

    @property
    def batch(self) -> int:
        return self.values.shape[0]

    @property
    def timesteps(self) -> int:
        return self.values.shape[1]

    @property
    def classes(self) -> int:
        return self.values.shape[2]

    def numpy(self) -> np.ndarray:
        return self.values.numpy()

    def predictions(self) -> np.ndarray:
        """Argmax class per (sample, timestep)."""
        return np.argmax(self.values.data, axis=-1)


def forward_temporal(net: SpikingNet, encoded_input, *,
                     params: Optional[Sequence[Tuple[Tensor, Tensor]]] = None,
                     record_spikes: bool = False) -> TemporalLogits:
    """Run the network over T steps; membranes start at zero.

    ``encoded_input`` has shape (batch, T, D) or (T, D). ``params`` defaults to
    untracked copies of the current weights; pass ``net.watch(tape)`` to record.
    """
    x = as_tensor(encoded_input)
    if x.ndim == 2:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 3:
        raise ShapeError(f"encoded input must have shape (batch, T, D), got {x.shape}")
    batch, timesteps, dim = x.shape
    if timesteps < 1:
        raise ValueError(f"forward_temporal needs T >= 1, got {timesteps}")
    if timesteps != net.timesteps:
        raise ValueError(f"encoded input has T={timesteps} but the network is unrolled over {net.timesteps}")
    if dim != net.input_dim:
        raise ShapeError(f"encoded input has {dim} features, network expects {net.input_dim}")

    params = list(params) if params is not None else net.constants()
    hidden = params[:-1]
    readout_weight, readout_bias = params[-1]
    states = [LIFState.zeros((batch, layer.out_features)) for layer in net.layers[:-1]]
    recorded: List[List[np.ndarray]] = [[] for _ in hidden]

    outputs = []
    for t in range(timesteps):
        h = getitem(x, (slice(None), t))
        for i, (weight, bias) in enumerate(hidden):
            spikes, states[i] = lif_step(states[i], h @ weight + bias, net.lif)
            if record_spikes:
                recorded[i].append(np.array(spikes.data))
            h = spikes
        outputs.append(h @ readout_weight + readout_bias)

    spikes_out = None
    if record_spikes:
        spikes_out = tuple(np.stack(layer, axis=1) for layer in recorded)
    return TemporalLogits(stack(outputs, axis=1), hidden_spikes=spikes_out)


def aggregate_logits(logits: Union[TemporalLogits, Tensor]) -> Tensor:
    """Mean over the time axis: (batch, C)."""
    values = logits.values if isinstance(logits, TemporalLogits) else TemporalLogits.from_array(logits).values
    return values.mean(axis=1)


def encode_input(sample, mode: str, timesteps: int,
                 seed: Union[int, np.random.Generator] = 0) -> np.ndarray:
    """Repeat or rate-code ``sample`` (shape (D,) or (batch, D)) over T steps.

    Returns shape (T, D) or (batch, T, D).
    """
    values = np.asarray(sample, dtype=np.float64)
    if timesteps < 1:
        raise ValueError(f"timesteps must be at least 1, got {timesteps}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("encode_input: sample contains non-finite values")
    repeated = np.repeat(np.expand_dims(values, -2), timesteps, axis=-2)
    if mode == "constant-current":
        return repeated
    if mode == "rate-poisson":
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("rate-poisson encoding needs sample values in [0, 1]")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return (rng.random(repeated.shape) < repeated).astype(np.float64)
    raise ValueError(f"Unknown encoding '{mode}'. Choose from {ENCODINGS}")
