"""Synaptic-operation energy accounting.

A spike from neuron i of layer l activates its f_i^l outgoing synapses, one
accumulate (AC) each. Layers fed by real-valued input cost one multiply-
accumulate (MAC) per connection. Energy is ``e_ac·ACs + e_mac·MACs`` in pJ.

Report schema (``energy_report``)::

    {"reduction": "per-sample-mean", "samples": N, "timesteps": T,
     "acs": float, "macs": float, "sop_pj": float, "fire_rate": float,
     "e_ac": 0.9, "e_mac": 4.6,
     "per_layer": [{"layer": l, "kind": "mac"|"ac", "neurons": n, "fan_out": f,
                    "spikes": float|null, "ops": float, "fire_rate": float|null}],
     "ann_reference": {"macs": int, "sop_pj": float}}     # when a teacher is given
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .snn import SpikingNet, forward_temporal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyModel:
    """Energy per operation in picojoules."""
    e_ac: float = 0.9
    e_mac: float = 4.6

    def __post_init__(self):
        if self.e_ac <= 0 or self.e_mac <= 0:
            raise ValueError(f"energy per operation must be positive, got e_ac={self.e_ac}, e_mac={self.e_mac}")


@dataclass(frozen=True)
class SynapseTopology:
    """Per-neuron fan-outs of each layer."""
    fan_outs: Tuple[np.ndarray, ...]

    def __post_init__(self):
        checked = []
        for fan in self.fan_outs:
            fan = np.asarray(fan)
            if fan.ndim != 1 or not np.issubdtype(fan.dtype, np.integer) or (fan.size and fan.min() < 0):
                raise ValueError("fan-outs must be 1-D arrays of non-negative integers")
            checked.append(fan.astype(np.int64))
        object.__setattr__(self, "fan_outs", tuple(checked))

    @classmethod
    def dense(cls, widths: Sequence[int]) -> "SynapseTopology":
        """Fully connected chain: every neuron of width n feeding width m has fan-out m."""
        return cls(tuple(np.full(n, m, dtype=np.int64) for n, m in zip(widths, widths[1:])))

    @property
    def neuron_counts(self) -> Tuple[int, ...]:
        return tuple(int(fan.size) for fan in self.fan_outs)


@dataclass(frozen=True)
class SpikeTrace:
    """Binary spikes per layer, each of shape (T, N) or (batch, T, N), with fan-outs."""
    spikes: Tuple[np.ndarray, ...]
    topology: SynapseTopology

    def __post_init__(self):
        if len(self.spikes) != len(self.topology.fan_outs):
            raise ValueError(f"{len(self.spikes)} spike layers but {len(self.topology.fan_outs)} fan-out layers")
        for layer, (spikes, fan) in enumerate(zip(self.spikes, self.topology.fan_outs)):
            if spikes.shape[-1] != fan.size:
                raise ValueError(f"layer {layer}: {spikes.shape[-1]} neurons but {fan.size} fan-outs")
            if not np.all((spikes == 0) | (spikes == 1)):
                raise ValueError(f"layer {layer}: spikes must be binary")

    @property
    def layer_count(self) -> int:
        return len(self.spikes)

    @property
    def timesteps(self) -> int:
        return int(self.spikes[0].shape[-2]) if self.spikes else 0

    @property
    def samples(self) -> int:
        if not self.spikes or self.spikes[0].ndim == 2:
            return 1
        return int(self.spikes[0].shape[0])


def count_acs(trace: SpikeTrace) -> int:
    """Σ over t, l, i of f_i^l·s_i^l[t]."""
    total = 0
    for spikes, fan in zip(trace.spikes, trace.topology.fan_outs):
        per_neuron = spikes.astype(np.int64).reshape(-1, fan.size).sum(axis=0)
        total += int(per_neuron @ fan)
    return total


def count_macs(topology) -> int:
    """Σ_l Σ_i f_i^l; spikes and T play no part."""
    if isinstance(topology, SpikeTrace):
        topology = topology.topology
    return int(sum(int(fan.sum()) for fan in topology.fan_outs))


def sop(ac: float, mac: float, model: EnergyModel = EnergyModel()) -> float:
    if ac < 0 or mac < 0:
        raise ValueError(f"operation counts must be non-negative, got ac={ac}, mac={mac}")
    return model.e_ac * ac + model.e_mac * mac


def fire_rate(trace: SpikeTrace) -> float:
    slots = sum(int(spikes.size) for spikes in trace.spikes)
    if slots == 0:
        raise ValueError("fire rate of an empty trace is undefined")
    return float(sum(int(spikes.sum()) for spikes in trace.spikes)) / slots


def capture_trace(net: SpikingNet, encoded) -> SpikeTrace:
    """Spikes of every hidden layer recorded during one forward pass."""
    logits = forward_temporal(net, encoded, record_spikes=True)
    widths = [layer.out_features for layer in net.layers]
    topology = SynapseTopology.dense(widths)
    return SpikeTrace(spikes=logits.hidden_spikes, topology=topology)


def input_topology(net: SpikingNet) -> SynapseTopology:
    """Connections out of the analog input layer."""
    return SynapseTopology.dense([net.input_dim, net.layers[0].out_features])


def energy_report(net: SpikingNet, encoded, model: EnergyModel = EnergyModel(),
                  teacher_widths: Optional[Sequence[int]] = None) -> dict:
    """Per-sample mean ACs, MACs and energy over an encoded batch (batch, T, D)."""
    trace = capture_trace(net, encoded)
    samples = trace.samples
    timesteps = trace.timesteps

    input_macs = count_macs(input_topology(net)) * timesteps
    per_layer = [{
        "layer": 0,
        "kind": "mac",
        "neurons": net.input_dim,
        "fan_out": net.layers[0].out_features,
        "spikes": None,
        "ops": float(input_macs),
        "fire_rate": None,
    }]
    for index, (spikes, fan) in enumerate(zip(trace.spikes, trace.topology.fan_outs), start=1):
        layer_trace = SpikeTrace((spikes,), SynapseTopology((fan,)))
        per_layer.append({
            "layer": index,
            "kind": "ac",
            "neurons": int(fan.size),
            "fan_out": int(fan[0]) if fan.size else 0,
            "spikes": float(spikes.sum()) / samples,
            "ops": count_acs(layer_trace) / samples,
            "fire_rate": fire_rate(layer_trace),
        })

    acs = count_acs(trace) / samples
    macs = float(input_macs)
    report = {
        "reduction": "per-sample-mean",
        "samples": samples,
        "timesteps": timesteps,
        "acs": acs,
        "macs": macs,
        "sop_pj": sop(acs, macs, model),
        "fire_rate": fire_rate(trace),
        "e_ac": model.e_ac,
        "e_mac": model.e_mac,
        "per_layer": per_layer,
    }
    if teacher_widths is not None:
        ann_macs = count_macs(SynapseTopology.dense(teacher_widths))
        report["ann_reference"] = {"macs": ann_macs, "sop_pj": sop(0, ann_macs, model)}
    logger.info(f"Energy over {samples} samples: {acs:.1f} ACs, {macs:.0f} MACs, "
                f"{report['sop_pj']:.1f} pJ per sample, fire rate {report['fire_rate']:.4f}")
    return report
