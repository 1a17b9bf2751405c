import numpy as np
import pytest

from seal_kd.core.energy import (
    EnergyModel,
    SpikeTrace,
    SynapseTopology,
    capture_trace,
    count_acs,
    count_macs,
    energy_report,
    fire_rate,
    sop,
)
from seal_kd.core.snn import DenseLayer, SpikingNet, encode_input


def _trace(spikes, fan_outs):
    topology = SynapseTopology(tuple(np.asarray(f, dtype=np.int64) for f in fan_outs))
    return SpikeTrace(tuple(np.asarray(s, dtype=float) for s in spikes), topology)


def test_no_spikes_no_accumulates():
    trace = _trace([np.zeros((4, 3))], [[2, 2, 2]])
    assert count_acs(trace) == 0
    assert fire_rate(trace) == 0.0


def test_acs_scale_with_fan_out():
    spikes = np.zeros((5, 1))
    spikes[[0, 2, 4], 0] = 1
    assert count_acs(_trace([spikes], [[7]])) == 21


def test_acs_match_brute_force(rng):
    for _ in range(20):
        fans = [rng.integers(0, 6, size=4), rng.integers(0, 6, size=3)]
        spikes = [rng.integers(0, 2, size=(5, 4)), rng.integers(0, 2, size=(5, 3))]
        expected = sum(
            fans[l][i] * spikes[l][t, i]
            for l in range(2) for t in range(5) for i in range(len(fans[l]))
        )
        assert count_acs(_trace(spikes, fans)) == expected


def test_acs_are_monotone_in_spikes(rng):
    fans = [rng.integers(1, 5, size=6)]
    spikes = rng.integers(0, 2, size=(4, 6)).astype(float)
    before = count_acs(_trace([spikes], fans))
    silent = np.argwhere(spikes == 0)[0]
    spikes[tuple(silent)] = 1
    assert count_acs(_trace([spikes], fans)) > before


def test_count_macs():
    assert count_macs(_trace([np.zeros((2, 3)), np.zeros((2, 2))], [[1, 1, 1], [1, 1]])) == 5
    assert count_macs(SynapseTopology((np.array([3, 3]), np.array([2])))) == 8
    assert count_macs(SynapseTopology(())) == 0


def test_sop_weights_operations():
    assert sop(100, 10) == pytest.approx(136.0)
    model = EnergyModel(e_ac=2.0, e_mac=3.0)
    assert sop(4, 5, model) == pytest.approx(23.0)
    assert sop(8, 10, model) == pytest.approx(2 * sop(4, 5, model))
    with pytest.raises(ValueError):
        sop(-1, 0)
    with pytest.raises(ValueError):
        EnergyModel(e_ac=0.0)


def test_fire_rate_examples():
    assert fire_rate(_trace([np.ones((2, 3))], [[1, 1, 1]])) == 1.0
    spikes = np.zeros((4, 5))
    spikes[0, :3] = 1
    assert fire_rate(_trace([spikes], [[1] * 5])) == pytest.approx(0.15)
    with pytest.raises(ValueError):
        fire_rate(SpikeTrace((), SynapseTopology(())))


def test_trace_validation():
    with pytest.raises(ValueError):
        _trace([np.full((2, 2), 0.5)], [[1, 1]])
    with pytest.raises(ValueError):
        _trace([np.zeros((2, 3))], [[1, 1]])
    with pytest.raises(ValueError):
        SynapseTopology((np.array([-1]),))


def test_acs_bounded_by_dense_operations(rng):
    for _ in range(10):
        fans = [rng.integers(0, 9, size=5)]
        spikes = rng.integers(0, 2, size=(6, 5))
        trace = _trace([spikes], fans)
        assert count_acs(trace) <= count_macs(trace) * trace.timesteps


def test_captured_trace_matches_recount(firing_net, rng):
    encoded = encode_input(rng.random((4, 3)), "constant-current", firing_net.timesteps)
    trace = capture_trace(firing_net, encoded)
    assert trace.samples == 4 and trace.timesteps == 3
    spikes = trace.spikes[0]
    assert spikes.any() and not spikes.all()
    assert count_acs(trace) == int(spikes.sum()) * firing_net.classes


def test_report_is_consistent(firing_net, rng):
    encoded = encode_input(rng.random((6, 3)), "constant-current", firing_net.timesteps)
    model = EnergyModel()
    report = energy_report(firing_net, encoded, model, teacher_widths=[3, 10, 3])
    assert report["samples"] == 6 and report["timesteps"] == 3
    assert report["macs"] == 3 * 5 * 3
    assert report["sop_pj"] == pytest.approx(model.e_ac * report["acs"] + model.e_mac * report["macs"], rel=1e-12)
    assert sum(layer["ops"] for layer in report["per_layer"] if layer["kind"] == "ac") == pytest.approx(report["acs"])
    assert report["ann_reference"] == {"macs": 60, "sop_pj": pytest.approx(60 * model.e_mac)}


def test_silent_network_costs_only_input_macs():
    hidden = DenseLayer(np.zeros((2, 3)), np.full(3, -5.0))
    readout = DenseLayer(np.ones((3, 2)), np.zeros(2))
    net = SpikingNet([hidden, readout], timesteps=4)
    report = energy_report(net, np.ones((2, 4, 2)))
    assert report["acs"] == 0
    assert report["fire_rate"] == 0.0
    assert report["sop_pj"] == pytest.approx(4.6 * 2 * 3 * 4)
    assert "ann_reference" not in report
