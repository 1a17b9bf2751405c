import numpy as np
import pytest

from seal_kd.core.autodiff import Tensor
from seal_kd.core.data import gen_synthetic
from seal_kd.core.losses import DistillConfig, ObjectiveResult, TeacherLogits
from seal_kd.core.snn import NetSpec, load_checkpoint, save_checkpoint
from seal_kd.core.training import (
    CosineLRDecay,
    SGDWithMomentum,
    TrainingDivergedError,
    TrainPlan,
    accuracy_summary,
    cosine_lr,
    minibatches,
    predict_temporal,
    replay_loss,
    train_student,
)

SPEC = NetSpec(hidden=(6,), timesteps=2)
PLAN = TrainPlan(epochs=2, batch_size=16, seed=4, checkpoint_every=1)


@pytest.fixture
def small_data(small_spec):
    return gen_synthetic(small_spec)


@pytest.fixture
def teacher_logits(small_data, rng):
    train, _ = small_data
    values = rng.normal(size=(train.size, train.classes))
    values[np.arange(train.size), train.labels] += 3.0
    return TeacherLogits.from_array(values)


def test_momentum_steps_by_hand():
    x = np.array([1.0])
    optimizer = SGDWithMomentum([x], lr=0.2, momentum=0.7)
    optimizer.step([np.array([1.0])])
    assert optimizer.velocities[0][0] == pytest.approx(0.2)
    assert x[0] == pytest.approx(0.8)
    optimizer.step([np.array([1.0])])
    assert optimizer.velocities[0][0] == pytest.approx(0.34)
    assert x[0] == pytest.approx(0.46)


def test_weight_decay_adds_to_gradient():
    x = np.array([2.0])
    SGDWithMomentum([x], lr=0.5, momentum=0.0, weight_decay=0.1).step([np.array([0.0])])
    assert x[0] == pytest.approx(1.9)


def test_optimizer_rejects_gradient_count_mismatch():
    with pytest.raises(ValueError):
        SGDWithMomentum([np.zeros(1)]).step([])


def test_momentum_on_a_scalar_quadratic():
    x = np.array([1.0])
    optimizer = SGDWithMomentum([x], lr=0.1, momentum=0.9)
    optimizer.step([2.0 * x])
    assert optimizer.velocities[0][0] == pytest.approx(0.2, abs=1e-15)
    assert x[0] == pytest.approx(0.8, abs=1e-15)
    optimizer.step([2.0 * x])
    assert optimizer.velocities[0][0] == pytest.approx(0.9 * 0.2 + 0.1 * 1.6, abs=1e-15)
    assert optimizer.velocities[0][0] == pytest.approx(0.34, abs=1e-15)
    assert x[0] == pytest.approx(0.46, abs=1e-15)


def test_cosine_schedule_endpoints():
    assert cosine_lr(0.1, 0, 10) == pytest.approx(0.1)
    assert cosine_lr(0.1, 5, 10) == pytest.approx(0.05)
    last = cosine_lr(0.1, 9, 10)
    assert last == pytest.approx(0.05 * (1.0 + np.cos(0.9 * np.pi)))
    assert 0 < last < cosine_lr(0.1, 8, 10)
    assert 0 < cosine_lr(0.1, 639, 640) <= 0.01 * 0.1
    assert cosine_lr(0.1, 10, 10) == pytest.approx(0.0, abs=1e-15)
    assert cosine_lr(0.1, 0, 1) == 0.1
    assert cosine_lr(0.1, 0, 0) == 0.1


def test_enabled_schedule_sets_optimizer_rate():
    optimizer = SGDWithMomentum([np.zeros(1)], lr=0.3)
    schedule = CosineLRDecay(optimizer, 0.3, 4)
    rates = [schedule.step(s) for s in range(4)]
    assert rates[0] == 0.3 and all(r > 0 for r in rates)
    assert optimizer.lr == rates[-1]


def test_disabled_schedule_is_constant():
    optimizer = SGDWithMomentum([np.zeros(1)], lr=0.3)
    schedule = CosineLRDecay(optimizer, 0.3, 10, enabled=False)
    assert [schedule.step(s) for s in range(10)] == [0.3] * 10
    assert optimizer.lr == 0.3


def test_minibatches_cover_every_index(rng):
    batches = list(minibatches(23, 5, rng))
    assert [len(b) for b in batches] == [5, 5, 5, 5, 3]
    assert sorted(np.concatenate(batches).tolist()) == list(range(23))


def test_train_plan_validation():
    with pytest.raises(ValueError):
        TrainPlan(batch_size=0)
    with pytest.raises(ValueError):
        TrainPlan(momentum=1.0)
    assert TrainPlan(epochs=0).epochs == 0


def test_accuracy_summary():
    logits = np.array([[[1.0, 0.0], [0.0, 2.0]], [[0.0, 1.0], [0.0, 1.0]]])
    summary = accuracy_summary(logits, np.array([0, 1]))
    assert summary["per_timestep_accuracy"] == [1.0, 0.5]
    assert summary["aggregated_accuracy"] == 1.0
    assert accuracy_summary(np.zeros((0, 2, 2)), np.array([], dtype=int))["aggregated_accuracy"] is None


@pytest.mark.slow
def test_cross_entropy_student_learns_clusters(small_data):
    train, test = small_data
    result = train_student(train, None, NetSpec(hidden=(32,), timesteps=4),
                           TrainPlan(epochs=30, batch_size=16, seed=0), DistillConfig(method="ce-only"),
                           eval_dataset=test)
    assert result.metrics[-1]["test_aggregated_accuracy"] >= 0.95
    assert result.metrics[-1]["loss"] < result.metrics[0]["loss"]


def test_zero_weight_seal_follows_cross_entropy_trajectory(small_data, teacher_logits):
    train, _ = small_data
    ce = train_student(train, None, SPEC, PLAN, DistillConfig(method="ce-only"))
    seal = train_student(train, teacher_logits, SPEC, PLAN,
                         DistillConfig(method="seal", alpha_ela=0.0, beta_sta=0.0))
    for a, b in zip(ce.net.parameters(), seal.net.parameters()):
        assert np.array_equal(a, b)
    assert [m["loss"] for m in ce.metrics] == [m["loss"] for m in seal.metrics]
    assert set(seal.metrics[0]["terms"]) == {"cls", "ela", "sta"}


def test_checkpoint_replays_to_recorded_loss(tmp_path, small_data, teacher_logits):
    train, _ = small_data
    config = DistillConfig(method="seal")
    saved = {}

    def keep(epoch, net, record):
        path = tmp_path / f"epoch{epoch}.json"
        save_checkpoint(net, path)
        saved[epoch] = (path, record["checkpoint_loss"])

    result = train_student(train, teacher_logits, SPEC, PLAN, config, on_checkpoint=keep)
    assert sorted(saved) == [1, 2] == sorted(result.checkpoints)
    for path, recorded in saved.values():
        net = load_checkpoint(path)
        assert replay_loss(net, train, teacher_logits, config, SPEC.encoding, PLAN.seed) == recorded


def test_training_is_deterministic(small_data, teacher_logits):
    train, test = small_data
    config = DistillConfig(method="ela")
    first = train_student(train, teacher_logits, SPEC, PLAN, config, eval_dataset=test)
    second = train_student(train, teacher_logits, SPEC, PLAN, config, eval_dataset=test)
    assert first.metrics == second.metrics
    for a, b in zip(first.net.parameters(), second.net.parameters()):
        assert np.array_equal(a, b)
    logits = predict_temporal(first.net, test.features, SPEC.encoding, PLAN.seed)
    assert logits.shape == (test.size, 2, 3)


def test_epoch_records(small_data):
    train, test = small_data
    result = train_student(train, None, SPEC, PLAN, DistillConfig(method="uta"), eval_dataset=test)
    record = result.metrics[0]
    assert record["record"] == "epoch" and record["epoch"] == 1
    assert 0.0 <= record["erroneous_fraction"] <= 1.0
    assert len(record["per_timestep_accuracy"]) == 2
    assert len(record["test_per_timestep_accuracy"]) == 2
    assert "checkpoint_loss" in record


def test_training_rejects_bad_inputs(small_data, teacher_logits):
    train, test = small_data
    with pytest.raises(ValueError):
        train_student(test, None, SPEC, PLAN, DistillConfig(method="ce-only"))
    with pytest.raises(ValueError):
        train_student(train, None, SPEC, PLAN, DistillConfig(method="timestep-kd"))
    with pytest.raises(ValueError):
        train_student(train, teacher_logits.subset(range(5)), SPEC, PLAN, DistillConfig(method="seal"))


def test_divergence_raises_with_snapshot(mocker, small_data):
    train, _ = small_data
    mocker.patch("seal_kd.core.training.objective",
                 return_value=ObjectiveResult(total=Tensor(np.nan), terms={"cls": float("nan")}))
    with pytest.raises(TrainingDivergedError) as info:
        train_student(train, None, SPEC, PLAN, DistillConfig(method="ce-only"))
    assert info.value.epoch == 1
    assert info.value.snapshot["step"] == 0
    assert len(info.value.snapshot["batch"]) == PLAN.batch_size
