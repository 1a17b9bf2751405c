import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import numeric_grad
from seal_kd.core.autodiff import ShapeError, Tape, Tensor
from seal_kd.core.losses import (
    DistillConfig,
    ErrorMask,
    TeacherLogits,
    baseline_objective,
    cls_loss,
    ela_loss,
    ela_modify,
    error_mask,
    kd_loss,
    objective,
    pairwise_similarity,
    seal_objective,
    sta_confidence,
    sta_loss,
    sta_similarity,
    sta_weights,
    uta_loss,
)


def _softmax(z, tau=1.0):
    e = np.exp(z / tau - np.max(z / tau, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _kl(p, q):
    return float(np.sum(p * np.log(p / q)))


def _direct_kd(student, teacher, tau):
    batch, timesteps, _ = student.shape
    total = 0.0
    for b in range(batch):
        for t in range(timesteps):
            total += _kl(_softmax(teacher[b], tau), _softmax(student[b, t], tau))
    return total / (batch * timesteps)


def _direct_alignment(student, weights, tau):
    batch, timesteps, _ = student.shape
    total = 0.0
    for b in range(batch):
        for t in range(timesteps):
            for u in range(timesteps):
                if u != t:
                    total += weights[b, t, u] * _kl(_softmax(student[b, u], tau), _softmax(student[b, t], tau))
    return total / (batch * timesteps)


# --------------------------------------------------------------------------
# classification and timestep-wise distillation
# --------------------------------------------------------------------------

def test_cls_saturated_correct_logit():
    logits = np.array([[[30.0, 0.0, 0.0]]])
    assert cls_loss(logits, [0]).item() < 1e-9


def test_cls_uniform_logits():
    assert cls_loss(np.zeros((1, 3, 4)), [2]).item() == pytest.approx(np.log(4), abs=1e-12)


def test_cls_is_temporal_mean(rng):
    z = rng.normal(size=(1, 2, 5))
    both = cls_loss(z, [3]).item()
    singles = [cls_loss(z[:, t:t + 1], [3]).item() for t in range(2)]
    assert both == pytest.approx(np.mean(singles), abs=1e-14)


def test_cls_rejects_invalid_labels():
    with pytest.raises(ValueError):
        cls_loss(np.zeros((1, 2, 3)), [3])
    with pytest.raises(ValueError):
        cls_loss(np.zeros((1, 2, 3)), [0.5])


def test_kd_vanishes_when_student_equals_teacher(rng):
    teacher = rng.normal(size=(2, 4))
    student = np.repeat(teacher[:, None, :], 3, axis=1)
    assert abs(kd_loss(student, teacher, 4.0).item()) < 1e-15


def test_kd_matches_direct_summation(rng):
    for _ in range(20):
        student = rng.normal(scale=3.0, size=(2, 3, 3))
        teacher = rng.normal(scale=3.0, size=(2, 3))
        value = kd_loss(student, teacher, 2.0).item()
        assert value >= 0
        assert value == pytest.approx(_direct_kd(student, teacher, 2.0), rel=1e-10)


def test_baseline_objective_weighting(rng):
    student = rng.normal(size=(2, 3, 4))
    teacher = rng.normal(size=(2, 4))
    labels = np.array([1, 3])
    base = DistillConfig(method="timestep-kd")
    cls = cls_loss(student, labels).item()
    kd = kd_loss(student, teacher, base.temperature).item()
    assert baseline_objective(student, teacher, labels, replace(base, lambda_kd=0.0)).item() == pytest.approx(cls, abs=1e-15)
    lambdas = np.array([0.5, 1.0, 2.0])
    values = np.array([baseline_objective(student, teacher, labels, replace(base, lambda_kd=l)).item() for l in lambdas])
    slope, intercept = np.polyfit(lambdas, values, 1)
    assert np.max(np.abs(values - (slope * lambdas + intercept))) < 1e-12
    assert slope == pytest.approx(kd, rel=1e-10)
    aligned = np.repeat(teacher[:, None, :], 3, axis=1)
    assert baseline_objective(aligned, teacher, labels, base).item() == pytest.approx(cls_loss(aligned, labels).item(), abs=1e-14)


# --------------------------------------------------------------------------
# error-aware logit alignment
# --------------------------------------------------------------------------

def test_ela_modify_worked_example():
    student, teacher, mask = ela_modify(np.array([2.0, 5.0, 1.0]), np.array([6.0, 3.0, 1.0]), 0)
    assert student.numpy().tolist() == [2.0, 2.0, 1.0]
    assert teacher.numpy().tolist() == [3.0, 3.0, 1.0]
    assert bool(mask.erroneous) and int(mask.c_false) == 1


def test_ela_modify_leaves_correct_rows_alone():
    student, teacher, mask = ela_modify(np.array([5.0, 2.0, 1.0]), np.array([6.0, 3.0, 1.0]), 0)
    assert student.numpy().tolist() == [5.0, 2.0, 1.0]
    assert teacher.numpy().tolist() == [6.0, 3.0, 1.0]
    assert not bool(mask.erroneous) and int(mask.c_false) == -1


def test_ela_modify_equal_pair_is_identity():
    student, teacher, _ = ela_modify(np.array([4.0, 4.0, 1.0]), np.array([2.0, 2.0, 7.0]), 1)
    assert student.numpy().tolist() == [4.0, 4.0, 1.0]
    assert teacher.numpy().tolist() == [2.0, 2.0, 7.0]


def test_ela_locality_and_idempotence_over_random_erroneous_rows(rng):
    cases = 0
    while cases < 1000:
        classes = int(rng.integers(2, 11))
        z = rng.normal(scale=2.0, size=classes)
        label = int(rng.integers(classes))
        top = int(np.argmax(z))
        if top == label:
            continue
        cases += 1
        teacher = rng.normal(scale=2.0, size=classes)
        once_s, once_t, mask = ela_modify(z, teacher, label)
        assert bool(mask.erroneous) and int(mask.c_false) == top

        pair = [label, top]
        untouched = [c for c in range(classes) if c not in pair]
        assert np.array_equal(once_s.numpy()[untouched], z[untouched])
        assert np.array_equal(once_t.numpy()[untouched], teacher[untouched])
        assert once_s.numpy()[pair].tolist() == [z[pair].min()] * 2
        assert once_t.numpy()[pair].tolist() == [teacher[pair].min()] * 2

        twice_s, twice_t, again = ela_modify(once_s.numpy(), once_t.numpy(), label, mask=mask)
        assert np.array_equal(twice_s.numpy(), once_s.numpy())
        assert np.array_equal(twice_t.numpy(), once_t.numpy())
        assert int(again.c_false) == top


def test_ela_reapplication_keeps_the_original_pair():
    student, teacher, mask = ela_modify(np.array([2.0, 5.0, 4.0]), np.array([1.0, 0.0, 0.0]), 0)
    assert student.numpy().tolist() == [2.0, 2.0, 4.0]
    again, _, _ = ela_modify(student.numpy(), teacher.numpy(), 0, mask=mask)
    assert again.numpy().tolist() == [2.0, 2.0, 4.0]
    # read fresh, the argmax has moved to class 2
    fresh, _, fresh_mask = ela_modify(student.numpy(), teacher.numpy(), 0)
    assert int(fresh_mask.c_false) == 2
    assert fresh.numpy().tolist() == [2.0, 2.0, 2.0]


@pytest.mark.parametrize("variant", ["ours", "S", "A", "AS", "Both"])
def test_every_ela_variant_is_idempotent_with_its_mask(rng, variant):
    student = rng.normal(scale=2.0, size=(16, 4, 6))
    teacher = rng.normal(scale=2.0, size=(16, 1, 6))
    labels = rng.integers(6, size=16)
    once_s, once_t, mask = ela_modify(student, teacher, labels[:, None], variant)
    twice_s, twice_t, _ = ela_modify(once_s.numpy(), once_t.numpy(), labels[:, None], variant, mask)
    assert np.array_equal(twice_s.numpy(), once_s.numpy())
    assert np.array_equal(twice_t.numpy(), once_t.numpy())
    assert np.array_equal(ela_loss(student, teacher[:, 0], labels, variant=variant, mask=mask).numpy(),
                          ela_loss(student, teacher[:, 0], labels, variant=variant).numpy())


def test_both_variant_mask_carries_teacher_false_class():
    _, _, mask = ela_modify(np.array([2.0, 5.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0, 6.0]), 0, "Both")
    assert int(mask.c_false) == 1 and int(mask.teacher_c_false) == 3
    _, _, ours = ela_modify(np.array([2.0, 5.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0, 6.0]), 0)
    assert ours.teacher_c_false is None


def test_ela_modify_rejects_inconsistent_masks():
    student = np.array([[2.0, 5.0, 1.0], [4.0, 0.0, 1.0]])
    teacher = np.array([6.0, 3.0, 1.0])
    with pytest.raises(ShapeError):
        ela_modify(student, teacher, [0, 0], mask=ErrorMask(np.array([True]), np.array([1])))
    with pytest.raises(ValueError, match="c_false"):
        ela_modify(student, teacher, [0, 0], mask=ErrorMask(np.array([True, False]), np.array([0, -1])))
    with pytest.raises(ValueError, match="c_false"):
        ela_modify(student, teacher, [0, 0], mask=ErrorMask(np.array([True, False]), np.array([3, -1])))


def test_ela_variants():
    student = np.array([2.0, 5.0, 1.0])
    teacher = np.array([6.0, 3.0, 1.0])
    s, t, _ = ela_modify(student, teacher, 0, "S")
    assert s.numpy().tolist() == [2.0, 2.0, 1.0] and t.numpy().tolist() == [6.0, 3.0, 1.0]
    s, t, _ = ela_modify(student, teacher, 0, "A")
    assert s.numpy().tolist() == [2.0, 5.0, 1.0] and t.numpy().tolist() == [3.0, 3.0, 1.0]

    s, t, mask = ela_modify(np.array([5.0, 2.0, 1.0]), np.array([1.0, 4.0, 0.0]), 0, "AS")
    assert s.numpy().tolist() == [2.0, 2.0, 1.0] and t.numpy().tolist() == [1.0, 1.0, 0.0]
    assert bool(mask.erroneous) and int(mask.c_false) == 1

    s, t, _ = ela_modify(np.array([2.0, 5.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0, 6.0]), 0, "Both")
    assert s.numpy().tolist() == [0.0, 0.0, 1.0, 0.0] and t.numpy().tolist() == [0.0, 0.0, 0.0, 0.0]
    s, t, _ = ela_modify(student, teacher, 0, "Both")
    assert s.numpy().tolist() == [2.0, 2.0, 1.0] and t.numpy().tolist() == [3.0, 3.0, 1.0]

    with pytest.raises(ValueError):
        ela_modify(student, teacher, 0, "C")


def test_ela_loss_single_erroneous_timestep():
    value = ela_loss(np.array([[[2.0, 5.0, 1.0]]]), np.array([[6.0, 3.0, 1.0]]), [0], temperature=4.0).item()
    expected = _kl(_softmax(np.array([3.0, 3.0, 1.0]), 4.0), _softmax(np.array([2.0, 2.0, 1.0]), 4.0))
    assert value == pytest.approx(expected, rel=1e-12)
    assert value >= 0


def test_ela_equals_kd_when_every_timestep_is_correct(rng):
    labels = np.array([0, 2])
    student = rng.normal(size=(2, 3, 4))
    for b, y in enumerate(labels):
        student[b, :, y] = student[b].max() + 1.0
    teacher = rng.normal(size=(2, 4))
    assert not error_mask(student, labels).erroneous.any()
    assert ela_loss(student, teacher, labels).item() == kd_loss(student, teacher).item()
    same = np.repeat(teacher[:, None, :], 3, axis=1)
    for b, y in enumerate(labels):
        same[b, :, y] = same[b].max() + 1.0
    assert ela_loss(same, same[:, 0], labels).item() == pytest.approx(0.0, abs=1e-15)


def test_error_mask_marks_false_class():
    mask = error_mask(np.array([[[1.0, 3.0], [4.0, 0.0]]]), [0])
    assert mask.erroneous.tolist() == [[True, False]]
    assert mask.c_false.tolist() == [[1, -1]]
    assert mask.fraction == 0.5


# --------------------------------------------------------------------------
# temporal alignment
# --------------------------------------------------------------------------

def test_confidence_examples():
    assert sta_confidence(np.zeros(5)) == pytest.approx(0.0, abs=1e-12)
    assert sta_confidence(np.array([40.0, 0.0, 0.0])) > 1 - 1e-6
    two = np.log(np.array([0.9, 0.1]))
    entropy = -(0.9 * np.log(0.9) + 0.1 * np.log(0.1))
    assert entropy == pytest.approx(0.32508, abs=1e-5)
    assert sta_confidence(two) == pytest.approx(0.53100, abs=1e-5)


def test_similarity_examples():
    v = np.array([0.3, -1.2, 2.0])
    assert sta_similarity(v, v) == pytest.approx(1.0, abs=1e-15)
    assert sta_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert sta_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    assert sta_similarity([0.0, 0.0], [1.0, 1.0]) == 0.0


def test_similarity_is_scale_invariant(rng):
    values = rng.normal(size=(2, 4, 5))
    np.testing.assert_allclose(pairwise_similarity(values * 3.7), pairwise_similarity(values), atol=1e-14)


def test_sta_weight_examples():
    w = sta_weights(np.array([[1.0, 2.0, 0.5], [0.2, -1.0, 3.0]]))
    assert w.tolist() == [[0.0, 1.0], [1.0, 0.0]]
    same = sta_weights(np.tile([1.0, 2.0, 0.5], (3, 1)))
    np.testing.assert_allclose(same, 0.5 * (1 - np.eye(3)), atol=1e-15)
    with pytest.raises(ValueError):
        sta_weights(np.zeros((1, 1, 3)))


@pytest.mark.parametrize("variant", ["ours", "no-conf", "no-sim", "dist"])
def test_sta_weight_rows_are_probability_vectors(rng, variant):
    for _ in range(50):
        weights = sta_weights(rng.normal(scale=3.0, size=(3, 5, 4)), 1.0, variant)
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(weights >= 0)
        assert np.all(weights[:, np.arange(5), np.arange(5)] == 0.0)


def test_sta_weight_variants_use_their_scores():
    logits = np.array([[4.0, 0.0, 0.0], [3.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    conf = sta_confidence(logits)
    no_sim = sta_weights(logits, 1.0, "no-sim")
    expected = np.exp(conf[[1, 2]]) / np.exp(conf[[1, 2]]).sum()
    np.testing.assert_allclose(no_sim[0, [1, 2]], expected, rtol=1e-12)
    sim = pairwise_similarity(logits)
    dist = sta_weights(logits, 1.0, "dist")
    scores = conf[[0, 2]] * (1 - sim[1, [0, 2]])
    np.testing.assert_allclose(dist[1, [0, 2]], np.exp(scores) / np.exp(scores).sum(), rtol=1e-12)


def test_sta_loss_zero_for_identical_timesteps(rng):
    z = np.repeat(rng.normal(size=(2, 1, 4)), 3, axis=1)
    assert abs(sta_loss(z).item()) < 1e-15
    assert abs(uta_loss(z).item()) < 1e-15


def test_sta_loss_two_timesteps_by_hand(rng):
    z = rng.normal(size=(1, 2, 3))
    p0, p1 = _softmax(z[0, 0]), _softmax(z[0, 1])
    expected = 0.5 * (_kl(p1, p0) + _kl(p0, p1))
    assert sta_loss(z).item() == pytest.approx(expected, rel=1e-12)
    assert uta_loss(z).item() == pytest.approx(expected, rel=1e-12)


def test_uta_three_timesteps_by_hand(rng):
    z = rng.normal(size=(1, 3, 4))
    p = [_softmax(z[0, t], 2.0) for t in range(3)]
    terms = [_kl(p[u], p[t]) for t in range(3) for u in range(3) if u != t]
    assert len(terms) == 6
    assert uta_loss(z, 2.0).item() == pytest.approx(sum(terms) / 2 / 3, rel=1e-12)


def test_sta_loss_matches_direct_summation(rng):
    for timesteps in (2, 4, 8):
        for classes in (2, 5, 10):
            z = rng.normal(scale=2.0, size=(3, timesteps, classes))
            weights = sta_weights(z, 1.5, "ours")
            value = sta_loss(z, 1.5).item()
            assert value >= 0
            assert value == pytest.approx(_direct_alignment(z, weights, 1.5), rel=1e-10)


# --------------------------------------------------------------------------
# combined objectives
# --------------------------------------------------------------------------

def test_seal_defaults_and_breakdown(rng):
    config = DistillConfig()
    assert (config.alpha_ela, config.beta_sta) == (0.6, 0.15)
    student = rng.normal(size=(2, 4, 5))
    teacher = rng.normal(size=(2, 5))
    labels = np.array([1, 4])
    result = seal_objective(student, teacher, labels, config)
    recomposed = result.terms["cls"] + 0.6 * result.terms["ela"] + 0.15 * result.terms["sta"]
    assert result.total.item() == pytest.approx(recomposed, abs=1e-12)
    assert set(result.breakdown()) == {"total", "cls", "ela", "sta"}


def test_seal_with_zero_weights_is_cls(rng):
    student = rng.normal(size=(2, 3, 4))
    labels = np.array([0, 1])
    config = DistillConfig(alpha_ela=0.0, beta_sta=0.0)
    result = seal_objective(student, rng.normal(size=(2, 4)), labels, config)
    assert result.total.item() == cls_loss(student, labels).item()


def test_objective_dispatches_every_method(rng):
    student = rng.normal(size=(2, 3, 4))
    teacher = rng.normal(size=(2, 4))
    labels = np.array([2, 0])
    expected_terms = {
        "ce-only": {"cls"}, "timestep-kd": {"cls", "kd"}, "ela": {"cls", "ela"},
        "sta": {"cls", "sta"}, "uta": {"cls", "uta"}, "seal": {"cls", "ela", "sta"},
    }
    for method, names in expected_terms.items():
        result = objective(student, teacher, labels, DistillConfig(method=method))
        assert set(result.terms) == names
        assert np.isfinite(result.total.item()) and result.total.item() >= 0


def test_objective_requires_teacher_only_when_used(rng):
    student = rng.normal(size=(1, 3, 4))
    objective(student, None, [1], DistillConfig(method="sta"))
    with pytest.raises(ValueError):
        objective(student, None, [1], DistillConfig(method="timestep-kd"))


def test_per_timestep_reduction_shape(rng):
    student = rng.normal(size=(2, 3, 4))
    result = objective(student, rng.normal(size=(2, 4)), [0, 1], DistillConfig(), reduction="none")
    assert result.total.shape == (2, 3)
    assert result.terms == {}


def test_distill_config_validation():
    with pytest.raises(ValueError):
        DistillConfig(method="fitnets")
    with pytest.raises(ValueError):
        DistillConfig(temperature=0.0)
    with pytest.raises(ValueError):
        DistillConfig(alpha_ela=-1.0)
    assert DistillConfig(temperature=3.0).effective_ela_temperature == 3.0
    assert DistillConfig(ela_temperature=2.0).effective_ela_temperature == 2.0


def test_teacher_shape_mismatch():
    with pytest.raises(ShapeError):
        kd_loss(np.zeros((2, 3, 4)), np.zeros((2, 5)))
    assert TeacherLogits.from_array([1.0, 2.0]).count == 1


# --------------------------------------------------------------------------
# gradients
# --------------------------------------------------------------------------

def _autodiff(fn, z0):
    tape = Tape()
    z = tape.watch(z0)
    return tape.backward(fn(z)).array(z)


@pytest.mark.parametrize("name", ["cls", "kd", "ela"])
def test_student_gradients_match_finite_differences(rng, name):
    teacher = rng.normal(scale=2.0, size=(2, 4))
    labels = np.array([1, 3])
    fns = {
        "cls": lambda z: cls_loss(z, labels),
        "kd": lambda z: kd_loss(z, teacher, 4.0),
        "ela": lambda z: ela_loss(z, teacher, labels, 4.0),
    }
    for _ in range(10):
        z0 = rng.normal(scale=2.0, size=(2, 3, 4))
        analytic = _autodiff(fns[name], z0)
        numeric = numeric_grad(lambda arr: fns[name](Tensor(arr)).item(), z0)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("method", ["sta", "uta", "seal"])
def test_alignment_gradients_treat_sources_and_weights_as_constants(rng, method):
    teacher = rng.normal(size=(2, 4))
    labels = np.array([0, 2])
    config = DistillConfig(method=method)
    tau = config.sta_temperature
    for _ in range(5):
        z0 = rng.normal(scale=2.0, size=(2, 3, 4))
        if method == "uta":
            weights = np.broadcast_to((1 - np.eye(3)) / 2, (2, 3, 3))
        else:
            weights = sta_weights(z0, tau, config.sta_variant)
        sources = _softmax(z0, tau)
        source_entropy = np.sum(sources * np.log(sources), axis=-1)

        def frozen(arr):
            log_q = np.log(_softmax(arr, tau))
            kl = source_entropy[:, None, :] - np.einsum("buc,btc->btu", sources, log_q)
            value = config.beta_sta * (weights * kl).sum(axis=-1).mean()
            if method == "seal":
                value += config.alpha_ela * ela_loss(arr, teacher, labels, config.effective_ela_temperature).item()
            return value

        def graph(z):
            result = objective(z, teacher, labels, config)
            return result.total - result.tensors["cls"]

        np.testing.assert_allclose(_autodiff(graph, z0), numeric_grad(frozen, z0), rtol=1e-5, atol=1e-9)


def test_teacher_receives_no_gradient(rng):
    tape = Tape()
    z = tape.watch(rng.normal(size=(1, 3, 4)))
    teacher = tape.watch(rng.normal(size=(1, 4)))
    grads = tape.backward(kd_loss(z, teacher) + ela_loss(z, teacher, [1]))
    assert not grads.array(teacher).any()
    assert grads.array(z).any()


# --------------------------------------------------------------------------
# direct-summation oracle over the T x C grid
# --------------------------------------------------------------------------

def _loop_softmax(row, tau):
    scaled = [float(v) / tau for v in row]
    top = max(scaled)
    exps = [math.exp(v - top) for v in scaled]
    total = sum(exps)
    return [e / total for e in exps]


def _loop_kl(p, q):
    return sum(pi * (math.log(pi) - math.log(qi)) for pi, qi in zip(p, q))


def _loop_cls(student, label, tau):
    return sum(-math.log(_loop_softmax(row, tau)[label]) for row in student) / len(student)


def _loop_kd(student, teacher, tau):
    p = _loop_softmax(teacher, tau)
    return sum(_loop_kl(p, _loop_softmax(row, tau)) for row in student) / len(student)


def _loop_ela(student, teacher, label, tau):
    total = 0.0
    for row in student:
        s, a = [float(v) for v in row], [float(v) for v in teacher]
        pred = max(range(len(s)), key=lambda c: s[c])
        if pred != label:
            s[label] = s[pred] = min(s[label], s[pred])
            a[label] = a[pred] = min(a[label], a[pred])
        total += _loop_kl(_loop_softmax(a, tau), _loop_softmax(s, tau))
    return total / len(student)


def _loop_alignment(student, tau, uniform):
    timesteps, classes = len(student), len(student[0])
    probs = [_loop_softmax(row, tau) for row in student]
    conf = [1.0 + sum(p * math.log(p) for p in dist) / math.log(classes) for dist in probs]
    norms = [math.sqrt(sum(float(v) ** 2 for v in row)) for row in student]
    total = 0.0
    for t in range(timesteps):
        sources = [u for u in range(timesteps) if u != t]
        if uniform:
            weights = [1.0 / (timesteps - 1)] * len(sources)
        else:
            scores = []
            for u in sources:
                dot = sum(float(x) * float(y) for x, y in zip(student[t], student[u]))
                scores.append(conf[u] * dot / (norms[t] * norms[u]))
            top = max(scores)
            exps = [math.exp(s - top) for s in scores]
            weights = [e / sum(exps) for e in exps]
        total += sum(w * _loop_kl(probs[u], probs[t]) for w, u in zip(weights, sources))
    return total / timesteps


def _loop_objective(name, student, teacher, label, config):
    if name == "cls":
        return _loop_cls(student, label, config.cls_temperature)
    if name == "kd":
        return _loop_kd(student, teacher, config.temperature)
    if name == "ela":
        return _loop_ela(student, teacher, label, config.effective_ela_temperature)
    if name == "sta":
        return _loop_alignment(student, config.sta_temperature, uniform=False)
    if name == "uta":
        return _loop_alignment(student, config.sta_temperature, uniform=True)
    return (_loop_cls(student, label, config.cls_temperature)
            + config.alpha_ela * _loop_ela(student, teacher, label, config.effective_ela_temperature)
            + config.beta_sta * _loop_alignment(student, config.sta_temperature, uniform=False))


def _library_objective(name, student, teacher, label, config):
    if name == "cls":
        return cls_loss(student, [label], config.cls_temperature).item()
    if name == "kd":
        return kd_loss(student, teacher, config.temperature).item()
    if name == "ela":
        return ela_loss(student, teacher, [label], config.effective_ela_temperature).item()
    if name == "sta":
        return sta_loss(student, config.sta_temperature).item()
    if name == "uta":
        return uta_loss(student, config.sta_temperature).item()
    return seal_objective(student, teacher, [label], config).total.item()


@pytest.mark.parametrize("name", ["cls", "kd", "ela", "sta", "uta", "seal"])
@pytest.mark.parametrize("classes", [2, 5, 10])
@pytest.mark.parametrize("timesteps", [1, 2, 4, 8])
def test_losses_match_loop_summation(name, timesteps, classes):
    if timesteps == 1 and name in ("sta", "uta", "seal"):
        pytest.skip("temporal alignment needs at least two timesteps")
    gen = np.random.default_rng([timesteps, classes])
    config = DistillConfig(temperature=4.0, sta_temperature=1.5)
    for _ in range(17):
        student = gen.normal(scale=2.0, size=(1, timesteps, classes))
        teacher = gen.normal(scale=2.0, size=(1, classes))
        label = int(gen.integers(classes))
        expected = _loop_objective(name, student[0], teacher[0], label, config)
        value = _library_objective(name, student, teacher, label, config)
        assert value >= 0
        assert value == pytest.approx(expected, rel=1e-10, abs=1e-13)
