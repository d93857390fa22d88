import numpy as np
import numpy.testing as npt
import pytest

from core.corpus import PAD_INDEX, EmbeddingTable, EncodedExample
from core.errors import MissingCacheError, ShapeError
from core.layers import ConvFilterBank, DenseSoftmaxLayer, DropoutMask
from core.models import (
    CnnGruModel, CnnModel, Prediction, build_model, cnn_forward, cnn_gru_forward, cross_entropy_loss,
    model_backward, predict, zero_gradients,
)
from core.numerics import make_rng
from core.training import TrainConfig, gradient_check_run


def embedding(rows=12, k=16, seed=0):
    return EmbeddingTable.with_frozen_pad(make_rng(seed).uniform(-0.25, 0.25, size=(rows, k)))


@pytest.mark.parametrize("architecture, width", [("cnn", 384), ("cnn_gru", 600)])
def test_default_penultimate_width(architecture, width):
    model = build_model(TrainConfig(architecture=architecture), embedding(5, 300), make_rng(0))
    assert model.penultimate_dim == width
    assert model.output.weights.shape == (width, 6)


def test_build_model_rejects_unknown_architecture():
    with pytest.raises(ValueError):
        build_model(TrainConfig(architecture="lstm"), embedding(), make_rng(0))


@pytest.mark.parametrize("architecture", ["cnn", "cnn_gru"])
def test_forward_returns_a_distribution(architecture, make_config, random_example):
    model = build_model(make_config(architecture=architecture), embedding(), make_rng(1))
    rng = make_rng(2)
    for _ in range(20):
        example = random_example(rng, vocab_size=12)
        cache = model.forward(example, "infer")
        assert cache.probs.shape == (6,)
        assert abs(cache.probs.sum() - 1.0) < 1e-12
        assert np.all(cache.probs >= 0)


def test_module_level_forward_helpers(make_config, random_example):
    example = random_example(make_rng(0), vocab_size=12)
    cnn = build_model(make_config(), embedding(), make_rng(1))
    gru = build_model(make_config(architecture="cnn_gru"), embedding(), make_rng(1))
    assert isinstance(cnn, CnnModel) and isinstance(gru, CnnGruModel)
    npt.assert_array_equal(cnn_forward(example, cnn), cnn.forward(example).probs)
    npt.assert_array_equal(cnn_gru_forward(example, gru), gru.forward(example).probs)


def test_infer_mode_is_deterministic_and_train_mode_draws_masks(make_config, random_example):
    model = build_model(make_config(), embedding(), make_rng(1))
    example = random_example(make_rng(3), vocab_size=12)
    npt.assert_array_equal(model.forward(example, "infer").probs, model.forward(example, "infer").probs)

    rng = make_rng(4)
    masks = [model.forward(example, "train", rng).mask.mask for _ in range(5)]
    assert any(not np.array_equal(masks[0], m) for m in masks[1:])
    with pytest.raises(ValueError):
        model.forward(example, "train")


def test_cnn_gru_sequence_length(make_config):
    model = build_model(make_config(architecture="cnn_gru"), embedding(), make_rng(0))
    assert model.sequence_length(12) == 5
    assert model.sequence_length(3) == 1
    assert model.sequence_length(2) == 0
    short = EncodedExample(indices=np.array([2, 3]), true_length=2)
    with pytest.raises(ShapeError):
        model.forward(short)


def test_padded_sentence_still_classified(make_config):
    model = build_model(make_config(), embedding(), make_rng(0))
    all_pad = EncodedExample(indices=np.zeros(6, dtype=np.int64), true_length=0)
    probs = model.forward(all_pad).probs
    assert abs(probs.sum() - 1.0) < 1e-12


# ==================== PREDICTION & LOSS ====================

def test_predict_takes_lowest_index_on_ties():
    pred = predict(np.array([0.3, 0.3, 0.1, 0.1, 0.1, 0.1]))
    assert pred.label_index == 0
    assert pred.tag == "comment"
    assert pred.confidence == pytest.approx(0.3)


def test_predict_rejects_invalid_distributions():
    with pytest.raises(ValueError):
        predict(np.full(6, 0.2))
    with pytest.raises(ValueError):
        predict(np.full(5, 0.2))


def test_cross_entropy_clamps_zero_probability():
    probs = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    assert cross_entropy_loss(probs, 0) == 0.0
    assert cross_entropy_loss(probs, 1) == pytest.approx(-np.log(1e-12))
    with pytest.raises(ValueError):
        cross_entropy_loss(probs, 6)


def test_prediction_is_a_value_object():
    pred = Prediction(label_index=3, confidence=0.9, distribution=np.zeros(6))
    assert pred.tag == "bug"


# ==================== BACKWARD ====================

def test_backward_requires_a_matching_cache(make_config, random_example):
    cnn = build_model(make_config(), embedding(), make_rng(0))
    gru = build_model(make_config(architecture="cnn_gru"), embedding(), make_rng(0))
    example = random_example(make_rng(1), vocab_size=12)
    with pytest.raises(MissingCacheError):
        model_backward(None, 0, cnn)
    with pytest.raises(MissingCacheError):
        model_backward(gru.forward(example), 0, cnn)


@pytest.mark.parametrize("architecture", ["cnn", "cnn_gru"])
def test_backward_covers_every_parameter_and_skips_pad(architecture, make_config, random_example):
    model = build_model(make_config(architecture=architecture), embedding(), make_rng(0))
    example = random_example(make_rng(5), vocab_size=12)
    grads = model_backward(model.forward(example, "train", make_rng(6)), example.label_index, model)
    assert set(grads) == set(model.parameters())
    for name, g in grads.items():
        assert g.shape == model.parameters()[name].shape
    npt.assert_array_equal(grads["embedding"][PAD_INDEX], 0.0)


def test_backward_accumulates_into_given_gradients(make_config, random_example):
    model = build_model(make_config(), embedding(), make_rng(0))
    example = random_example(make_rng(7), vocab_size=12)
    mask = DropoutMask.identity(model.penultimate_dim)
    cache = model.forward(example, "infer", mask=mask)
    once = model_backward(cache, 2, model)
    twice = model_backward(cache, 2, model, model_backward(cache, 2, model, zero_gradients(model)))
    for name in once:
        npt.assert_allclose(twice[name], 2 * once[name])


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("architecture", ["cnn", "cnn_gru"])
def test_gradient_check_passes(architecture, seed):
    report = gradient_check_run(architecture, seed)
    assert report.passed, report.format()
    assert {g.name for g in report.groups} >= {"embedding", "output.weight", "output.bias"}
    embedding_group = next(g for g in report.groups if g.name == "embedding")
    assert embedding_group.skipped >= 8


def test_gradient_check_detects_corrupted_conv_gradient():
    report = gradient_check_run("cnn", 0, corrupt={"conv": 1.1})
    assert not report.passed
    assert report.failed_groups
    assert all(name.startswith("conv") for name in report.failed_groups)
    assert report.format().splitlines()[-1].startswith("FAILED: conv")


@pytest.mark.parametrize("architecture", ["cnn", "cnn_gru"])
def test_gradients_are_finite_over_random_draws(architecture, make_config, random_example):
    rng = make_rng(17)
    config = make_config(architecture=architecture)
    for draw in range(100):
        model = build_model(config, embedding(seed=draw), make_rng(100 + draw))
        example = random_example(rng, vocab_size=12)
        grads = model_backward(model.forward(example, "train", rng), example.label_index, model)
        for name, g in grads.items():
            assert np.all(np.isfinite(g)), f"draw {draw}: {name}"


# ==================== SYMMETRY ====================

def test_filter_permutation_leaves_distribution_unchanged(make_config, random_example):
    model = build_model(make_config(), embedding(), make_rng(0))
    n_filters = model.bank.filters_per_size
    h = model.bank.region_sizes[1]
    offset = n_filters
    perm = make_rng(9).permutation(n_filters)

    weights = {size: w.copy() for size, w in model.bank.weights.items()}
    biases = {size: b.copy() for size, b in model.bank.biases.items()}
    weights[h] = weights[h][perm]
    biases[h] = biases[h][perm]
    output_weights = model.output.weights.copy()
    output_weights[offset:offset + n_filters] = output_weights[offset + perm]
    permuted = CnnModel(embedding=model.embedding, bank=ConvFilterBank(weights=weights, biases=biases),
                        output=DenseSoftmaxLayer(weights=output_weights, biases=model.output.biases.copy()),
                        keep_prob=model.keep_prob)

    rng = make_rng(10)
    for _ in range(10):
        example = random_example(rng, vocab_size=12)
        original, shuffled = model.forward(example), permuted.forward(example)
        npt.assert_allclose(shuffled.penultimate[offset:offset + n_filters], original.penultimate[offset + perm],
                            rtol=0, atol=1e-12)
        assert np.max(np.abs(shuffled.probs - original.probs)) < 1e-12
