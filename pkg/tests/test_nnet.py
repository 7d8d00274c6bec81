import numpy as np
import pytest
from gradcheck import fd_gradient, relative_error

from mvclust.dataio import FeatureView
from mvclust.nnet import (
    MlpModel,
    MlpSpec,
    TrainConfig,
    TrainingDivergedError,
    adam_init,
    adam_step,
    forward,
    grad,
    init,
    load_model,
    mirrored_spec,
    mse_loss,
    save_model,
    train_autoencoder,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(layer_dims=(4,))
    with pytest.raises(ValueError):
        MlpSpec(layer_dims=(4, 0, 2))
    spec = MlpSpec(layer_dims=(4, 3, 2))
    assert spec.input_dim == 4 and spec.output_dim == 2


def test_init_deterministic_and_bounded():
    spec = MlpSpec(layer_dims=(4, 3))
    a = init(spec, seed=5)
    b = init(spec, seed=5)
    np.testing.assert_array_equal(a.weights[0], b.weights[0])
    limit = np.sqrt(6.0 / (4 + 3))
    assert np.abs(a.weights[0]).max() <= limit
    assert (a.biases[0] == 0).all()
    c = init(spec, seed=6)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_forward_zero_model():
    spec = MlpSpec(layer_dims=(3, 4, 2))
    model = init(spec, seed=0)
    for w in model.weights:
        w[:] = 0.0
    out = forward(model, np.ones((5, 3)))
    np.testing.assert_array_equal(out, np.zeros((5, 2)))


def test_forward_identity_single_layer():
    spec = MlpSpec(layer_dims=(3, 3))
    model = init(spec, seed=0)
    model.weights[0][:] = np.eye(3)
    model.biases[0][:] = 0.0
    x = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(forward(model, x), x)


def test_forward_hand_trace():
    # 2-2-1 network, one input, weights chosen so the ReLU clips one unit
    model = MlpModel(
        spec=MlpSpec(layer_dims=(2, 2, 1)),
        weights=[np.array([[1.0, -1.0], [2.0, 1.0]]), np.array([[3.0], [4.0]])],
        biases=[np.array([0.5, -0.5]), np.array([1.0])],
    )
    x = np.array([[1.0, 2.0]])
    # hidden pre-activation: [1*1+2*2+0.5, 1*(-1)+2*1-0.5] = [5.5, 0.5] -> relu same
    # output: 5.5*3 + 0.5*4 + 1 = 19.5
    np.testing.assert_allclose(forward(model, x), [[19.5]])
    x2 = np.array([[-1.0, 0.0]])
    # hidden: [-1+0.5, 1-0.5] = [-0.5, 0.5] -> relu [0, 0.5]; out: 0.5*4+1 = 3
    np.testing.assert_allclose(forward(model, x2), [[3.0]])


def test_forward_shape_mismatch():
    model = init(MlpSpec(layer_dims=(3, 2)), seed=0)
    with pytest.raises(ValueError, match="incompatible"):
        forward(model, np.ones((4, 5)))


def test_forward_rowwise_independence():
    model = init(MlpSpec(layer_dims=(3, 4, 2)), seed=1)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 3))
    full = forward(model, x)
    # batch order is irrelevant: row i's output only depends on row i
    perm = rng.permutation(6)
    np.testing.assert_array_equal(forward(model, x[perm]), full[perm])
    for i in range(6):
        np.testing.assert_allclose(forward(model, x[i : i + 1])[0], full[i], rtol=1e-12)


def test_grad_constant_loss_is_zero():
    model = init(MlpSpec(layer_dims=(3, 4, 2)), seed=2)
    x = np.random.default_rng(2).normal(size=(5, 3))
    res = grad(model, x, lambda out: (1.0, np.zeros_like(out)))
    for g in res.parameter_grads():
        assert (g == 0).all()
    assert (res.input_grads == 0).all()


def test_grad_linear_closed_form():
    # single linear layer, squared-error loss on one sample: dW = 2(Wx+b-y) x^T
    model = init(MlpSpec(layer_dims=(3, 1)), seed=3)
    x = np.array([[0.5, -1.0, 2.0]])
    y = np.array([[0.7]])

    def loss_fn(out):
        diff = out - y
        return float((diff**2).sum()), 2.0 * diff

    res = grad(model, x, loss_fn)
    residual = forward(model, x) - y
    np.testing.assert_allclose(res.weight_grads[0], 2.0 * residual * x.T, rtol=1e-12)
    np.testing.assert_allclose(res.bias_grads[0], (2.0 * residual).ravel(), rtol=1e-12)
    np.testing.assert_allclose(res.input_grads, 2.0 * residual @ model.weights[0].T, rtol=1e-12)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(4)
    model = init(MlpSpec(layer_dims=(4, 5, 3, 2)), seed=4)
    x = rng.normal(size=(6, 4))
    target = rng.normal(size=(6, 2))
    res = grad(model, x, mse_loss(target))

    def loss_now():
        return mse_loss(target)(forward(model, x))[0]

    numeric = fd_gradient(loss_now, model.parameters())
    assert relative_error(res.parameter_grads(), numeric) < 1e-4

    # input gradients too
    x_var = x.copy()

    def loss_of_input():
        return mse_loss(target)(forward(model, x_var))[0]

    numeric_in = fd_gradient(loss_of_input, [x_var])
    assert relative_error([res.input_grads], numeric_in) < 1e-4


def test_adam_zero_gradient_no_change():
    model = init(MlpSpec(layer_dims=(3, 2)), seed=5)
    params = model.parameters()
    before = [p.copy() for p in params]
    state = adam_init(params)
    adam_step(params, [np.zeros_like(p) for p in params], state, lr=0.1)
    for p, b in zip(params, before):
        np.testing.assert_array_equal(p, b)


def test_adam_first_step_magnitude():
    p = np.array([1.0, -2.0, 3.0])
    g = np.array([0.5, -0.25, 1.0])
    state = adam_init([p])
    before = p.copy()
    adam_step([p], [g], state, lr=0.01)
    # bias-corrected first step: delta = -lr * g / (|g| + eps) ~ -lr * sign(g)
    expected = before - 0.01 * g / (np.abs(g) + state.eps)
    np.testing.assert_allclose(p, expected, rtol=1e-12)


def test_adam_descends_quadratic():
    p = np.array([2.0])
    state = adam_init([p])
    losses = []
    for _ in range(50):
        g = 2.0 * p
        losses.append(float(p[0] ** 2))
        adam_step([p], [g.copy()], state, lr=0.05)
    assert losses[-1] < losses[0]


def test_mirrored_spec():
    spec = MlpSpec(layer_dims=(7, 5, 3, 2))
    assert mirrored_spec(spec).layer_dims == (2, 3, 5, 7)


def test_autoencoder_recovers_linear_subspace():
    # data exactly on a 2-d linear subspace of R^4, single linear layers
    rng = np.random.default_rng(6)
    basis = rng.normal(size=(2, 4))
    x = rng.normal(size=(64, 2)) @ basis
    config = TrainConfig(learning_rate=1e-2, batch_size=64, epochs=1500, seed=6)
    result = train_autoencoder(FeatureView("x", x), MlpSpec(layer_dims=(4, 2)), config)
    assert result.final_mse < 1e-3


def test_autoencoder_loss_decreases_in_moving_average():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(50, 5))
    config = TrainConfig(learning_rate=1e-3, batch_size=16, epochs=60, seed=7)
    result = train_autoencoder(FeatureView("x", x), MlpSpec(layer_dims=(5, 5)), config)
    mse = np.array(result.epoch_mse)
    window = 10
    smooth = np.convolve(mse, np.ones(window) / window, mode="valid")
    assert (np.diff(smooth) <= 1e-9).all()


def test_autoencoder_single_sample():
    x = np.array([[1.0, -2.0, 0.5]])
    config = TrainConfig(learning_rate=1e-2, batch_size=1, epochs=800, seed=8)
    result = train_autoencoder(FeatureView("x", x), MlpSpec(layer_dims=(3, 2)), config)
    assert result.final_mse < 1e-4


def test_autoencoder_dim_mismatch():
    with pytest.raises(ValueError, match="input dim"):
        train_autoencoder(np.ones((4, 3)), MlpSpec(layer_dims=(5, 2)), TrainConfig(epochs=1))


def test_autoencoder_divergence_reports_iteration():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(32, 4)) * 1e3
    # a step this large overflows float64 activations on the next batch
    config = TrainConfig(learning_rate=1e200, batch_size=32, epochs=50, seed=9)
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingDivergedError) as err:
            train_autoencoder(FeatureView("x", x), MlpSpec(layer_dims=(4, 3, 2)), config)
    assert err.value.iteration >= 1


def test_training_bit_reproducible():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(40, 4))
    config = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=5, seed=11)
    a = train_autoencoder(FeatureView("x", x), MlpSpec(layer_dims=(4, 3, 2)), config)
    b = train_autoencoder(FeatureView("x", x), MlpSpec(layer_dims=(4, 3, 2)), config)
    for wa, wb in zip(a.encoder.weights, b.encoder.weights):
        np.testing.assert_array_equal(wa, wb)
    assert a.final_mse == b.final_mse


def test_checkpoint_round_trip(tmp_path):
    model = init(MlpSpec(layer_dims=(4, 3, 2)), seed=12)
    model.biases[0][:] = np.random.default_rng(12).normal(size=3)
    save_model(model, tmp_path / "model.bin")
    loaded = load_model(tmp_path / "model.bin")
    assert loaded.spec == model.spec
    for a, b in zip(model.weights + model.biases, loaded.weights + loaded.biases):
        np.testing.assert_array_equal(a, b)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError, match="unrecognized checkpoint"):
        load_model(path)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    TrainConfig(finetune_learning_rate=0.0)  # zero fine-tune lr is allowed
