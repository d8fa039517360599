import numpy as np
import pytest

from emgalign.classify import MlpConfig, accuracy, forward, loss_and_grad, predict, softmax, train_mlp
from emgalign.errors import ArgumentError, NumericError


def blobs(seed=0, n=200, sep=10.0):
    g = np.random.default_rng(seed)
    X = g.normal(size=(n, 2))
    y = np.repeat([0, 1], n // 2)
    X[y == 1, 0] += sep
    return X, y


CFG = MlpConfig(hidden_units=10, n_classes=2)


def test_separable_blobs():
    X, y = blobs()
    m = train_mlp(X, y, CFG)
    pred, prob = predict(m, X)
    assert accuracy(pred, y) == 1.0
    np.testing.assert_allclose(prob.sum(axis=1), 1.0, atol=1e-9)


def test_gradient_finite_differences(gen):
    X = gen.normal(size=(5, 4))
    y = np.array([0, 1, 2, 3, 1])
    w = gen.uniform(0.5, 2.0, size=5)
    params = [gen.normal(size=(4, 3)), gen.normal(size=3), gen.normal(size=(3, 4)), gen.normal(size=4)]
    _, grads = loss_and_grad(params, X, y, w)
    h = 1e-5
    for P, G in zip(params, grads):
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + h
            lp, _ = loss_and_grad(params, X, y, w)
            P[idx] = old - h
            lm, _ = loss_and_grad(params, X, y, w)
            P[idx] = old
            num = (lp - lm) / (2 * h)
            assert abs(num - G[idx]) <= 1e-4 * max(abs(num), abs(G[idx]), 1e-8) + 1e-10


def test_unit_weights_equal_no_weights():
    X, y = blobs(1, n=120)
    a = train_mlp(X, y, MlpConfig(hidden_units=4, n_classes=2, max_epochs=30))
    b = train_mlp(X, y, MlpConfig(hidden_units=4, n_classes=2, max_epochs=30), sample_weights=np.ones(120))
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)


def test_weight_scaling_invariance():
    X, y = blobs(2, n=120, sep=2.0)
    w = np.random.default_rng(0).uniform(0.2, 3.0, 120)
    cfg = MlpConfig(hidden_units=4, n_classes=2, max_epochs=25)
    a = train_mlp(X, y, cfg, sample_weights=w)
    b = train_mlp(X, y, cfg, sample_weights=4.0 * w)
    np.testing.assert_array_equal(a.training_trace, b.training_trace)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_allclose(p, q, rtol=1e-9, atol=1e-12)


def test_determinism_and_best_epoch():
    X, y = blobs(3, n=160, sep=1.5)
    cfg = MlpConfig(hidden_units=6, n_classes=2, max_epochs=200, seed=4)
    a, b = train_mlp(X, y, cfg), train_mlp(X, y, cfg)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)
    trace = a.training_trace
    assert trace[a.best_epoch - 1] == trace.max()
    assert len(trace) <= cfg.max_epochs


def test_restored_weights_reproduce_best_validation_accuracy():
    from emgalign.classify import _validation_split
    from emgalign.seeding import rng

    X, y = blobs(5, n=200, sep=1.0)
    cfg = MlpConfig(hidden_units=5, n_classes=2, max_epochs=60, seed=2)
    m = train_mlp(X, y, cfg)
    _, val = _validation_split(y, cfg.validation_fraction, rng(cfg.seed, "mlp-val"))
    assert len(val) == 20 and np.bincount(y[val]).tolist() == [10, 10]
    assert accuracy(predict(m, X[val])[0], y[val]) == m.training_trace.max()


def test_softmax_shift_invariance(gen):
    z = gen.normal(size=(6, 4))
    np.testing.assert_allclose(softmax(z + 123.4), softmax(z), atol=1e-9)
    assert np.all(np.isfinite(softmax(np.array([[1e4, -1e4, 0.0, 1.0]]))))


def test_predict_properties(gen):
    X, y = blobs(0, n=100)
    m = train_mlp(X, y, MlpConfig(hidden_units=3, n_classes=2, max_epochs=5))
    Z = gen.normal(size=(30, 2)) * 5
    _, p = predict(m, Z)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    lab, p2 = predict(m, np.vstack([Z[:1], Z[:1]]))
    np.testing.assert_array_equal(p2[0], p2[1])
    with pytest.raises(ArgumentError):
        predict(m, gen.normal(size=(2, 3)))


def test_argmax_tie_lowest_index():
    from emgalign.classify import MlpModel

    m = MlpModel(np.zeros((2, 1)), np.zeros(1), np.zeros((1, 4)), np.zeros(4), np.zeros(2), np.ones(2))
    lab, p = predict(m, np.ones((3, 2)))
    assert lab.tolist() == [0, 0, 0]
    np.testing.assert_allclose(p, 0.25)


def test_zero_variance_feature_gets_unit_std():
    X, y = blobs(0, n=100)
    X = np.c_[X, np.full(100, 3.0)]
    m = train_mlp(X, y, MlpConfig(hidden_units=3, n_classes=2, max_epochs=3))
    assert m.std[2] == 1.0


def test_accuracy_examples():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([0, 1, 2, 3], [0, 1, 2, 0]) == 0.75
    with pytest.raises(ArgumentError):
        accuracy([0, 1], [0])


@pytest.mark.parametrize(
    "kw, err",
    [
        (dict(y=np.zeros(20, int)), ArgumentError),
        (dict(y=np.arange(5) % 2, n=5), ArgumentError),
        (dict(sample_weights=-np.ones(20)), ArgumentError),
    ],
)
def test_input_errors(kw, err):
    n = kw.pop("n", 20)
    X = np.random.default_rng(0).normal(size=(n, 2))
    y = kw.pop("y", np.arange(n) % 2)
    with pytest.raises(err):
        train_mlp(X, y, MlpConfig(n_classes=2, max_epochs=2), **kw)


def test_config_validation():
    with pytest.raises(ArgumentError):
        MlpConfig(hidden_units=0)
    with pytest.raises(ArgumentError):
        MlpConfig(validation_fraction=1.0)
    with pytest.raises(ArgumentError):
        MlpConfig(max_epochs=0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    X, y = blobs(0, n=60)
    with pytest.raises(NumericError, match="epoch 1"):
        train_mlp(X, y, MlpConfig(n_classes=2, learning_rate=np.inf, max_epochs=3))


def test_forward_shapes(gen):
    params = [gen.normal(size=(3, 5)), np.zeros(5), gen.normal(size=(5, 4)), np.zeros(4)]
    h, p = forward(params, gen.normal(size=(7, 3)))
    assert h.shape == (7, 5) and p.shape == (7, 4)
    assert np.all((h > 0) & (h < 1))
