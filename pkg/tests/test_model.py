import numpy as np
import pytest

from strank.errors import ArgumentError
from strank.model import (
    MlpParams,
    backward,
    forward,
    init_params,
    load_params,
    save_params,
)
from strank.sampling import RngStream


def loop_forward(params, X):
    """Unvectorized evaluation: explicit sums over units, ReLU between layers."""
    out = []
    last = len(params.weights) - 1
    for row in X:
        h = [float(v) for v in row]
        for k, (w, b) in enumerate(zip(params.weights, params.biases)):
            z = [sum(h[i] * float(w[i, j]) for i in range(len(h))) + float(b[j]) for j in range(w.shape[1])]
            h = z if k == last else [max(v, 0.0) for v in z]
        out.append(h)
    return np.array(out)


def test_default_layer_shapes():
    p = init_params(1, 128, 1, RngStream(0))
    assert [w.shape for w in p.weights] == [(1, 128), (128, 128), (128, 1)]
    assert [b.shape for b in p.biases] == [(128,), (128,), (1,)]


def test_he_scheme_has_zero_biases():
    p = init_params(1, 16, 1, RngStream(0), scheme="he")
    assert all(np.all(b == 0) for b in p.biases)


def test_uniform_scheme_bounds():
    p = init_params(1, 128, 1, RngStream(0))
    for w, b in zip(p.weights, p.biases):
        bound = 1 / np.sqrt(w.shape[0])
        assert np.abs(w).max() <= bound and np.abs(b).max() <= bound
    # first-layer kinks at -b/w spread over the unit interval
    kinks = -p.biases[0] / p.weights[0][0]
    assert ((kinks > 0) & (kinks < 1)).sum() > 10


def test_unknown_scheme():
    with pytest.raises(ArgumentError):
        init_params(1, 4, 1, RngStream(0), scheme="xavier")


def test_single_linear_layer_when_no_hidden():
    p = init_params(5, 0, 3, RngStream(0))
    assert [w.shape for w in p.weights] == [(5, 3)]


def test_init_deterministic():
    assert init_params(1, 16, 1, RngStream(4)) == init_params(1, 16, 1, RngStream(4))


def test_init_variance():
    w = init_params(128, 128, 1, RngStream(1), scheme="he").weights[1]
    assert abs(w.var() - 2 / 128) / (2 / 128) < 0.10
    w = init_params(128, 128, 1, RngStream(1)).weights[1]
    assert abs(w.var() - 1 / (3 * 128)) / (1 / (3 * 128)) < 0.10


def test_zero_weights_constant_output():
    p = MlpParams.zeros([1, 8, 8, 2])
    p.biases[-1][:] = [1.5, -2.0]
    out, _ = forward(p, np.random.default_rng(0).random((4, 1)))
    assert np.all(out == np.array([1.5, -2.0]))


@pytest.mark.parametrize("dims", [(1, 6, 1), (3, 5, 2), (2, 0, 3)])
def test_forward_matches_loop_oracle(dims):
    rng = RngStream(sum(dims))
    p = init_params(*dims, rng)
    p.flat[:] = rng.normal(size=p.flat.size)
    X = rng.normal(size=(7, dims[0]))
    out, _ = forward(p, X)
    np.testing.assert_allclose(out, loop_forward(p, X), rtol=0, atol=1e-12)


def test_forward_shape_mismatch():
    p = init_params(2, 4, 1, RngStream(0))
    with pytest.raises(ArgumentError):
        forward(p, np.zeros((3, 3)))


def test_backward_zero_output_grad():
    p = init_params(2, 4, 1, RngStream(0))
    _, cache = forward(p, np.ones((3, 2)))
    assert np.all(backward(p, cache, np.zeros((3, 1))).flat == 0)


def test_backward_linearity():
    rng = RngStream(3)
    p = init_params(2, 8, 2, rng)
    X = rng.normal(size=(5, 2))
    dout = rng.normal(size=(5, 2))
    _, cache = forward(p, X)
    np.testing.assert_allclose(backward(p, cache, 2 * dout).flat, 2 * backward(p, cache, dout).flat, rtol=1e-14)


def test_backward_mismatched_cache():
    p = init_params(2, 4, 1, RngStream(0))
    q = init_params(2, 5, 1, RngStream(0))
    _, cache = forward(q, np.ones((3, 2)))
    with pytest.raises(ArgumentError):
        backward(p, cache, np.zeros((3, 1)))


def _kink_distance(p, X):
    _, cache = forward(p, X)
    return min(np.abs(z).min() for z in cache.preacts) if cache.preacts else np.inf


def test_backward_finite_differences():
    rng = RngStream(21)
    step = 1e-5
    checked = 0
    while checked < 50:
        d, h, g = int(rng.integers(1, 4)), int(rng.integers(2, 7)), int(rng.integers(1, 4))
        p = init_params(d, h, g, rng)
        p.flat[:] += 0.1 * rng.normal(size=p.flat.size)
        X = rng.normal(size=(int(rng.integers(1, 5)), d))
        if _kink_distance(p, X) < 1e-3:
            continue  # central differences are invalid across a ReLU kink
        dout = rng.normal(size=(X.shape[0], g))
        _, cache = forward(p, X)
        analytic = backward(p, cache, dout).flat
        numeric = np.empty_like(analytic)
        for k in range(p.flat.size):
            orig = p.flat[k]
            p.flat[k] = orig + step
            up = np.sum(forward(p, X)[0] * dout)
            p.flat[k] = orig - step
            down = np.sum(forward(p, X)[0] * dout)
            p.flat[k] = orig
            numeric[k] = (up - down) / (2 * step)
        rel = np.max(np.abs(numeric - analytic)) / max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
        assert rel < 1e-5
        checked += 1


def test_checkpoint_round_trip(tmp_path):
    p = init_params(3, 4, 2, RngStream(0))
    save_params(p, tmp_path / "ckpt.bin")
    assert load_params(tmp_path / "ckpt.bin") == p
    header = (tmp_path / "ckpt.bin").read_bytes().split(b"\n", 1)[0]
    assert b"layer_sizes" in header
