import numpy as np
import pytest

from bandfuse.nn import kernels, kernels_py


def _naive_conv3x3(x, w, b):
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    y = np.zeros((n, cout, h, wd))
    for s in range(n):
        for co in range(cout):
            for i in range(h):
                for j in range(wd):
                    acc = b[co]
                    for ci in range(cin):
                        for u in range(3):
                            for v in range(3):
                                ii, jj = i + u - 1, j + v - 1
                                if 0 <= ii < h and 0 <= jj < wd:
                                    acc += x[s, ci, ii, jj] * w[co, ci, u, v]
                    y[s, co, i, j] = acc
    return y


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    return kernels.available_backends()[request.param]


def _random_case(seed, n=2, cin=3, cout=4, h=5, w=4):
    rng = np.random.default_rng(seed)
    return (
        np.ascontiguousarray(rng.standard_normal((n, cin, h, w))),
        np.ascontiguousarray(rng.standard_normal((cout, cin, 3, 3))),
        np.ascontiguousarray(rng.standard_normal(cout)),
    )


def test_forward_matches_naive(backend):
    x, w, b = _random_case(0)
    np.testing.assert_allclose(
        backend.conv3x3_forward(x, w, b), _naive_conv3x3(x, w, b), atol=1e-12)


def test_backends_agree_exactly_on_gradients():
    backends = kernels.available_backends()
    if len(backends) < 2:
        pytest.skip("compiled backend not built")
    x, w, b = _random_case(1)
    gout = np.ascontiguousarray(np.random.default_rng(2).standard_normal(
        (x.shape[0], w.shape[0], x.shape[2], x.shape[3])))
    results = [backends[k].conv3x3_backward(x, w, gout) for k in sorted(backends)]
    for got, ref in zip(results[0], results[1]):
        np.testing.assert_allclose(got, ref, atol=1e-12)


def test_backward_finite_difference(backend):
    x, w, b = _random_case(3, n=1, cin=2, cout=2, h=4, w=3)
    gout = np.ascontiguousarray(np.random.default_rng(4).standard_normal((1, 2, 4, 3)))
    gx, gw, gb = backend.conv3x3_backward(x, w, gout)
    eps = 1e-6

    def loss(xv, wv, bv):
        return float(np.sum(backend.conv3x3_forward(xv, wv, bv) * gout))

    for arr, grad in ((x, gx), (w, gw), (b, gb)):
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss(x, w, b)
            flat[i] = orig - eps
            lm = loss(x, w, b)
            flat[i] = orig
            assert (lp - lm) / (2 * eps) == pytest.approx(gflat[i], rel=1e-5, abs=1e-7)


def test_forward_1x1_input(backend):
    x = np.full((1, 1, 1, 1), 5.0)
    w = np.ones((1, 1, 3, 3))
    b = np.zeros(1)
    np.testing.assert_allclose(backend.conv3x3_forward(x, w, b), [[[[5.0]]]])


def test_selected_backend_is_exposed():
    assert kernels.BACKEND in kernels.available_backends()
