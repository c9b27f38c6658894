import math

import numpy as np
import pytest

import loris


def tiny_frame():
    y = np.array([[1.2, 1, 3], [-0.4, 0, np.nan], [np.nan, 1, 0], [0.7, 0, 2]])
    frame = loris.DataFrame(y, ["gaussian", "bernoulli", "poisson"])
    atoms = []
    for j in range(3):
        x = np.zeros((4, 3))
        x[:, j] = 1.0
        atoms.append(x)
    return y, frame, loris.Dictionary(atoms, 4, 3)


def test_frame_round_trip():
    y, frame, d = tiny_frame()
    assert frame.shape == (4, 3)
    assert frame.observed == 10
    np.testing.assert_array_equal(np.isnan(frame.to_numpy()), np.isnan(y))
    assert d.q == 3 and d.d_x == 4.0
    assert len(d.to_numpy()) == 3


def test_fit_and_impute():
    _, frame, d = tiny_frame()
    f = loris.fit(frame, d, lambda_s=0.1, lambda_l=1.0)
    assert f.converged
    assert np.all(np.diff(f.trace["F"]) <= 1e-10 * (1 + np.abs(f.trace["F"][:-1])))
    assert f.theta.shape == (4, 3)
    mean = loris.impute(frame, d, f.alpha, f.theta)
    assert mean.shape == (4, 3)
    assert np.all((mean[:, 1] > 0) & (mean[:, 1] < 1))
    assert np.all(mean[:, 2] > 0)


def test_distributed_matches_central():
    s = loris.synth(n=20, p=10, theta_scale=3, missing_frac=0.2, links=["gaussian", "poisson"], seed=2)
    a = loris.fit(s["frame"], s["dictionary"], 0.5, 3.0, max_iters=100)
    b = loris.fit(s["frame"], s["dictionary"], 0.5, 3.0, max_iters=100, workers=4)
    np.testing.assert_array_equal(a.trace["F"], b.trace["F"])
    assert b.messages > 0


def test_top_svd_against_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(12, 7)) * (rng.random((12, 7)) < 0.4)
    sigma, u, v, ok = loris.top_svd(a, delta=1e-10, max_iters=100000)
    assert ok
    assert math.isclose(sigma, np.linalg.svd(a, compute_uv=False)[0], rel_tol=1e-9)
    assert math.isclose(abs(u @ a @ v), sigma, rel_tol=1e-9)


def test_penalties_and_baseline():
    s = loris.synth(n=20, p=10, seed=1)
    ls, ll = loris.theoretical_lambdas(s["frame"], s["dictionary"], window=(-1, 1))
    assert ls > 0 and ll > 0
    alpha, theta = loris.two_step(s["frame"], s["dictionary"], 1.0)
    assert alpha.shape == (s["dictionary"].q,) and theta.shape == (20, 10)


def test_errors_are_raised():
    with pytest.raises(loris.LorisError):
        loris.DataFrame(np.zeros((2, 2)), ["gaussian"])
    with pytest.raises(loris.LorisError):
        loris.DataFrame(np.full((1, 1), 0.5), ["bernoulli"])
