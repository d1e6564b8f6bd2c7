import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from bykovlab.errors import ConfigError, CurvesTooClose, NumericalFailure
from bykovlab.manifolds import (crossing_linking, gauss_linking, linking_number, linking_on_sphere,
                                projection_pole, separation_ratios, stereographic)

N = 400


def circle(center, normal_axis, n=N, r=1.0, reverse=False):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    if reverse:
        t = t[::-1]
    c, s = r * np.cos(t), r * np.sin(t)
    pts = {2: np.c_[c, s, 0 * t], 1: np.c_[c, 0 * t, s], 0: np.c_[0 * t, c, s]}[normal_axis]
    return pts + np.asarray(center, float)


def hopf_pair(n=N):
    # second circle turned so that the standard right-handed Hopf link has linking +1
    return circle((0, 0, 0), 2, n), circle((1, 0, 0), 1, n, reverse=True)


def torus_link(k, n=2000):
    """Two parallel (1, k) curves on a torus: linking number k."""
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    out = []
    for ph in (0.0, np.pi):
        u, v = t, k * t + ph
        R, r = 3.0, 1.0
        out.append(np.c_[(R + r * np.cos(v)) * np.cos(u), (R + r * np.cos(v)) * np.sin(u), r * np.sin(v)])
    return out


def test_hopf_link_is_one():
    a, b = hopf_pair()
    assert linking_number(a, b) == 1
    assert linking_number(a, b, method="gauss") == 1
    assert abs(gauss_linking(a, b) - 1) < 0.01


def test_orientation_flips_sign():
    a, b = hopf_pair()
    assert linking_number(a, b[::-1]) == -1
    assert linking_number(b, a) == 1


def test_unlinked_circles_are_zero():
    a = circle((0, 0, 0), 2)
    b = circle((3, 0, 0), 2)
    c = circle((0, 0, 2), 2)   # parallel planes
    assert linking_number(a, b) == 0
    assert linking_number(a, c) == 0
    assert abs(gauss_linking(a, c)) < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_torus_links(k):
    a, b = torus_link(k)
    assert linking_number(a, b, method="gauss") == linking_number(a, b, method="crossings")
    assert abs(linking_number(a, b)) == k


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_crossing_count_independent_of_projection(seed):
    a, b = torus_link(3)
    assert crossing_linking(np.vstack([a, a[:1]]), np.vstack([b, b[:1]]), seed) == linking_number(a, b, method="gauss")


def test_too_close_is_rejected():
    a = circle((0, 0, 0), 2, n=20)
    b = circle((1, 0, 0), 1, n=20)
    with pytest.raises(CurvesTooClose):
        linking_number(a, b)
    ratios, _ = separation_ratios(np.vstack([a, a[:1]]), np.vstack([b, b[:1]]))
    assert ratios.min() < 10


def test_bad_method():
    a, b = hopf_pair()
    with pytest.raises(ConfigError):
        linking_number(a, b, method="magic")


def test_non_integer_residual_is_rejected():
    # an open-looking pair of curves: the sum is not close to an integer
    t = np.linspace(0, np.pi, 200)
    a = np.c_[np.cos(t), np.sin(t), 0 * t]
    b = np.c_[1 + np.cos(t), 0 * t, np.sin(t)] + [0, 0, 0.0]
    with pytest.raises((NumericalFailure, CurvesTooClose)):
        linking_number(a, b, separation=0.5, residual_tol=0.01, method="gauss")


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-1, 1), st.floats(-1, 1), st.floats(-5, 5))
def test_rigid_motions_preserve_linking(angle, ax, ay, shift):
    a, b = hopf_pair(300)
    axis = np.array([ax, ay, 1.0])
    R = Rotation.from_rotvec(angle * axis / np.linalg.norm(axis)).as_matrix()
    assert linking_number(a @ R.T + shift, b @ R.T + shift) == 1


def test_hopf_fibres_on_the_sphere():
    t = np.linspace(0, 2 * np.pi, 600, endpoint=False)
    a = np.c_[np.cos(t), np.sin(t), 0 * t, 0 * t]
    b = np.c_[0 * t, 0 * t, np.cos(t), np.sin(t)]
    c = np.c_[np.cos(t), 0 * t, 0 * t, np.sin(t)] * 0.3 + np.array([0, 0.9, 0, 0])
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    assert abs(linking_on_sphere(a, b)) == 1
    assert linking_on_sphere(a, b) == linking_on_sphere(a, b, seed=3)
    assert linking_on_sphere(b, c) == 0


def test_stereographic_projection():
    pole = projection_pole(np.array([[0, 0, 0, 1.0]]))
    X = np.random.default_rng(0).standard_normal((20, 4))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    Y = stereographic(X, pole)
    assert Y.shape == (20, 3) and np.all(np.isfinite(Y))
    # injective on the sample
    d = np.linalg.norm(Y[:, None] - Y[None], axis=-1)
    assert np.all(d[~np.eye(20, dtype=bool)] > 0)
