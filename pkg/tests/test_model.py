from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bykovlab.errors import ConfigError, NotTangent, ReducedSystemUndefined, RegimeViolation
from bykovlab.model import (GAMMA1, GAMMA2, SYMMETRY_CLASSES, V, W, ModelParams, Monomial, PerturbationTerm,
                            classify_symmetry, equilibria, eval_field, eval_reduced, from_spherical, jacobian,
                            lambda1_term, lambda2_term, load_catalog, load_params, psi, saddle_ratio,
                            tangential_spectrum, to_spherical)

from conftest import unit

lams = st.floats(-0.2, 0.2)


def fd_jacobian(p, x, h=1e-6):
    cols = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        cols.append((eval_field(p, x + e) - eval_field(p, x - e)) / (2 * h))
    return np.array(cols).T


def test_defaults_are_reference_values():
    p = ModelParams()
    assert (p.alpha1, p.alpha2, p.lambda1, p.lambda2) == (1.0, -0.1, 0.0, 0.0)


@pytest.mark.parametrize("a1,a2", [(1.0, 0.1), (-1.0, -0.1), (0.5, -0.6), (1.0, 0.0)])
def test_regime_violation(a1, a2):
    with pytest.raises(RegimeViolation):
        ModelParams(alpha1=a1, alpha2=a2)


def test_regime_check_can_be_disabled():
    assert ModelParams(alpha1=1.0, alpha2=0.5, enforce_regime=False).alpha2 == 0.5


def test_non_finite_rejected():
    with pytest.raises(ConfigError):
        ModelParams(lambda1=float("nan"))


def test_param_dict_round_trip_and_unknown_keys():
    p = ModelParams(lambda1=0.03, lambda2=0.01)
    assert ModelParams.from_dict(p.to_dict()) == p
    with pytest.raises(ConfigError):
        ModelParams.from_dict({"alpha1": 1.0, "beta": 2.0})


def test_load_params_json_and_text(tmp_path):
    a = tmp_path / "p.json"
    a.write_text('{"alpha1": 1.0, "alpha2": -0.1, "lambda1": 0.05}')
    b = tmp_path / "p.txt"
    b.write_text("alpha1 = 1.0  # comment\nalpha2 = -0.1\nlambda1 = 0.05\n")
    assert load_params(a) == load_params(b) == ModelParams(lambda1=0.05)


@settings(max_examples=60, deadline=None)
@given(lams, lams, st.floats(0.5, 1.5))
def test_radial_identity(l1, l2, r):
    rng = np.random.default_rng(0)
    x = r * unit(200, rng)
    p = ModelParams(lambda1=l1, lambda2=l2)
    lhs = np.sum(x * eval_field(p, x), axis=1)
    assert np.max(np.abs(lhs - (1 - r**2) * r**2)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(lams, lams)
def test_jacobian_matches_finite_differences(l1, l2):
    rng = np.random.default_rng(1)
    p = ModelParams(lambda1=l1, lambda2=l2)
    for x in 1.2 * unit(5, rng):
        assert np.allclose(jacobian(p, x), fd_jacobian(p, x), atol=1e-7)


def test_equilibria_are_zeros_for_all_lambdas():
    for l1 in (0.0, 0.05, -0.1):
        for l2 in (0.0, 0.05):
            p = ModelParams(lambda1=l1, lambda2=l2)
            assert np.max(np.abs(eval_field(p, V))) == 0.0
            assert np.max(np.abs(eval_field(p, W))) == 0.0


def test_eigenvalues_closed_form(ref):
    a1, a2 = ref.alpha1, ref.alpha2
    for eq, eps in zip(equilibria(ref), (1.0, -1.0)):
        vals, radial = tangential_spectrum(ref, eq.location)
        expect = sorted([complex(a2 - eps * a1, 1), complex(a2 - eps * a1, -1), complex(a2 + eps * a1, 0)],
                        key=lambda z: (z.real, z.imag))
        got = sorted(vals, key=lambda z: (round(z.real, 6), z.imag))
        assert np.allclose(got, expect, atol=1e-9)
        assert radial == pytest.approx(-2.0, abs=1e-12)
        assert np.allclose(sorted(eq.eigenvalues, key=lambda z: (z.real, z.imag)), expect, atol=1e-15)


def test_saddle_indices_and_ratio(ref):
    v, w = equilibria(ref)
    assert (v.C, v.E) == pytest.approx((1.1, 0.9))
    assert (w.C, w.E) == pytest.approx((1.1, 0.9))
    assert v.morse_index != w.morse_index
    assert v.delta == pytest.approx(1.1 / 0.9)
    assert abs(saddle_ratio(ref) - (1.1 / 0.9) ** 2) < 1e-12
    assert saddle_ratio(ref) == pytest.approx(1.49383, abs=5e-6)


def test_spherical_round_trip(rng):
    x = unit(500, rng)
    x[:, 2] = np.abs(x[:, 2])  # the chart needs sin(phi) >= 0 on the x3 branch used below
    th, ph, va = to_spherical(x)
    assert np.allclose(from_spherical(th, ph, va), x, atol=1e-13)


def test_reduced_system_matches_full_field(rng):
    p = ModelParams(lambda1=0.07)
    for _ in range(20):
        th, ph, t = rng.uniform(0.2, 2.9), rng.uniform(0.2, 2.9), rng.uniform(0, 6)
        x = from_spherical(th, ph, t)
        h = 1e-6
        f = eval_field(p, x)
        # project the field on the coordinate vectors of the chart
        dth = (from_spherical(th + h, ph, t) - from_spherical(th - h, ph, t)) / (2 * h)
        dph = (from_spherical(th, ph + h, t) - from_spherical(th, ph - h, t)) / (2 * h)
        dva = (from_spherical(th, ph, t + h) - from_spherical(th, ph, t - h)) / (2 * h)
        coef = np.linalg.lstsq(np.stack([dth, dph, dva], axis=1), f, rcond=None)[0]
        assert coef[2] == pytest.approx(1.0, abs=1e-6)   # varphi' = 1
        fr = eval_reduced(p, th, ph, t)
        assert coef[0] == pytest.approx(fr[0], abs=1e-6)
        assert coef[1] == pytest.approx(fr[1], abs=1e-6)


def test_reduced_system_needs_lambda2_zero():
    with pytest.raises(ReducedSystemUndefined):
        eval_reduced(ModelParams(lambda2=0.01), 1.0, 1.0, 0.0)


def test_organizing_center_equivariance(rng):
    p = ModelParams()
    f = lambda x: eval_field(p, x)
    x = unit(100, rng)
    for g in (GAMMA1, GAMMA2, psi(0.3), psi(2.0)):
        assert np.max(np.abs(f(g(x)) - g(f(x)))) < 1e-13


def test_symmetry_breaking_terms():
    assert classify_symmetry(lambda1_term()) == "Z2(gamma1)"
    assert classify_symmetry(lambda2_term()) == "Z2(gamma2)"


def test_lambda_terms_are_the_field_increments(rng):
    x = unit(50, rng)
    d1 = eval_field(ModelParams(lambda1=1.0), x) - eval_field(ModelParams(), x)
    d2 = eval_field(ModelParams(lambda2=1.0), x) - eval_field(ModelParams(), x)
    assert np.allclose(d1, lambda1_term()(x), atol=1e-14)
    assert np.allclose(d2, lambda2_term()(x), atol=1e-14)


def test_classifier_rejects_non_tangent_and_non_cubic():
    radial = PerturbationTerm((Monomial(Fraction(1), (3, 0, 0, 0), 0),), "", "x1^3 e1")
    with pytest.raises(NotTangent):
        classify_symmetry(radial)
    quad = PerturbationTerm((Monomial(Fraction(1), (1, 1, 0, 0), 0),), "", "x1x2 e1")
    with pytest.raises(ConfigError):
        classify_symmetry(quad)


def test_classifier_hand_examples():
    def term(*mons):
        return PerturbationTerm(tuple(Monomial(Fraction(c), e, t) for c, e, t in mons))

    # rotation generator times an invariant: full symmetry
    assert classify_symmetry(term((1, (0, 1, 0, 2), 0), (-1, (1, 0, 0, 2), 1))) == "SO(2)xZ2(gamma2)"
    # odd in x3: rotation-equivariant but breaks gamma2
    assert classify_symmetry(term((1, (0, 1, 1, 1), 0), (-1, (1, 0, 1, 1), 1))) == "SO(2)"
    # even in x3 along the x3 axis: breaks gamma2, ignores the rotation plane
    assert classify_symmetry(term((1, (0, 0, 0, 3), 2), (-1, (0, 0, 1, 2), 3))) == "SO(2)"
    # x1x2 factor: only the half turn gamma1 survives
    assert classify_symmetry(term((1, (1, 1, 0, 1), 2), (-1, (1, 1, 1, 0), 3))) == "Z2(gamma1)"


def test_catalog_loads():
    terms = load_catalog()
    assert len(terms) > 0
    assert all(t.claimed_symmetry in SYMMETRY_CLASSES for t in terms)
