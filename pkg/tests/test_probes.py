"""Probe functions: construction, exact jets, derivative operators."""

import numpy as np
import pytest

from holovar import (BasisConstructionError, Domain, PhasePoint, TestBasis,
                     combine, jet, jet_many, lift_differential, make_basis,
                     monomial, time_sine_probe)
from holovar.probes import d_dt, d_dx, d_dv

from conftest import box_domain, torus_domain


def sample_points(rng, domain, m=100, vbox=2.0):
    X = np.empty((m, domain.n))
    for i in range(domain.n):
        if domain.periodic[i]:
            X[:, i] = rng.uniform(0, 1, m)
        else:
            lo, hi = domain.bounds[i]
            X[:, i] = rng.uniform(lo, hi, m)
    V = rng.uniform(-vbox, vbox, (m, domain.n))
    T = rng.uniform(0.1 * domain.t0, 0.9 * domain.t0, m)
    return X, V, T


def test_periodic_degree1_vanishing_contents():
    basis = make_basis(torus_domain(), "base", 1, True)
    ids = set(basis.ids())
    assert {"bump", "cos(2pi*1*x0)*bump", "sin(2pi*1*x0)*bump"} <= ids


def test_full_degree2_box_contents():
    basis = make_basis(box_domain(), "full", 2, False)
    ids = set(basis.ids())
    assert "v0*v1" in ids
    assert "x1*v1" in ids


def test_gram_full_rank_on_grid():
    # rank oracle on a dense sample grid, 10 points per coordinate
    dom = torus_domain(n=1)
    basis = make_basis(dom, "base", 3, True)
    x = np.linspace(0, 1, 10, endpoint=False)
    t = np.linspace(0.05, 0.95, 10)
    X, T = np.meshgrid(x, t, indexing="ij")
    Xf = X.ravel()[:, None]
    Vf = np.zeros_like(Xf)
    vals = np.column_stack([jet_many(f, Xf, Vf, T.ravel(), order=0).value for f in basis])
    assert np.linalg.matrix_rank(vals.T @ vals) == len(basis)


def test_degenerate_basis_rejected():
    f = monomial(1, x_powers=(1,), t0=1.0, bump=1)
    dupl = TestBasis("base", 1, True, (f, f))
    from holovar.probes import _check_rank
    with pytest.raises(BasisConstructionError):
        _check_rank(torus_domain(), dupl)


def test_jet_closed_form_example():
    f = time_sine_probe(2, x_powers=(0, 1), v_powers=(0, 1), k=1, t0=1.0)
    j = jet(f, PhasePoint([0.3, 0.0], [1.0, -1.0], 0.5))
    assert j.value == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(j.grad_x, [0.0, -1.0])
    assert np.allclose(j.grad_v, [0.0, 0.0])


def test_constant_probe():
    f = monomial(2, kind="full")
    j = jet(f, PhasePoint([0.5, 0.5], [1.0, 2.0], 0.3))
    assert j.value == 1.0
    assert np.all(j.grad_x == 0) and np.all(j.grad_v == 0) and j.dt == 0
    assert np.all(j.hess_vv == 0) and np.all(j.hess_xv == 0) and np.all(j.dvt == 0)


def _fd_check_function(f, X, V, T, h=1e-5):
    """Compare all jet entries against central differences."""
    j = jet_many(f, X, V, T)

    def val(Xp, Vp, Tp):
        return jet_many(f, Xp, Vp, Tp, order=0).value

    def close(a, b):
        return np.all(np.abs(a - b) <= np.maximum(1e-7, 1e-6 * np.abs(a)))

    n = X.shape[1]
    for i in range(n):
        e = np.zeros_like(X)
        e[:, i] = h
        assert close(j.grad_x[:, i], (val(X + e, V, T) - val(X - e, V, T)) / (2 * h))
        assert close(j.grad_v[:, i], (val(X, V + e, T) - val(X, V - e, T)) / (2 * h))
    assert close(j.dt, (val(X, V, T + h) - val(X, V, T - h)) / (2 * h))
    # second derivatives against differences of analytic first derivatives
    for i in range(n):
        e = np.zeros_like(V)
        e[:, i] = h
        gv_p = jet_many(f, X, V + e, T, order=1).grad_v
        gv_m = jet_many(f, X, V - e, T, order=1).grad_v
        assert close(j.hess_vv[:, i, :].ravel(), ((gv_p - gv_m) / (2 * h)).ravel())
        gx_p = jet_many(f, X + e, V, T, order=1).grad_v
        gx_m = jet_many(f, X - e, V, T, order=1).grad_v
        assert close(j.hess_xv[:, i, :].ravel(), ((gx_p - gx_m) / (2 * h)).ravel())
    tp = jet_many(f, X, V, T + h, order=1).grad_v
    tm = jet_many(f, X, V, T - h, order=1).grad_v
    assert close(j.dvt.ravel(), ((tp - tm) / (2 * h)).ravel())


def test_jets_match_finite_differences():
    rng = np.random.default_rng(7)
    dom_box = box_domain()
    dom_tor = Domain(n=2, t0=1.0, periodic=(True, True))
    for dom, kind, deg, bv in [(dom_box, "full", 3, True), (dom_tor, "full", 2, True),
                               (dom_box, "base", 3, False)]:
        basis = make_basis(dom, kind, deg, bv, rank_check=False)
        X, V, T = sample_points(rng, dom)
        for f in basis:
            _fd_check_function(f, X, V, T)


def test_time_trig_probe_matches_finite_differences():
    rng = np.random.default_rng(11)
    dom = box_domain()
    X, V, T = sample_points(rng, dom)
    f = time_sine_probe(2, x_powers=(1, 1), v_powers=(2, 0), k=2, t0=1.0)
    _fd_check_function(f, X, V, T)


def test_boundary_vanishing_at_endpoints():
    # value and all spatial/fiber derivatives vanish at t in {0, t0};
    # the plain time derivative keeps the bump-slope contribution.
    dom = box_domain()
    basis = make_basis(dom, "full", 2, True, rank_check=False)
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, (8, 2))
    V = rng.uniform(-1, 1, (8, 2))
    for tval in (0.0, dom.t0):
        T = np.full(8, tval)
        for f in basis:
            j = jet_many(f, X, V, T)
            assert np.max(np.abs(j.value)) <= 1e-14
            assert np.max(np.abs(j.grad_x)) <= 1e-14
            assert np.max(np.abs(j.grad_v)) <= 1e-14
            assert np.max(np.abs(j.hess_vv)) <= 1e-14
            assert np.max(np.abs(j.hess_xv)) <= 1e-14


def test_lift_differential_matches_identity():
    # d(phi)(v, 1) = phi_x . v + phi_t holds exactly by construction
    dom = torus_domain(n=2)
    basis = make_basis(dom, "base", 2, True, rank_check=False)
    rng = np.random.default_rng(5)
    X = rng.uniform(0, 1, (50, 2))
    V = rng.normal(size=(50, 2))
    T = rng.uniform(0.05, 0.95, 50)
    for phi in basis:
        g = lift_differential(phi)
        jp = jet_many(phi, X, V, T, order=1)
        expected = np.sum(jp.grad_x * V, axis=1) + jp.dt
        assert np.max(np.abs(jet_many(g, X, V, T, order=0).value - expected)) <= 1e-13


def test_derivative_operators_consistency():
    dom = box_domain()
    f = monomial(2, x_powers=(2, 1), v_powers=(1, 0), t_power=1, bump=1)
    rng = np.random.default_rng(9)
    X, V, T = sample_points(rng, dom, m=30)
    j = jet_many(f, X, V, T)
    assert np.allclose(jet_many(d_dx(f, 0), X, V, T, order=0).value, j.grad_x[:, 0])
    assert np.allclose(jet_many(d_dv(f, 0), X, V, T, order=0).value, j.grad_v[:, 0])
    assert np.allclose(jet_many(d_dt(f), X, V, T, order=0).value, j.dt)


def test_combination_is_linear():
    dom = box_domain()
    f = monomial(2, x_powers=(1, 0), kind="full")
    g = monomial(2, v_powers=(0, 2), kind="full")
    h = combine([f, g], [2.0, -0.5])
    rng = np.random.default_rng(1)
    X, V, T = sample_points(rng, dom, m=20)
    lhs = jet_many(h, X, V, T, order=0).value
    rhs = 2.0 * jet_many(f, X, V, T, order=0).value - 0.5 * jet_many(g, X, V, T, order=0).value
    assert np.max(np.abs(lhs - rhs)) <= 1e-14


def test_degree_must_be_positive():
    from holovar import InvalidInputError
    with pytest.raises(InvalidInputError):
        make_basis(torus_domain(), "base", 0, True)
