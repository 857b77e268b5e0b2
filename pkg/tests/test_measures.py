"""Atomic measures: curve discretizations, combinations, closedness, flows."""

import numpy as np
import pytest

from holovar import (AtomicMeasure, CurveSamples, Domain, FlowEscapeError,
                     InvalidInputError, TestBasis, closedness_residual,
                     convex_combination, from_curve, gauss_curve_measure,
                     jet_many, make_basis, monomial, pushforward_horizontal,
                     sample_curve, time_sine_probe, translation_bump_field)

from conftest import box_domain, line_measure, torus_domain


def test_constant_curve_measure():
    dom = box_domain()
    s = sample_curve(lambda t: (0.0, 0.0), lambda t: (0.0, 0.0), np.linspace(0, 1, 11))
    mu = from_curve(s, dom)
    assert mu.mass == pytest.approx(1.0, abs=1e-15)
    assert np.all(mu.X == 0.0) and np.all(mu.V == 0.0)
    assert np.allclose(mu.T, np.linspace(0, 1, 11))


def test_linear_curve_pairing_exact():
    dom = box_domain()
    s = sample_curve(lambda t: (t, 0.0), lambda t: (1.0, 0.0), np.linspace(0, 1, 11))
    mu = from_curve(s, dom)
    f = monomial(2, v_powers=(1, 0), kind="full")
    assert mu.pair(f) == pytest.approx(1.0, abs=1e-14)


def test_circular_velocity_square_integral():
    # gamma = (sin t, cos t): |gamma'|^2 = 1, so the pairing is exactly t0
    dom = box_domain()
    s = sample_curve(lambda t: (np.sin(t), np.cos(t)),
                     lambda t: (np.cos(t), -np.sin(t)), np.linspace(0, 1, 101))
    mu = from_curve(s, dom)
    speed2 = mu.pair(monomial(2, v_powers=(2, 0), kind="full")) \
        + mu.pair(monomial(2, v_powers=(0, 2), kind="full"))
    assert abs(speed2 - 1.0) <= 1e-4


def test_non_monotone_grid_rejected():
    with pytest.raises(InvalidInputError):
        CurveSamples(np.array([0.0, 0.5, 0.4, 1.0]), np.zeros((4, 1)), np.zeros((4, 1)))


def test_midpoint_rule_mass_and_nodes():
    dom = box_domain()
    s = sample_curve(lambda t: (t, 0.0), lambda t: (1.0, 0.0), np.linspace(0, 1, 11))
    mu = from_curve(s, dom, rule="midpoint")
    assert mu.natoms == 10
    assert mu.mass == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(InvalidInputError):
        from_curve(s, dom, rule="simpson")


def test_velocity_consistency_check():
    t = np.linspace(0, 1, 201)
    s = sample_curve(lambda u: (np.sin(u), 0.0), lambda u: (np.cos(u), 0.0), t)
    assert s.check_velocity_consistency() <= 1e-4


def test_convex_combination_identity():
    mu, _ = line_measure()
    out = convex_combination([(1.0, mu)])
    assert np.array_equal(out.X, mu.X)
    assert np.array_equal(out.W, mu.W)


def test_two_delta_lines_combination_shape():
    # half-weighted mixture of two velocity branches over a shared base line
    dom = Domain(n=2, t0=1.0, bounds=((0, 1), (0, 1)))
    t = np.linspace(0, 1, 51)
    up = from_curve(CurveSamples(t, np.column_stack([t, 0 * t]),
                                 np.column_stack([np.ones_like(t), np.ones_like(t)])), dom)
    dn = from_curve(CurveSamples(t, np.column_stack([t, 0 * t]),
                                 np.column_stack([np.ones_like(t), -np.ones_like(t)])), dom)
    mix = convex_combination([(0.5, up), (0.5, dn)])
    assert mix.natoms == up.natoms + dn.natoms
    assert mix.mass == pytest.approx(1.0, abs=1e-14)
    assert set(np.unique(mix.V[:, 1])) == {-1.0, 1.0}


def test_combination_validation():
    mu, _ = line_measure()
    with pytest.raises(InvalidInputError):
        convex_combination([(0.6, mu), (0.6, mu)])
    other, _ = line_measure(domain=torus_domain(n=2))
    with pytest.raises(InvalidInputError):
        convex_combination([(0.5, mu), (0.5, other)])


def test_closedness_defect_linear_in_measure():
    dom = box_domain()
    mu1, _ = line_measure(domain=dom)
    mu2, _ = line_measure(x0=(-0.5, 0.4), v0=(0.2, -0.3), domain=dom)
    basis = make_basis(dom, "base", 2, True)
    lam = 0.3
    mix = convex_combination([(lam, mu1), (1 - lam, mu2)])
    d1 = closedness_residual(mu1, basis).defects
    d2 = closedness_residual(mu2, basis).defects
    dm = closedness_residual(mix, basis).defects
    scale = np.maximum(np.abs(dm), 1.0)
    assert np.max(np.abs(dm - lam * d1 - (1 - lam) * d2) / scale) <= 1e-12


def test_combination_preserves_closedness():
    dom = box_domain()
    mu1, _ = line_measure(domain=dom)
    mu2, _ = line_measure(x0=(-0.5, 0.4), v0=(0.2, -0.3), domain=dom)
    basis = make_basis(dom, "base", 3, True)
    mix = convex_combination([(0.5, mu1), (0.5, mu2)])
    r1 = closedness_residual(mu1, basis).max_raw
    r2 = closedness_residual(mu2, basis).max_raw
    rm = closedness_residual(mix, basis).max_raw
    assert rm <= max(r1, r2) + 1e-12


def test_zero_probe_has_zero_defect():
    dom = box_domain()
    mu, _ = line_measure(domain=dom)
    zero = monomial(2, x_powers=(1, 0), t0=1.0, bump=1, coef=0.0)
    basis = TestBasis("base", 1, True, (zero,))
    assert closedness_residual(mu, basis).max_raw == 0.0


def test_closed_loop_residual_small():
    dom = torus_domain(n=2)
    t = np.linspace(0, 1, 401)
    r = 0.2
    s = sample_curve(lambda u: (0.5 + r * np.cos(2 * np.pi * u), 0.5 + r * np.sin(2 * np.pi * u)),
                     lambda u: (-2 * np.pi * r * np.sin(2 * np.pi * u),
                                2 * np.pi * r * np.cos(2 * np.pi * u)), t)
    mu = from_curve(s, dom)
    rep = closedness_residual(mu, make_basis(dom, "base", 3, True))
    assert rep.residual <= 1e-4


def test_branch_cancellation_probe():
    # phi = x2 sin(pi t): the +-1 fiber components cancel exactly
    from holovar.scenarios import two_branch_measure
    _, mu = two_branch_measure(101)
    phi = time_sine_probe(2, x_powers=(0, 1), k=1, t0=1.0)
    rep = closedness_residual(mu, TestBasis("base", 2, True, (phi,)))
    assert rep.max_raw <= 1e-14


def test_closedness_input_validation():
    dom = box_domain()
    mu, _ = line_measure(domain=dom)
    with pytest.raises(InvalidInputError):
        closedness_residual(mu, make_basis(dom, "base", 2, False))
    with pytest.raises(InvalidInputError):
        closedness_residual(mu, make_basis(dom, "full", 2, True, rank_check=False))


def test_pushforward_zero_is_bit_exact():
    mu, _ = line_measure()
    P = translation_bump_field((1.0, 0.0), 1.0)
    out = pushforward_horizontal(mu, P, 0.0)
    assert out is mu


def test_pushforward_preserves_closedness():
    dom = box_domain()
    mu, _ = line_measure(domain=dom, n_nodes=200)
    P = translation_bump_field((0.7, -0.2), 1.0)
    moved = pushforward_horizontal(mu, P, 0.4)
    rep = closedness_residual(moved, make_basis(dom, "base", 3, True))
    assert rep.residual <= 1e-6
    assert moved.mass == pytest.approx(mu.mass, abs=1e-15)


def test_pushforward_escape_raises():
    dom = Domain(n=1, t0=1.0, bounds=((0.0, 1.0),))
    s = sample_curve(lambda t: (0.9,), lambda t: (0.0,), np.linspace(0, 1, 21))
    mu = from_curve(s, dom)
    P = translation_bump_field((10.0,), 1.0)
    with pytest.raises(FlowEscapeError):
        pushforward_horizontal(mu, P, 1.0)


def test_atom_validation():
    dom = box_domain()
    with pytest.raises(InvalidInputError):
        AtomicMeasure(dom, [[0.0, 0.0]], [[0.0, 0.0]], [0.5], [-1.0])
    with pytest.raises(InvalidInputError):
        AtomicMeasure(dom, [[0.0, 0.0]], [[0.0, 0.0]], [2.5], [1.0])
    with pytest.raises(InvalidInputError):
        AtomicMeasure(dom, [[9.0, 0.0]], [[0.0, 0.0]], [0.5], [1.0])


def test_periodic_wrap():
    dom = torus_domain(n=1)
    mu = AtomicMeasure(dom, [[1.25]], [[0.5]], [0.5], [1.0])
    assert mu.X[0, 0] == pytest.approx(0.25)


def test_json_roundtrip(tmp_path):
    mu, _ = line_measure()
    path = tmp_path / "m.json"
    mu.save(str(path))
    back = AtomicMeasure.load(str(path))
    assert back.domain == mu.domain
    assert np.allclose(back.X, mu.X) and np.allclose(back.W, mu.W)


def test_gauss_curve_measure_spectral_closedness():
    dom = box_domain()
    mu, acc = gauss_curve_measure(dom, lambda t: (np.sin(t), np.cos(t)),
                                  lambda t: (np.cos(t), -np.sin(t)), 80,
                                  lambda t: (-np.sin(t), -np.cos(t)))
    rep = closedness_residual(mu, make_basis(dom, "base", 3, True))
    assert rep.residual <= 1e-12
    assert acc.shape == (80, 2)
