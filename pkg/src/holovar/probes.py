"""Analytic probe functions with exact derivatives up to second order.

Probes are finite sums of separable terms: trigonometric modes in periodic
coordinates, monomials in box coordinates and velocities, and a time factor
made of a polynomial, an optional boundary bump t(t0-t)/t0^2, and an
optional sine/cosine.  Every derivative is closed-form; probe error never
pollutes a weak-equation residual.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .domain import Domain, PhasePoint, as_phase_arrays
from .errors import BasisConstructionError, InvalidInputError

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# 1-D factors

@dataclass(frozen=True)
class TimeFactor:
    """poly(t) * bump(t)^bump_pow * trig(omega * t), bump = t(t0-t)/t0^2."""

    t0: float
    coeffs: tuple = (1.0,)
    bump_pow: int = 0
    trig: tuple | None = None  # ("sin"|"cos", omega)

    def is_one(self) -> bool:
        return self.bump_pow == 0 and self.trig is None and self.coeffs == (1.0,)


def _poly_eval(coeffs, t):
    c = np.asarray(coeffs, dtype=float)
    val = np.polynomial.polynomial.polyval(t, c)
    d1 = np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(c)) if len(c) > 1 else np.zeros_like(t)
    d2 = (
        np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(c, 2))
        if len(c) > 2
        else np.zeros_like(t)
    )
    return val, d1, d2


def _bump_eval(t0, b, t):
    if b == 0:
        one = np.ones_like(t)
        zero = np.zeros_like(t)
        return one, zero, zero
    u = t * (t0 - t) / t0**2
    u1 = (t0 - 2.0 * t) / t0**2
    u2 = -2.0 / t0**2
    if b == 1:
        return u, u1, np.full_like(t, u2)
    val = u**b
    d1 = b * u ** (b - 1) * u1
    d2 = b * (b - 1) * u ** (b - 2) * u1**2 + b * u ** (b - 1) * u2
    return val, d1, d2


def _trig_eval(trig, t):
    if trig is None:
        one = np.ones_like(t)
        zero = np.zeros_like(t)
        return one, zero, zero
    kind, om = trig
    if kind == "sin":
        val = np.sin(om * t)
        d1 = om * np.cos(om * t)
    else:
        val = np.cos(om * t)
        d1 = -om * np.sin(om * t)
    d2 = -(om**2) * val
    return val, d1, d2


def eval_time_factor(tf: TimeFactor, t: np.ndarray):
    p, p1, p2 = _poly_eval(tf.coeffs, t)
    b, b1, b2 = _bump_eval(tf.t0, tf.bump_pow, t)
    s, s1, s2 = _trig_eval(tf.trig, t)
    val = p * b * s
    d1 = p1 * b * s + p * b1 * s + p * b * s1
    d2 = (
        p2 * b * s
        + p * b2 * s
        + p * b * s2
        + 2.0 * (p1 * b1 * s + p1 * b * s1 + p * b1 * s1)
    )
    return val, d1, d2


def _xfactor_eval(factor, xi: np.ndarray):
    kind = factor[0]
    if kind == "poly":
        p = factor[1]
        if p == 0:
            one = np.ones_like(xi)
            zero = np.zeros_like(xi)
            return one, zero, zero
        val = xi**p
        d1 = p * xi ** (p - 1)
        d2 = p * (p - 1) * xi ** (p - 2) if p >= 2 else np.zeros_like(xi)
        return val, d1, d2
    k = factor[1]
    w = TWO_PI * k
    if kind == "cos":
        val = np.cos(w * xi)
        d1 = -w * np.sin(w * xi)
    elif kind == "sin":
        val = np.sin(w * xi)
        d1 = w * np.cos(w * xi)
    else:
        raise InvalidInputError(f"unknown factor kind {kind!r}")
    d2 = -(w**2) * val
    return val, d1, d2


# ---------------------------------------------------------------------------
# Terms and functions

@dataclass(frozen=True)
class Term:
    """coef * prod_i xf_i(x_i) * prod_i v_i^p_i * timefactor(t)."""

    coef: float
    xf: tuple  # ((coord, factor), ...) sorted by coord
    vf: tuple  # ((coord, power), ...) sorted by coord, powers >= 1
    tf: TimeFactor


def _mk_term(coef, xf_map, vf_map, tf) -> Term:
    xf = tuple(sorted((i, f) for i, f in xf_map.items() if f != ("poly", 0)))
    vf = tuple(sorted((i, p) for i, p in vf_map.items() if p != 0))
    return Term(float(coef), xf, vf, tf)


@dataclass(frozen=True)
class Jet2:
    """Value and derivatives of a probe at one or many phase points.

    Batched shapes: value (m,), grad_x/grad_v/dvt (m, n), dt (m,),
    hess_vv/hess_xv (m, n, n), with hess_xv[a, i, j] = d2 f / dx_i dv_j.
    """

    value: np.ndarray
    grad_x: np.ndarray
    grad_v: np.ndarray
    dt: np.ndarray
    hess_vv: np.ndarray | None = None
    hess_xv: np.ndarray | None = None
    dvt: np.ndarray | None = None


@dataclass(frozen=True)
class TestFunction:
    kind: str  # "base" (x, t) or "full" (x, v, t)
    n: int
    terms: tuple
    boundary_vanishing: bool
    degree: int
    fid: str

    def __call__(self, X, V, T):
        return jet_many(self, X, V, T, order=0).value

    def scaled(self, a: float) -> "TestFunction":
        terms = tuple(Term(a * t.coef, t.xf, t.vf, t.tf) for t in self.terms)
        return TestFunction(self.kind, self.n, terms, self.boundary_vanishing, self.degree, f"{a}*({self.fid})")


def combine(funcs, coeffs, fid=None) -> TestFunction:
    """Linear combination sum_j coeffs[j] * funcs[j] as one TestFunction."""
    if not funcs:
        raise InvalidInputError("cannot combine an empty function list")
    kind = "full" if any(f.kind == "full" for f in funcs) else "base"
    n = funcs[0].n
    terms = []
    for f, a in zip(funcs, coeffs):
        if f.n != n:
            raise InvalidInputError("mixed dimensions in combination")
        if a == 0.0:
            continue
        terms.extend(Term(a * t.coef, t.xf, t.vf, t.tf) for t in f.terms)
    return TestFunction(
        kind,
        n,
        tuple(terms),
        all(f.boundary_vanishing for f in funcs),
        max(f.degree for f in funcs),
        fid or "combination",
    )


def jet_many(f: TestFunction, X, V, T, order: int = 2) -> Jet2:
    """Evaluate value and derivatives at batched points.

    order=0 computes only values, order=1 adds first derivatives, order=2
    adds hess_vv, hess_xv and dvt.  Base-kind functions report zero fiber
    derivatives rather than raising.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    m, n = X.shape
    value = np.zeros(m)
    grad_x = np.zeros((m, n))
    grad_v = np.zeros((m, n))
    dt = np.zeros(m)
    hess_vv = np.zeros((m, n, n)) if order >= 2 else None
    hess_xv = np.zeros((m, n, n)) if order >= 2 else None
    dvt = np.zeros((m, n)) if order >= 2 else None

    for term in f.terms:
        xparts = [(i, _xfactor_eval(fac, X[:, i])) for i, fac in term.xf]
        vparts = [(i, _xfactor_eval(("poly", p), V[:, i])) for i, p in term.vf]
        tpart = eval_time_factor(term.tf, T)

        def prod(x_orders=(), v_orders=(), t_order=0):
            out = np.full(m, term.coef)
            xo = dict(x_orders)
            vo = dict(v_orders)
            for i, (v0, v1, v2) in xparts:
                out = out * (v0, v1, v2)[xo.get(i, 0)]
            for i, (v0, v1, v2) in vparts:
                out = out * (v0, v1, v2)[vo.get(i, 0)]
            out = out * tpart[t_order]
            return out

        value += prod()
        if order < 1:
            continue
        xidx = [i for i, _ in xparts]
        vidx = [i for i, _ in vparts]
        for i in xidx:
            grad_x[:, i] += prod(x_orders=((i, 1),))
        for i in vidx:
            grad_v[:, i] += prod(v_orders=((i, 1),))
        dt += prod(t_order=1)
        if order < 2:
            continue
        for a, i in enumerate(vidx):
            hess_vv[:, i, i] += prod(v_orders=((i, 2),))
            for j in vidx[a + 1:]:
                hij = prod(v_orders=((i, 1), (j, 1)))
                hess_vv[:, i, j] += hij
                hess_vv[:, j, i] += hij
        for i in xidx:
            for j in vidx:
                hess_xv[:, i, j] += prod(x_orders=((i, 1),), v_orders=((j, 1),))
        for j in vidx:
            dvt[:, j] += prod(v_orders=((j, 1),), t_order=1)

    return Jet2(value, grad_x, grad_v, dt, hess_vv, hess_xv, dvt)


def jet(f: TestFunction, p: PhasePoint, order: int = 2) -> Jet2:
    """Jet at a single phase point; entries keep batch dimension 1 dropped."""
    X, V, T = as_phase_arrays(p)
    j = jet_many(f, X, V, T, order=order)
    squeeze = lambda a: None if a is None else (a[0] if a.ndim else a)
    return Jet2(
        float(j.value[0]),
        j.grad_x[0],
        j.grad_v[0],
        float(j.dt[0]),
        squeeze(j.hess_vv),
        squeeze(j.hess_xv),
        squeeze(j.dvt),
    )


def probe_scale(f: TestFunction, X, V, T) -> float:
    """Sup over the given points of the first-derivative norm of f."""
    j = jet_many(f, X, V, T, order=1)
    g2 = np.sum(j.grad_x**2, axis=1) + np.sum(j.grad_v**2, axis=1) + j.dt**2
    return float(np.sqrt(np.max(g2))) if g2.size else 0.0


# ---------------------------------------------------------------------------
# Derivative operators (term surgery; everything stays closed-form)

def _dx_factor(factor):
    """Derivative of a 1-D x/v factor: returns (multiplier, new_factor) or None."""
    kind = factor[0]
    if kind == "poly":
        p = factor[1]
        if p == 0:
            return None
        return float(p), ("poly", p - 1)
    k = factor[1]
    w = TWO_PI * k
    if kind == "cos":
        return -w, ("sin", k)
    return w, ("cos", k)


def d_dx(f: TestFunction, i: int) -> TestFunction:
    terms = []
    for term in f.terms:
        xf = dict(term.xf)
        if i not in xf:
            continue
        d = _dx_factor(xf[i])
        if d is None:
            continue
        mult, new = d
        xf[i] = new
        terms.append(_mk_term(term.coef * mult, xf, dict(term.vf), term.tf))
    return TestFunction(f.kind, f.n, tuple(terms), False, f.degree, f"d/dx{i}({f.fid})")


def d_dv(f: TestFunction, i: int) -> TestFunction:
    terms = []
    for term in f.terms:
        vf = dict(term.vf)
        p = vf.get(i, 0)
        if p == 0:
            continue
        vf[i] = p - 1
        terms.append(_mk_term(term.coef * p, dict(term.xf), vf, term.tf))
    return TestFunction("full", f.n, tuple(terms), False, f.degree, f"d/dv{i}({f.fid})")


def _poly_mul(a, b):
    return tuple(np.polynomial.polynomial.polymul(np.asarray(a, float), np.asarray(b, float)).tolist())


def d_dt(f: TestFunction) -> TestFunction:
    terms = []
    for term in f.terms:
        tf = term.tf
        # product rule over poly * bump^b * trig
        c = np.asarray(tf.coeffs, dtype=float)
        if len(c) > 1:
            dcoeffs = tuple(np.polynomial.polynomial.polyder(c).tolist())
            terms.append(_mk_term(term.coef, dict(term.xf), dict(term.vf),
                                  TimeFactor(tf.t0, dcoeffs, tf.bump_pow, tf.trig)))
        if tf.bump_pow >= 1:
            # d(bump^b) = b * bump^(b-1) * (t0 - 2t)/t0^2, fold the linear factor into the poly
            lin = (tf.t0 / tf.t0**2, -2.0 / tf.t0**2)
            terms.append(_mk_term(term.coef * tf.bump_pow, dict(term.xf), dict(term.vf),
                                  TimeFactor(tf.t0, _poly_mul(tf.coeffs, lin), tf.bump_pow - 1, tf.trig)))
        if tf.trig is not None:
            kind, om = tf.trig
            mult, new = (om, ("cos", om)) if kind == "sin" else (-om, ("sin", om))
            terms.append(_mk_term(term.coef * mult, dict(term.xf), dict(term.vf),
                                  TimeFactor(tf.t0, tf.coeffs, tf.bump_pow, (new[0], om))))
    return TestFunction(f.kind, f.n, tuple(terms), False, f.degree, f"d/dt({f.fid})")


def mul_v(f: TestFunction, i: int) -> TestFunction:
    terms = []
    for term in f.terms:
        vf = dict(term.vf)
        vf[i] = vf.get(i, 0) + 1
        terms.append(_mk_term(term.coef, dict(term.xf), vf, term.tf))
    return TestFunction("full", f.n, tuple(terms), f.boundary_vanishing, f.degree + 1, f"v{i}*({f.fid})")


def lift_differential(phi: TestFunction) -> TestFunction:
    """The full-space function dphi(v, 1) = phi_x . v + phi_t of a base probe."""
    if phi.kind != "base":
        raise InvalidInputError("lift_differential expects a base-kind function")
    parts = [mul_v(d_dx(phi, i), i) for i in range(phi.n)]
    parts.append(d_dt(phi))
    lifted = combine(parts, [1.0] * len(parts), fid=f"d({phi.fid})")
    return TestFunction("full", phi.n, lifted.terms, False, phi.degree + 1, lifted.fid)


# ---------------------------------------------------------------------------
# Basis construction

@dataclass(frozen=True)
class TestBasis:
    kind: str
    degree: int
    boundary_vanishing: bool
    functions: tuple

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def __getitem__(self, i):
        return self.functions[i]

    def ids(self):
        return [f.fid for f in self.functions]


def _coordinate_choices(periodic: bool, budget: int):
    """All 1-D factors of cost <= budget for one x coordinate."""
    out = [(("poly", 0), 0)]
    if periodic:
        for k in range(1, budget + 1):
            out.append((("cos", k), k))
            out.append((("sin", k), k))
    else:
        for p in range(1, budget + 1):
            out.append((("poly", p), p))
    return out


def _factor_label(i, factor, slot):
    kind = factor[0]
    if kind == "poly":
        return f"{slot}{i}^{factor[1]}" if factor[1] > 1 else f"{slot}{i}"
    return f"{kind}(2pi*{factor[1]}*{slot}{i})"


def make_basis(domain: Domain, kind: str, degree: int, boundary_vanishing: bool,
               rank_check: bool = True) -> TestBasis:
    """Probe basis of total degree <= ``degree``.

    Periodic coordinates get trigonometric modes counted by frequency,
    non-periodic ones monomials counted by power; full-kind bases add
    velocity monomials; the time slot gets polynomial powers and, when
    boundary_vanishing, the factor t(t0-t)/t0^2 on every element.
    """
    if degree < 1:
        raise InvalidInputError(f"basis degree must be >= 1, got {degree}")
    if kind not in ("base", "full"):
        raise InvalidInputError(f"unknown basis kind {kind!r}")
    n = domain.n
    funcs = []
    # enumerate per-coordinate factor combinations with a shared degree budget
    x_opts = [_coordinate_choices(domain.periodic[i], degree) for i in range(n)]
    for xcombo in itertools.product(*x_opts):
        cost_x = sum(c for _, c in xcombo)
        if cost_x > degree:
            continue
        v_budget = degree - cost_x
        v_combos = [()] if kind == "base" else [
            combo
            for combo in itertools.product(*(range(v_budget + 1) for _ in range(n)))
            if sum(combo) <= v_budget
        ]
        for vcombo in v_combos:
            cost_v = sum(vcombo)
            for j in range(degree - cost_x - cost_v + 1):
                tf = TimeFactor(
                    domain.t0,
                    coeffs=tuple([0.0] * j + [1.0]),
                    bump_pow=1 if boundary_vanishing else 0,
                )
                xf_map = {i: f for i, (f, c) in enumerate(xcombo) if f != ("poly", 0)}
                vf_map = {i: p for i, p in enumerate(vcombo) if p > 0}
                labels = [_factor_label(i, f, "x") for i, f in sorted(xf_map.items())]
                labels += [_factor_label(i, ("poly", p), "v") for i, p in sorted(vf_map.items())]
                if j:
                    labels.append(f"t^{j}" if j > 1 else "t")
                if boundary_vanishing:
                    labels.append("bump")
                fid = "*".join(labels) if labels else "1"
                term = _mk_term(1.0, xf_map, vf_map, tf)
                funcs.append(TestFunction(
                    kind, n, (term,), boundary_vanishing,
                    cost_x + cost_v + j, fid,
                ))
    funcs.sort(key=lambda f: (f.degree, f.fid))
    basis = TestBasis(kind, degree, boundary_vanishing, tuple(funcs))
    if rank_check:
        _check_rank(domain, basis)
    return basis


def _check_rank(domain: Domain, basis: TestBasis):
    rng = np.random.default_rng(12345)
    b = len(basis)
    m = max(4 * b, 128)
    X = np.empty((m, domain.n))
    for i in range(domain.n):
        if domain.periodic[i]:
            X[:, i] = rng.uniform(0.0, 1.0, m)
        else:
            lo, hi = (-1.0, 1.0)
            if domain.bounds is not None and domain.bounds[i] is not None:
                lo, hi = domain.bounds[i]
            X[:, i] = rng.uniform(lo, hi, m)
    V = rng.uniform(-2.0, 2.0, (m, domain.n))
    T = rng.uniform(0.05 * domain.t0, 0.95 * domain.t0, m)
    vals = np.column_stack([jet_many(f, X, V, T, order=0).value for f in basis])
    rank = np.linalg.matrix_rank(vals)
    if rank < b:
        raise BasisConstructionError(
            f"degenerate basis: Gram rank {rank} < size {b} "
            f"(kind={basis.kind}, degree={basis.degree})"
        )


# Convenience constructors used by scenarios and tests -----------------------

def monomial(n: int, x_powers=(), v_powers=(), t_power: int = 0, t0: float = 1.0,
             bump: int = 0, coef: float = 1.0, kind: str | None = None) -> TestFunction:
    """Single-term probe coef * x^a * v^b * t^j * bump^k."""
    xf = {i: ("poly", p) for i, p in enumerate(x_powers) if p}
    vf = {i: p for i, p in enumerate(v_powers) if p}
    tf = TimeFactor(t0, tuple([0.0] * t_power + [1.0]), bump)
    if kind is None:
        kind = "full" if vf else "base"
    term = _mk_term(coef, xf, vf, tf)
    deg = sum(x_powers) + sum(v_powers) + t_power
    return TestFunction(kind, n, (term,), bump > 0, deg, "monomial")


def time_sine_probe(n: int, x_powers=(), v_powers=(), k: int = 1, t0: float = 1.0,
                    coef: float = 1.0) -> TestFunction:
    """coef * x^a * v^b * sin(k pi t / t0); vanishes at t in {0, t0}."""
    xf = {i: ("poly", p) for i, p in enumerate(x_powers) if p}
    vf = {i: p for i, p in enumerate(v_powers) if p}
    tf = TimeFactor(t0, (1.0,), 0, ("sin", k * np.pi / t0))
    term = _mk_term(coef, xf, vf, tf)
    kind = "full" if vf else "base"
    deg = sum(x_powers) + sum(v_powers) + 1
    return TestFunction(kind, n, (term,), True, deg, f"sin({k}pi*t/t0)-probe")
