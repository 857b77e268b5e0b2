"""Packaged scenario reproductions with machine-checked expected outcomes.

Each scenario builds its measures deterministically, runs the relevant
checks, and emits a report whose expectations carry provenance tags:
'paper' outcomes are hard requirements, 'derived' ones record the oracle
that recomputes them, 'trivial' ones are direct readouts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .action_lp import GridSpec, build_lp, random_feasible_weights, solve_min_action
from .closed_velocity import estimate_second_derivative
from .domain import Domain
from .dynamics import (el_residual_along_curve, invariance_defect,
                       invariance_residual, make_lagrangian)
from .errors import InvalidInputError
from .fields import BaseVectorField, fiber_field_from_base
from .measures import (AtomicMeasure, CurveSamples, closedness_residual,
                       from_curve, gauss_times, sample_curve)
from .probes import TestBasis, make_basis, time_sine_probe
from .variations import (ExactHorizontalVariation, graph_support_check,
                         minimizable_certificate_check, pair_with_lagrangian)


@dataclass
class ScenarioCheck:
    name: str
    value: float
    threshold: float
    comparator: str           # "<=" or ">"
    provenance: str           # "paper" | "derived" | "trivial"
    oracle: str = ""          # how to recompute a derived expectation

    @property
    def passed(self) -> bool:
        if self.comparator == "<=":
            return self.value <= self.threshold
        return self.value > self.threshold

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": self.value,
            "threshold": self.threshold,
            "comparator": self.comparator,
            "pass": self.passed,
            "provenance": self.provenance,
            "oracle": self.oracle,
        }


@dataclass
class ScenarioReport:
    scenario: str
    params: dict
    checks: list
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "params": self.params,
            "checks": [c.to_dict() for c in self.checks],
            "extras": self.extras,
            "pass": self.passed,
        }

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=_json_default)

    def save_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scenario", "check", "residual", "threshold",
                             "comparator", "pass", "provenance"])
            for c in self.checks:
                writer.writerow([self.scenario, c.name, c.value, c.threshold,
                                 c.comparator, c.passed, c.provenance])

    def summary(self) -> str:
        lines = [f"scenario {self.scenario}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"  [{status}] {c.name}: {c.value:.3e} {c.comparator} {c.threshold:.3e} ({c.provenance})")
            if not c.passed and c.provenance == "derived" and c.oracle:
                lines.append(f"         recompute via: {c.oracle}")
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


# ---------------------------------------------------------------------------
# A minimizer that is not invariant under the EL flow

def two_branch_measure(n_nodes: int = 401) -> tuple:
    """Line of doubled velocity atoms: ((t,0), (1,+-1), t), half weight each.

    Discretized with Gauss-Legendre time weights so the Lebesgue factor is
    integrated to machine precision for smooth probes.
    """
    dom = Domain(n=2, t0=1.0, bounds=((0.0, 1.0), (0.0, 1.0)))
    tg, wt = gauss_times(1.0, n_nodes)
    m = len(tg)
    X = np.zeros((2 * m, 2))
    X[:m, 0] = tg
    X[m:, 0] = tg
    V = np.ones((2 * m, 2))
    V[m:, 1] = -1.0
    T = np.concatenate([tg, tg])
    W = 0.5 * np.concatenate([wt, wt])
    return dom, AtomicMeasure(dom, X, V, T, W)


def scenario_noninvariant_minimum(n_nodes: int = 401, degree: int = 3) -> ScenarioReport:
    """An action minimizer (action exactly 0) that the EL flow does not fix."""
    dom, mu = two_branch_measure(n_nodes)
    L = make_lagrangian("twin_wells")

    action = float(np.dot(mu.W, L.value(mu.X, mu.V, mu.T)))
    closed = closedness_residual(mu, make_basis(dom, "base", degree, True))
    probe = time_sine_probe(2, x_powers=(0, 1), v_powers=(0, 1), k=1, t0=1.0)
    defect = invariance_defect(mu, L, probe)
    graph_ok, offender = graph_support_check(mu, 1e-6)
    est = estimate_second_derivative(mu, make_basis(dom, "full", degree, True))

    checks = [
        ScenarioCheck("action", abs(action), 1e-12, "<=", "paper"),
        ScenarioCheck("closedness_residual", closed.residual, 1e-6, "<=", "derived",
                      oracle="fundamental theorem of calculus along the base line; "
                             "the +-v2 branch contributions cancel probe by probe"),
        ScenarioCheck("invariance_defect_vs_2_over_pi", abs(defect - 2.0 / np.pi), 1e-3,
                      "<=", "derived",
                      oracle="integrate sin(pi t) against the unit bracket of the two branches: "
                             "int_0^1 sin(pi t) dt = 2/pi"),
        ScenarioCheck("graph_support_violated", 0.0 if graph_ok else 1.0, 0.5, ">", "paper"),
        ScenarioCheck("second_derivative_residual", est.residual, 0.1, ">", "derived",
                      oracle="probes with fiber gradient vanishing on the support keep an "
                             "irreducible defect int bump dt = 1/6"),
    ]
    extras = {
        "action": action,
        "invariance_defect": defect,
        "offending_fiber": offender,
        "estimation_residual": est.residual,
    }
    return ScenarioReport("noninvariant-minimum",
                          {"n_nodes": n_nodes, "degree": degree}, checks, extras)


# ---------------------------------------------------------------------------
# Wiggle criticality does not certify invariance (torus construction)

@dataclass
class TorusConstruction:
    """Density sum_i a_i(x) rho_i(v) on the circle with tuned moments.

    rho_i are raised-cosine bumps on overlapping positive intervals; the
    amplitude vector c lies in the null space of the discrete first/second
    moment matrix, so unit mass, closedness, and wiggle criticality hold to
    machine precision while the third moments witness non-invariance.
    """

    k: int
    eps: float
    centers: np.ndarray
    width: float
    v_grids: list
    v_weights: list
    norms: np.ndarray
    r_discrete: np.ndarray
    s_discrete: np.ndarray
    r_exact: np.ndarray
    s_exact: np.ndarray
    c: np.ndarray
    abar: np.ndarray

    def a_values(self, x: np.ndarray) -> np.ndarray:
        """(k, len(x)) stack of the amplitude profiles a_i(x)."""
        return self.abar[:, None] + self.eps * self.c[:, None] * np.cos(2 * np.pi * x)[None, :]


def build_torus_construction(k: int = 4, eps: float = 0.05, nv: int = 481,
                             zero_c: bool = False) -> TorusConstruction:
    if k < 4:
        raise InvalidInputError("need at least 4 bump profiles: the 2-row moment "
                                "matrix must have a nontrivial null space with margin")
    width = 2.0
    centers = 1.2 + 0.8 * np.arange(k) / (k - 1)

    def rho(i, v):
        u = (v - centers[i]) / width
        return np.where(np.abs(u) < 0.5, (1.0 + np.cos(2 * np.pi * u)) / width, 0.0)

    v_grids, v_weights = [], []
    norms = np.empty(k)
    r_hat = np.empty(k)
    s_hat = np.empty(k)
    for i in range(k):
        vg = np.linspace(centers[i] - width / 2, centers[i] + width / 2, nv)
        wv = np.full(nv, vg[1] - vg[0])
        wv[0] *= 0.5
        wv[-1] *= 0.5
        rh = rho(i, vg)
        norms[i] = np.sum(wv * rh)
        r_hat[i] = np.sum(wv * vg * rh)
        s_hat[i] = np.sum(wv * vg**2 * rh)
        v_grids.append(vg)
        v_weights.append(wv * rh)
    sigma2 = width**2 * (1.0 / 12.0 - 1.0 / (2 * np.pi**2))
    r_exact = centers.copy()
    s_exact = centers**2 + sigma2

    if zero_c:
        c = np.zeros(k)
    else:
        # deterministic null vector of the discrete moment matrix [r; s]
        _, _, vt = np.linalg.svd(np.vstack([r_hat, s_hat]))
        c = vt[-1]
        c = c / np.max(np.abs(c))
        if c[np.argmax(np.abs(c))] < 0:
            c = -c
    abar = np.full(k, 1.0 / k)
    if not zero_c and eps * np.max(np.abs(c)) >= np.min(abar):
        raise InvalidInputError(f"eps={eps} too large: a_i must stay positive")
    return TorusConstruction(k, eps, centers, width, v_grids, v_weights, norms,
                             r_hat, s_hat, r_exact, s_exact, c, abar)


def torus_measure(tc: TorusConstruction, nx: int = 16, nt: int = 5) -> AtomicMeasure:
    dom = Domain(n=1, t0=1.0, periodic=(True,), time_independent=True)
    xg = np.arange(nx) / nx
    wx = np.full(nx, 1.0 / nx)
    tg, wt = gauss_times(1.0, nt)
    a = tc.a_values(xg)  # (k, nx)
    Xs, Vs, Ws = [], [], []
    for i in range(tc.k):
        dens = np.outer(wx * a[i], tc.v_weights[i])  # (nx, nv)
        ix, iv = np.nonzero(dens > 0)
        Xs.append(xg[ix])
        Vs.append(tc.v_grids[i][iv])
        Ws.append(dens[ix, iv])
    X = np.concatenate(Xs)
    V = np.concatenate(Vs)
    W = np.concatenate(Ws)
    mt = len(tg)
    return AtomicMeasure(
        dom,
        np.repeat(X, mt)[:, None],
        np.repeat(V, mt)[:, None],
        np.tile(tg, len(X)),
        np.repeat(W, mt) * np.tile(wt, len(X)),
    )


def _wiggle_pairings(mu: AtomicMeasure, L, degree: int):
    """Criticality pairings over trigonometric wiggle profiles beta.

    Returns (corrected, literal) maxima: the corrected pairing carries the
    velocity factor on the fiber term, int [beta L_x + beta' v L_v] dmu; the
    literal one drops it, int [beta L_x + beta' L_v] dmu.  Both are reported
    for transparency.
    """
    corrected, literal = [], []
    for freq in range(1, degree + 1):
        for kind in ("cos", "sin"):
            w = 2 * np.pi * freq
            if kind == "cos":
                beta = lambda x: np.cos(w * x)
                dbeta = lambda x: -w * np.sin(w * x)
            else:
                beta = lambda x: np.sin(w * x)
                dbeta = lambda x: w * np.cos(w * x)
            P = BaseVectorField(
                value=lambda X, T, b=beta: b(X[:, 0])[:, None],
                jac_x=lambda X, T, db=dbeta: db(X[:, 0])[:, None, None],
                dt=lambda X, T: np.zeros_like(X),
                name=f"{kind}({freq})",
            )
            eta = ExactHorizontalVariation(mu, fiber_field_from_base(P), None)
            corrected.append(pair_with_lagrangian(eta, L))
            lx = L.x(mu.X, mu.V, mu.T)
            lv = L.v(mu.X, mu.V, mu.T)
            lit = (beta(mu.X[:, 0]) * lx[:, 0] + dbeta(mu.X[:, 0]) * lv[:, 0])
            literal.append(float(np.dot(mu.W, lit)))
    return (float(np.max(np.abs(corrected))) / mu.mass,
            float(np.max(np.abs(literal))) / mu.mass)


def scenario_torus_insufficiency(k: int = 4, eps: float = 0.05, nx: int = 16,
                                 nv: int = 481, nt: int = 5, degree: int = 3,
                                 zero_c: bool = False) -> ScenarioReport:
    """Wiggle-critical but (for nonzero c) not invariant density on the circle."""
    tc = build_torus_construction(k=k, eps=eps, nv=nv, zero_c=zero_c)
    mu = torus_measure(tc, nx=nx, nt=nt)
    L = make_lagrangian("speed_squared", n=1)
    dom = mu.domain

    mass_gap = abs(mu.mass - 1.0)
    closed = closedness_residual(mu, make_basis(dom, "base", degree, True))
    crit_corrected, crit_literal = _wiggle_pairings(mu, L, degree)
    inv = invariance_residual(mu, L, make_basis(dom, "full", degree, True))
    moment_err = float(max(np.max(np.abs(tc.r_discrete - tc.r_exact)),
                           np.max(np.abs(tc.s_discrete - tc.s_exact))))
    norm_err = float(np.max(np.abs(tc.norms - 1.0)))

    checks = [
        ScenarioCheck("unit_mass", mass_gap, 1e-8, "<=", "paper"),
        ScenarioCheck("closedness_residual", closed.residual, 1e-6, "<=", "paper"),
        ScenarioCheck("wiggle_criticality_residual", crit_corrected, 1e-6, "<=", "paper"),
        ScenarioCheck("bump_normalization", norm_err, 1e-10, "<=", "derived",
                      oracle="trapezoid quadrature of the raised-cosine bumps"),
        ScenarioCheck("bump_moments_vs_analytic", moment_err, 1e-10, "<=", "derived",
                      oracle="r_i = center, s_i = center^2 + width^2 (1/12 - 1/(2 pi^2))"),
    ]
    item_sum = mass_gap + closed.residual + crit_corrected
    if zero_c:
        checks.append(ScenarioCheck("invariance_residual", inv.residual, 1e-8, "<=", "paper"))
    else:
        checks.append(ScenarioCheck("invariance_excess_over_items",
                                    inv.residual, 10.0 * item_sum, ">", "paper"))
    extras = {
        "c": tc.c.tolist(),
        "r_discrete": tc.r_discrete.tolist(),
        "s_discrete": tc.s_discrete.tolist(),
        "wiggle_pairing_corrected": crit_corrected,
        "wiggle_pairing_literal": crit_literal,
        "invariance_residual": inv.residual,
        "atoms": mu.natoms,
    }
    return ScenarioReport("torus-wiggle-gap",
                          {"k": k, "eps": eps, "nx": nx, "nv": nv, "nt": nt,
                           "degree": degree, "zero_c": zero_c},
                          checks, extras)


# ---------------------------------------------------------------------------
# Minimize-then-check-invariance chain

def scenario_lp_invariance(l_tag: str = "free", grid=(32, 33, 9), v_box=(-2.0, 2.0),
                           degree: int = 2, allow_nonconvex: bool = False,
                           refine: bool = False, l_params: dict | None = None) -> ScenarioReport:
    """LP action minimizer, then closed-velocity and invariance checks on it."""
    l_params = dict(l_params or {})
    l_params.setdefault("n", 1)
    L = make_lagrangian(l_tag, **l_params)
    if not L.fiberwise_convex and not allow_nonconvex:
        raise InvalidInputError(
            f"Lagrangian {l_tag!r} is not flagged fiberwise convex; the "
            "minimality-implies-invariance chain needs convexity (pass "
            "allow_nonconvex=true to run the refinement study anyway)")
    dom = Domain(n=1, t0=1.0, periodic=(True,))
    nx, nvv, nt = grid
    gspec = GridSpec(dom, (nx,), (nvv,), nt, (tuple(v_box),))
    basis = make_basis(dom, "base", degree, True)
    lp = build_lp(gspec, L, basis)
    res = solve_min_action(lp)

    inv = invariance_residual(res.measure, L, make_basis(dom, "full", degree, True))
    graph_ok, offender = graph_support_check(res.measure, 1e-6)
    est = estimate_second_derivative(res.measure, make_basis(dom, "full", degree, True))
    f_cert, c_cert = res.certificate(basis)
    cert = minimizable_certificate_check(res.measure, L, f_cert, c_cert, lp.centers, tol=1e-6)

    checks = [
        ScenarioCheck("duality_gap", res.duality_gap, 1e-8 * (1 + abs(res.value)),
                      "<=", "trivial"),
        ScenarioCheck("certificate_worst_gap", cert.worst_gap, 1e-6, "<=", "derived",
                      oracle="LP duality: dual feasibility dominates, complementary "
                             "slackness gives equality on the support"),
        ScenarioCheck("second_derivative_residual", est.residual, 1e-6, "<=", "derived",
                      oracle="minimum-norm least squares on the minimizer's atoms"),
    ]
    if l_tag == "free":
        checks.insert(1, ScenarioCheck("optimal_value", res.value, 1e-8, "<=", "derived",
                                       oracle="the rest cells v=0 are feasible and have zero cost"))
        checks.append(ScenarioCheck("invariance_residual", inv.residual, 1e-6, "<=", "derived",
                                    oracle="rest measures are fixed by the EL flow of a free Lagrangian"))
        checks.append(ScenarioCheck("graph_support", 1.0 if graph_ok else 0.0, 0.5, ">", "derived",
                                    oracle="the optimal support sits on the zero section"))
    extras = {
        "value": res.value,
        "invariance_residual": inv.residual,
        "graph_support": graph_ok,
        "estimation_residual": est.residual,
        "minimizer_atoms": res.measure.natoms,
        "certificate": cert.to_dict(),
    }
    if refine:
        fine = GridSpec(dom, (2 * nx,), (2 * nvv + 1,), nt, (tuple(v_box),))
        res2 = solve_min_action(build_lp(fine, L, basis))
        inv2 = invariance_residual(res2.measure, L, make_basis(dom, "full", degree, True))
        checks.append(ScenarioCheck("invariance_shrinks_under_refinement",
                                    inv.residual - inv2.residual + 1e-12, 0.0, ">", "derived",
                                    oracle="refinement study: rerun with the doubled grid"))
        extras["fine_value"] = res2.value
        extras["fine_invariance_residual"] = inv2.residual
    return ScenarioReport("lp-invariance-chain",
                          {"l_tag": l_tag, "grid": list(grid), "v_box": list(v_box),
                           "degree": degree, "refine": refine},
                          checks, extras)


# ---------------------------------------------------------------------------
# Euler-Lagrange residual along supported curves

def extract_supported_curve(mu: AtomicMeasure) -> CurveSamples:
    """Greedy curve through the support: per time slice, follow the nearest atom.

    Starts from the heaviest atom of the earliest slice; useful for reading
    a candidate trajectory out of a minimizer's support.
    """
    times = np.unique(np.round(mu.T, 12))
    xs, vs = [], []
    prev = None
    for t in times:
        sl = np.where(np.abs(mu.T - t) <= 1e-12)[0]
        if prev is None:
            pick = sl[np.argmax(mu.W[sl])]
        else:
            pick = sl[np.argmin(np.linalg.norm(mu.X[sl] - prev, axis=1))]
        prev = mu.X[pick]
        xs.append(mu.X[pick])
        vs.append(mu.V[pick])
    return CurveSamples(times, np.array(xs), np.array(vs))


def scenario_el_curve(source: str = "oscillator", n_nodes: int = 400) -> ScenarioReport:
    """Finite-difference Euler-Lagrange residual ||d/dt L_v - L_x|| along a curve."""
    params = {"source": source, "n_nodes": n_nodes}
    if source == "oscillator":
        L = make_lagrangian("oscillator", n=2, k=1.0)
        t = np.linspace(0.0, 2 * np.pi, n_nodes + 1)
        s = sample_curve(lambda u: (np.cos(u), np.sin(u)),
                         lambda u: (-np.sin(u), np.cos(u)), t)
        resid = el_residual_along_curve(L, s)
        checks = [ScenarioCheck("el_residual", resid, 1e-4, "<=", "derived",
                                oracle="closed-form circular orbit of the unit oscillator")]
    elif source == "line":
        L = make_lagrangian("free", n=2)
        t = np.linspace(0.0, 1.0, n_nodes + 1)
        s = sample_curve(lambda u: (0.2 + 0.5 * u, 0.1 * u),
                         lambda u: (0.5, 0.1), t)
        resid = el_residual_along_curve(L, s)
        checks = [ScenarioCheck("el_residual", resid, 1e-12, "<=", "trivial")]
    elif source == "parabola":
        L = make_lagrangian("free", n=2)
        t = np.linspace(0.0, 1.0, n_nodes + 1)
        s = sample_curve(lambda u: (u**2, 0.0), lambda u: (2 * u, 0.0), t)
        resid = el_residual_along_curve(L, s)
        checks = [ScenarioCheck("el_residual_vs_2", abs(resid - 2.0), 1e-2, "<=", "derived",
                                oracle="d/dt L_v = gamma'' = (2, 0) while L_x = 0")]
    elif source == "minimizer":
        dom = Domain(n=1, t0=1.0, periodic=(True,))
        L = make_lagrangian("free", n=1)
        gspec = GridSpec(dom, (16,), (17,), 9, ((-2.0, 2.0),))
        res = solve_min_action(build_lp(gspec, L, make_basis(dom, "base", 2, True)))
        s = extract_supported_curve(res.measure)
        resid = el_residual_along_curve(L, s)
        checks = [ScenarioCheck("el_residual", resid, 1e-6, "<=", "derived",
                                oracle="the extracted support curve is a rest point of the free flow")]
    else:
        raise InvalidInputError(f"unknown curve source {source!r}")
    return ScenarioReport("el-curve-residual", params, checks, {"el_residual": resid})


SCENARIOS = {
    "noninvariant-minimum": scenario_noninvariant_minimum,
    "torus-wiggle-gap": scenario_torus_insufficiency,
    "lp-invariance-chain": scenario_lp_invariance,
    "el-curve-residual": scenario_el_curve,
}
