"""Atomic measures on phase space and the closedness test.

All measures are finite weighted atom lists on T(R^n) x [0, t0].  Curve
measures discretize the pushforward of time Lebesgue measure by
t -> (gamma(t), gamma'(t), t); densities become tensor-grid atom clouds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .domain import Domain, PhasePoint
from .errors import FlowEscapeError, InvalidInputError
from .probes import TestBasis, jet_many, probe_scale
from .reports import DefectReport


class AtomicMeasure:
    """Finite positive atom list (x_k, v_k, t_k, w_k) on phase space."""

    def __init__(self, domain: Domain, X, V, T, W, validate: bool = True):
        self.domain = domain
        X = np.atleast_2d(np.asarray(X, dtype=float))
        V = np.atleast_2d(np.asarray(V, dtype=float))
        T = np.atleast_1d(np.asarray(T, dtype=float))
        W = np.atleast_1d(np.asarray(W, dtype=float))
        if validate:
            if X.shape != V.shape or X.shape[1] != domain.n:
                raise InvalidInputError("atom position/velocity arrays must be (m, n)")
            if T.shape[0] != X.shape[0] or W.shape[0] != X.shape[0]:
                raise InvalidInputError("atom arrays must share a common length")
            if np.any(W <= 0):
                raise InvalidInputError("atom weights must be strictly positive")
            if np.any(T < -1e-12) or np.any(T > domain.t0 + 1e-12):
                raise InvalidInputError("atom times must lie in [0, t0]")
            X = domain.wrap(X)
            inside = domain.contains(X)
            if not np.all(inside):
                bad = int(np.argmin(inside))
                raise InvalidInputError(f"atom {bad} lies outside the domain box: x={X[bad]}")
        self.X = X
        self.V = V
        self.T = T
        self.W = W
        for a in (self.X, self.V, self.T, self.W):
            a.setflags(write=False)

    @property
    def natoms(self) -> int:
        return self.X.shape[0]

    @property
    def mass(self) -> float:
        return float(np.sum(self.W))

    def pair(self, f) -> float:
        """<mu, f> = sum_k w_k f(x_k, v_k, t_k)."""
        vals = jet_many(f, self.X, self.V, self.T, order=0).value
        return float(np.dot(self.W, vals))

    def with_atoms(self, X=None, V=None, T=None, W=None) -> "AtomicMeasure":
        return AtomicMeasure(
            self.domain,
            self.X if X is None else X,
            self.V if V is None else V,
            self.T if T is None else T,
            self.W if W is None else W,
        )

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "atoms": [
                {"x": x.tolist(), "v": v.tolist(), "t": float(t), "w": float(w)}
                for x, v, t, w in zip(self.X, self.V, self.T, self.W)
            ],
        }

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @staticmethod
    def from_dict(d: dict) -> "AtomicMeasure":
        domain = Domain.from_dict(d["domain"])
        atoms = d["atoms"]
        X = np.array([a["x"] for a in atoms], dtype=float)
        V = np.array([a["v"] for a in atoms], dtype=float)
        T = np.array([a["t"] for a in atoms], dtype=float)
        W = np.array([a["w"] for a in atoms], dtype=float)
        return AtomicMeasure(domain, X, V, T, W)

    @staticmethod
    def load(path: str) -> "AtomicMeasure":
        with open(path) as fh:
            return AtomicMeasure.from_dict(json.load(fh))


@dataclass(frozen=True)
class CurveSamples:
    """Samples of a C^1 curve: gamma, gamma' (and optionally gamma'') on a grid."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "positions", np.atleast_2d(np.asarray(self.positions, dtype=float)))
        object.__setattr__(self, "velocities", np.atleast_2d(np.asarray(self.velocities, dtype=float)))
        if self.accelerations is not None:
            object.__setattr__(self, "accelerations", np.atleast_2d(np.asarray(self.accelerations, dtype=float)))
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("curve sample times must be strictly increasing")
        m = len(self.times)
        if self.positions.shape[0] != m or self.velocities.shape[0] != m:
            raise InvalidInputError("curve sample arrays must share a common length")

    def check_velocity_consistency(self, rtol_factor: float = 10.0) -> float:
        """Max deviation of gamma' from central differences of gamma.

        The bound scales like dt^2; useful when positions come from an
        integrator and the velocities should agree to quadrature order.
        """
        t, x, v = self.times, self.positions, self.velocities
        dt = np.diff(t)
        fd = (x[2:] - x[:-2]) / (t[2:] - t[:-2])[:, None]
        dev = np.max(np.abs(fd - v[1:-1])) if len(t) > 2 else 0.0
        return float(dev)


def sample_curve(position_fn, velocity_fn, times, acceleration_fn=None) -> CurveSamples:
    times = np.asarray(times, dtype=float)
    pos = np.array([position_fn(t) for t in times], dtype=float)
    vel = np.array([velocity_fn(t) for t in times], dtype=float)
    acc = None
    if acceleration_fn is not None:
        acc = np.array([acceleration_fn(t) for t in times], dtype=float)
    return CurveSamples(times, np.atleast_2d(pos), np.atleast_2d(vel), acc)


def from_curve(samples: CurveSamples, domain: Domain, rule: str = "trapezoid") -> AtomicMeasure:
    """Curve-induced measure: atoms at (gamma(t_i), gamma'(t_i), t_i).

    ``trapezoid`` keeps the sample nodes with trapezoid weights; ``midpoint``
    places atoms at segment midpoints of the piecewise-linear reconstruction
    with the segment lengths as weights.  Total mass is t0 either way.
    """
    t = samples.times
    if abs(t[0]) > 1e-12 or abs(t[-1] - domain.t0) > 1e-9:
        raise InvalidInputError("curve samples must span [0, t0] including endpoints")
    if rule == "trapezoid":
        w = np.zeros_like(t)
        dt = np.diff(t)
        w[:-1] += dt / 2.0
        w[1:] += dt / 2.0
        return AtomicMeasure(domain, samples.positions, samples.velocities, t, w)
    if rule == "midpoint":
        tm = 0.5 * (t[:-1] + t[1:])
        xm = 0.5 * (samples.positions[:-1] + samples.positions[1:])
        vm = 0.5 * (samples.velocities[:-1] + samples.velocities[1:])
        return AtomicMeasure(domain, xm, vm, tm, np.diff(t))
    raise InvalidInputError(f"unknown quadrature rule {rule!r}; use 'trapezoid' or 'midpoint'")


def gauss_times(t0: float, n_nodes: int):
    """Gauss-Legendre nodes and weights on [0, t0]."""
    z, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * t0 * (z + 1.0), 0.5 * t0 * w


def gauss_curve_measure(domain: Domain, position_fn, velocity_fn, n_nodes: int,
                        acceleration_fn=None):
    """Curve measure sampled at Gauss-Legendre times.

    For smooth curves the pairing error decays spectrally, which makes these
    measures effectively exact discretizations; returns (measure, gamma'')
    with the accelerations aligned to the atoms (or None).
    """
    t, w = gauss_times(domain.t0, n_nodes)
    X = np.array([position_fn(s) for s in t], dtype=float).reshape(n_nodes, -1)
    V = np.array([velocity_fn(s) for s in t], dtype=float).reshape(n_nodes, -1)
    acc = None
    if acceleration_fn is not None:
        acc = np.array([acceleration_fn(s) for s in t], dtype=float).reshape(n_nodes, -1)
    return AtomicMeasure(domain, X, V, t, w), acc


def convex_combination(parts) -> AtomicMeasure:
    """Concatenate component atom lists with weights scaled by lambda_i."""
    lambdas = [lam for lam, _ in parts]
    measures = [mu for _, mu in parts]
    if not measures:
        raise InvalidInputError("empty combination")
    if any(lam < 0 for lam in lambdas):
        raise InvalidInputError("combination coefficients must be nonnegative")
    if abs(sum(lambdas) - 1.0) > 1e-12:
        raise InvalidInputError(f"combination coefficients must sum to 1, got {sum(lambdas)}")
    dom = measures[0].domain
    for mu in measures[1:]:
        if mu.domain != dom:
            raise InvalidInputError("cannot combine measures over different domains")
    keep = [(lam, mu) for lam, mu in zip(lambdas, measures) if lam > 0]
    X = np.vstack([mu.X for _, mu in keep])
    V = np.vstack([mu.V for _, mu in keep])
    T = np.concatenate([mu.T for _, mu in keep])
    W = np.concatenate([lam * mu.W for lam, mu in keep])
    return AtomicMeasure(dom, X, V, T, W)


def closedness_residual(mu: AtomicMeasure, basis: TestBasis, tolerance: float = 1e-8) -> DefectReport:
    """Defects of the closedness identity sum_k w_k (phi_x . v + phi_t) per probe.

    All probes must be base-kind and boundary-vanishing; the headline
    residual is normalized by the mass and each probe's derivative scale
    over the support, so "closed" always reads "closed up to this basis
    degree at this tolerance".
    """
    if basis.kind != "base":
        raise InvalidInputError("closedness probes must be base-kind functions phi(x, t)")
    if not basis.boundary_vanishing:
        raise InvalidInputError("closedness probes must carry the boundary-vanishing flag")
    defects = np.empty(len(basis))
    scales = np.empty(len(basis))
    for i, phi in enumerate(basis):
        j = jet_many(phi, mu.X, mu.V, mu.T, order=1)
        integrand = np.sum(j.grad_x * mu.V, axis=1) + j.dt
        defects[i] = np.dot(mu.W, integrand)
        g2 = np.sum(j.grad_x**2, axis=1) + j.dt**2
        scales[i] = np.sqrt(np.max(g2)) if g2.size else 0.0
    return DefectReport(basis.ids(), defects, scales, mu.mass, basis.degree,
                        normalization="scale", tolerance=tolerance)


def pushforward_horizontal(mu: AtomicMeasure, P, s: float, n_steps: int | None = None) -> AtomicMeasure:
    """Flow atoms along a base vector field P(x, t), transporting velocities.

    Positions follow dx/ds = P(x, t); velocities follow the variational
    equation dv/ds = P_x(x, t) v + P_t(x, t), i.e. transport by the
    differential of the base flow.  s = 0 returns the measure unchanged.
    """
    if s == 0.0:
        return mu
    if n_steps is None:
        n_steps = max(8, int(np.ceil(abs(s) / 0.01)))
    h = s / n_steps
    X = np.array(mu.X, copy=True)
    V = np.array(mu.V, copy=True)
    T = mu.T

    def rhs(Xc, Vc):
        p = P.value(Xc, T)
        jac = P.jac_x(Xc, T)
        pt = P.dt(Xc, T)
        return p, np.einsum("mij,mj->mi", jac, Vc) + pt

    for _ in range(n_steps):
        k1x, k1v = rhs(X, V)
        k2x, k2v = rhs(X + 0.5 * h * k1x, V + 0.5 * h * k1v)
        k3x, k3v = rhs(X + 0.5 * h * k2x, V + 0.5 * h * k2v)
        k4x, k4v = rhs(X + h * k3x, V + h * k3v)
        X = X + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        V = V + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)

    Xw = mu.domain.wrap(X)
    inside = mu.domain.contains(Xw)
    if not np.all(inside):
        bad = int(np.argmin(inside))
        raise FlowEscapeError(
            f"atom {bad} left the domain under the horizontal flow: x={Xw[bad]}",
            atom_index=bad,
        )
    return AtomicMeasure(mu.domain, Xw, V, T, mu.W)


def tensor_density_measure(domain: Domain, x_nodes, x_weights, v_nodes, v_weights,
                           t_nodes, t_weights, density_fn) -> AtomicMeasure:
    """Tensor-grid discretization of a density rho(x, v) on T(R^n) x I.

    ``x_nodes``/``v_nodes`` are (mx, n)/(mv, n) arrays of grid points with
    quadrature weights; the t marginal is an explicit rule on [0, t0].
    Atoms with zero density are dropped.
    """
    x_nodes = np.atleast_2d(np.asarray(x_nodes, dtype=float))
    v_nodes = np.atleast_2d(np.asarray(v_nodes, dtype=float))
    t_nodes = np.asarray(t_nodes, dtype=float)
    mx, mv, mt = len(x_nodes), len(v_nodes), len(t_nodes)
    dens = np.empty((mx, mv))
    for a in range(mx):
        dens[a] = density_fn(x_nodes[a], v_nodes)
    w_xv = np.outer(np.asarray(x_weights, float), np.asarray(v_weights, float)) * dens
    ix, iv = np.nonzero(w_xv > 0)
    X = np.repeat(x_nodes[ix], mt, axis=0)
    V = np.repeat(v_nodes[iv], mt, axis=0)
    W = np.repeat(w_xv[ix, iv], mt) * np.tile(np.asarray(t_weights, float), len(ix))
    T = np.tile(t_nodes, len(ix))
    return AtomicMeasure(domain, X, V, T, W)
