"""Variation derivatives as pairable functionals and their criticality tests.

Four families of directions in which a closed measure can be deformed:

* vector-field directions  <eta_X, f> = int (X f) dmu,
* exact horizontal ones    <eta_FC, f> = int [F . f_x + (F_x v + F_v C + F_t) . f_v] dmu,
* transpositional ones     <eta_p, f> = f(p) - v . f_v(p) - <mu, f>/mass,
* fiber-Hessian ones       <eta_pw, f> = -w^T f_vv(p) w.

Deformability is certified by pairing against lifted differentials of a
base basis; criticality residuals pair the directions with a Lagrangian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import PhasePoint, as_phase_arrays
from .dynamics import ELField, Lagrangian, energy_many
from .errors import InvalidInputError, UnsupportedSettingError
from .fields import (BaseVectorField, FiberVectorField, SecondDerivativeField,
                     fiber_field_from_base, fiber_field_from_solve)
from .measures import AtomicMeasure
from .probes import TestBasis, TestFunction, jet, jet_many, lift_differential
from .reports import DefectReport


# ---------------------------------------------------------------------------
# Variation derivatives (tagged variants)

@dataclass
class VectorFieldVariation:
    """eta_X for a measurable phase vector field evaluated on the atoms.

    ``field`` maps (X, V, T) to tangent components (dx (m,n), dv (m,n),
    dtt (m,)); use the helpers below for purely vertical or horizontal ones.
    """

    mu: AtomicMeasure
    field: callable
    name: str = "X"


def vertical_variation(mu: AtomicMeasure, fiber_fn, name="vertical") -> VectorFieldVariation:
    """eta_X with X = (0, fiber_fn(x, v, t), 0), the fiberwise directions."""

    def field(X, V, T):
        dv = np.atleast_2d(np.asarray(fiber_fn(X, V, T), dtype=float))
        return np.zeros_like(X), dv, np.zeros(X.shape[0])

    return VectorFieldVariation(mu, field, name=name)


@dataclass
class ExactHorizontalVariation:
    """eta_{F, mu, C}: flowing mu along a fiber vector field F.

    C is a second-derivative field of mu (atom-aligned); it may be None when
    F is velocity-independent, in which case F_v C vanishes identically.
    """

    mu: AtomicMeasure
    F: FiberVectorField
    C: SecondDerivativeField | None = None


def horizontal_variation_from_base(mu: AtomicMeasure, P: BaseVectorField) -> ExactHorizontalVariation:
    return ExactHorizontalVariation(mu, fiber_field_from_base(P), None)


@dataclass
class TranspositionalVariation:
    """eta_p = delta_p - v . d_v delta_p - mu/mass, time-independent setting only."""

    mu: AtomicMeasure
    p: PhasePoint


@dataclass
class FiberHessianVariation:
    """eta_{p,w} = -(second fiber derivative of delta_p along w)."""

    mu: AtomicMeasure
    p: PhasePoint
    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(-1)


def pair(eta, f: TestFunction) -> float:
    """The pairing <eta, f> of a variation derivative with a full-kind probe."""
    if isinstance(eta, VectorFieldVariation):
        mu = eta.mu
        dx, dv, dtt = eta.field(mu.X, mu.V, mu.T)
        j = jet_many(f, mu.X, mu.V, mu.T, order=1)
        integrand = (np.sum(j.grad_x * dx, axis=1)
                     + np.sum(j.grad_v * dv, axis=1)
                     + j.dt * dtt)
        return float(np.dot(mu.W, integrand))

    if isinstance(eta, ExactHorizontalVariation):
        mu = eta.mu
        X, V, T = mu.X, mu.V, mu.T
        j = jet_many(f, X, V, T, order=1)
        Fv = eta.F.value(X, V, T)
        drift = np.einsum("mij,mj->mi", eta.F.jac_x(X, V, T), V) + eta.F.dt(X, V, T)
        if eta.C is not None:
            drift = drift + np.einsum("mij,mj->mi", eta.F.jac_v(X, V, T), eta.C.values)
        integrand = np.sum(j.grad_x * Fv, axis=1) + np.sum(j.grad_v * drift, axis=1)
        return float(np.dot(mu.W, integrand))

    if isinstance(eta, TranspositionalVariation):
        if not eta.mu.domain.time_independent:
            raise UnsupportedSettingError(
                "transpositional pairings are defined only in the time-independent setting"
            )
        jp = jet(f, eta.p, order=1)
        avg = eta.mu.pair(f) / eta.mu.mass
        return float(jp.value - np.dot(eta.p.v, jp.grad_v) - avg)

    if isinstance(eta, FiberHessianVariation):
        jp = jet(f, eta.p, order=2)
        return float(-eta.w @ jp.hess_vv @ eta.w)

    raise InvalidInputError(f"unknown variation derivative {type(eta).__name__}")


# ---------------------------------------------------------------------------
# Deformability and criticality residuals

def deformability_residual(mu: AtomicMeasure, eta, base_basis: TestBasis,
                           tolerance: float = 1e-8) -> DefectReport:
    """Pair eta against lifted differentials dphi(v, 1) of a base basis.

    A residual at tolerance certifies, at this basis degree, that eta
    preserves the closedness identity, i.e. that mu can be deformed in
    direction eta.
    """
    if base_basis.kind != "base":
        raise InvalidInputError("deformability probes must be base-kind")
    if not base_basis.boundary_vanishing:
        raise InvalidInputError("deformability probes must be boundary-vanishing")
    defects = np.empty(len(base_basis))
    scales = np.empty(len(base_basis))
    for i, phi in enumerate(base_basis):
        g = lift_differential(phi)
        defects[i] = pair(eta, g)
        jg = jet_many(g, mu.X, mu.V, mu.T, order=1)
        g2 = np.sum(jg.grad_x**2, axis=1) + np.sum(jg.grad_v**2, axis=1) + jg.dt**2
        scales[i] = np.sqrt(np.max(g2)) if g2.size else 0.0
    return DefectReport(base_basis.ids(), defects, scales, mu.mass, base_basis.degree,
                        normalization="mass", tolerance=tolerance)


def theta1_residual(mu: AtomicMeasure, L: Lagrangian, base_basis: TestBasis) -> float:
    """Relative L^2(mu) distance of the momenta L_v to the span of {phi_x}.

    Vanishing distance means the momenta coincide with an exact form at this
    basis degree (criticality for the fiberwise directions); the projection
    is least squares with minimum-norm tie-breaking.
    """
    if base_basis.kind != "base":
        raise InvalidInputError("theta1 probes must be base-kind")
    sw = np.sqrt(mu.W)
    target = (L.v(mu.X, mu.V, mu.T) * sw[:, None]).ravel()
    cols = []
    for phi in base_basis:
        gx = jet_many(phi, mu.X, mu.V, mu.T, order=1).grad_x
        cols.append((gx * sw[:, None]).ravel())
    A = np.column_stack(cols)
    coef, _, _, _ = np.linalg.lstsq(A, target, rcond=None)
    resid = np.linalg.norm(target - A @ coef)
    denom = np.linalg.norm(target)
    return float(resid / denom) if denom > 0 else 0.0


def theta2_residual(mu: AtomicMeasure, L: Lagrangian) -> float:
    """Max deviation of the energy v . L_v - L from its mu-average.

    Zero iff the energy is constant on the support, the conservation law
    carried by the transpositional directions; restricted to the
    time-independent setting like those directions themselves.
    """
    if not mu.domain.time_independent:
        raise UnsupportedSettingError(
            "theta2 requires the time-independent setting flag on the domain"
        )
    E = energy_many(L, mu.X, mu.V, mu.T)
    avg = float(np.dot(mu.W, E)) / mu.mass
    return float(np.max(np.abs(E - avg))) if E.size else 0.0


def graph_support_check(mu: AtomicMeasure, tol: float = 1e-6):
    """True iff over each base point (x, t) the support carries one velocity.

    Atoms are clustered by base distance below tol; returns (ok, offender)
    where offender describes the first multi-velocity fiber found.
    """
    base = np.column_stack([mu.X, mu.T])
    keys = np.round(base / max(tol, 1e-300)).astype(np.int64)
    buckets = {}
    for idx, key in enumerate(map(tuple, keys)):
        buckets.setdefault(key, []).append(idx)
    seen = set()
    for key, idxs in buckets.items():
        # pull in atoms from neighboring buckets so near-boundary pairs cluster
        group = list(idxs)
        for off in np.ndindex(*(3,) * base.shape[1]):
            nb = tuple(k + o - 1 for k, o in zip(key, off))
            if nb != key and nb in buckets:
                group.extend(buckets[nb])
        group = sorted(set(group))
        gid = tuple(group)
        if gid in seen:
            continue
        seen.add(gid)
        pts = base[group]
        center = pts.mean(axis=0)
        members = [g for g in group if np.linalg.norm(base[g] - center) <= 2 * tol]
        vels = mu.V[members]
        if len(members) > 1:
            vc = vels.mean(axis=0)
            spread = np.max(np.linalg.norm(vels - vc, axis=1))
            if spread > tol:
                return False, {
                    "base_point": {"x": mu.X[members[0]].tolist(), "t": float(mu.T[members[0]])},
                    "velocities": vels.tolist(),
                    "spread": float(spread),
                }
    return True, None


def fiber_hessian_obstruction(L: Lagrangian, p: PhasePoint, w) -> float:
    """<eta_{p,w}, L> = -w^T Lvv(p) w; negative wherever Lvv is positive."""
    w = np.asarray(w, dtype=float).reshape(-1)
    X, V, T = as_phase_arrays(p)
    lvv = L.vv(X, V, T)[0]
    return float(-w @ lvv @ w)


def exactness_residual(L: Lagrangian, F: FiberVectorField, points) -> float:
    """Max antisymmetric part of d_v(Lvv F) over the sample points.

    Zero means Lvv F is a fiberwise-closed form, i.e. F generates an exact
    horizontal direction for L.  d_v of Lvv itself is finite-differenced.
    """
    X, V, T = points
    X, V, T = Lagrangian._batch(X, V, T)
    m, n = X.shape
    J = np.einsum("mij,mjk->mik", L.vv(X, V, T), F.jac_v(X, V, T))
    h = 1e-5 * np.maximum(1.0, np.abs(V))
    Fv = F.value(X, V, T)
    for j in range(n):
        hp = np.zeros_like(V)
        hp[:, j] = h[:, j]
        dlvv = (L.vv(X, V + hp, T) - L.vv(X, V - hp, T)) / (2 * h[:, j, None, None])
        J[:, :, j] += np.einsum("mik,mk->mi", dlvv, Fv)
    asym = J - np.swapaxes(J, 1, 2)
    return float(np.max(np.linalg.norm(asym, axis=(1, 2)))) if m else 0.0


def horizontal_criticality_residual(mu: AtomicMeasure, L: Lagrangian,
                                    C: SecondDerivativeField, f_basis: TestBasis,
                                    tolerance: float = 1e-8) -> DefectReport:
    """Pair the Lagrangian with exact horizontal directions generated by probes.

    Each full-kind probe f generates F = Lvv^{-1} f_v (partials by central
    differences through the solve) and contributes <eta_{F, mu, C}, L>; the
    mass-normalized max over the family is the criticality residual.
    """
    if f_basis.kind != "full":
        raise InvalidInputError("criticality probes must be full-kind")
    defects = np.empty(len(f_basis))
    scales = np.empty(len(f_basis))
    for i, f in enumerate(f_basis):
        F = fiber_field_from_solve(L, f)
        eta = ExactHorizontalVariation(mu, F, C)
        defects[i] = pair_with_lagrangian(eta, L)
        jg = jet_many(f, mu.X, mu.V, mu.T, order=1)
        g2 = np.sum(jg.grad_x**2, axis=1) + np.sum(jg.grad_v**2, axis=1) + jg.dt**2
        scales[i] = np.sqrt(np.max(g2)) if g2.size else 0.0
    return DefectReport(f_basis.ids(), defects, scales, mu.mass, f_basis.degree,
                        normalization="mass", tolerance=tolerance)


def _lagrangian_jets(L: Lagrangian, X, V, T):
    from .probes import Jet2
    return Jet2(L.value(X, V, T), L.x(X, V, T), L.v(X, V, T), L.t(X, V, T))


def pair_with_lagrangian(eta, L: Lagrangian) -> float:
    """<eta, L> for the variants that only need first derivatives of L."""
    if isinstance(eta, VectorFieldVariation):
        mu = eta.mu
        dx, dv, dtt = eta.field(mu.X, mu.V, mu.T)
        j = _lagrangian_jets(L, mu.X, mu.V, mu.T)
        integrand = (np.sum(j.grad_x * dx, axis=1)
                     + np.sum(j.grad_v * dv, axis=1) + j.dt * dtt)
        return float(np.dot(mu.W, integrand))
    if isinstance(eta, ExactHorizontalVariation):
        mu = eta.mu
        X, V, T = mu.X, mu.V, mu.T
        j = _lagrangian_jets(L, X, V, T)
        Fv = eta.F.value(X, V, T)
        drift = np.einsum("mij,mj->mi", eta.F.jac_x(X, V, T), V) + eta.F.dt(X, V, T)
        if eta.C is not None:
            drift = drift + np.einsum("mij,mj->mi", eta.F.jac_v(X, V, T), eta.C.values)
        integrand = np.sum(j.grad_x * Fv, axis=1) + np.sum(j.grad_v * drift, axis=1)
        return float(np.dot(mu.W, integrand))
    if isinstance(eta, TranspositionalVariation):
        if not eta.mu.domain.time_independent:
            raise UnsupportedSettingError(
                "transpositional pairings are defined only in the time-independent setting"
            )
        X, V, T = as_phase_arrays(eta.p)
        val = L.value(X, V, T)[0]
        lv = L.v(X, V, T)[0]
        avg = float(np.dot(eta.mu.W, L.value(eta.mu.X, eta.mu.V, eta.mu.T))) / eta.mu.mass
        return float(val - np.dot(eta.p.v, lv) - avg)
    if isinstance(eta, FiberHessianVariation):
        return fiber_hessian_obstruction(L, eta.p, eta.w)
    raise InvalidInputError(f"unknown variation derivative {type(eta).__name__}")


# ---------------------------------------------------------------------------
# Certificates and flows

@dataclass
class CertificateReport:
    """Outcome of a minimizable-certificate check: per-clause worst gaps."""

    domination_gap: float       # max violation of L + c - df(v,1) >= 0 off support
    support_equality_gap: float  # max |L + c - df(v,1)| on the atoms
    pairing_gap: float          # |<mu, df(v,1)>| / mass
    tolerance: float

    @property
    def passed(self) -> bool:
        return (self.domination_gap <= self.tolerance
                and self.support_equality_gap <= self.tolerance
                and self.pairing_gap <= self.tolerance)

    @property
    def worst_gap(self) -> float:
        return max(self.domination_gap, self.support_equality_gap, self.pairing_gap)

    def to_dict(self) -> dict:
        return {
            "domination_gap": self.domination_gap,
            "support_equality_gap": self.support_equality_gap,
            "pairing_gap": self.pairing_gap,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def minimizable_certificate_check(mu: AtomicMeasure, L: Lagrangian, f: TestFunction,
                                  c: float, sample_points, tol: float = 1e-6) -> CertificateReport:
    """Check that (f, c) certifies mu-minimizability of L + c.

    Clause (a): L + c - (f_x . v + f_t) >= -tol on the sample grid;
    clause (b): equality within tol at every atom; clause (c): the pairing
    <mu, df(v,1)> vanishes within tol * mass.  Failures are reported in the
    gaps, never raised.
    """
    if f.kind != "base":
        raise InvalidInputError("certificate functions are base-kind")

    def df_sigma(X, V, T):
        j = jet_many(f, X, V, T, order=1)
        return np.sum(j.grad_x * V, axis=1) + j.dt

    Xs, Vs, Ts = sample_points
    Xs, Vs, Ts = Lagrangian._batch(Xs, Vs, Ts)
    gap_grid = L.value(Xs, Vs, Ts) + c - df_sigma(Xs, Vs, Ts)
    domination_gap = float(max(0.0, -np.min(gap_grid))) if gap_grid.size else 0.0
    gap_atoms = L.value(mu.X, mu.V, mu.T) + c - df_sigma(mu.X, mu.V, mu.T)
    support_equality_gap = float(np.max(np.abs(gap_atoms))) if gap_atoms.size else 0.0
    pairing_gap = abs(float(np.dot(mu.W, df_sigma(mu.X, mu.V, mu.T)))) / mu.mass
    return CertificateReport(domination_gap, support_equality_gap, pairing_gap, tol)


def fiber_translation(mu: AtomicMeasure, fiber_values, s: float) -> AtomicMeasure:
    """Translate atom velocities by s * X(atom) with X frozen at s = 0.

    The finite flow realizing a vertical variation: d/ds <mu_s, f> at 0
    equals the pairing of the vertical direction X with f.
    """
    dv = np.atleast_2d(np.asarray(fiber_values, dtype=float))
    if s == 0.0:
        return mu
    return mu.with_atoms(V=mu.V + s * dv)
