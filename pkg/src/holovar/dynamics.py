"""Lagrangians, the Euler-Lagrange vector field and flow, invariance, energy.

The Euler-Lagrange field on phase space is

    xdot = v,   vdot = Lvv^{-1} (L_x - L_vt - L_xv^T v),   tdot = 1,

defined wherever the fiber Hessian Lvv is invertible.  Above the condition
threshold the operations fail loudly instead of regularizing: a silently
regularized Hessian would fake invariance results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import PhasePoint, as_phase_arrays
from .errors import FlowEscapeError, InvalidInputError, SingularHessianError
from .measures import AtomicMeasure
from .probes import TestBasis, jet_many
from .reports import DefectReport

COND_MAX = 1e8
_EPS = np.finfo(float).eps
_FD_STEP = _EPS ** (1.0 / 3.0)   # cube-root rule for differencing smooth evaluators
_FD_STEP2 = _EPS ** (1.0 / 4.0)  # quarter-root rule when the inner evaluator is itself differenced


def _fd_steps(A, step=_FD_STEP):
    return step * np.maximum(1.0, np.abs(A))


class Lagrangian:
    """L(x, v, t) with vectorized value and partial evaluators.

    Partials may be registered analytically via the ``partials`` dict (keys
    'x', 'v', 't', 'vv', 'xv', 'vt'); missing ones fall back to central
    finite differences of the value (or of analytic first partials when
    those exist).  Conventions: x/v are (m, n) batches, xv[a, i, j] is
    d2 L / dx_i dv_j.
    """

    def __init__(self, name, n, value_fn, partials=None, fiberwise_convex=False,
                 time_independent=True, params=None):
        self.name = name
        self.n = n
        self._value = value_fn
        self._partials = dict(partials or {})
        self.fiberwise_convex = fiberwise_convex
        self.time_independent = time_independent
        self.params = dict(params or {})

    def value(self, X, V, T):
        X, V, T = self._batch(X, V, T)
        return np.asarray(self._value(X, V, T), dtype=float)

    @staticmethod
    def _batch(X, V, T):
        return (np.atleast_2d(np.asarray(X, float)),
                np.atleast_2d(np.asarray(V, float)),
                np.atleast_1d(np.asarray(T, float)))

    def _grad(self, X, V, T, wrt):
        key = {"x": 0, "v": 1}[wrt]
        A = (X, V)[key]
        out = np.empty_like(A)
        h = _fd_steps(A)
        for i in range(self.n):
            hp = np.zeros_like(A)
            hp[:, i] = h[:, i]
            args_p = (X + hp, V, T) if key == 0 else (X, V + hp, T)
            args_m = (X - hp, V, T) if key == 0 else (X, V - hp, T)
            out[:, i] = (self._value(*args_p) - self._value(*args_m)) / (2 * h[:, i])
        return out

    def x(self, X, V, T):
        X, V, T = self._batch(X, V, T)
        if "x" in self._partials:
            return np.asarray(self._partials["x"](X, V, T), dtype=float)
        return self._grad(X, V, T, "x")

    def v(self, X, V, T):
        X, V, T = self._batch(X, V, T)
        if "v" in self._partials:
            return np.asarray(self._partials["v"](X, V, T), dtype=float)
        return self._grad(X, V, T, "v")

    def t(self, X, V, T):
        X, V, T = self._batch(X, V, T)
        if "t" in self._partials:
            return np.asarray(self._partials["t"](X, V, T), dtype=float)
        h = _fd_steps(T)
        return (self._value(X, V, T + h) - self._value(X, V, T - h)) / (2 * h)

    def _jac_of_v(self, X, V, T, wrt):
        """Finite differences of the (analytic or FD) L_v in x or v."""
        key = {"x": 0, "v": 1}[wrt]
        A = (X, V)[key]
        m = X.shape[0]
        out = np.empty((m, self.n, self.n))
        h = _fd_steps(A, _FD_STEP if "v" in self._partials else _FD_STEP2)
        for i in range(self.n):
            hp = np.zeros_like(A)
            hp[:, i] = h[:, i]
            args_p = (X + hp, V, T) if key == 0 else (X, V + hp, T)
            args_m = (X - hp, V, T) if key == 0 else (X, V - hp, T)
            out[:, i, :] = (self.v(*args_p) - self.v(*args_m)) / (2 * h[:, i, None])
        return out

    def vv(self, X, V, T):
        X, V, T = self._batch(X, V, T)
        if "vv" in self._partials:
            return np.asarray(self._partials["vv"](X, V, T), dtype=float)
        return self._jac_of_v(X, V, T, "v")

    def xv(self, X, V, T):
        X, V, T = self._batch(X, V, T)
        if "xv" in self._partials:
            return np.asarray(self._partials["xv"](X, V, T), dtype=float)
        return self._jac_of_v(X, V, T, "x")

    def vt(self, X, V, T):
        X, V, T = self._batch(X, V, T)
        if "vt" in self._partials:
            return np.asarray(self._partials["vt"](X, V, T), dtype=float)
        h = _fd_steps(T, _FD_STEP if "v" in self._partials else _FD_STEP2)
        return (self.v(X, V, T + h) - self.v(X, V, T - h)) / (2 * h[:, None])


@dataclass
class ELField:
    """The Euler-Lagrange vector field of a Lagrangian, with a condition guard."""

    lagrangian: Lagrangian
    cond_max: float = COND_MAX

    def acceleration(self, X, V, T):
        """The fiber component vdot = Lvv^{-1} (L_x - L_vt - L_xv^T v)."""
        L = self.lagrangian
        X, V, T = Lagrangian._batch(X, V, T)
        lvv = L.vv(X, V, T)
        sing = np.linalg.svd(lvv, compute_uv=False)
        # both relative conditioning and near-singularity in problem units count
        conds = np.maximum(sing[:, 0] / np.maximum(sing[:, -1], 1e-300),
                           1.0 / np.maximum(sing[:, -1], 1e-300))
        if np.any(conds > self.cond_max) or not np.all(np.isfinite(conds)):
            bad = int(np.argmax(conds))
            raise SingularHessianError(
                f"fiber Hessian singular or too ill-conditioned at atom {bad}: "
                f"cond estimate {conds[bad]:.3e}",
                cond=float(conds[bad]), where=bad,
            )
        b = L.x(X, V, T) - L.vt(X, V, T) - np.einsum("mi,mij->mj", V, L.xv(X, V, T))
        acc = np.linalg.solve(lvv, b[..., None])[..., 0]
        resid = np.abs(np.einsum("mij,mj->mi", lvv, acc) - b)
        if np.max(resid) > 1e-10 * (1.0 + np.max(np.abs(b))):
            raise SingularHessianError(
                f"linear solve residual {np.max(resid):.3e} exceeds 1e-10", where=None
            )
        return acc


def el_vector_field(L: Lagrangian, p: PhasePoint):
    """Tangent components (xdot, vdot, tdot) = (v, acceleration, 1) at p."""
    X, V, T = as_phase_arrays(p)
    acc = ELField(L).acceleration(X, V, T)
    return p.v.copy(), acc[0], 1.0


def el_flow(L: Lagrangian, p: PhasePoint, s: float, step: float = 1e-3,
            domain=None) -> PhasePoint:
    """Classical one-step 4th-order integration of the EL field for time s."""
    if s == 0.0:
        return p
    n_steps = max(1, int(np.ceil(abs(s) / step)))
    h = s / n_steps
    field = ELField(L)
    x = np.array(p.x, copy=True)[None, :]
    v = np.array(p.v, copy=True)[None, :]
    t = float(p.t)

    def rhs(xc, vc, tc):
        try:
            acc = field.acceleration(xc, vc, np.array([tc]))
        except SingularHessianError as exc:
            exc.where = tc
            raise
        return vc, acc

    for k in range(n_steps):
        k1x, k1v = rhs(x, v, t)
        k2x, k2v = rhs(x + 0.5 * h * k1x, v + 0.5 * h * k1v, t + 0.5 * h)
        k3x, k3v = rhs(x + 0.5 * h * k2x, v + 0.5 * h * k2v, t + 0.5 * h)
        k4x, k4v = rhs(x + h * k3x, v + h * k3v, t + h)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        t = t + h
        if domain is not None:
            if not np.all(domain.contains(domain.wrap(x))):
                raise FlowEscapeError(f"flow left the domain at time {t}", time=t)
    return PhasePoint(x[0], v[0], t)


def invariance_residual(mu: AtomicMeasure, L: Lagrangian, basis: TestBasis,
                        tolerance: float = 1e-8) -> DefectReport:
    """Defects of the invariance identity sum_k w_k (X phi)(atom) per probe.

    X phi = phi_t + v . phi_x + vdot . phi_v with vdot the EL acceleration;
    probes must be full-kind and compactly supported in time through the
    boundary-vanishing flag.  The headline residual is mass-normalized.
    """
    if basis.kind != "full":
        raise InvalidInputError("invariance probes must be full-kind functions f(x, v, t)")
    if not basis.boundary_vanishing:
        raise InvalidInputError("invariance probes must carry the boundary-vanishing flag")
    acc = ELField(L).acceleration(mu.X, mu.V, mu.T)
    defects = np.empty(len(basis))
    scales = np.empty(len(basis))
    for i, f in enumerate(basis):
        j = jet_many(f, mu.X, mu.V, mu.T, order=1)
        xf = j.dt + np.sum(j.grad_x * mu.V, axis=1) + np.sum(j.grad_v * acc, axis=1)
        defects[i] = np.dot(mu.W, xf)
        g2 = np.sum(j.grad_x**2, axis=1) + np.sum(j.grad_v**2, axis=1) + j.dt**2
        scales[i] = np.sqrt(np.max(g2)) if g2.size else 0.0
    return DefectReport(basis.ids(), defects, scales, mu.mass, basis.degree,
                        normalization="mass", tolerance=tolerance)


def invariance_defect(mu: AtomicMeasure, L: Lagrangian, f) -> float:
    """Single-probe defect int (X f) dmu for an arbitrary full-kind probe."""
    acc = ELField(L).acceleration(mu.X, mu.V, mu.T)
    j = jet_many(f, mu.X, mu.V, mu.T, order=1)
    xf = j.dt + np.sum(j.grad_x * mu.V, axis=1) + np.sum(j.grad_v * acc, axis=1)
    return float(np.dot(mu.W, xf))


def energy(L: Lagrangian, p: PhasePoint) -> float:
    """v . L_v - L, the Hamiltonian read through the fiber derivative."""
    X, V, T = as_phase_arrays(p)
    return float(np.sum(V * L.v(X, V, T)) - L.value(X, V, T)[0])


def energy_many(L: Lagrangian, X, V, T) -> np.ndarray:
    X, V, T = Lagrangian._batch(X, V, T)
    return np.sum(V * L.v(X, V, T), axis=1) - L.value(X, V, T)


def el_residual_along_curve(L: Lagrangian, samples) -> float:
    """Max norm of d/dt L_v - L_x along a sampled curve, by central differences."""
    t, x, v = samples.times, samples.positions, samples.velocities
    if len(t) < 3:
        raise InvalidInputError("need at least 3 samples for the EL residual")
    lv = L.v(x, v, t)
    lx = L.x(x, v, t)
    dlv = (lv[2:] - lv[:-2]) / (t[2:] - t[:-2])[:, None]
    resid = np.linalg.norm(dlv - lx[1:-1], axis=1)
    return float(np.max(resid))


# ---------------------------------------------------------------------------
# Registry of built-in Lagrangians

def _poly_potential(terms):
    """U(x) = sum coef * prod x_i^p_i from [(coef, powers), ...]."""
    terms = [(float(c), tuple(int(p) for p in pw)) for c, pw in terms]

    def U(X):
        out = np.zeros(X.shape[0])
        for c, pw in terms:
            mono = np.full(X.shape[0], c)
            for i, p in enumerate(pw):
                if p:
                    mono = mono * X[:, i] ** p
            out += mono
        return out

    def Ux(X):
        out = np.zeros_like(X)
        for c, pw in terms:
            for i, p in enumerate(pw):
                if not p:
                    continue
                mono = np.full(X.shape[0], c * p)
                for jj, q in enumerate(pw):
                    q2 = q - 1 if jj == i else q
                    if q2:
                        mono = mono * X[:, jj] ** q2
                out[:, i] += mono
        return out

    return U, Ux


def _kinetic(name, n, scale):
    eye = np.eye(n)
    return Lagrangian(
        name, n,
        lambda X, V, T: scale * np.sum(V**2, axis=1),
        partials={
            "x": lambda X, V, T: np.zeros_like(X),
            "v": lambda X, V, T: 2.0 * scale * V,
            "t": lambda X, V, T: np.zeros(X.shape[0]),
            "vv": lambda X, V, T: np.broadcast_to(2.0 * scale * eye, (X.shape[0], n, n)).copy(),
            "xv": lambda X, V, T: np.zeros((X.shape[0], n, n)),
            "vt": lambda X, V, T: np.zeros_like(X),
        },
        fiberwise_convex=True,
        params={"scale": scale},
    )


def _oscillator(n, k):
    eye = np.eye(n)
    return Lagrangian(
        "oscillator", n,
        lambda X, V, T: 0.5 * np.sum(V**2, axis=1) - 0.5 * k * np.sum(X**2, axis=1),
        partials={
            "x": lambda X, V, T: -k * X,
            "v": lambda X, V, T: V.copy(),
            "t": lambda X, V, T: np.zeros(X.shape[0]),
            "vv": lambda X, V, T: np.broadcast_to(eye, (X.shape[0], n, n)).copy(),
            "xv": lambda X, V, T: np.zeros((X.shape[0], n, n)),
            "vt": lambda X, V, T: np.zeros_like(X),
        },
        fiberwise_convex=True,
        params={"k": k},
    )


def _mechanical(n, potential_terms):
    U, Ux = _poly_potential(potential_terms)
    eye = np.eye(n)
    return Lagrangian(
        "mechanical", n,
        lambda X, V, T: 0.5 * np.sum(V**2, axis=1) - U(X),
        partials={
            "x": lambda X, V, T: -Ux(X),
            "v": lambda X, V, T: V.copy(),
            "t": lambda X, V, T: np.zeros(X.shape[0]),
            "vv": lambda X, V, T: np.broadcast_to(eye, (X.shape[0], n, n)).copy(),
            "xv": lambda X, V, T: np.zeros((X.shape[0], n, n)),
            "vt": lambda X, V, T: np.zeros_like(X),
        },
        fiberwise_convex=True,
        params={"potential": potential_terms},
    )


def _twin_wells():
    # L(v) = (|v - (1,1)|^2) * (|v - (1,-1)|^2), nonnegative, vanishing exactly
    # at the two wells, with positive-definite fiber Hessian there.
    n = 2
    c1 = np.array([1.0, 1.0])
    c2 = np.array([1.0, -1.0])

    def parts(V):
        d1 = V - c1
        d2 = V - c2
        A = np.sum(d1**2, axis=1)
        B = np.sum(d2**2, axis=1)
        return d1, d2, A, B

    def value(X, V, T):
        _, _, A, B = parts(V)
        return A * B

    def lv(X, V, T):
        d1, d2, A, B = parts(V)
        return 2.0 * d1 * B[:, None] + 2.0 * d2 * A[:, None]

    def lvv(X, V, T):
        d1, d2, A, B = parts(V)
        m = V.shape[0]
        eye = np.eye(n)
        out = 2.0 * (A + B)[:, None, None] * eye[None, :, :]
        out += 4.0 * (d1[:, :, None] * d2[:, None, :] + d2[:, :, None] * d1[:, None, :])
        return out

    return Lagrangian(
        "twin_wells", n, value,
        partials={
            "x": lambda X, V, T: np.zeros_like(X),
            "v": lv,
            "t": lambda X, V, T: np.zeros(X.shape[0]),
            "vv": lvv,
            "xv": lambda X, V, T: np.zeros((X.shape[0], n, n)),
            "vt": lambda X, V, T: np.zeros_like(X),
        },
        fiberwise_convex=False,
    )


def _radial_well(n, tilt):
    e1 = np.zeros(n)
    e1[0] = 1.0
    eye = np.eye(n)

    def value(X, V, T):
        return (np.sum(V**2, axis=1) - 1.0) ** 2 + tilt * V[:, 0]

    def lv(X, V, T):
        return 4.0 * (np.sum(V**2, axis=1) - 1.0)[:, None] * V + tilt * e1

    def lvv(X, V, T):
        r = np.sum(V**2, axis=1) - 1.0
        return 4.0 * r[:, None, None] * eye[None, :, :] + 8.0 * V[:, :, None] * V[:, None, :]

    return Lagrangian(
        "radial_well", n, value,
        partials={
            "x": lambda X, V, T: np.zeros_like(X),
            "v": lv,
            "t": lambda X, V, T: np.zeros(X.shape[0]),
            "vv": lvv,
            "xv": lambda X, V, T: np.zeros((X.shape[0], n, n)),
            "vt": lambda X, V, T: np.zeros_like(X),
        },
        fiberwise_convex=False,
        params={"tilt": tilt},
    )


def make_lagrangian(tag: str, **params) -> Lagrangian:
    """Build a registry Lagrangian by name.

    Tags: free (|v|^2/2), speed_squared (|v|^2), oscillator{n,k},
    mechanical{n,potential}, twin_wells (n=2), radial_well{n,tilt}.
    """
    if tag == "free":
        return _kinetic("free", int(params.get("n", 2)), 0.5)
    if tag == "speed_squared":
        return _kinetic("speed_squared", int(params.get("n", 1)), 1.0)
    if tag == "oscillator":
        return _oscillator(int(params.get("n", 2)), float(params.get("k", 1.0)))
    if tag == "mechanical":
        return _mechanical(int(params.get("n", 1)), params.get("potential", [(0.5, (2,))]))
    if tag == "twin_wells":
        return _twin_wells()
    if tag == "radial_well":
        return _radial_well(int(params.get("n", 1)), float(params.get("tilt", 0.0)))
    raise InvalidInputError(f"unknown Lagrangian tag {tag!r}")


LAGRANGIAN_TAGS = ("free", "speed_squared", "oscillator", "mechanical", "twin_wells", "radial_well")
