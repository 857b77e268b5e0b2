"""Vector-field carriers used by variations and second-derivative machinery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ELField, Lagrangian
from .errors import InvalidInputError
from .probes import TestFunction, jet_many

_FD_H = 1e-5


@dataclass
class BaseVectorField:
    """P(x, t) on the base, with spatial Jacobian and time derivative.

    value: (m, n); jac_x: (m, n, n) with jac_x[a, i, j] = dP_i/dx_j;
    dt: (m, n).  Used for velocity-independent horizontal flows, which
    require P to vanish for t near 0 and t0.
    """

    value: callable
    jac_x: callable
    dt: callable
    name: str = "P"


def translation_bump_field(direction, t0: float) -> BaseVectorField:
    """P(x, t) = direction * t(t0-t)/t0^2: rigid translation, zero at t ends."""
    d = np.asarray(direction, dtype=float)
    n = d.shape[0]

    def bump(T):
        return T * (t0 - T) / t0**2

    def dbump(T):
        return (t0 - 2.0 * T) / t0**2

    return BaseVectorField(
        value=lambda X, T: bump(T)[:, None] * d[None, :],
        jac_x=lambda X, T: np.zeros((X.shape[0], n, n)),
        dt=lambda X, T: dbump(T)[:, None] * d[None, :],
        name="translation*bump",
    )


def base_field_from_probe_gradient(phi: TestFunction) -> BaseVectorField:
    """P = phi_x(x, t) for a base probe phi (analytic Jacobian via the jet)."""
    if phi.kind != "base":
        raise InvalidInputError("need a base-kind probe")
    from .probes import d_dt, d_dx

    dphis = [d_dx(phi, i) for i in range(phi.n)]
    ddt = [d_dt(g) for g in dphis]

    def value(X, T):
        V0 = np.zeros_like(X)
        return np.column_stack([jet_many(g, X, V0, T, order=0).value for g in dphis])

    def jac_x(X, T):
        V0 = np.zeros_like(X)
        m = X.shape[0]
        out = np.empty((m, phi.n, phi.n))
        for i, g in enumerate(dphis):
            out[:, i, :] = jet_many(g, X, V0, T, order=1).grad_x
        return out

    def dt(X, T):
        V0 = np.zeros_like(X)
        return np.column_stack([jet_many(g, X, V0, T, order=0).value for g in ddt])

    return BaseVectorField(value, jac_x, dt, name=f"grad({phi.fid})")


@dataclass
class FiberVectorField:
    """F(x, v, t) in R^n with partials F_x, F_v (m, n, n) and F_t (m, n)."""

    value: callable
    jac_x: callable
    jac_v: callable
    dt: callable
    name: str = "F"


def fiber_field_from_base(P: BaseVectorField) -> FiberVectorField:
    """Velocity-independent fiber field F(x, v, t) = P(x, t)."""
    return FiberVectorField(
        value=lambda X, V, T: P.value(X, T),
        jac_x=lambda X, V, T: P.jac_x(X, T),
        jac_v=lambda X, V, T: np.zeros((X.shape[0], X.shape[1], X.shape[1])),
        dt=lambda X, V, T: P.dt(X, T),
        name=P.name,
    )


def fiber_field_from_callable(fn, n: int, name: str = "F") -> FiberVectorField:
    """Wrap F(X, V, T) -> (m, n) with central-difference partials (step 1e-5*scale)."""

    def _fd(X, V, T, wrt):
        key = {"x": 0, "v": 1}[wrt]
        A = (X, V)[key]
        m = A.shape[0]
        out = np.empty((m, n, n))
        h = _FD_H * np.maximum(1.0, np.abs(A))
        for j in range(n):
            hp = np.zeros_like(A)
            hp[:, j] = h[:, j]
            args_p = (X + hp, V, T) if key == 0 else (X, V + hp, T)
            args_m = (X - hp, V, T) if key == 0 else (X, V - hp, T)
            out[:, :, j] = (fn(*args_p) - fn(*args_m)) / (2 * h[:, j, None])
        return out

    def _fd_t(X, V, T):
        h = _FD_H * np.maximum(1.0, np.abs(T))
        return (fn(X, V, T + h) - fn(X, V, T - h)) / (2 * h[:, None])

    return FiberVectorField(
        value=lambda X, V, T: np.asarray(fn(X, V, T), dtype=float),
        jac_x=lambda X, V, T: _fd(X, V, T, "x"),
        jac_v=lambda X, V, T: _fd(X, V, T, "v"),
        dt=_fd_t,
        name=name,
    )


def fiber_field_from_solve(L: Lagrangian, f: TestFunction, name=None) -> FiberVectorField:
    """F = Lvv^{-1} f_v, partials by differencing through the linear solve.

    This is the generated exact-horizontal direction of a full-kind probe f:
    by construction d_v(Lvv F) = d_v(d_v f) = 0 fiberwise.
    """

    def fn(X, V, T):
        lvv = L.vv(X, V, T)
        fv = jet_many(f, X, V, T, order=1).grad_v
        return np.linalg.solve(lvv, fv[..., None])[..., 0]

    return fiber_field_from_callable(fn, L.n, name=name or f"Lvv^-1*d_v({f.fid})")


@dataclass
class SecondDerivativeField:
    """A fiber field C realizing the lifted weak continuity equation.

    ``values`` is atom-aligned to the measure it was built for; ``residual``
    is the achieved weak-equation residual (mass-normalized max defect) and
    ``provenance`` one of 'curve-acceleration', 'el-field', 'least-squares',
    'zero', or 'manual'.
    """

    values: np.ndarray
    provenance: str
    residual: float | None = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    @staticmethod
    def from_el_field(mu, L: Lagrangian) -> "SecondDerivativeField":
        acc = ELField(L).acceleration(mu.X, mu.V, mu.T)
        return SecondDerivativeField(acc, "el-field")

    @staticmethod
    def from_accelerations(acc) -> "SecondDerivativeField":
        return SecondDerivativeField(np.asarray(acc, dtype=float), "curve-acceleration")

    @staticmethod
    def zero(mu) -> "SecondDerivativeField":
        return SecondDerivativeField(np.zeros_like(mu.V), "zero")

    @staticmethod
    def concatenate(fields, provenance="manual") -> "SecondDerivativeField":
        return SecondDerivativeField(
            np.vstack([f.values for f in fields]), provenance
        )
