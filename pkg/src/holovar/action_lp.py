"""Action minimization over discretized closed probability measures.

The grid relaxation: nonnegative cell weights, objective L at cell centers,
equality rows enforcing the closedness identity for each base probe plus a
unit-mass row.  Replacing "all smooth probes" by a degree-d basis makes the
LP value a lower bound for the degree-infinity problem on the same grid, so
the basis degree is always reported alongside the value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .domain import Domain
from .dynamics import Lagrangian
from .errors import InvalidInputError, LPInfeasibleError, LPInternalError
from .measures import AtomicMeasure
from .probes import TestBasis, TestFunction, combine, jet_many
from .reports import DefectReport

WEIGHT_FLOOR = 1e-12  # cells below this never enter the returned measure


@dataclass(frozen=True)
class GridSpec:
    """Cell-center collocation grid on T(R^n) x [0, t0].

    ``x_counts``/``v_counts`` give the number of cells per coordinate;
    periodic coordinates tile [0, 1), non-periodic ones their domain bounds,
    velocities the box ``v_box``.
    """

    domain: Domain
    x_counts: tuple
    v_counts: tuple
    t_count: int
    v_box: tuple

    def __post_init__(self):
        n = self.domain.n
        if len(self.x_counts) != n or len(self.v_counts) != n:
            raise InvalidInputError("need one cell count per coordinate")
        if any(c < 1 for c in self.x_counts) or any(c < 1 for c in self.v_counts) or self.t_count < 1:
            raise InvalidInputError("cell counts must be positive")
        if len(self.v_box) != n:
            raise InvalidInputError("need one velocity interval per coordinate")

    def axes(self):
        dom = self.domain
        xs = []
        for i, c in enumerate(self.x_counts):
            if dom.periodic[i]:
                lo, hi = 0.0, 1.0
            elif dom.bounds is not None and dom.bounds[i] is not None:
                lo, hi = dom.bounds[i]
            else:
                raise InvalidInputError(f"non-periodic coordinate {i} needs domain bounds")
            xs.append(lo + (np.arange(c) + 0.5) * (hi - lo) / c)
        vs = [lo + (np.arange(c) + 0.5) * (hi - lo) / c for (lo, hi), c in zip(self.v_box, self.v_counts)]
        ts = (np.arange(self.t_count) + 0.5) * dom.t0 / self.t_count
        return xs, vs, ts

    def cell_centers(self):
        """All cell centers as (m, n), (m, n), (m,) arrays."""
        xs, vs, ts = self.axes()
        grids = np.meshgrid(*xs, *vs, ts, indexing="ij")
        flat = [g.ravel() for g in grids]
        n = self.domain.n
        X = np.column_stack(flat[:n])
        V = np.column_stack(flat[n:2 * n])
        T = flat[2 * n]
        return X, V, T

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.x_counts) * np.prod(self.v_counts) * self.t_count)


@dataclass
class LPProblem:
    grid: GridSpec
    basis: TestBasis
    objective: np.ndarray       # L at cell centers
    constraints: np.ndarray     # one row per probe, then the all-ones mass row
    rhs: np.ndarray
    centers: tuple              # (X, V, T)


def build_lp(grid: GridSpec, L: Lagrangian, base_basis: TestBasis) -> LPProblem:
    """Assemble objective and closedness/mass rows at the cell centers."""
    if grid.n_cells == 0:
        raise InvalidInputError("empty grid")
    if base_basis.kind != "base" or not base_basis.boundary_vanishing:
        raise InvalidInputError("LP probes must be boundary-vanishing base-kind functions")
    X, V, T = grid.cell_centers()
    c = L.value(X, V, T)
    rows = np.empty((len(base_basis) + 1, grid.n_cells))
    for i, phi in enumerate(base_basis):
        j = jet_many(phi, X, V, T, order=1)
        rows[i] = np.sum(j.grad_x * V, axis=1) + j.dt
    rows[-1] = 1.0
    rhs = np.zeros(len(base_basis) + 1)
    rhs[-1] = 1.0
    return LPProblem(grid, base_basis, c, rows, rhs, (X, V, T))


@dataclass
class MinActionResult:
    measure: AtomicMeasure
    value: float
    weights: np.ndarray
    dual_probe_values: np.ndarray
    dual_mass_value: float
    duality_gap: float
    basis_degree: int

    def certificate(self, basis: TestBasis) -> tuple:
        """Discrete minimizable-Lagrangian certificate (f, c) from the duals.

        f = sum_phi y_phi phi, c = -y_mass; dual feasibility makes
        L + c - df(v, 1) >= 0 at every cell, with equality on the optimal
        support by complementary slackness.
        """
        f = combine(list(basis), self.dual_probe_values.tolist(), fid="lp-dual-certificate")
        return f, -self.dual_mass_value


def solve_min_action(lp: LPProblem, gap_tol: float = 1e-8) -> MinActionResult:
    """Minimize the action over the discretized closed probability measures.

    Deterministic dual-simplex solve; optimality is certified by the duality
    gap (must be <= gap_tol * (1 + |value|)).  Infeasibility raises with the
    solver diagnostics; unboundedness is impossible for unit-mass weights
    and reported as an internal error.
    """
    res = linprog(
        lp.objective,
        A_eq=lp.constraints,
        b_eq=lp.rhs,
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status == 2:
        raise LPInfeasibleError("closedness rows admit no probability weights", details=res.message)
    if res.status != 0:
        raise LPInternalError(f"unexpected solver status {res.status}: {res.message}")
    w = np.asarray(res.x, dtype=float)
    y = np.asarray(res.eqlin.marginals, dtype=float)
    # scipy's equality marginals are signed so that b_eq . y equals the optimum
    dual_value = float(np.dot(lp.rhs, y))
    gap = abs(float(res.fun) - dual_value)
    if gap > gap_tol * (1.0 + abs(res.fun)):
        raise LPInternalError(f"duality gap {gap:.3e} above certification threshold")
    keep = w > WEIGHT_FLOOR
    X, V, T = lp.centers
    measure = AtomicMeasure(lp.grid.domain, X[keep], V[keep], T[keep], w[keep])
    return MinActionResult(
        measure=measure,
        value=float(res.fun),
        weights=w,
        dual_probe_values=y[:-1],
        dual_mass_value=float(y[-1]),
        duality_gap=gap,
        basis_degree=lp.basis.degree,
    )


def random_feasible_weights(lp: LPProblem, n_samples: int, seed: int = 0) -> list:
    """Feasible nonnegative weight vectors for dominance checks.

    Starts from the projection of uniform weights onto the affine constraint
    set and adds null-space perturbations scaled to preserve positivity.
    """
    rng = np.random.default_rng(seed)
    A, b = lp.constraints, lp.rhs
    m = A.shape[1]
    w0 = np.full(m, 1.0 / m)
    correction, *_ = np.linalg.lstsq(A, A @ w0 - b, rcond=None)
    w0 = w0 - correction
    if np.min(w0) < 0:
        raise LPInternalError("uniform projection left the positive cone; refine the grid")
    # orthonormal null-space basis of the constraint matrix
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > s[0] * 1e-12))
    N = vt[rank:].T
    out = []
    for _ in range(n_samples):
        z = rng.standard_normal(N.shape[1])
        d = N @ z
        scale = 0.9 * np.min(w0 / np.maximum(np.abs(d), 1e-300))
        out.append(w0 + scale * d)
    return out
