"""Second-derivative estimation and lifting to the double tangent space.

A closed measure has closed velocities when some fiber field C makes

    sum_k w_k [f_x . v + f_v . C(atom_k) + f_t] = 0

hold for all boundary-vanishing probes f.  The estimator solves this
linear system in the per-atom unknowns C(atom) by minimum-norm least
squares; the achieved residual certifies membership at the basis degree,
and a residual bounded away from zero is evidence of non-membership.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .fields import SecondDerivativeField
from .measures import AtomicMeasure
from .probes import TestBasis, jet_many
from .reports import DefectReport

MERGE_TOL = 1e-9


def _merge_atoms(mu: AtomicMeasure):
    """Group atoms whose (x, v, t) coincide within MERGE_TOL.

    Duplicated phase points would make the estimation system artificially
    rank-deficient; merging collapses them to weighted representatives the
    way disintegration fibers collapse to their centers of mass.
    """
    key = np.column_stack([mu.X, mu.V, mu.T[:, None]])
    rounded = np.round(key / MERGE_TOL).astype(np.int64)
    _, group_ids, inverse = np.unique(rounded, axis=0, return_index=True, return_inverse=True)
    return group_ids, inverse


def weak_equation_defects(mu: AtomicMeasure, C_values, basis: TestBasis,
                          tolerance: float = 1e-8) -> DefectReport:
    """Per-probe defects of the lifted continuity equation for a given C."""
    C_values = np.atleast_2d(np.asarray(C_values, dtype=float))
    defects = np.empty(len(basis))
    scales = np.empty(len(basis))
    for i, f in enumerate(basis):
        j = jet_many(f, mu.X, mu.V, mu.T, order=1)
        integrand = np.sum(j.grad_x * mu.V, axis=1) + np.sum(j.grad_v * C_values, axis=1) + j.dt
        defects[i] = np.dot(mu.W, integrand)
        g2 = np.sum(j.grad_x**2, axis=1) + np.sum(j.grad_v**2, axis=1) + j.dt**2
        scales[i] = np.sqrt(np.max(g2)) if g2.size else 0.0
    return DefectReport(basis.ids(), defects, scales, mu.mass, basis.degree,
                        normalization="mass", tolerance=tolerance)


def estimate_second_derivative(mu: AtomicMeasure, f_basis: TestBasis,
                               tolerance: float = 1e-8,
                               rcond: float = 1e-6) -> SecondDerivativeField:
    """Least-squares second-derivative field from a full-kind probe basis.

    The system may be under- or over-determined; ties are broken by the
    minimum L^2(mu) norm (per-atom unknowns scaled by the square root of
    their weights), the only norm intrinsic to the measure.  ``rcond``
    truncates the singular spectrum: directions below rcond * sigma_max are
    dropped rather than allowed to amplify quadrature error in the data.
    The returned field is aligned to the original atom list, with merged
    duplicates sharing one value.
    """
    if f_basis.kind != "full":
        raise InvalidInputError("second-derivative estimation needs full-kind probes")
    if not f_basis.boundary_vanishing:
        raise InvalidInputError("second-derivative probes must be boundary-vanishing")
    n = mu.domain.n
    group_ids, inverse = _merge_atoms(mu)
    n_groups = len(group_ids)
    n_probes = len(f_basis)

    group_w = np.zeros(n_groups)
    np.add.at(group_w, inverse, mu.W)
    sqw = np.sqrt(group_w)

    A = np.zeros((n_probes, n_groups * n))
    b = np.zeros(n_probes)
    for i, f in enumerate(f_basis):
        j = jet_many(f, mu.X, mu.V, mu.T, order=1)
        b[i] = -np.dot(mu.W, np.sum(j.grad_x * mu.V, axis=1) + j.dt)
        wfv = mu.W[:, None] * j.grad_v  # (m, n)
        row = np.zeros((n_groups, n))
        np.add.at(row, inverse, wfv)
        A[i] = (row / sqw[:, None]).ravel()
    coef, _, _, _ = np.linalg.lstsq(A, b, rcond=rcond)
    C_groups = coef.reshape(n_groups, n) / sqw[:, None]
    C_atoms = C_groups[inverse]
    report = weak_equation_defects(mu, C_atoms, f_basis, tolerance)
    return SecondDerivativeField(C_atoms, "least-squares", residual=report.residual)


@dataclass
class LiftedMeasure:
    """Atoms with tangent components (vx, vv, vt) attached.

    Built by ``lift`` these satisfy vx = v and vt = 1 by construction;
    hand-built instances may violate them, which ``verify_lift`` reads out.
    """

    base: AtomicMeasure
    vx: np.ndarray
    vv: np.ndarray
    vt: np.ndarray

    def __post_init__(self):
        self.vx = np.atleast_2d(np.asarray(self.vx, dtype=float))
        self.vv = np.atleast_2d(np.asarray(self.vv, dtype=float))
        self.vt = np.atleast_1d(np.asarray(self.vt, dtype=float))
        m = self.base.natoms
        if self.vx.shape[0] != m or self.vv.shape[0] != m or self.vt.shape[0] != m:
            raise InvalidInputError("tangent components must align with the atom list")

    def project(self) -> AtomicMeasure:
        """Forget the tangent components; equals the base measure exactly."""
        return self.base

    def to_dict(self) -> dict:
        d = self.base.to_dict()
        for atom, vx, vv, vt in zip(d["atoms"], self.vx, self.vv, self.vt):
            atom["vx"] = vx.tolist()
            atom["vv"] = vv.tolist()
            atom["vt"] = float(vt)
        return d


def lift(mu: AtomicMeasure, C: SecondDerivativeField) -> LiftedMeasure:
    """Attach (v, C(atom), 1) to every atom."""
    if C.values.shape != mu.V.shape:
        raise InvalidInputError("second-derivative field is not aligned with the atoms")
    return LiftedMeasure(mu, mu.V.copy(), C.values.copy(), np.ones(mu.natoms))


@dataclass
class LiftReport:
    closedness: DefectReport      # clause (a): lifted continuity defects
    velocity_match: float         # clause (b): max |vx - v|
    projection_gap: float         # clause (c): exact by representation

    @property
    def residuals(self):
        return (self.closedness.residual, self.velocity_match, self.projection_gap)

    def to_dict(self) -> dict:
        return {
            "closedness": self.closedness.to_dict(),
            "velocity_match": self.velocity_match,
            "projection_gap": self.projection_gap,
        }


def verify_lift(lifted: LiftedMeasure, f_basis: TestBasis,
                tolerance: float = 1e-8) -> LiftReport:
    """Check the three lifted-measure clauses against a full-kind basis."""
    mu = lifted.base
    defects = np.empty(len(f_basis))
    scales = np.empty(len(f_basis))
    for i, f in enumerate(f_basis):
        j = jet_many(f, mu.X, mu.V, mu.T, order=1)
        integrand = (np.sum(j.grad_x * lifted.vx, axis=1)
                     + np.sum(j.grad_v * lifted.vv, axis=1)
                     + j.dt * lifted.vt)
        defects[i] = np.dot(mu.W, integrand)
        g2 = np.sum(j.grad_x**2, axis=1) + np.sum(j.grad_v**2, axis=1) + j.dt**2
        scales[i] = np.sqrt(np.max(g2)) if g2.size else 0.0
    closed = DefectReport(f_basis.ids(), defects, scales, mu.mass, f_basis.degree,
                          normalization="mass", tolerance=tolerance)
    vmatch = float(np.max(np.abs(lifted.vx - mu.V))) if mu.natoms else 0.0
    return LiftReport(closed, vmatch, 0.0)
