"""Defect reports: per-probe weak-equation residuals with normalizations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TINY = 1e-300


@dataclass
class DefectReport:
    """Per-probe defects of a weak equation tested against a finite basis.

    ``defects[i]`` is the raw pairing value for probe ``probe_ids[i]``;
    ``scales[i]`` is that probe's derivative magnitude over the support.
    The headline ``residual`` is either the mass-normalized or the
    mass-and-scale-normalized maximum, selected by ``normalization``.
    """

    probe_ids: list
    defects: np.ndarray
    scales: np.ndarray
    mass: float
    basis_degree: int
    normalization: str = "scale"  # "scale" -> |d| / (mass * scale), "mass" -> |d| / mass
    tolerance: float = 1e-8

    def __post_init__(self):
        self.defects = np.asarray(self.defects, dtype=float)
        self.scales = np.asarray(self.scales, dtype=float)

    @property
    def max_raw(self) -> float:
        return float(np.max(np.abs(self.defects))) if self.defects.size else 0.0

    @property
    def max_mass_normalized(self) -> float:
        return self.max_raw / max(self.mass, TINY)

    @property
    def max_scale_normalized(self) -> float:
        if not self.defects.size:
            return 0.0
        denom = np.maximum(self.scales, TINY) * max(self.mass, TINY)
        return float(np.max(np.abs(self.defects) / denom))

    @property
    def residual(self) -> float:
        if self.normalization == "mass":
            return self.max_mass_normalized
        return self.max_scale_normalized

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance

    def per_probe(self):
        return list(zip(self.probe_ids, self.defects.tolist()))

    def to_dict(self) -> dict:
        return {
            "per_probe": [{"id": pid, "defect": d} for pid, d in self.per_probe()],
            "max_normalized": self.residual,
            "normalization": self.normalization,
            "basis_degree": self.basis_degree,
            "tolerance": self.tolerance,
            "mass": self.mass,
            "passed": self.passed,
        }
