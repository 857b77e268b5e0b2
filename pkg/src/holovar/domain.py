"""Spatial/time domain description and phase-space points."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Domain:
    """Box or torus base domain times a time interval [0, t0].

    Periodic coordinates are taken mod 1 (unit period).  ``bounds`` applies
    to the non-periodic coordinates only; periodic entries are ignored.
    ``time_independent`` declares that the scenario carries no genuine time
    dependence (measures are products with normalized time marginals); some
    operations, like transpositional pairings, are only defined then.
    """

    n: int
    t0: float
    periodic: tuple = ()
    bounds: tuple | None = None
    time_independent: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"spatial dimension must be >= 1, got {self.n}")
        if not self.t0 > 0:
            raise InvalidInputError(f"time horizon must be positive, got {self.t0}")
        per = self.periodic if self.periodic else (False,) * self.n
        if len(per) != self.n:
            raise InvalidInputError("periodic flags must have one entry per coordinate")
        object.__setattr__(self, "periodic", tuple(bool(p) for p in per))
        if self.bounds is not None:
            bnds = tuple(
                None if b is None else (float(b[0]), float(b[1])) for b in self.bounds
            )
            if len(bnds) != self.n:
                raise InvalidInputError("bounds must have one entry per coordinate")
            for i, b in enumerate(bnds):
                if b is not None and not b[0] < b[1]:
                    raise InvalidInputError(f"empty bounds for coordinate {i}: {b}")
            object.__setattr__(self, "bounds", bnds)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Wrap periodic coordinates into [0, 1); x has shape (..., n)."""
        x = np.array(x, dtype=float, copy=True)
        for i, p in enumerate(self.periodic):
            if p:
                x[..., i] = np.mod(x[..., i], 1.0)
        return x

    def contains(self, x: np.ndarray, pad: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the box (periodic coords always pass)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ok = np.ones(x.shape[0], dtype=bool)
        if self.bounds is None:
            return ok
        for i, p in enumerate(self.periodic):
            if p or self.bounds[i] is None:
                continue
            lo, hi = self.bounds[i]
            ok &= (x[:, i] >= lo - pad) & (x[:, i] <= hi + pad)
        return ok

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "t0": self.t0,
            "periodic": list(self.periodic),
            "bounds": None if self.bounds is None else [list(b) if b else None for b in self.bounds],
            "time_independent": self.time_independent,
        }

    @staticmethod
    def from_dict(d: dict) -> "Domain":
        bounds = d.get("bounds")
        if bounds is not None:
            bounds = tuple(None if b is None else tuple(b) for b in bounds)
        return Domain(
            n=int(d["n"]),
            t0=float(d["t0"]),
            periodic=tuple(d.get("periodic") or ()),
            bounds=bounds,
            time_independent=bool(d.get("time_independent", False)),
        )


@dataclass(frozen=True)
class PhasePoint:
    """A point (x, v, t) of phase space."""

    x: np.ndarray
    v: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(-1))
        object.__setattr__(self, "t", float(self.t))
        if self.x.shape != self.v.shape:
            raise InvalidInputError("position and velocity must have the same dimension")


def as_phase_arrays(p: PhasePoint):
    """(x, v, t) of a single point as batched arrays of length one."""
    return p.x[None, :], p.v[None, :], np.array([p.t])
