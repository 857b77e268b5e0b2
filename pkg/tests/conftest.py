"""Shared builders for the test suite."""

import numpy as np
import pytest

from holovar import (Domain, SecondDerivativeField, gauss_curve_measure,
                     gauss_times, make_lagrangian, tensor_density_measure)


def box_domain(n=2, t0=1.0, half=3.0, time_independent=False):
    return Domain(n=n, t0=t0, bounds=((-half, half),) * n,
                  time_independent=time_independent)


def torus_domain(n=1, t0=1.0, time_independent=False):
    return Domain(n=n, t0=t0, periodic=(True,) * n,
                  time_independent=time_independent)


def oscillator_orbit_measure(amp=(1.2, 0.7), phase=0.0, n_nodes=160, t0=1.0,
                             domain=None):
    """Analytic orbit of the unit-frequency oscillator at Gauss nodes.

    Returns (measure, accelerations); gamma'' = -gamma exactly.
    """
    A, B = amp
    dom = domain or box_domain()
    pos = lambda t: (A * np.cos(t + phase), B * np.sin(t + phase))
    vel = lambda t: (-A * np.sin(t + phase), B * np.cos(t + phase))
    acc = lambda t: (-A * np.cos(t + phase), -B * np.sin(t + phase))
    return gauss_curve_measure(dom, pos, vel, n_nodes, acc)


def sine_orbit_measure(amp=(1.0, 0.6), n_nodes=40, domain=None):
    """Oscillator orbit with stiffness pi^2 vanishing at both time endpoints."""
    om = np.pi
    A, B = amp
    dom = domain or box_domain()
    pos = lambda t: (A * np.sin(om * t), B * np.sin(om * t))
    vel = lambda t: (A * om * np.cos(om * t), B * om * np.cos(om * t))
    acc = lambda t: (-A * om**2 * np.sin(om * t), -B * om**2 * np.sin(om * t))
    return gauss_curve_measure(dom, pos, vel, n_nodes, acc)


def line_measure(x0=(0.1, 0.2), v0=(0.5, 0.3), n_nodes=120, domain=None):
    dom = domain or box_domain()
    x0 = np.asarray(x0, float)
    v0 = np.asarray(v0, float)
    pos = lambda t: x0 + t * v0
    vel = lambda t: v0
    acc = lambda t: np.zeros_like(v0)
    return gauss_curve_measure(dom, pos, vel, n_nodes, acc)


def torus_profile_density(center=1.0, width=1.6, nx=12, nv=81, nt=5):
    """Uniform-in-x density on the circle with a raised-cosine velocity profile.

    Invariant for any velocity-only Lagrangian; C = 0 is a second derivative.
    """
    dom = torus_domain(time_independent=True)
    xg = (np.arange(nx) / nx)[:, None]
    wx = np.full(nx, 1.0 / nx)
    vg = np.linspace(center - width / 2, center + width / 2, nv)[:, None]
    wv = np.full(nv, width / (nv - 1))
    wv[0] *= 0.5
    wv[-1] *= 0.5
    tg, wt = gauss_times(dom.t0, nt)

    def density(x, v_nodes):
        u = (v_nodes[:, 0] - center) / width
        return np.where(np.abs(u) < 0.5, (1.0 + np.cos(2 * np.pi * u)) / width, 0.0)

    mu = tensor_density_measure(dom, xg, wx, vg, wv, tg, wt, density)
    return mu
