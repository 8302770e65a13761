"""Oracles shared by several test modules."""
import math

import numpy as np

from nlkg.field_core import RadialField
from nlkg.functionals import FieldSummary, ScalingPair


def soliton_1d(x):
    """Closed-form ground state of -Q'' + Q = 8 Q^7 (f = |u|^8)."""
    e = np.exp(-3.0 * np.abs(x))
    return 2.0 ** (-1.0 / 6.0) * (2.0 * e / (1.0 + e * e)) ** (1.0 / 3.0)


def j_exact(phi: RadialField, sp: ScalingPair, model, lam: float, c: float = 1.0) -> float:
    """J(e^{a lam} phi(e^{-b lam} x)) from change-of-variables laws, no resampling."""
    d = phi.grid.d
    s = FieldSummary.of(RadialField(phi.grid, math.exp(sp.alpha * lam) * phi.values), model)
    vol = math.exp(d * sp.beta * lam)
    grad = math.exp((d - 2) * sp.beta * lam) * s.grad
    return 0.5 * grad + 0.5 * c * vol * s.mass - vol * s.F


def mountain_pass_margins(phi, sp, model, eps, h=1e-3):
    """Slack of (J mono) and of the second-difference form of (J conv).

    Returns (mono slack, conv slack, scale) with scale the size of the terms.
    """
    from nlkg.functionals import K, static_energy
    d = phi.grid.d
    s = FieldSummary.of(phi, model)
    J = static_energy(s, model)
    k = K(s, sp, model)
    mb, ml = sp.mu_bar, sp.mu_low
    mono = mb * J - k - (sp.alpha * eps * s.F + abs(sp.beta) * min(s.mass, s.grad))
    j = [j_exact(phi, sp, model, t) for t in (-2 * h, -h, 0.0, h, 2 * h)]
    j1 = (j[0] - 8 * j[1] + 8 * j[3] - j[4]) / (12 * h)
    j2 = (-j[0] + 16 * j[1] - 30 * j[2] + 16 * j[3] - j[4]) / (12 * h * h)
    dF = sp.alpha * s.DF + d * sp.beta * s.F
    conv = -(j2 - (mb + ml) * j1 + mb * ml * J) - 2 * sp.alpha * eps / (d + 1) * dF
    scale = abs(J) + abs(k) + s.grad + s.mass + s.F + s.DF + s.D2F
    return mono, conv, scale


def growth_eps(model, d, phi):
    from nlkg.field_core import verify_growth_conditions
    top = float(np.max(np.abs(phi.values)))
    u = np.concatenate([np.geomspace(1e-6, 1.0, 50) * max(top, 1e-6)])
    return verify_growth_conditions(model, d, u).eps


def smooth_field(grid, rng, amp=1.0):
    from nlkg.harness import random_bump
    return random_bump(grid, rng, amp=amp)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok
