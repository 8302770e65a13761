"""Static energies, the K/H family, rescaling landscapes, set membership and
virial-type diagnostics."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (CutoffExceedsBox, GridMismatch, InadmissiblePair, NoRoot,
                     TruncationLoss)
from .field_core import (BoxField, RadialField, box_grad_norm_sq, box_gradient,
                         chi_R, f_family_eval, radial_gradient)


# ---------------------------------------------------------------------------
# scaling pairs and states

@dataclass(frozen=True)
class ScalingPair:
    alpha: float
    beta: float
    d: int

    @property
    def mu_l2(self) -> float:
        return 2 * self.alpha + self.d * self.beta

    @property
    def mu_h1(self) -> float:
        return 2 * self.alpha + (self.d - 2) * self.beta

    @property
    def mu_bar(self) -> float:
        return max(self.mu_l2, self.mu_h1)

    @property
    def mu_low(self) -> float:
        return min(self.mu_l2, self.mu_h1)

    @property
    def admissible(self) -> bool:
        a, b = self.alpha, self.beta
        return a >= 0 and self.mu_l2 >= 0 and self.mu_h1 >= 0 and (a, b) != (0, 0)

    @property
    def amplitude_ray(self) -> bool:
        """The (d, alpha) = (2, 0) case, where the constraint is reached by amplitude."""
        return self.d == 2 and self.alpha == 0

    def __neg__(self):
        return ScalingPair(-self.alpha, -self.beta, self.d)

    def label(self) -> str:
        return f"({self.alpha:g},{self.beta:g})"


def cone_edges(d: int):
    """The two boundary rays of the admissible cone as exact integer pairs.

    Lower edge: 2a + d b = 0. Upper edge: 2a + (d-2) b = 0 when d = 1, the ray
    a = 0 when d >= 2 (for d = 2 the two descriptions coincide).
    """
    lower = (d, -2)
    upper = (1, 2) if d == 1 else (0, 1)
    return lower, upper


def sample_pairs(d: int, count: int = 20) -> list[ScalingPair]:
    """Admissible pairs spread over the cone; both edges and (1,0), (0,1), (d,-2) included."""
    (al, bl), (au, bu) = cone_edges(d)
    th_lo, th_hi = math.atan2(bl, al), math.atan2(bu, au)
    out = [ScalingPair(float(al), float(bl), d), ScalingPair(float(au), float(bu), d)]
    for a, b in ((1.0, 0.0), (0.0, 1.0), (float(d), -2.0)):
        sp = ScalingPair(a, b, d)
        if sp.admissible and sp not in out:
            out.append(sp)
    fixed = list(out)
    dirs = [math.atan2(p.beta, p.alpha) for p in fixed]
    k = max(count - len(out), 0)
    # interior rays that coincide with a fixed pair's direction are skipped
    while len(out) < count:
        out = list(fixed)
        for th in np.linspace(th_lo, th_hi, k + 2)[1:-1]:
            if all(abs(th - t) > 1e-9 for t in dirs):
                out.append(ScalingPair(math.cos(th), math.sin(th), d))
        k += 1
    return out[:max(count, len(fixed))]


@dataclass(frozen=True)
class StatePair:
    u0: RadialField | BoxField
    u1: RadialField | BoxField

    def __post_init__(self):
        if type(self.u0) is not type(self.u1) or self.u0.grid != self.u1.grid:
            raise GridMismatch("u0 and u1 live on different grids")

    @classmethod
    def at_rest(cls, u0):
        return cls(u0, type(u0)(u0.grid, np.zeros_like(u0.values)))

    @property
    def grid(self):
        return self.u0.grid

    @property
    def d(self) -> int:
        return self.u0.grid.d


# ---------------------------------------------------------------------------
# basic integrals

def integrate(fld, values) -> float:
    return fld.grid.integrate(values)


def grad_norm_sq(fld) -> float:
    if isinstance(fld, RadialField):
        g = radial_gradient(fld)
        return fld.grid.integrate(g * g)
    return box_grad_norm_sq(fld)


def l2_norm_sq(fld) -> float:
    return fld.grid.integrate(fld.values**2)


def nonlinear_integrals(fld, model):
    """(F, int Df, int D^2 f) for the field."""
    f, fp, fpp, Df = f_family_eval(model, fld.values)
    u = fld.values
    D2f = Df + u * u * fpp
    return integrate(fld, f), integrate(fld, Df), integrate(fld, D2f)


def potential(fld, model) -> float:
    return integrate(fld, f_family_eval(model, fld.values)[0])


@dataclass(frozen=True)
class FieldSummary:
    """The four integrals every K/J/H evaluation needs."""
    grad: float
    mass: float
    F: float
    DF: float
    D2F: float

    @classmethod
    def of(cls, fld, model):
        F, DF, D2F = nonlinear_integrals(fld, model)
        return cls(grad_norm_sq(fld), l2_norm_sq(fld), F, DF, D2F)


def _summary(phi, model):
    return phi if isinstance(phi, FieldSummary) else FieldSummary.of(phi, model)


# ---------------------------------------------------------------------------
# energies

def static_energy(phi, model, c: float = 1.0) -> float:
    """J^(c)(phi) = int (|grad phi|^2 + c phi^2)/2 - f(phi)."""
    s = _summary(phi, model)
    return 0.5 * s.grad + 0.5 * c * s.mass - s.F


def energy(s: StatePair, model, c: float = 1.0) -> float:
    return 0.5 * l2_norm_sq(s.u1) + static_energy(s.u0, model, c)


def quadratic_energy(s: StatePair) -> float:
    return 0.5 * (l2_norm_sq(s.u1) + grad_norm_sq(s.u0) + l2_norm_sq(s.u0))


def K_parts(phi, sp: ScalingPair, model, c: float = 1.0):
    """(K^Q, K^N) with K = K^Q + K^N."""
    s = _summary(phi, model)
    kq = 0.5 * sp.mu_h1 * s.grad + 0.5 * sp.mu_l2 * c * s.mass
    kn = -sp.alpha * s.DF - sp.d * sp.beta * s.F
    return kq, kn


def K(phi, sp: ScalingPair, model, c: float = 1.0) -> float:
    kq, kn = K_parts(phi, sp, model, c)
    return kq + kn


def H(phi, sp: ScalingPair, model, c: float = 1.0) -> float:
    """H = J - K / mu_bar."""
    if not sp.mu_bar > 0:
        raise InadmissiblePair(f"mu_bar = {sp.mu_bar:g} for pair {sp.label()}")
    s = _summary(phi, model)
    return static_energy(s, model, c) - K(s, sp, model, c) / sp.mu_bar


# closed forms of the most used members

def K_10(phi, model) -> float:
    s = _summary(phi, model)
    return s.grad + s.mass - s.DF


def K_01(phi, model, d: int) -> float:
    s = _summary(phi, model)
    return 0.5 * (d - 2) * s.grad + 0.5 * d * s.mass - d * s.F


def K_virial(phi, model, d: int) -> float:
    """K_{d,-2} = int 2|grad phi|^2 - d (D - 2) f."""
    s = _summary(phi, model)
    return 2 * s.grad - d * (s.DF - 2 * s.F)


def H_10(phi, model) -> float:
    s = _summary(phi, model)
    return 0.5 * (s.DF - 2 * s.F)


def H_01(phi, model, d: int) -> float:
    return grad_norm_sq(phi) / d if not isinstance(phi, FieldSummary) else phi.grad / d


def H_virial(phi, model, d: int) -> float:
    """H_{d,-2} = int phi^2/2 + (d/4)(D - 2_*) f."""
    s = _summary(phi, model)
    return 0.5 * s.mass + 0.25 * d * (s.DF - (2 + 4 / d) * s.F)


def D_ab(sp: ScalingPair, DS: float, S: float) -> float:
    """D_{a,b} S = int (a D + b d) s for S = int s."""
    return sp.alpha * DS + sp.beta * sp.d * S


# ---------------------------------------------------------------------------
# rescaling

def _even_spline(fld: RadialField):
    r = fld.grid.nodes
    return CubicSpline(np.concatenate([-r[::-1], r]),
                       np.concatenate([fld.values[::-1], fld.values]))


def rescale(phi: RadialField, sp: ScalingPair, lam: float, strict: bool = False,
            loss_tol: float = 1e-8) -> RadialField:
    """phi^lam(x) = e^{alpha lam} phi(e^{-beta lam} x) resampled on the same grid.

    Cubic interpolation, zero extension beyond r_max. TruncationLoss is
    warned (raised when strict) if more than loss_tol of the L2 mass leaves
    the grid.
    """
    if lam == 0:
        return phi
    g = phi.grid
    s = math.exp(-sp.beta * lam)
    if s < 1.0:
        w = g.weights * phi.values**2
        tot = float(np.sum(w))
        lost = float(np.sum(w[g.nodes > s * g.r_max]))
        if tot > 0 and lost > loss_tol * tot:
            msg = f"rescale by lambda={lam:g} loses {lost / tot:.3e} of the L2 mass"
            if strict:
                raise TruncationLoss(msg)
            warnings.warn(msg, TruncationLoss, stacklevel=2)
    rr = s * g.nodes
    inside = rr <= g.nodes[-1]
    vals = np.zeros(g.n)
    vals[inside] = _even_spline(phi)(rr[inside])
    return RadialField(g, math.exp(sp.alpha * lam) * vals)


def amplitude_scale(phi, nu: float):
    return type(phi)(phi.grid, nu * phi.values)


# ---------------------------------------------------------------------------
# landscape

@dataclass
class Landscape:
    sp: ScalingPair
    lam: np.ndarray
    J: np.ndarray
    K: np.ndarray
    F: np.ndarray
    KQ: np.ndarray

    COLUMNS = ("lambda", "J", "K", "F")

    @property
    def kq_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.KQ) >= -1e-12 * np.max(np.abs(self.KQ))))

    @property
    def j_increases_where_k_positive(self) -> bool:
        pos = (self.K[:-1] > 0) & (self.K[1:] > 0)
        dj = np.diff(self.J)
        return bool(np.all(dj[pos] > 0))

    def sign_changes(self):
        """Brackets (lam_i, lam_{i+1}) on the table where K changes sign."""
        s = np.sign(self.K)
        idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
        return [(float(self.lam[i]), float(self.lam[i + 1])) for i in idx]

    def rows(self):
        for i in range(len(self.lam)):
            yield (self.lam[i], self.J[i], self.K[i], self.F[i])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([repr(float(x)) for x in row])


def landscape(phi: RadialField, sp: ScalingPair, lam_grid: Sequence[float], model,
              c: float = 1.0) -> Landscape:
    lam = np.asarray(lam_grid, dtype=float)
    J_, K_, F_, KQ = [], [], [], []
    for l in lam:
        s = FieldSummary.of(rescale(phi, sp, float(l), strict=True), model)
        J_.append(static_energy(s, model, c))
        kq, kn = K_parts(s, sp, model, c)
        K_.append(kq + kn)
        KQ.append(kq)
        F_.append(s.F)
    return Landscape(sp, lam, np.array(J_), np.array(K_), np.array(F_), np.array(KQ))


# ---------------------------------------------------------------------------
# projection onto K = 0

@dataclass
class Projection:
    parameter: float        # lambda* on the scaling ray or nu* on the amplitude ray
    field: RadialField
    K: float
    KQ: float
    ray: str


def nehari_project(phi: RadialField, sp: ScalingPair, model, c: float = 1.0,
                   tol: float = 1e-8, lam_min: float = -12.0) -> Projection:
    """Root of K along the scaling ray toward -inf (amplitude ray when (d,alpha)=(2,0)).

    Bisection to a bracket, then secant refinement until |K| <= tol K^Q.
    """
    if sp.amplitude_ray:
        def point(t):
            return amplitude_scale(phi, t)
        lo_end, hi_end, ray = 0.0, 1.0, "amplitude"
    else:
        def point(t):
            return rescale(phi, sp, t, strict=True)
        lo_end, hi_end, ray = lam_min, 0.0, "scaling"

    def kval(t):
        return K_parts(point(t), sp, model, c)

    kq0, kn0 = kval(hi_end)
    k0 = kq0 + kn0
    if abs(k0) <= tol * kq0:
        return Projection(hi_end, point(hi_end), k0, kq0, ray)
    if k0 > 0:
        raise NoRoot("K > 0 along the ray toward the origin")
    # walk from the start toward the origin end until K turns positive
    a, ka = hi_end, k0
    b = None
    if ray == "amplitude":
        for t in np.geomspace(0.5, 2.0**-40, 40):
            try:
                kq, kn = kval(float(t))
            except TruncationLoss:
                break
            if kq + kn > 0:
                b, kb = float(t), kq + kn
                break
            a, ka = float(t), kq + kn
    else:
        step = 0.05
        t = hi_end
        while t > lo_end:
            t = max(t - step, lo_end)
            try:
                kq, kn = kval(t)
            except TruncationLoss:
                break
            if kq + kn > 0:
                b, kb = t, kq + kn
                break
            a, ka = t, kq + kn
            step *= 1.5
    if b is None:
        raise NoRoot("no sign change of K on the search interval")
    # a: K<0, b: K>0
    for _ in range(200):
        # secant guess, safeguarded by bisection
        t = b - kb * (b - a) / (kb - ka)
        if not (min(a, b) < t < max(a, b)) or abs(b - a) > 1e-3:
            t = 0.5 * (a + b)
        kq, kn = kval(t)
        k = kq + kn
        if abs(k) <= tol * kq:
            return Projection(t, point(t), k, kq, ray)
        if k > 0:
            b, kb = t, k
        else:
            a, ka = t, k
        if abs(b - a) < 1e-15:
            break
    raise NoRoot("projection did not reach tolerance")


# ---------------------------------------------------------------------------
# classification

KPLUS, KMINUS, ABOVE = "KPlus", "KMinus", "AboveThreshold"


@dataclass
class Verdict:
    E: float
    m: float
    K: float
    label: str
    sp: ScalingPair
    checks: dict = field(default_factory=dict)


def classify(s: StatePair, sp: ScalingPair, model, m: float, c: float = 1.0,
             tie_tol: float = 1e-9) -> Verdict:
    E = energy(s, model, c)
    k = K(s.u0, sp, model, c)
    if E >= m - tie_tol * m:
        label = ABOVE
    elif k >= 0:
        label = KPLUS
    else:
        label = KMINUS
    v = Verdict(E, m, k, label, sp)
    if label == KPLUS:
        v.checks.update(_kplus_checks(s, model, m))
    return v


def _kplus_checks(s: StatePair, model, m: float) -> dict:
    out = {}
    su = FieldSummary.of(s.u0, model)
    d = s.d
    if K_10(su, model) >= 0:
        J = static_energy(su, model)
        h1 = 0.5 * (su.grad + su.mass)
        out["free_energy_equivalence"] = bool(J <= h1 * (1 + 1e-12) and h1 <= (1 + d / 2) * J * (1 + 1e-12))
    kappa0 = getattr(model, "kappa0", None)
    if kappa0 is not None and kappa0 > 0:
        lhs = su.grad + l2_norm_sq(s.u1)
        out["subcritical_bound"] = bool(lhs < 2 * m <= 4 * math.pi / kappa0 + 1e-9)
        out["subcritical_lhs"] = lhs
    return out


# ---------------------------------------------------------------------------
# diagnostics on the box

@dataclass
class Diagnostics:
    P: np.ndarray
    X_R: np.ndarray
    V_R: float
    E_R: float
    e: np.ndarray

    def row(self, t: float):
        return [t, *self.P.tolist(), *self.X_R.tolist(), self.V_R, self.E_R]


def diagnostic_columns(d: int):
    return (["t"] + [f"P{i + 1}" for i in range(d)] + [f"XR{i + 1}" for i in range(d)]
            + ["VR", "ER"])


def energy_density(s: StatePair, model):
    u0, u1 = s.u0.values, s.u1.values
    grads = box_gradient(s.u0)
    f = f_family_eval(model, u0)[0]
    return 0.5 * (u1**2 + sum(g * g for g in grads) + u0**2) - f


def diagnostics(s: StatePair, model, R: float, c_center=None) -> Diagnostics:
    if not isinstance(s.u0, BoxField):
        raise TypeError("diagnostics need a box state")
    g = s.grid
    if R > g.L / 2:
        raise CutoffExceedsBox(f"R = {R:g} exceeds half the box side {g.L / 2:g}")
    u0, u1 = s.u0.values, s.u1.values
    grads = box_gradient(s.u0)
    f, fp, _, Df = f_family_eval(model, u0)
    dens = 0.5 * (u1**2 + sum(gr * gr for gr in grads) + u0**2) - f
    X = g.coords
    cut = chi_R(g.radius, R)
    P = np.array([g.integrate(u1 * gr) for gr in grads])
    XR = np.array([g.integrate(cut * x * dens) for x in X])
    x_dot_grad = sum(x * gr for x, gr in zip(X, grads))
    VR = g.integrate(cut * u1 * (2 * x_dot_grad + g.d * u0))
    c = np.zeros(g.d) if c_center is None else np.asarray(c_center, dtype=float)
    dist = np.sqrt(sum((x - ci) ** 2 for x, ci in zip(X, c)))
    ext = (u1**2 + sum(gr * gr for gr in grads) + u0**2 + np.abs(f) + np.abs(Df))
    ER = g.integrate(np.where(dist >= R, ext, 0.0))
    return Diagnostics(P, XR, VR, ER, dens)


def diagnostics_to_csv(path, series, d: int):
    """series: iterable of (t, Diagnostics)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(diagnostic_columns(d))
        for t, dg in series:
            w.writerow([repr(float(x)) for x in dg.row(t)])
