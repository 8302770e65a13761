"""Time integration of NLKG in first-order form v = <grad>u - i du/dt.

Two geometries share the integrator:
  BoxGeometry         periodic box in d = 1, 2, 3 (spectral);
  RadialLineGeometry  radial data in three dimensions, carried as w = r u on
                      an odd, periodic line [-R, R) with nodes off the origin.
In both cases the carried field psi obeys psi_tt - psi_xx + psi = N(psi),
so the free flow is e^{i t <k>} and the nonlinear kick only moves Im v.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AmplitudeOverflow, NumericalBreakdown, PreconditionError
from .field_core import BoxField, BoxGrid, RadialField, embed_radial, f_family_eval
from .functionals import FieldSummary, K_10, K_virial, StatePair

DISPERSED = "Dispersed"
BLEWUP = "BlewUp"
UNDECIDED = "Undecided"


# ---------------------------------------------------------------------------
# geometries

class BoxGeometry:
    def __init__(self, grid: BoxGrid):
        self.grid = grid
        self.d = grid.d
        self.shape = grid.shape
        self.symbol = grid.bracket_symbol
        self.k_sq = grid.k_sq
        self.k_odd = grid.k_odd_components

    def fft(self, a):
        return np.fft.fftn(a)

    def ifft(self, a):
        return np.fft.ifftn(a)

    def u_of(self, psi):
        return psi

    def force(self, psi, model):
        return model.evaluate(psi)[1]

    def integrate(self, vals) -> float:
        return float(np.sum(vals) * self.grid.cell)

    def inner(self, a, b) -> float:
        return self.integrate(a * b)

    def sup(self, psi) -> float:
        return float(np.max(np.abs(psi)))

    def summary(self, psi, model) -> FieldSummary:
        ph = self.fft(psi)
        grad = float(np.sum(self.k_sq * np.abs(ph) ** 2) * self.grid.cell / ph.size)
        f, fp, fpp, Df = f_family_eval(model, psi)
        return FieldSummary(grad, self.inner(psi, psi), self.integrate(f), self.integrate(Df),
                            self.integrate(Df + psi * psi * fpp))

    def momentum(self, psi, psidot) -> np.ndarray:
        ph = self.fft(psi)
        return np.array([self.integrate(psidot * np.real(self.ifft(1j * k * ph)))
                         for k in self.k_odd])

    def v_norm_sq(self, v) -> float:
        return self.integrate(np.abs(v) ** 2)


class RadialLineGeometry:
    """Radial three-dimensional fields via w = r u on the odd periodic line [-R, R)."""

    def __init__(self, R: float, n: int):
        if n < 8 or n & (n - 1):
            raise ValueError("points on the line must be a power of two")
        self.R, self.n = float(R), int(n)
        self.d = 3
        self.h = 2 * self.R / self.n
        self.x = -self.R + self.h * (np.arange(self.n) + 0.5)
        k = np.pi / self.R * np.fft.fftfreq(self.n, d=1.0 / self.n)
        self.k = k
        self.k_sq = k * k
        self.symbol = np.sqrt(1.0 + self.k_sq)
        self.shape = (self.n,)

    def fft(self, a):
        return np.fft.fft(a)

    def ifft(self, a):
        return np.fft.ifft(a)

    def u_of(self, psi):
        return psi / self.x

    def force(self, psi, model):
        return self.x * model.evaluate(psi / self.x)[1]

    def integrate(self, vals) -> float:
        # int over R^3 of a radial density g: 4 pi int_0^inf r^2 g = 2 pi int_R x^2 g
        return float(2 * math.pi * np.sum(vals) * self.h)

    def inner(self, a, b) -> float:
        # <u_a, u_b> in L^2(R^3) for u = w / r
        return self.integrate(a * b)

    def sup(self, psi) -> float:
        return float(np.max(np.abs(psi / self.x)))

    def summary(self, psi, model) -> FieldSummary:
        ph = self.fft(psi)
        grad = float(2 * math.pi * np.sum(self.k_sq * np.abs(ph) ** 2) * self.h / self.n)
        u = psi / self.x
        f, fp, fpp, Df = f_family_eval(model, u)
        x2 = self.x**2
        return FieldSummary(grad, self.inner(psi, psi), self.integrate(x2 * f),
                            self.integrate(x2 * Df), self.integrate(x2 * (Df + u * u * fpp)))

    def momentum(self, psi, psidot) -> np.ndarray:
        return np.zeros(3)

    def v_norm_sq(self, v) -> float:
        return self.integrate(np.abs(v) ** 2)

    def embed(self, fld: RadialField) -> np.ndarray:
        """w = x u(|x|) from a radial profile (even spline, zero beyond its grid)."""
        if fld.grid.d != 3:
            raise PreconditionError("the radial line carries three-dimensional fields")
        r = fld.grid.nodes
        sp = CubicSpline(np.concatenate([-r[::-1], r]),
                         np.concatenate([fld.values[::-1], fld.values]))
        ax = np.abs(self.x)
        u = np.where(ax <= r[-1], sp(np.minimum(ax, r[-1])), 0.0)
        return self.x * u


# ---------------------------------------------------------------------------
# state

@dataclass
class EvolState:
    geom: object
    t: float
    v: np.ndarray

    @classmethod
    def from_fields(cls, geom, psi, psidot, t: float = 0.0):
        psi = np.asarray(psi, dtype=float)
        psidot = np.asarray(psidot, dtype=float)
        v = geom.ifft(geom.symbol * geom.fft(psi)).real - 1j * psidot
        return cls(geom, t, v)

    @classmethod
    def from_pair(cls, s: StatePair):
        if not isinstance(s.u0, BoxField):
            raise PreconditionError("from_pair expects box fields; use from_fields for the line")
        return cls.from_fields(BoxGeometry(s.grid), s.u0.values, s.u1.values)

    @property
    def psi(self) -> np.ndarray:
        g = self.geom
        return np.real(g.ifft(g.fft(self.v.real) / g.symbol))

    @property
    def psidot(self) -> np.ndarray:
        return -self.v.imag

    @property
    def u(self) -> np.ndarray:
        return self.geom.u_of(self.psi)

    def free_energy(self) -> float:
        """E^Q = ||v||^2 / 2."""
        return 0.5 * self.geom.v_norm_sq(self.v)

    def copy(self):
        return EvolState(self.geom, self.t, self.v.copy())


def free_propagate(v: np.ndarray, t: float, geom) -> np.ndarray:
    """Exact free flow e^{i t <grad>} v."""
    return geom.ifft(np.exp(1j * t * geom.symbol) * geom.fft(v))


def _check_cap(geom, psi, model):
    if geom.sup(psi) > model.cap:
        raise AmplitudeOverflow(f"amplitude {geom.sup(psi):.6g} beyond model cap {model.cap:.6g}")


def _kick(st: EvolState, tau: float, model):
    g = st.geom
    psi = st.psi
    _check_cap(g, psi, model)
    st.v = st.v - 1j * tau * g.force(psi, model)


def step(st: EvolState, dt: float, model, method: str = "strang") -> EvolState:
    """Advance in place by dt; Strang splitting, optionally composed to fourth order."""
    if method == "strang":
        _kick(st, 0.5 * dt, model)
        st.v = free_propagate(st.v, dt, st.geom)
        _kick(st, 0.5 * dt, model)
    elif method == "yoshida4":
        c = 2.0 ** (1.0 / 3.0)
        w1 = 1.0 / (2.0 - c)
        w0 = -c / (2.0 - c)
        for w in (w1, w0, w1):
            _kick(st, 0.5 * w * dt, model)
            st.v = free_propagate(st.v, w * dt, st.geom)
            _kick(st, 0.5 * w * dt, model)
    else:
        raise ValueError(f"unknown method {method!r}")
    st.t += dt
    if not np.all(np.isfinite(st.v)):
        raise NumericalBreakdown(f"non-finite state at t = {st.t:g}")
    return st


def default_dt(amp: float, model, dt_max: float = 0.1) -> float:
    return min(dt_max, 0.5 / (1.0 + model.stiffness(max(amp, 0.0))))


# ---------------------------------------------------------------------------
# records

RECORD_COLUMNS = ("t", "E", "EQ", "y", "ydot", "yddot", "sup", "K10", "Kvir")


@dataclass
class Monitor:
    t: float
    E: float
    EQ: float
    y: float
    ydot: float
    yddot: float
    sup: float
    K10: float
    Kvir: float
    P: np.ndarray

    def row(self):
        return [self.t, self.E, self.EQ, self.y, self.ydot, self.yddot, self.sup,
                self.K10, self.Kvir]


def measure(st: EvolState, model) -> Monitor:
    g = st.geom
    psi, psidot = st.psi, st.psidot
    summ = g.summary(psi, model)
    kin = g.inner(psidot, psidot)
    E = 0.5 * kin + 0.5 * summ.grad + 0.5 * summ.mass - summ.F
    k10 = K_10(summ, model)
    return Monitor(st.t, E, st.free_energy(), summ.mass, 2 * g.inner(psi, psidot),
                   2 * kin - 2 * k10, g.sup(psi), k10, K_virial(summ, model, g.d),
                   g.momentum(psi, psidot))


@dataclass
class Certificate:
    kind: str
    fired: bool
    data: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    samples: list = field(default_factory=list)
    outcome: str = UNDECIDED
    certificates: dict = field(default_factory=dict)
    reliable: bool = True
    stop_reason: str = ""
    checkpoints: list = field(default_factory=list)   # (t, v)
    final: EvolState | None = None

    def column(self, name) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    @property
    def momentum(self) -> np.ndarray:
        return np.array([s.P for s in self.samples])

    def rows(self):
        return [s.row() for s in self.samples]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RECORD_COLUMNS)
            for r in self.rows():
                w.writerow([repr(float(x)) for x in r])

    def energy_drift(self) -> float:
        E = self.column("E")
        return float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))


# ---------------------------------------------------------------------------
# detectors

def detect_blowup(record: RunRecord, amp_cap: float, min_samples: int = 100,
                  window_frac: float = 0.5) -> Certificate:
    """Amplitude beyond the cap plus a sustained positive lower bound on y''.

    delta is fitted as half the minimum of y'' over the trailing window (the
    last window_frac of the samples), which is the largest delta with
    y'' >= 2 delta there.
    """
    n = len(record.samples)
    if n < min_samples:
        return Certificate("blowup", False, {"reason": f"only {n} samples"})
    sup = record.column("sup")
    capped = bool(sup[-1] >= amp_cap) or record.stop_reason == "overflow"
    start = int(n * (1 - window_frac))
    ydd = record.column("yddot")[start:]
    t = record.column("t")[start:]
    delta = 0.5 * float(np.min(ydd))
    fired = capped and delta > 0
    return Certificate("blowup", fired, {"delta": delta, "window": (float(t[0]), float(t[-1])),
                                         "amplitude": float(sup[-1]), "capped": capped})


def cauchy_increments(checkpoints, geom, v0_norm: float):
    ws = [free_propagate(v, -t, geom) for t, v in checkpoints]
    return [math.sqrt(geom.v_norm_sq(ws[i] - ws[i - 1])) / v0_norm for i in range(1, len(ws))], ws


def detect_dispersal(record: RunRecord, geom, v0_norm: float, tol: float = 1e-3,
                     pairs: int = 3) -> Certificate:
    """Cauchy test on the backward-free-propagated checkpoints."""
    cps = record.checkpoints
    if len(cps) < pairs + 1:
        return Certificate("dispersal", False, {"reason": "too few checkpoints"})
    inc, ws = cauchy_increments(cps, geom, v0_norm)
    last = inc[-pairs:]
    fired = max(last) <= tol
    return Certificate("dispersal", fired, {"increments": inc, "max_last": max(last),
                                            "profile": ws[-1] if fired else None})


# ---------------------------------------------------------------------------
# driver

@dataclass
class EvolveConfig:
    T: float = 40.0
    dt: float | None = None
    dt_max: float = 0.1
    sample_dt: float = 0.05
    checkpoints: int = 8
    scatter_tol: float = 1e-3
    amp_cap: float | None = None
    method: str = "yoshida4"
    m: float | None = None
    stop_on_dispersal: bool = True


def evolve(st0: EvolState, model, config: EvolveConfig | None = None) -> RunRecord:
    cfg = config or EvolveConfig()
    st = st0.copy()
    g = st.geom
    rec = RunRecord()
    sup0 = g.sup(st.psi)
    amp_cap = cfg.amp_cap if cfg.amp_cap is not None else 5.0 * max(sup0, 1.0)
    amp_cap = min(amp_cap, 0.999 * model.cap)
    dt0 = cfg.dt if cfg.dt is not None else default_dt(sup0, model, cfg.dt_max)
    v0_norm = math.sqrt(g.v_norm_sq(st.v))
    first = measure(st, model)
    rec.samples.append(first)
    if cfg.m is not None and abs(first.E - cfg.m) <= 1e-3 * cfg.m:
        rec.reliable = False
    cp_times = [cfg.T * (i + 1) / cfg.checkpoints for i in range(cfg.checkpoints)]
    next_sample = cfg.sample_dt
    cp_idx = 0
    eps_t = 1e-12 * max(1.0, cfg.T)
    try:
        while st.t < cfg.T - eps_t:
            sup = g.sup(st.psi)
            dt_amp = default_dt(sup, model, cfg.dt_max)
            # growth regime: keep every step so the blow-up window is resolved
            fine = dt_amp < dt0 or sup > 1.25 * sup0
            if fine:
                # resolve the linearised oscillation frequency sqrt(f'') while growing
                fpp = float(model.evaluate(np.array([min(sup, 0.999 * model.cap)]))[2][0])
                dt_amp = min(dt_amp, 0.1 / math.sqrt(1.0 + abs(fpp)))
            dt = min(dt0, dt_amp)
            targets = [cfg.T, next_sample]
            if cp_idx < len(cp_times):
                targets.append(cp_times[cp_idx])
            dt = min(dt, min(targets) - st.t)
            step(st, dt, model, cfg.method)
            hit_sample = st.t >= next_sample - eps_t
            if hit_sample:
                next_sample += cfg.sample_dt
            if hit_sample or fine or st.t >= cfg.T - eps_t:
                mon = measure(st, model)
                rec.samples.append(mon)
                if mon.sup >= amp_cap:
                    rec.stop_reason = "amplitude"
                    break
            if cp_idx < len(cp_times) and st.t >= cp_times[cp_idx] - eps_t:
                rec.checkpoints.append((st.t, st.v.copy()))
                cp_idx += 1
                if cfg.stop_on_dispersal and len(rec.checkpoints) >= 4:
                    cert = detect_dispersal(rec, g, v0_norm, cfg.scatter_tol)
                    if cert.fired:
                        rec.stop_reason = "dispersed"
                        break
    except AmplitudeOverflow:
        rec.stop_reason = "overflow"
    rec.final = st
    bu = detect_blowup(rec, amp_cap)
    ds = detect_dispersal(rec, g, v0_norm, cfg.scatter_tol)
    rec.certificates = {"blowup": bu, "dispersal": ds}
    if bu.fired:
        rec.outcome = BLEWUP
    elif ds.fired:
        rec.outcome = DISPERSED
    if not rec.stop_reason:
        rec.stop_reason = "T"
    return rec


def box_state(u0, u1=None, box: BoxGrid | None = None) -> EvolState:
    """EvolState on a periodic box from box fields or radial profiles."""
    if isinstance(u0, RadialField):
        if box is None:
            raise PreconditionError("radial data need a target box")
        u0 = embed_radial(u0, box)
        u1 = embed_radial(u1, box) if u1 is not None else None
    if u1 is None:
        u1 = BoxField(u0.grid, np.zeros_like(u0.values))
    return EvolState.from_pair(StatePair(u0, u1))


def line_state(u0: RadialField, u1: RadialField | None, R: float, n: int) -> EvolState:
    geom = RadialLineGeometry(R, n)
    w0 = geom.embed(u0)
    w1 = geom.embed(u1) if u1 is not None else np.zeros_like(w0)
    return EvolState.from_fields(geom, w0, w1)


def static_residual(geom, psi, model, c: float = 1.0) -> np.ndarray:
    """-psi'' + c psi - N(psi) in the spectral discretisation of geom."""
    lap = np.real(geom.ifft(geom.k_sq * geom.fft(psi)))
    return lap + c * psi - geom.force(psi, model)


def polish_static(geom, psi, model, c: float = 1.0, tol: float = 1e-13, max_newton: int = 20):
    """Newton iteration for a static solution in the evolution discretisation.

    Profiles computed on another grid are stationary only up to the
    discretisation mismatch, which the linear instability of ground states
    amplifies; polishing removes that mismatch. Linear solves use GMRES
    preconditioned by (c - Laplacian)^{-1}.
    """
    from scipy.sparse.linalg import LinearOperator, gmres

    psi = np.array(psi, dtype=float)
    shape = psi.shape
    size = psi.size
    sym = geom.k_sq + c
    scale = max(geom.sup(psi), 1.0)
    # translations make the linearisation singular on periodic boxes, so
    # Newton can wander once at the rounding floor; keep the best iterate
    best, best_res = psi, math.inf
    stale = 0
    for _ in range(max_newton):
        res = static_residual(geom, psi, model, c)
        r = float(np.max(np.abs(res)))
        if r < best_res:
            best, best_res, stale = psi, r, 0
        else:
            stale += 1
            if stale >= 3:
                break
        if r <= tol * scale:
            break
        fpp = model.evaluate(geom.u_of(psi))[2]

        def jv(x, fpp=fpp):
            x = x.reshape(shape)
            return (np.real(geom.ifft(sym * geom.fft(x))) - fpp * x).ravel()

        def prec(x):
            return np.real(geom.ifft(geom.fft(x.reshape(shape)) / sym)).ravel()

        A = LinearOperator((size, size), matvec=jv, dtype=float)
        M = LinearOperator((size, size), matvec=prec, dtype=float)
        delta, info = gmres(A, -res.ravel(), M=M, rtol=1e-14, atol=0.0, restart=60, maxiter=20)
        psi = psi + delta.reshape(shape)
    if float(np.max(np.abs(static_residual(geom, psi, model, c)))) < best_res:
        best = psi
    return best
