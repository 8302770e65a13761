"""Ground states, threshold energies and Trudinger-Moser ratios."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.integrate import solve_ivp
from scipy.special import gamma as gamma_fn, kve

from .errors import (AmplitudeOverflow, BracketFailure, MinimizerStalled,
                     PreconditionError, TMEstimateUnstable)
from .field_core import (CriticalPower, Exponential2D, RadialField, RadialGrid,
                         f_family_eval, h1_critical_power, radial_laplacian, sphere_area)
from .functionals import (FieldSummary, K_parts, ScalingPair, H, K,
                          sample_pairs, static_energy)


def _fp_scalar(model):
    def fp(u):
        return float(model.evaluate(np.array([u]))[1][0])
    return fp


# ---------------------------------------------------------------------------
# shooting

@dataclass
class GroundStateResult:
    Q: RadialField
    c: float
    m: float
    residual: float
    K_table: list = field(default_factory=list)   # (pair, K, K^Q)
    Q0: float = float("nan")
    match_radius: float = float("nan")

    @property
    def residual_ok(self) -> bool:
        return self.residual <= 1e-7 * (1 + self.Q.sup)

    @property
    def k_table_ok(self) -> bool:
        return all(abs(k) <= 1e-6 * kq for _, k, kq in self.K_table)


def _balance_amplitude(model, c):
    """Amplitude where f'(a) = c a, i.e. the constant solution of the static equation."""
    fp = _fp_scalar(model)
    g = lambda a: fp(a) - c * a
    hi = 1.0
    while g(hi) < 0:
        hi *= 2
        if hi > model.cap:
            raise BracketFailure("nonlinearity never dominates the mass term")
        hi = min(hi, model.cap)
    lo = hi / 2
    while g(lo) > 0:
        lo /= 2
    return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)


class _Shooter:
    r0 = 1e-6

    def __init__(self, model, d, c, r_end, rtol=1e-12):
        self.model, self.d, self.c, self.r_end, self.rtol = model, d, c, r_end, rtol
        self.fp = _fp_scalar(model)
        self.cap = model.cap

    def rhs(self, r, y):
        q, qp = y
        # trial stages may step past the cap before the blow event stops the run
        qc = min(max(q, -self.cap), self.cap)
        return (qp, -(self.d - 1) / r * qp + self.c * q - self.fp(qc))

    def start(self, a):
        acc = (self.c * a - self.fp(a)) / self.d
        r0 = self.r0
        return [a + 0.5 * acc * r0 * r0, acc * r0]

    def run(self, a, dense=False):
        def cross(r, y):
            return y[0]
        cross.terminal, cross.direction = True, -1

        def turn(r, y):
            return y[1]
        turn.terminal, turn.direction = True, 1

        top = min(2 * a, 0.999 * self.cap)

        def blow(r, y):
            return abs(y[0]) - top
        blow.terminal = True
        return solve_ivp(self.rhs, (self.r0, self.r_end), self.start(a), method="DOP853",
                         rtol=self.rtol, atol=1e-15 * a, events=(cross, turn, blow),
                         dense_output=dense)

    def classify(self, a):
        """+1 overshoot (Q crosses 0 or |Q| > 2 Q(0)), -1 undershoot (Q' > 0 with Q > 0)."""
        if self.c * a - self.fp(a) >= 0:
            return -1
        s = self.run(a)
        if len(s.t_events[0]) or len(s.t_events[2]):
            return 1
        if len(s.t_events[1]):
            return -1
        q, qp = s.y[:, -1]
        return -1 if qp + math.sqrt(self.c) * q > 0 else 1


def _tail_profile(d, c, r, r_m, q_m):
    nu = d / 2.0 - 1.0
    k = math.sqrt(c)
    return (q_m * (r / r_m) ** (-nu) * kve(nu, k * r) / kve(nu, k * r_m)
            * np.exp(-k * (r - r_m)))


def shoot(model, d: int, c: float = 1.0, r_max: float = 30.0, n: int = 16384,
          pairs=None, match_tol: float = 1e-8) -> GroundStateResult:
    """Positive radial solution of -Q'' - (d-1)/r Q' + c Q = f'(Q) by bisection on Q(0)."""
    if c <= 0:
        raise PreconditionError("shooting needs a positive mass c")
    if isinstance(model, CriticalPower):
        raise PreconditionError("the critical model has no H^1 ground state; use compute_m")
    grid = RadialGrid(d, r_max, n)
    r_end = max(r_max, 60.0 / math.sqrt(c))
    sh = _Shooter(model, d, c, r_end)
    a_bal = _balance_amplitude(model, c)
    lo = 0.5 * a_bal
    hi = a_bal
    if sh.classify(lo) != -1:
        raise BracketFailure("lower end of the bracket does not undershoot")
    while sh.classify(hi) != 1:
        lo = hi
        hi *= 1.5
        if hi > min(model.cap, 1e8 * a_bal):
            raise BracketFailure("no overshooting amplitude below the cap")
    while hi - lo > 1e-13 * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if sh.classify(mid) == 1:
            hi = mid
        else:
            lo = mid
    Q0 = 0.5 * (lo + hi)

    # assemble the profile: trust the shots while the two bracket ends agree
    s_lo, s_hi = sh.run(lo, dense=True), sh.run(hi, dense=True)
    r = grid.nodes
    r_stop = min(s_lo.t[-1], s_hi.t[-1])
    inside = r < r_stop
    if inside.sum() < 9:
        raise BracketFailure("bracketing shots separate before the first grid node; the profile concentrates")
    q_lo = s_lo.sol(r[inside])[0]
    q_hi = s_hi.sol(r[inside])[0]
    q_mid = 0.5 * (q_lo + q_hi)
    bad = (np.abs(q_hi - q_lo) > match_tol * np.abs(q_mid)) | (q_mid <= 0)
    j_m = int(np.argmax(bad)) - 1 if bad.any() else int(inside.sum()) - 1
    if j_m < 8:
        raise BracketFailure("shooting trajectories separate immediately")
    vals = np.empty(grid.n)
    vals[: j_m + 1] = q_mid[: j_m + 1]
    vals[j_m + 1:] = _tail_profile(d, c, r[j_m + 1:], r[j_m], q_mid[j_m])
    Q = RadialField(grid, vals)

    f_p = f_family_eval(model, vals)[1]
    res = -radial_laplacian(Q) + c * vals - f_p
    # the last nodes use one-sided stencils on a profile that is ~0 there
    residual = float(np.max(np.abs(res)))
    summ = FieldSummary.of(Q, model)
    table = []
    for sp in (pairs if pairs is not None else sample_pairs(d, 20)):
        kq, kn = K_parts(summ, sp, model, c)
        table.append((sp, kq + kn, kq))
    m = static_energy(summ, model, c)
    return GroundStateResult(Q, c, m, residual, table, Q0, float(r[j_m]))


# ---------------------------------------------------------------------------
# the critical (Aubin-Talenti) profile

@dataclass
class CriticalWitness:
    d: int

    def value(self, r):
        d = self.d
        return (1.0 + np.asarray(r) ** 2 / (d * (d - 2))) ** (-(d - 2) / 2.0)

    def derivative(self, r):
        d = self.d
        r = np.asarray(r)
        return -(r / d) * (1.0 + r**2 / (d * (d - 2))) ** (-d / 2.0)

    def sample(self, grid: RadialGrid) -> RadialField:
        return RadialField(grid, self.value(grid.nodes))


def _radial_quad(fn, d):
    val, _ = integrate.quad(lambda r: fn(r) * r ** (d - 1), 0.0, np.inf,
                            epsabs=0.0, epsrel=1e-13, limit=500)
    return sphere_area(d) * val


def massless_energy(profile, dprofile, d: int) -> float:
    """J^(0) = int |grad Q|^2/2 - |Q|^p/p for the critical power p, by adaptive quadrature."""
    p = h1_critical_power(d)
    grad = _radial_quad(lambda r: dprofile(r) ** 2, d)
    pot = _radial_quad(lambda r: abs(profile(r)) ** p, d)
    return 0.5 * grad - pot / p


def sobolev_ratio_energy(profile, dprofile, d: int) -> float:
    """(1/d) (||grad Q|| / ||Q||_{L^p})^d with p the critical power."""
    p = h1_critical_power(d)
    grad = _radial_quad(lambda r: dprofile(r) ** 2, d)
    lp = _radial_quad(lambda r: abs(profile(r)) ** p, d) ** (1.0 / p)
    return (math.sqrt(grad) / lp) ** d / d


def sobolev_closed_form(d: int) -> float:
    """S^{d/2}/d with S = d(d-2)/4 |S^d|^{2/d}, the sharp Sobolev constant."""
    area = 2 * math.pi ** ((d + 1) / 2) / gamma_fn((d + 1) / 2)
    S = d * (d - 2) / 4.0 * area ** (2.0 / d)
    return S ** (d / 2.0) / d


# ---------------------------------------------------------------------------
# Trudinger-Moser ratio (two dimensions)

@dataclass
class TMEstimate:
    A: float
    ratio: float
    threshold: float
    family: str
    params: dict
    model: Exponential2D = field(repr=False, default=None)

    def witness(self, grid: RadialGrid) -> RadialField:
        return RadialField(grid, _tm_profile(self.family, self.params, self.A)(grid.nodes))

    def recompute(self) -> float:
        return _tm_ratio_eval(self.model, self.family, self.params, self.A)[0]


_SECH_GRAD = None


def _sech_grad(k):
    # ||grad sech(r)^k||^2 in two dimensions
    v, _ = integrate.quad(lambda r: (k * np.tanh(r) / np.cosh(r) ** k) ** 2 * r, 0, 60,
                          epsrel=1e-12, limit=200)
    return 2 * math.pi * v


def _tm_profile(family, params, A):
    s = params["s"]
    if family == "gauss":
        a = s * A / math.sqrt(math.pi)
        return lambda r: a * np.exp(-np.asarray(r) ** 2)
    if family == "sech":
        k = params["k"]
        a = s * A / math.sqrt(_sech_grad(k))
        return lambda r: a / np.cosh(np.asarray(r)) ** k
    L = params["L"]
    delta = math.exp(-L)
    amp = s * A / math.sqrt(2 * math.pi)

    def moser(r):
        r = np.asarray(r, dtype=float)
        out = np.where(r <= delta, amp * math.sqrt(L),
                       amp * np.log(1.0 / np.maximum(r, 1e-300)) / math.sqrt(L))
        return np.where(r >= 1.0, 0.0, out)
    return moser


def _tm_ratio_eval(model, family, params, A):
    """(2F/||phi||^2, ||grad phi||) for one family member, width fixed to 1.

    In two dimensions F and the L2 norm both scale as width^2 and the gradient
    norm is dilation invariant, so the width drops out of the ratio.
    """
    f = lambda u: float(model.evaluate(np.array([u]))[0][0])
    prof = _tm_profile(family, params, A)
    s = params["s"]
    if family == "moser":
        L = params["L"]
        delta = math.exp(-L)
        amp = s * A / math.sqrt(2 * math.pi)
        core = amp * math.sqrt(L)
        # annulus in t = log(1/r): phi = amp t / sqrt(L), r dr = e^{-2t} dt
        pts = list(np.linspace(0, L, 9)[1:-1])
        Fa, _ = integrate.quad(lambda t: f(amp * t / math.sqrt(L)) * math.exp(-2 * t), 0, L,
                               points=pts, epsrel=1e-11, limit=400)
        Ma, _ = integrate.quad(lambda t: (amp * t) ** 2 / L * math.exp(-2 * t), 0, L,
                               epsrel=1e-12, limit=400)
        F = 2 * math.pi * (0.5 * delta**2 * f(core) + Fa)
        M = 2 * math.pi * (0.5 * delta**2 * core**2 + Ma)
        return 2 * F / M, s * A
    Fv, _ = integrate.quad(lambda r: f(float(prof(r))) * r, 0, 40, epsrel=1e-11, limit=400)
    Mv, _ = integrate.quad(lambda r: float(prof(r)) ** 2 * r, 0, 40, epsrel=1e-12, limit=400)
    return 2 * Fv / Mv, s * A


def _coordinate_ascent(obj, x0, bounds, sweeps=30, tol=1e-10):
    x = list(x0)
    best = obj(x)
    for _ in range(sweeps):
        old = best
        for i, (lo, hi) in enumerate(bounds):
            if hi <= lo:
                continue

            def line(t, i=i):
                y = list(x)
                y[i] = t
                return -obj(y)
            r = optimize.minimize_scalar(line, bounds=(lo, hi), method="bounded",
                                         options={"xatol": 1e-9 * max(1.0, abs(hi))})
            if -r.fun > best:
                x[i], best = float(r.x), -float(r.fun)
        if best - old <= tol * max(1.0, abs(best)):
            break
    return x, best


class _Reached(Exception):
    def __init__(self, est):
        self.est = est


def tm_ratio(model: Exponential2D, A: float, family_size: int = 8,
             stop_above: float = math.inf) -> TMEstimate:
    """Lower estimate of sup 2F(phi)/||phi||^2 over ||grad phi|| <= A.

    Families: Gaussians, sech^k profiles and truncated-logarithm Moser bumps,
    each with an amplitude fraction s in (0, 1] of the gradient cap. Each
    family is scanned on a family_size^k grid and then refined by projected
    coordinate ascent. With a finite stop_above the search returns the first
    member whose ratio exceeds it (enough to decide min(1, ratio)).
    """
    if not isinstance(model, Exponential2D):
        raise PreconditionError("tm_ratio is defined for the two-dimensional exponential model")
    threshold = math.sqrt(4 * math.pi / model.kappa0) if model.kappa0 > 0 else math.inf
    if A <= 0:
        raise ValueError("A must be positive")
    s_min = 1e-3
    # Moser core amplitude obeys kappa0 s^2 A^2 L / (2 pi) <= 700
    # with margin for the polynomial and gamma factors against float overflow
    L_cap = 600.0 * 2 * math.pi / (model.kappa0 * A * A) if model.kappa0 > 0 else 600.0
    L_cap = min(L_cap, 600.0)
    fams = {
        "gauss": (["s"], [(s_min, 1.0)]),
        "sech": (["s", "k"], [(s_min, 1.0), (0.5, 4.0)]),
        "moser": (["s", "L"], [(s_min, 1.0), (0.7, L_cap)]),
    }
    best = None
    for fam, (names, bounds) in fams.items():
        def obj(x, fam=fam, names=names):
            try:
                val = _tm_ratio_eval(model, fam, dict(zip(names, x)), A)[0]
            except AmplitudeOverflow:
                return -math.inf
            if not math.isfinite(val):
                return -math.inf
            if val > stop_above:
                raise _Reached(TMEstimate(A, val, threshold, fam, dict(zip(names, x)), model))
            return val
        axes = [np.linspace(lo, hi, family_size) for lo, hi in bounds]
        grid_pts = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(bounds), -1).T
        try:
            vals = [obj(list(p)) for p in grid_pts]
            x0 = list(grid_pts[int(np.argmax(vals))])
            x, val = _coordinate_ascent(obj, x0, bounds)
        except _Reached as hit:
            return hit.est
        est = TMEstimate(A, val, threshold, fam, dict(zip(names, x)), model)
        if best is None or val > best.ratio:
            best = est
    if best.family == "moser" and best.params["L"] >= L_cap * (1 - 1e-6):
        raise AmplitudeOverflow("Moser-bump ascent runs into the amplitude cap", estimate=best)
    return best


# ---------------------------------------------------------------------------
# threshold energy

@dataclass
class MResult:
    m: float
    c: float
    witness: object
    details: dict = field(default_factory=dict)


def compute_m(model, d: int, r_max: float = 30.0, n: int = 16384,
              family_size: int = 8) -> MResult:
    if isinstance(model, CriticalPower):
        if model.d != d:
            raise PreconditionError("critical model built for a different dimension")
        w = CriticalWitness(d)
        m1 = massless_energy(w.value, w.derivative, d)
        m2 = sobolev_ratio_energy(w.value, w.derivative, d)
        return MResult(m1, 0.0, w, {"massless_energy": m1, "sobolev_ratio": m2})
    if isinstance(model, Exponential2D):
        if d != 2:
            raise PreconditionError("the exponential model lives in two dimensions")
        A = math.sqrt(4 * math.pi / model.kappa0) * (1 - 1e-6)
        capped = False
        try:
            est = tm_ratio(model, A, family_size, stop_above=1.0)
        except AmplitudeOverflow as exc:
            est, capped = exc.estimate, True
        if est.ratio < 1.0 and not capped:
            est2 = tm_ratio(model, A, 2 * family_size)
            if abs(est2.ratio - est.ratio) > 0.05 * est.ratio:
                raise TMEstimateUnstable(f"ratio {est.ratio:.6g} -> {est2.ratio:.6g} on doubling")
            est = est2 if est2.ratio > est.ratio else est
        c = min(1.0, est.ratio)
        gs = shoot(model, d, c, r_max=r_max, n=n)
        bound = 2 * math.pi / model.kappa0
        return MResult(gs.m, c, gs, {
            "tm_ratio": float(est.ratio), "tm_family": est.family, "tm_capped": capped,
            "ambiguous": bool(0.9 <= est.ratio < 1.0),
            "bound": bound, "bound_ok": bool(gs.m <= bound + 1e-6),
        })
    gs = shoot(model, d, 1.0, r_max=r_max, n=n)
    return MResult(gs.m, 1.0, gs, {"residual": gs.residual})


# ---------------------------------------------------------------------------
# constrained descent on H

def _helmholtz_solve(values, grid, c=1.0):
    """Apply (c - Laplacian)^{-1} to a radial profile (second-order tridiagonal model)."""
    from scipy.linalg import solve_banded
    n, h, d = grid.n, grid.h, grid.d
    r = grid.nodes
    # symmetric flux form: -(1/r^{d-1}) d/dr (r^{d-1} d/dr) with even reflection at 0
    rp = (r + 0.5 * h) ** (d - 1)
    rm = np.maximum(r - 0.5 * h, 0.0) ** (d - 1)
    w = r ** (d - 1)
    up = rp / (w * h * h)
    lo = rm / (w * h * h)
    ab = np.zeros((3, n))
    ab[1] = c + up + lo
    ab[0, 1:] = -up[:-1]
    ab[2, :-1] = -lo[1:]
    return solve_banded((1, 1), ab, values)


def _functional_gradients(phi: RadialField, sp: ScalingPair, model, c=1.0):
    """L2 gradients of J and K at phi."""
    u = phi.values
    lap = radial_laplacian(phi)
    f, fp, fpp, Df = f_family_eval(model, u)
    gJ = -lap + c * u - fp
    gK = (-sp.mu_h1 * lap + sp.mu_l2 * c * u
          - sp.alpha * (fp + u * fpp) - sp.d * sp.beta * fp)
    return gJ, gK


def gradient_flow_minimizer(model, sp: ScalingPair, init: RadialField, c: float = 1.0,
                            max_iter: int = 4000, tol: float = 1e-10, step0: float = 0.5):
    """Preconditioned descent on H along {K = 0}, re-projecting after every step.

    Returns (field, H value, iterations).
    """
    if not sp.admissible:
        raise PreconditionError("gradient flow needs an admissible pair")
    grid = init.grid

    def project(phi):
        # amplitude ray: K(s phi) > 0 for small s and < 0 for large s on admissible pairs
        def k_of(sc):
            return K(RadialField(grid, sc * phi.values), sp, model, c)
        lo, hi = 1.0, 1.0
        try:
            while k_of(lo) <= 0:
                lo *= 0.5
                if lo < 1e-12:
                    raise MinimizerStalled("K stays non-positive along the amplitude ray")
            while k_of(hi) >= 0:
                hi *= 1.5
                if hi > 1e12:
                    raise MinimizerStalled("K stays non-negative along the amplitude ray")
        except AmplitudeOverflow as exc:
            raise MinimizerStalled(str(exc)) from exc
        sc = optimize.brentq(k_of, lo, hi, xtol=1e-15, rtol=1e-15)
        return RadialField(grid, sc * phi.values)

    phi = project(init)
    h = H(phi, sp, model, c)
    step = step0
    it = 0
    for it in range(1, max_iter + 1):
        gJ, gK = _functional_gradients(phi, sp, model, c)
        gH = gJ - gK / sp.mu_bar
        pH = _helmholtz_solve(gH, grid, c)
        pK = _helmholtz_solve(gK, grid, c)
        # tangential part with respect to the H^1-type inner product
        wts = grid.weights
        kk = float(np.dot(wts, pK * gK))
        if kk > 0:
            pH = pH - float(np.dot(wts, pH * gK)) / kk * pK
        if not np.any(pH):
            break
        accepted = False
        while step > 1e-12:
            trial = RadialField(grid, phi.values - step * pH)
            try:
                trial = project(trial)
            except MinimizerStalled:
                step *= 0.5
                continue
            h_new = H(trial, sp, model, c)
            if h_new < h:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        dec = h - h_new
        phi, h = trial, h_new
        step = min(step * 1.5, 4.0)
        if dec <= tol:
            break
    return phi, h, it
