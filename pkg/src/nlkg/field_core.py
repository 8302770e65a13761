"""Grids, fields, quadrature, spectral operators and nonlinearity models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import AmplitudeOverflow, ModelOutsideClass, NonFiniteIntegrand


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d=1)."""
    return 2.0 * math.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def ball_volume(d: int, radius: float) -> float:
    return sphere_area(d) * radius**d / d


def l2_critical_power(d: int) -> float:
    return 2.0 + 4.0 / d


def h1_critical_power(d: int) -> float:
    return math.inf if d <= 2 else 2.0 + 4.0 / (d - 2)


# ---------------------------------------------------------------------------
# finite-difference stencils

def fd_weights(offsets: Sequence[float], order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(x + s_j h) ~ h^order f^(order)(x)."""
    s = np.asarray(offsets, dtype=float)
    k = np.arange(len(s))
    V = s[None, :] ** k[:, None]
    rhs = np.zeros(len(s))
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


_D1_C = fd_weights([-2, -1, 0, 1, 2], 1)
_D2_C = fd_weights([-2, -1, 0, 1, 2], 2)
_D1_R1 = fd_weights([-3, -2, -1, 0, 1], 1)
_D1_R0 = fd_weights([-4, -3, -2, -1, 0], 1)
_D2_R1 = fd_weights([-4, -3, -2, -1, 0, 1], 2)
_D2_R0 = fd_weights([-5, -4, -3, -2, -1, 0], 2)


def _even_padded(v: np.ndarray) -> np.ndarray:
    # midpoint nodes sit at +-h/2, +-3h/2, so the even extension is an exact mirror
    return np.concatenate([v[1::-1], v])


def radial_derivative(v: np.ndarray, h: float) -> np.ndarray:
    """First r-derivative of an even radial profile sampled at midpoint nodes.

    Fourth-order centred stencil; even reflection at r=0, one-sided at r_max.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    p = _even_padded(v)
    out = np.empty(n)
    core = (_D1_C[0] * p[:-4] + _D1_C[1] * p[1:-3] + _D1_C[2] * p[2:-2]
            + _D1_C[3] * p[3:-1] + _D1_C[4] * p[4:])
    out[: n - 2] = core[: n - 2]
    out[n - 2] = _D1_R1 @ v[n - 5:n]
    out[n - 1] = _D1_R0 @ v[n - 5:n]
    return out / h


def radial_second_derivative(v: np.ndarray, h: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = v.size
    p = _even_padded(v)
    out = np.empty(n)
    core = (_D2_C[0] * p[:-4] + _D2_C[1] * p[1:-3] + _D2_C[2] * p[2:-2]
            + _D2_C[3] * p[3:-1] + _D2_C[4] * p[4:])
    out[: n - 2] = core[: n - 2]
    out[n - 2] = _D2_R1 @ v[n - 6:n]
    out[n - 1] = _D2_R0 @ v[n - 6:n]
    return out / h**2


# ---------------------------------------------------------------------------
# radial grids

@dataclass(frozen=True)
class RadialGrid:
    d: int
    r_max: float
    n: int

    def __post_init__(self):
        if self.d < 1 or self.n < 8 or not self.r_max > 0:
            raise ValueError("RadialGrid needs d >= 1, n >= 8 and r_max > 0")

    @property
    def h(self) -> float:
        return self.r_max / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        r = (np.arange(self.n) + 0.5) * self.h
        r.setflags(write=False)
        return r

    @cached_property
    def weights(self) -> np.ndarray:
        if self.d == 1:
            w = np.full(self.n, 2.0 * self.h)
        else:
            w = sphere_area(self.d) * self.nodes ** (self.d - 1) * self.h
        w.setflags(write=False)
        return w

    def integrate(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise NonFiniteIntegrand("integrand has non-finite samples")
        return float(np.dot(self.weights, values))


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError("values must have one sample per node")
        if not np.all(np.isfinite(v)):
            raise ValueError("RadialField values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: RadialGrid, fn: Callable[[np.ndarray], np.ndarray]):
        return cls(grid, fn(grid.nodes))

    def __mul__(self, c):
        return RadialField(self.grid, c * self.values)

    __rmul__ = __mul__

    def tail_flag(self, tol: float = 1e-8) -> bool:
        """True when the last 5% of nodes carry amplitude above tol (advisory)."""
        m = max(1, self.grid.n // 20)
        return bool(np.max(np.abs(self.values[-m:])) > tol)

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def quad_integrate(fld: RadialField, density: Callable[[np.ndarray], np.ndarray]) -> float:
    """Integral over R^d of density(values) for a radial field."""
    vals = np.broadcast_to(np.asarray(density(fld.values), dtype=float), fld.values.shape)
    return fld.grid.integrate(vals)


def radial_gradient(fld: RadialField) -> np.ndarray:
    return radial_derivative(fld.values, fld.grid.h)


def radial_laplacian(fld: RadialField) -> np.ndarray:
    g = fld.grid
    lap = radial_second_derivative(fld.values, g.h)
    if g.d > 1:
        lap = lap + (g.d - 1) / g.nodes * radial_derivative(fld.values, g.h)
    return lap


# ---------------------------------------------------------------------------
# periodic boxes

@dataclass(frozen=True)
class BoxGrid:
    d: int
    L: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("box evolution supports d in {1,2,3}")
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError("points per side must be a power of two")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def cell(self) -> float:
        return self.dx**self.d

    @cached_property
    def axis(self) -> np.ndarray:
        """Coordinates along one side, centred so the box centre is at 0."""
        return -0.5 * self.L + self.dx * np.arange(self.n)

    @cached_property
    def coords(self):
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(x**2 for x in self.coords))

    @cached_property
    def k1(self) -> np.ndarray:
        return 2 * np.pi / self.L * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def k_components(self):
        return np.meshgrid(*([self.k1] * self.d), indexing="ij")

    @cached_property
    def k_odd_components(self):
        """Wavenumbers with the Nyquist mode zeroed, for odd-order derivatives."""
        k = self.k1.copy()
        k[self.n // 2] = 0.0
        return np.meshgrid(*([k] * self.d), indexing="ij")

    @cached_property
    def k_sq(self) -> np.ndarray:
        return sum(k**2 for k in self.k_components)

    @cached_property
    def bracket_symbol(self) -> np.ndarray:
        return np.sqrt(1.0 + self.k_sq)

    def integrate(self, values: np.ndarray) -> float:
        values = np.asarray(values)
        if not np.all(np.isfinite(values)):
            raise NonFiniteIntegrand("integrand has non-finite samples")
        return float(np.sum(values) * self.cell)


@dataclass(frozen=True, eq=False)
class BoxField:
    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError("values do not match the box shape")
        if not np.all(np.isfinite(v)):
            raise ValueError("BoxField values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __mul__(self, c):
        return BoxField(self.grid, c * self.values)

    __rmul__ = __mul__

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def box_gradient(fld: BoxField):
    """Spectral gradient components (Nyquist mode dropped)."""
    uh = np.fft.fftn(fld.values)
    return [np.real(np.fft.ifftn(1j * k * uh)) for k in fld.grid.k_odd_components]


def box_grad_norm_sq(fld: BoxField) -> float:
    """||grad u||^2 by Parseval with the full |k|^2 symbol."""
    g = fld.grid
    uh = np.fft.fftn(fld.values)
    return float(np.sum(g.k_sq * np.abs(uh) ** 2) * g.cell / uh.size)


def apply_bracket_op(fld: BoxField, power: int) -> BoxField:
    """<grad>^power with symbol (1+|k|^2)^(power/2), power = +1 or -1."""
    if power not in (1, -1):
        raise ValueError("power must be +1 or -1")
    sym = fld.grid.bracket_symbol if power == 1 else 1.0 / fld.grid.bracket_symbol
    return BoxField(fld.grid, np.real(np.fft.ifftn(sym * np.fft.fftn(fld.values))))


def embed_radial(fld: RadialField, box: BoxGrid) -> BoxField:
    """Sample a radial profile about the box centre (cubic interpolation, zero outside)."""
    from scipy.interpolate import CubicSpline

    r = fld.grid.nodes
    spline = CubicSpline(np.concatenate([-r[::-1], r]),
                         np.concatenate([fld.values[::-1], fld.values]))
    rad = box.radius
    vals = np.where(rad <= r[-1], spline(np.minimum(rad, r[-1])), 0.0)
    return BoxField(box, vals)


# ---------------------------------------------------------------------------
# cutoff

def chi(s):
    """C^2 bump: 1 on |s|<=1, 0 on |s|>=2, quintic smoothstep in between."""
    t = np.clip(np.abs(np.asarray(s, dtype=float)) - 1.0, 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def chi_R(x_norm, R: float):
    return chi(np.asarray(x_norm) / R)


# ---------------------------------------------------------------------------
# nonlinearity models

def _spow(u, e):
    return np.abs(u) ** e


@dataclass(frozen=True)
class PowerSum:
    """f(u) = sum_k lam_k |u|^q_k."""
    terms: tuple
    split_radius: float = 1.0

    def __post_init__(self):
        terms = tuple((float(l), float(q)) for l, q in self.terms)
        if not terms:
            raise ValueError("PowerSum needs at least one term")
        for l, q in terms:
            if l <= 0 or q <= 2:
                raise ValueError("PowerSum terms need lam > 0 and q > 2")
        object.__setattr__(self, "terms", terms)

    @property
    def q_max(self) -> float:
        return max(q for _, q in self.terms)

    @property
    def q_min(self) -> float:
        return min(q for _, q in self.terms)

    @property
    def cap(self) -> float:
        return math.inf

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        f = np.zeros_like(u)
        fp = np.zeros_like(u)
        fpp = np.zeros_like(u)
        a = np.abs(u)
        s = np.sign(u)
        for l, q in self.terms:
            f = f + l * a**q
            fp = fp + l * q * s * a ** (q - 1)
            fpp = fpp + l * q * (q - 1) * a ** (q - 2)
        return f, fp, fpp

    def stiffness(self, amp: float) -> float:
        return amp ** (self.q_max - 2)

    def homogeneous_degree(self):
        """q when f is a single power, else None."""
        return self.terms[0][1] if len(self.terms) == 1 else None

    def admissible_for(self, d: int) -> bool:
        lo, hi = l2_critical_power(d), h1_critical_power(d)
        return all(lo < q <= hi for _, q in self.terms)

    def describe(self) -> str:
        return "powersum:" + ";".join(f"{q:g},{l:g}" for l, q in self.terms)


@dataclass(frozen=True)
class CriticalPower:
    """f(u) = |u|^p / p with p = 2 + 4/(d-2)."""
    d: int
    split_radius: float = 1.0

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("CriticalPower needs d >= 3")

    @property
    def power(self) -> float:
        return h1_critical_power(self.d)

    @property
    def q_max(self) -> float:
        return self.power

    @property
    def q_min(self) -> float:
        return self.power

    @property
    def cap(self) -> float:
        return math.inf

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        p = self.power
        a = np.abs(u)
        return a**p / p, np.sign(u) * a ** (p - 1), (p - 1) * a ** (p - 2)

    def stiffness(self, amp: float) -> float:
        return amp ** (self.power - 2)

    def homogeneous_degree(self):
        return self.power

    def admissible_for(self, d: int) -> bool:
        return d == self.d

    def describe(self) -> str:
        return "critical"


@dataclass(frozen=True)
class Exponential2D:
    """f(u) = lam |u|^p exp(kappa0 u^2 + gamma |u|) in two dimensions."""
    lam: float = 1.0
    p: float = 5.0
    kappa0: float = 1.0
    gamma: float = 0.0
    split_radius: float = 1.0

    def __post_init__(self):
        if self.lam <= 0 or self.p <= 4 or self.kappa0 < 0:
            raise ValueError("Exponential2D needs lam > 0, p > 4, kappa0 >= 0")
        # 8 k u^2 + 3 g u + 2(p-4) > 0 on u >= 0
        k, g, c = self.kappa0, self.gamma, 2.0 * (self.p - 4.0)
        if g < 0 and (k == 0 or 9 * g * g >= 32 * k * c):
            raise ValueError("Exponential2D parameters violate 8k u^2 + 3g u + 2(p-4) > 0")

    @property
    def q_max(self) -> float:
        return self.p

    @property
    def q_min(self) -> float:
        return self.p

    @property
    def cap(self) -> float:
        if self.kappa0 > 0:
            return math.sqrt(700.0 / self.kappa0)
        if self.gamma > 0:
            return 700.0 / self.gamma
        return math.inf

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        a = np.abs(u)
        if np.any(a > self.cap):
            raise AmplitudeOverflow(f"|u| = {float(np.max(a)):.6g} beyond cap {self.cap:.6g}")
        k, g, p = self.kappa0, self.gamma, self.p
        e = self.lam * np.exp(k * a * a + g * a)
        b = p + 2 * k * a * a + g * a          # Df / f
        f = e * a**p
        fp = np.sign(u) * e * a ** (p - 1) * b
        fpp = e * a ** (p - 2) * (b * b - p + 2 * k * a * a)
        return f, fp, fpp

    def stiffness(self, amp: float) -> float:
        _, _, fpp = self.evaluate(np.array([amp]))
        return float(fpp[0])

    def homogeneous_degree(self):
        return None

    def admissible_for(self, d: int) -> bool:
        return d == 2

    def describe(self) -> str:
        return f"exp:{self.p:g},{self.kappa0:g},{self.gamma:g}"


NonlinearityModel = PowerSum | CriticalPower | Exponential2D


def f_family_eval(model, u):
    """(f, f', f'', Df) with Df = u f'(u)."""
    f, fp, fpp = model.evaluate(u)
    u = np.asarray(u, dtype=float)
    Df = u * fp
    if np.ndim(Df) == 0:
        return float(f), float(fp), float(fpp), float(Df)
    return f, fp, fpp, Df


def split_nonlinearity(model, u):
    """(f_S, f_L) with f_S = chi(u / split_radius) f."""
    f = model.evaluate(u)[0]
    fs = chi(np.asarray(u) / model.split_radius) * f
    return fs, f - fs


# ---------------------------------------------------------------------------
# growth conditions

@dataclass
class GrowthReport:
    eps: float
    samples: np.ndarray
    first_margin: np.ndarray
    second_margin: np.ndarray
    passed: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return bool(np.all(self.passed))


def _growth_margins(f, Df, D2f, a):
    # (D - a) f and (D - 2)(D - a) f, with D^2 f = u f' + u^2 f''
    first = Df - a * f
    second = D2f - (a + 2) * Df + 2 * a * f
    s1 = np.abs(Df) + a * np.abs(f)
    s2 = np.abs(D2f) + (a + 2) * np.abs(Df) + 2 * a * np.abs(f)
    return first, second, s1, s2


def verify_growth_conditions(model, d: int, u_samples, eps_hi: float = 16.0,
                             rtol: float = 1e-12) -> GrowthReport:
    """Largest eps >= 0 with (D-2_*-eps)f >= 0 and (D-2)(D-2_*-eps)f >= 0 on the samples."""
    u = np.asarray(u_samples, dtype=float).ravel()
    f, fp, fpp, Df = f_family_eval(model, u)
    f, fp, fpp, Df = map(np.atleast_1d, (f, fp, fpp, Df))
    D2f = Df + u * u * fpp
    base = l2_critical_power(d)

    def ok(eps):
        first, second, s1, s2 = _growth_margins(f, Df, D2f, base + eps)
        return bool(np.all(first >= -rtol * s1) and np.all(second >= -rtol * s2))

    if not ok(0.0):
        raise ModelOutsideClass("growth condition fails already at eps = 0")
    grid = np.linspace(0.0, eps_hi, 1601)
    good = 0.0
    for e in grid[1:]:
        if not ok(e):
            break
        good = e
    else:
        good = eps_hi
    if good < eps_hi:
        lo, hi = good, good + grid[1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        good = lo
    if good <= 1e-9:
        raise ModelOutsideClass("growth condition holds only at eps = 0")
    first, second, s1, s2 = _growth_margins(f, Df, D2f, base + good)
    passed = (first >= -rtol * s1) & (second >= -rtol * s2)
    return GrowthReport(good, u, first, second, passed)
