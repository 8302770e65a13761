"""End-to-end experiments: the K+/K- dichotomy under many scaling pairs, the
uniform K bounds, unboundedness of J outside the admissible cone, and the
free-energy equivalence on K_{1,0} >= 0."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import EmptyConstraint, PreconditionError
from .field_core import (BoxField, BoxGrid, PowerSum, RadialField, RadialGrid,
                         box_grad_norm_sq)
from .functionals import (KMINUS, KPLUS, FieldSummary, ScalingPair, StatePair,
                          K_10, K_parts, classify, energy, l2_norm_sq,
                          quadratic_energy, sample_pairs, static_energy)
from .evolution import (BLEWUP, DISPERSED, UNDECIDED, EvolveConfig, box_state,
                        evolve, line_state)


# ---------------------------------------------------------------------------
# data families

@dataclass
class Datum:
    name: str
    state: StatePair
    control: bool = False     # allowed to sit at or above m


def scaled_groundstates(Q: RadialField, cs: Sequence[float]) -> list[Datum]:
    return [Datum(f"cQ:{c:g}", StatePair.at_rest(Q * c)) for c in cs]


def random_bump(grid: RadialGrid, rng: np.random.Generator, max_terms: int = 3,
                amp: float = 1.0) -> RadialField:
    """Sum of up to max_terms Gaussians with random signs, widths and centres."""
    r = grid.nodes
    v = np.zeros_like(r)
    for _ in range(int(rng.integers(1, max_terms + 1))):
        a = amp * rng.uniform(-1.0, 1.0)
        w = rng.uniform(0.4, 3.0)
        r0 = rng.uniform(0.0, 2.0)
        v += a * (np.exp(-((r - r0) / w) ** 2) + np.exp(-((r + r0) / w) ** 2))
    return RadialField(grid, v)


def random_bumps_below(grid: RadialGrid, model, m: float, count: int,
                       rng: np.random.Generator, amp: float = 1.0,
                       max_tries: int | None = None) -> list[Datum]:
    """Random bumps at rest (with a random velocity bump) whose energy is below m."""
    out: list[Datum] = []
    tries = 0
    max_tries = max_tries or 50 * count
    while len(out) < count and tries < max_tries:
        tries += 1
        u0 = random_bump(grid, rng, amp=amp)
        u1 = random_bump(grid, rng, amp=0.3 * amp)
        s = StatePair(u0, u1)
        if energy(s, model) < m:
            out.append(Datum(f"bump:{len(out)}", s))
    return out


# ---------------------------------------------------------------------------
# dichotomy sweep

@dataclass
class SweepSpec:
    model: object
    d: int
    m: float
    data: list
    pairs: list = field(default_factory=list)
    geometry: dict = field(default_factory=lambda: {"kind": "box", "L": 80.0, "n": 4096})
    config: EvolveConfig = field(default_factory=EvolveConfig)
    run_evolution: bool = True
    band: float = 0.05        # |E - m| < band*m marks threshold-adjacent rows

    def __post_init__(self):
        if not self.pairs:
            self.pairs = sample_pairs(self.d, 20)

    def validate(self):
        if not self.m > 0:
            raise PreconditionError("the threshold m must be computed first")
        bad = [p.label() for p in self.pairs if not p.admissible]
        if bad:
            raise PreconditionError(f"inadmissible pairs in sweep: {', '.join(bad)}")
        for dm in self.data:
            if dm.state.d != self.d:
                raise PreconditionError(f"datum {dm.name} lives in d={dm.state.d}")
            if not dm.control and energy(dm.state, self.model) >= self.m:
                raise PreconditionError(f"datum {dm.name} is not below m")


@dataclass
class DichotomyRow:
    name: str
    E: float
    K: dict
    labels: dict
    predicted: str
    outcome: str | None
    certificates: dict
    agree: bool | None
    violation: bool
    threshold_adjacent: bool
    stop_reason: str = ""

    def csv_row(self):
        return [self.name, repr(self.E), self.predicted, self.outcome or "",
                "" if self.agree is None else int(self.agree), int(self.violation),
                int(self.threshold_adjacent), self.stop_reason,
                repr(min(self.K.values())), repr(max(self.K.values()))]


SWEEP_COLUMNS = ("name", "E", "predicted", "outcome", "agree", "violation",
                 "threshold_adjacent", "stop_reason", "K_min", "K_max")


@dataclass
class DichotomyReport:
    rows: list
    pairs: list
    m: float

    @property
    def violations(self):
        return [r for r in self.rows if r.violation]

    @property
    def disagreements(self):
        return [r for r in self.rows if r.agree is False]

    @property
    def excused(self):
        """Undecided K+ rows inside the threshold-adjacent band."""
        return [r for r in self.rows if r.predicted == KPLUS and r.outcome == UNDECIDED
                and r.threshold_adjacent]

    @property
    def passed(self) -> bool:
        return not self.violations and not self.disagreements

    def counts(self) -> dict:
        out: dict = {"rows": len(self.rows), "pairs": len(self.pairs)}
        for r in self.rows:
            key = f"{r.predicted}->{r.outcome}"
            out[key] = out.get(key, 0) + 1
        out["violations"] = len(self.violations)
        out["disagreements"] = len(self.disagreements)
        out["excused_undecided"] = len(self.excused)
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                w.writerow(r.csv_row())

    def summary(self) -> dict:
        return {"m": self.m, "counts": self.counts(), "passed": self.passed,
                "failures": [r.name for r in self.violations + self.disagreements]}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def evolution_state(s: StatePair, geometry: dict):
    kind = geometry.get("kind", "box")
    if kind == "box":
        box = BoxGrid(s.d, float(geometry["L"]), int(geometry["n"]))
        if isinstance(s.u0, RadialField):
            return box_state(s.u0, s.u1, box)
        return box_state(s.u0, s.u1)
    if kind == "line":
        if s.d != 3:
            raise PreconditionError("the radial line geometry is three-dimensional")
        return line_state(s.u0, s.u1, float(geometry["R"]), int(geometry["n"]))
    raise PreconditionError(f"unknown geometry kind {kind!r}")


def _agreement(predicted, outcome, adjacent):
    if predicted == KPLUS:
        if outcome == DISPERSED:
            return True
        return True if (outcome == UNDECIDED and adjacent) else False
    if predicted == KMINUS:
        return outcome == BLEWUP
    return None


def run_dichotomy(spec: SweepSpec) -> DichotomyReport:
    spec.validate()
    rows = []
    for dm in spec.data:
        ks, labels = {}, {}
        E = None
        for sp in spec.pairs:
            v = classify(dm.state, sp, spec.model, spec.m)
            ks[sp.label()] = v.K
            labels[sp.label()] = v.label
            E = v.E
        distinct = sorted(set(labels.values()))
        violation = len(distinct) > 1
        predicted = distinct[0] if not violation else "Mixed"
        adjacent = abs(E - spec.m) < spec.band * spec.m
        outcome, certs, agree, stop = None, {}, None, ""
        if spec.run_evolution and predicted in (KPLUS, KMINUS):
            cfg = EvolveConfig(**{**spec.config.__dict__, "m": spec.m})
            rec = evolve(evolution_state(dm.state, spec.geometry), spec.model, cfg)
            outcome, stop = rec.outcome, rec.stop_reason
            bu, ds = rec.certificates["blowup"], rec.certificates["dispersal"]
            certs = {"blowup": bu.fired, "delta": bu.data.get("delta"),
                     "dispersal": ds.fired, "max_increment": ds.data.get("max_last"),
                     "reliable": rec.reliable, "t_end": rec.final.t}
            agree = _agreement(predicted, outcome, adjacent)
        rows.append(DichotomyRow(dm.name, E, ks, labels, predicted, outcome, certs,
                                 agree, violation, adjacent, stop))
    return DichotomyReport(rows, list(spec.pairs), spec.m)


def small_data_membership(states: Sequence[StatePair], model, m: float,
                          pairs: Sequence[ScalingPair], frac: float = 0.01):
    """Labels of states with E^Q <= frac*m; all of them should be K+."""
    out = []
    for s in states:
        eq = quadratic_energy(s)
        if eq > frac * m:
            continue
        out.append([classify(s, sp, model, m).label for sp in pairs])
    return out


# ---------------------------------------------------------------------------
# uniform K bounds

KGAP_COLUMNS = ("field", "pair", "J", "K", "KQ", "gap", "branch", "margin")


@dataclass
class KGapAudit:
    rows: list                # [field, pair, J, K, KQ, gap, branch, margin]
    delta: dict               # fitted delta per pair label
    m: float

    @property
    def violations(self):
        return [r for r in self.rows if r[6] == "violation"]

    @property
    def min_margin(self) -> float:
        return min((r[7] for r in self.rows), default=math.inf)

    @property
    def passed(self) -> bool:
        return not self.violations and all(d > 0 for d in self.delta.values())

    def branch_counts(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out[r[6]] = out.get(r[6], 0) + 1
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(KGAP_COLUMNS)
            for r in self.rows:
                w.writerow([r[0], r[1], *(repr(float(x)) for x in r[2:6]), r[6], repr(float(r[7]))])

    def summary(self) -> dict:
        return {"m": self.m, "rows": len(self.rows), "branches": self.branch_counts(),
                "delta": self.delta, "min_margin": self.min_margin,
                "passed": self.passed, "failures": [f"{r[0]}@{r[1]}" for r in self.violations]}


def k_gap_audit(model, m: float, fields: Sequence, pairs: Sequence[ScalingPair],
                c: float = 1.0, tol: float = 1e-10) -> KGapAudit:
    """Check K >= min(mu_bar (m-J), delta K^Q) or K <= -mu_bar (m-J) on fields with J < m.

    Rows with |K| < mu_bar (m-J) are the ones that need the delta branch; the
    fitted delta of a pair is the smallest K/K^Q over them (over all rows on
    the upper side when no such row exists). A row with -mu_bar (m-J) < K <= 0
    is a violation; the margin of a row is its distance to that strip.
    Fields with J >= m are skipped.
    """
    for sp in pairs:
        if sp.amplitude_ray:
            raise PreconditionError("(d, alpha) = (2, 0) is excluded from the K-gap audit")
        if not sp.admissible:
            raise PreconditionError(f"inadmissible pair {sp.label()}")
    summaries = [(i, FieldSummary.of(phi, model)) for i, phi in enumerate(fields)]
    raw = []
    for i, s in summaries:
        J = static_energy(s, model, c)
        if not J < m:
            continue
        for sp in pairs:
            kq, kn = K_parts(s, sp, model, c)
            raw.append((i, sp, J, kq + kn, kq, sp.mu_bar * (m - J)))
    delta: dict = {}
    for sp in pairs:
        mine = [r for r in raw if r[1] is sp]
        inner = [r[3] / r[4] for r in mine if abs(r[3]) < r[5] and r[4] > 0]
        upper = [r[3] / r[4] for r in mine if r[3] > -r[5] and r[4] > 0]
        pick = inner or upper
        delta[sp.label()] = float(min(pick)) if pick else math.inf
    rows = []
    for i, sp, J, k, kq, gap in raw:
        # margin: distance to the violation strip -gap < K <= 0
        slack = tol * max(kq, gap, 1.0)
        if k <= -gap + slack:
            branch, margin = "second", -gap - k
        elif k > slack and k >= min(gap, delta[sp.label()] * kq) - slack:
            branch, margin = "first", k
        else:
            branch, margin = "violation", min(k, -gap - k)
        rows.append([i, sp.label(), J, k, kq, gap, branch, margin])
    return KGapAudit(rows, delta, m)


def sample_audit_fields(grid: RadialGrid, model, m: float, count: int,
                        rng: np.random.Generator, Q: RadialField | None = None):
    """Radial fields with J < m: random bumps at random amplitude plus scaled Q."""
    out = []
    tries = 0
    while len(out) < count and tries < 100 * count:
        tries += 1
        if Q is not None and rng.random() < 0.3:
            c = rng.uniform(0.2, 1.6)
            phi = Q * c
        else:
            phi = random_bump(grid, rng, amp=rng.uniform(0.1, 2.0))
        if static_energy(phi, model) < m:
            out.append(phi)
    return out


# ---------------------------------------------------------------------------
# unboundedness outside the cone

CASE_DILATION = "alpha<0<mu_low"
CASE_VACUOUS = "mu_bar=0>alpha"
CASE_MODULATION = "mu_low<0<mu_bar"

SCAN_COLUMNS = ("param", "nu", "lam_or_xi", "J", "K")


@dataclass
class AppendixAScan:
    case: str
    d: int
    pair: ScalingPair         # after the sign normalisation beta > 0
    q: float
    m_reference: float
    table: list               # rows (param, nu, lambda or xi, J, K)
    tail_start: int
    on_constraint: bool
    precondition_met: bool
    notes: list = field(default_factory=list)

    @property
    def J(self) -> np.ndarray:
        return np.array([r[3] for r in self.table])

    @property
    def decreasing(self) -> bool:
        j = self.J[self.tail_start:]
        return bool(len(j) >= 2 and np.all(np.diff(j) < 0))

    @property
    def crossed(self) -> bool:
        return bool(self.J.min() < -10 * self.m_reference)

    @property
    def m_unbounded(self) -> bool:
        """The family witnesses m = -inf: it stays on K = 0 and J runs below -10 m_ref."""
        return self.precondition_met and self.on_constraint and self.decreasing and self.crossed

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SCAN_COLUMNS)
            for r in self.table:
                w.writerow([repr(float(x)) for x in r])

    def summary(self) -> dict:
        return {"case": self.case, "d": self.d, "pair": [self.pair.alpha, self.pair.beta],
                "q": self.q, "m_reference": self.m_reference, "rows": len(self.table),
                "tail_start": self.tail_start, "decreasing": self.decreasing,
                "crossed": self.crossed, "J_min": float(self.J.min()),
                "on_constraint": self.on_constraint,
                "precondition_met": self.precondition_met,
                "m_unbounded": self.m_unbounded, "notes": self.notes}


def scan_case(d: int, alpha: float, beta: float) -> tuple[str, ScalingPair]:
    """Sign-normalise to beta > 0 (mu_bar > 0 where possible) and name the case."""
    sp = ScalingPair(alpha, beta, d)
    if sp.beta < 0 or (sp.beta == 0 and sp.alpha < 0):
        sp = -sp
    mu_bar, mu_low = sp.mu_l2, sp.mu_h1    # with beta > 0 the L2 weight is the larger
    if mu_bar < 0:
        sp = -sp
        mu_bar, mu_low = sp.mu_h1, sp.mu_l2
    if mu_bar == 0 and sp.alpha < 0:
        return CASE_VACUOUS, sp
    if sp.alpha < 0 and mu_low > 0:
        return CASE_DILATION, sp
    if mu_low < 0 < mu_bar:
        return CASE_MODULATION, sp
    raise PreconditionError(f"pair ({alpha:g},{beta:g}) does not fall in any unbounded case")


def exponent_window(case: str, sp: ScalingPair):
    """Open interval of admissible p = q - 2 for the case."""
    d = sp.d
    lo = 4.0 / d
    hi = 4.0 / (d - 2) if d > 2 else math.inf
    if case == CASE_MODULATION:
        a = sp.alpha
        lo = max(lo, sp.mu_l2 / -a)        # alpha p + mu_bar < 0
        hi = min(hi, 2 * sp.beta / -a)     # alpha p + 2 beta > 0
    return lo, hi


def _default_q(case, sp):
    lo, hi = exponent_window(case, sp)
    if not lo < hi:
        raise PreconditionError("no exponent satisfies the case conditions")
    p = 0.5 * (lo + hi) if math.isfinite(hi) else lo + 2.0
    return 2.0 + float(Fraction(p).limit_denominator(8))


def _reference_m(q, d):
    from .ground_state import compute_m
    return compute_m(PowerSum(((1.0, q),)), d, r_max=25.0, n=8192).m


def appendix_a_scan(d: int, alpha: float, beta: float, q: float | None = None,
                    m_reference: float | None = None, allow_vacuous: bool = False,
                    r_max: float = 20.0, n_radial: int = 4000,
                    box_L: float | None = None, box_n: int | None = None,
                    max_rows: int = 60) -> AppendixAScan:
    """Tabulate J along the family that drives J to -inf on {K = 0}.

    dilation case   : nu phi(x/lam), nu -> 1+, lam(nu) = sqrt(-K1/K2) on K = 0;
    vacuous case    : phi(x/lam) from a phi with K(phi) = 0 (lam -> inf);
    modulation case : nu phi cos(xi x_1) on a periodic box, xi over the lattice
                      wavenumbers with >= 8 points per wavelength, nu(xi) on K = 0.
    """
    sp0 = ScalingPair(alpha, beta, d)
    neg_ok = (-sp0).admissible
    if sp0.admissible:
        raise PreconditionError(f"pair {sp0.label()} is admissible")
    case, sp = scan_case(d, alpha, beta)
    precondition = not neg_ok
    if not precondition and not (case == CASE_VACUOUS and allow_vacuous):
        raise PreconditionError(f"pair {(-sp0).label()} is admissible")
    lo, hi = exponent_window(case, sp)
    if q is None:
        q = _default_q(case, sp)
    if not lo < q - 2 < hi:
        raise PreconditionError(f"q = {q:g} outside the case window p in ({lo:g}, {hi:g})")
    model = PowerSum(((1.0, float(q)),))
    if m_reference is None:
        m_reference = _reference_m(q, d)
    if case == CASE_DILATION:
        table, tail, on_c, notes = _scan_dilation(sp, model, q, m_reference, r_max, n_radial, max_rows)
    elif case == CASE_VACUOUS:
        table, tail, on_c, notes = _scan_vacuous(sp, model, q, m_reference, r_max, n_radial, max_rows)
    else:
        table, tail, on_c, notes = _scan_modulation(sp, model, q, m_reference, box_L, box_n)
    if not precondition:
        notes.append("(-alpha,-beta) is admissible, so the proposition does not apply")
    return AppendixAScan(case, d, sp, float(q), float(m_reference), table, tail, on_c,
                         precondition, notes)


def _tail(J):
    """Index of the last local maximum; the family decreases from there on."""
    J = np.asarray(J)
    k = int(np.argmax(J))
    return k


def _amplitude_root(fn, lo=1e-6, hi=1e6):
    grid = np.geomspace(lo, hi, 241)
    vals = [fn(s) for s in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa > 0 >= fb or fa < 0 <= fb:
            return brentq(fn, a, b, xtol=1e-15, rtol=1e-15)
    return None


def _scan_dilation(sp, model, q, m_ref, r_max, n, max_rows):
    d = sp.d
    grid = RadialGrid(d, r_max, n)
    base = RadialField.from_function(grid, lambda r: np.exp(-0.5 * r * r))
    mu_bar, mu_low, p = sp.mu_l2, sp.mu_h1, q - 2

    def k_split(s: FieldSummary):
        return 0.5 * mu_low * s.grad, 0.5 * mu_bar * s.mass - (sp.alpha * p + mu_bar) * s.F

    s0 = _amplitude_root(lambda t: k_split(FieldSummary.of(base * t, model))[1])
    if s0 is None:
        raise EmptyConstraint("K2 has no nontrivial zero along the amplitude family; K > 0")
    phi = base * s0
    table = []
    for k in range(max_rows):
        nu = 1.0 + 0.5 * 2.0 ** (-k / 2)
        s = FieldSummary.of(phi * nu, model)
        k1, k2 = k_split(s)
        if not (k2 < 0 < k1):
            continue
        # lam^(d-2) K1 + lam^d K2 = 0
        lam = math.sqrt(-k1 / k2)
        grad = lam ** (d - 2) * s.grad
        mass, F = lam**d * s.mass, lam**d * s.F
        J = 0.5 * grad + 0.5 * mass - F
        K = 0.5 * mu_low * grad + 0.5 * mu_bar * mass - (sp.alpha * p + mu_bar) * F
        table.append([nu - 1.0, nu, lam, J, K])
        if J < -100 * m_ref:
            break
    Js = [r[3] for r in table]
    scale = max(abs(r[3]) for r in table)
    on_c = all(abs(r[4]) <= 1e-8 * max(scale, 1.0) for r in table)
    return table, _tail(Js), on_c, ["J from exact dilation laws applied to grid integrals of nu*phi"]


def _scan_vacuous(sp, model, q, m_ref, r_max, n, max_rows):
    d = sp.d
    grid = RadialGrid(d, r_max, n)
    # narrow profile so that the dilation direction lowers J
    base = RadialField.from_function(grid, lambda r: np.exp(-2.0 * r * r))
    s0 = _amplitude_root(lambda t: sum(K_parts(FieldSummary.of(base * t, model), sp, model)))
    if s0 is None:
        raise EmptyConstraint("K has no nontrivial zero along the amplitude family")
    s = FieldSummary.of(base * s0, model)
    notes = ["K(phi(x/lam)) = lam^(d-2) K^grad + lam^d K^rest: the family leaves K = 0 for lam != 1"]
    table = []
    for k in range(0, max_rows):
        lam = 2.0 ** (k / 2)
        grad = lam ** (d - 2) * s.grad
        mass, F = lam**d * s.mass, lam**d * s.F
        J = 0.5 * grad + 0.5 * mass - F
        kq, kn = K_parts(FieldSummary(grad, mass, F, q * F, q * (q - 1) * F), sp, model)
        table.append([lam, 1.0, lam, J, kq + kn])
        if J < -100 * m_ref:
            break
    scale = max(abs(r[3]) for r in table)
    on_c = all(abs(r[4]) <= 1e-8 * max(scale, 1.0) for r in table)
    return table, _tail([r[3] for r in table]), on_c, notes


def _scan_modulation(sp, model, q, m_ref, L, n):
    d = sp.d
    if d > 3:
        raise PreconditionError("the modulation family is realised on boxes with d <= 3")
    # in 3D the smaller box reaches larger xi on a 64^3 lattice; the table
    # agrees with 128^3 to the printed digits
    L = L or {1: 40.0, 2: 40.0, 3: 16.0}[d]
    n = n or {1: 4096, 2: 256, 3: 64}[d]
    box = BoxGrid(d, L, n)
    x1 = box.coords[0]
    env = np.exp(-0.5 * box.radius**2)
    mu_bar, mu_low, p = sp.mu_l2, sp.mu_h1, q - 2
    coef = -(sp.alpha * p + mu_bar)          # > 0 in this case
    table = []
    for j in range(1, n // 8 + 1):           # >= 8 points per wavelength
        xi = 2 * math.pi * j / L
        psi = BoxField(box, env * np.cos(xi * x1))
        grad, mass = box_grad_norm_sq(psi), l2_norm_sq(psi)
        F1 = box.integrate(np.abs(psi.values) ** q)
        A = 0.5 * mu_low * grad + 0.5 * mu_bar * mass
        if not A < 0:
            continue
        nu = (-A / (coef * F1)) ** (1.0 / (q - 2))
        u = psi * nu
        s = FieldSummary.of(u, model)
        J = 0.5 * s.grad + 0.5 * s.mass - s.F
        K = 0.5 * mu_low * s.grad + 0.5 * mu_bar * s.mass + coef * s.F
        table.append([xi, nu, xi, J, K])
    if not table:
        raise EmptyConstraint("no lattice wavenumber makes the quadratic part of K negative")
    scale = max(abs(r[3]) for r in table)
    on_c = all(abs(r[4]) <= 1e-8 * max(scale, 1.0) for r in table)
    notes = [f"box L={L:g}, n={n}, oscillation cos(xi x_1), xi up to {table[-1][0]:.6g}"]
    return table, _tail([r[3] for r in table]), on_c, notes


# ---------------------------------------------------------------------------
# free-energy equivalence

@dataclass
class EquivalenceAudit:
    rows: list      # [index, K10, E, EQ, lower slack, upper slack] or skipped rows
    skipped: list

    @property
    def min_slack(self) -> float:
        return min((min(r[4], r[5]) for r in self.rows), default=math.inf)

    @property
    def passed(self) -> bool:
        return all(min(r[4], r[5]) >= -1e-12 * max(r[3], 1e-300) for r in self.rows)

    def summary(self) -> dict:
        return {"checked": len(self.rows), "skipped": len(self.skipped),
                "min_slack": self.min_slack, "passed": self.passed,
                "failures": [r[0] for r in self.rows
                             if min(r[4], r[5]) < -1e-12 * max(r[3], 1e-300)]}


def energy_equivalence_audit(states: Sequence[StatePair], model) -> EquivalenceAudit:
    """E <= E^Q <= (1 + d/2) E on states with K_{1,0}(u0) >= 0."""
    rows, skipped = [], []
    for i, s in enumerate(states):
        k10 = K_10(s.u0, model)
        if k10 < 0:
            skipped.append(i)
            continue
        E = energy(s, model)
        EQ = quadratic_energy(s)
        rows.append([i, k10, E, EQ, EQ - E, (1 + s.d / 2) * E - EQ])
    return EquivalenceAudit(rows, skipped)
