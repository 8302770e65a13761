"""Exact rational bookkeeping for Strichartz-type exponent triples.

A triple (b, c, s) stands for L^{1/b}_t B^s_{1/c}. All arithmetic is done
with fractions.Fraction; nothing here touches floating point except the
search for the largest admissible epsilon, whose answer is re-checked exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction as Fr

from .errors import ParamOutOfRange


def _fr(x) -> Fr:
    if isinstance(x, Fr):
        return x
    if isinstance(x, float):
        return Fr(x).limit_denominator(10**12)
    return Fr(x)


@dataclass(frozen=True)
class ExpTriple:
    b: Fr
    c: Fr
    s: Fr

    def __post_init__(self):
        for k in ("b", "c", "s"):
            object.__setattr__(self, k, _fr(getattr(self, k)))

    def __add__(self, o):
        return ExpTriple(self.b + o.b, self.c + o.c, self.s + o.s)

    def __sub__(self, o):
        return ExpTriple(self.b - o.b, self.c - o.c, self.s - o.s)

    def __mul__(self, k):
        k = _fr(k)
        return ExpTriple(k * self.b, k * self.c, k * self.s)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def as_tuple(self):
        return (self.b, self.c, self.s)

    def __str__(self):
        return "(" + ", ".join(str(v) for v in self.as_tuple()) + ")"


def T(b, c, s) -> ExpTriple:
    return ExpTriple(_fr(b), _fr(c), _fr(s))


def reg(Z: ExpTriple, theta, d) -> Fr:
    theta, d = _fr(theta), _fr(d)
    return Z.s - (1 - 2 * theta / d) * Z.b - d * (Z.c - Fr(1, 2))


def str_index(Z: ExpTriple, theta, d) -> Fr:
    theta, d = _fr(theta), _fr(d)
    return 2 * Z.b + (d - 1 + theta) * (Z.c - Fr(1, 2))


def dec(Z: ExpTriple, theta, d) -> Fr:
    theta, d = _fr(theta), _fr(d)
    return Z.b + (d - 1 + theta) * (Z.c - Fr(1, 2))


def indices(Z: ExpTriple, theta, d):
    """(reg, str, dec) for the interpolation parameter theta in [0, 1]."""
    return reg(Z, theta, d), str_index(Z, theta, d), dec(Z, theta, d)


def regularity(Z: ExpTriple, s) -> ExpTriple:
    return ExpTriple(Z.b, Z.c, _fr(s))


def dual(Z: ExpTriple, s) -> ExpTriple:
    s = _fr(s)
    return ExpTriple(1 - Z.b, 1 - Z.c, -Z.s + 2 * s - 1)


def transform(Z: ExpTriple, kind: str, s) -> ExpTriple:
    if kind == "regularity":
        return regularity(Z, s)
    if kind == "dual":
        return dual(Z, s)
    raise ValueError(f"unknown transform {kind!r}")


def is_admissible(Z: ExpTriple, s, d, allow_endpoint: bool = False):
    """(True, theta) if Z is s-admissible for some theta in [0, 1], else (False, None).

    The conditions are linear in theta, so the feasible set is an interval and
    it suffices to test the endpoints and the point where the binding
    constraint switches. allow_endpoint admits the second component 1/2
    (the energy triple sits there).
    """
    s, d = _fr(s), _fr(d)
    if not (0 <= Z.b <= Fr(1, 2) and 0 <= Z.c):
        return False, None
    if Z.c > Fr(1, 2) or (Z.c == Fr(1, 2) and not allow_endpoint):
        return False, None
    cands = [Fr(0), Fr(1)]
    # reg and str are affine in theta; add their zero-crossings against the bounds
    for fn, bound in ((reg, s), (str_index, Fr(0))):
        a0, a1 = fn(Z, 0, d) - bound, fn(Z, 1, d) - bound
        if a0 != a1:
            t = a0 / (a0 - a1)
            if 0 <= t <= 1:
                cands.append(t)
    for t in sorted(set(cands)):
        if reg(Z, t, d) <= s and str_index(Z, t, d) <= 0:
            return True, t
    return False, None


# ---------------------------------------------------------------------------
# parameter windows

def p1_window(d):
    d = _fr(d)
    return 4 / d, 4 * (d + 1) / ((d + 2) * (d - 1))


def p2_window(d):
    d = _fr(d)
    return (4 * d - 2) / (d * (d - 2)), 4 / (d - 2)


def check_params(d, p1, p2):
    if d < 3:
        raise ParamOutOfRange("the p2 window needs d >= 3")
    lo, hi = p1_window(d)
    if not lo < p1 < hi:
        raise ParamOutOfRange(f"p1 = {p1} outside ({lo}, {hi})")
    lo, hi = p2_window(d)
    if not lo < p2 <= hi:
        raise ParamOutOfRange(f"p2 = {p2} outside ({lo}, {hi}]")


def midpoint_grid(d):
    """(p1, p2) pairs: p1 at the window midpoint, p2 at midpoint and at the top."""
    a, b = p1_window(d)
    c, e = p2_window(d)
    p1 = (a + b) / 2
    return [(p1, (c + e) / 2), (p1, e)]


# ---------------------------------------------------------------------------
# catalog

@dataclass
class ExponentCatalog:
    d: int
    p1: Fr
    p2: Fr
    triples: dict = field(default_factory=dict)
    derivations: list = field(default_factory=list)

    def __getitem__(self, k):
        return self.triples[k]


def largest_rational_below(pred, hi: Fr, max_den: int = 1000, lo: Fr = Fr(0)):
    """Largest a/b in (lo, hi) with b <= max_den and pred(a/b) True.

    The top of the feasible set is located by a coarse scan and bisection of
    pred, then the best candidate a/b just below it is confirmed exactly.
    Assumes the top feasible component is longer than 1/max_den.
    """
    n = 400
    span = hi - lo
    ok = [k for k in range(n) if pred(lo + span * Fr(2 * k + 1, 2 * n))]
    if not ok:
        return None
    a = float(lo + span * Fr(2 * max(ok) + 1, 2 * n))
    b = float(hi)
    for _ in range(55):
        mid = 0.5 * (a + b)
        if pred(Fr(mid)):
            a = mid
        else:
            b = mid
    sup = Fr(b)
    cands = set()
    for den in range(1, max_den + 1):
        num = math.ceil(sup * den) - 1
        for k in (num, num - 1):
            q = Fr(k, den)
            if lo < q < hi:
                cands.add(q)
    for q in sorted(cands, reverse=True):
        if pred(q):
            return q
    return None


def build_catalog(d: int, p1, p2, check: bool = True) -> ExponentCatalog:
    d = int(d)
    p1, p2 = _fr(p1), _fr(p2)
    if check:
        check_params(d, p1, p2)
    D = _fr(d)
    cat = ExponentCatalog(d, p1, p2)
    t = cat.triples
    w1 = (D - 1) / (2 * (D + 1))
    k1 = D / (2 * (D + 2))
    t["H"] = T(0, Fr(1, 2), 1)
    t["W"] = T(w1, w1, Fr(1, 2))
    t["K"] = T(k1, k1, Fr(1, 2))
    cat.derivations.append("W, K diagonal: second component equal to the first; "
                           "then str^0(W) = 0 and str^1(K) = 0 hold with reg = 1.")
    t["Msharp"] = 2 / (p2 * (D + 1)) * T(1, 1, 0)
    t["S"] = T(1 / (p1 + 1), 1 / (2 * (p1 + 1)), 0)
    t["L"] = T(1 / (p2 + 1), 1 / (2 * (p2 + 1)), 0)
    t["M"] = Fr(2) / (D + 1) * (1 / p2 * T(1 - D, 2, 0) + (D - 2) / 4 * T(D, -1, 0))
    t["Ntilde"] = Fr(2) / (D + 1) * (T(Fr(1, 2), (D - 1) / 4, 1)
                                      + (1 - (D - 2) / 4 * p2) * T(-D, 1, 0))
    t["Mtilde"] = t["M"] + 2 / (p2 * (D + 1)) * T(0, 1 / D, 1)
    t["N"] = t["Ntilde"] - Fr(2) / (D + 1) * T(0, 1 / D, 1)
    t["Q"] = 1 / (p1 * (D + 1)) * T(1, 2, 2)
    t["P"] = 1 / (2 * (D + 1)) * T(4, D - 1, 4)
    t["Y"] = 1 / (2 * (D + 1)) * T(6, D + 3, 4)
    r1 = (D + 4) / (2 * (D + 2) * (p1 + 1))
    t["R"] = T(r1, r1, Fr(1, 2))
    cat.derivations.append("R diagonal with first component (d+4)/(2(d+2)(p1+1)); "
                           "this is the unique triple with R + p1 R^0 = K^*(1).")
    if p2 > 1:
        t["Mhat"] = t["Mtilde"] + 2 * (p2 - 1) / (p2 * (D + 1)) * T(0, 1 / D, 1)
    else:
        t["Mhat"] = t["Mtilde"]
    t["V"] = Fr(1) / (D + 2) * t["H"] + (D + 1) / (D + 2) * t["W"]
    t["G"] = (D - 2) / (D + 2) * T(1 / (D + 1), (D + 3) / (2 * (D + 1)), 0)
    eps = choose_epsilon(cat)
    cat.derivations.append(f"epsilon = {eps}: largest rational with denominator <= 1000 "
                           "meeting the strict epsilon inequalities.")
    if eps is not None:
        t["H_eps"] = T(eps * eps, (1 - eps) / 2, 0)
        t["W_eps"] = t["W"] - p2 * eps * T(D, -1, 0)
        t["Msharp_eps"] = t["Msharp"] + eps * T(D, -1, 0)
    cat.eps = eps
    return cat


def _eps_triples(cat, eps):
    D, p2 = _fr(cat.d), cat.p2
    return (T(eps * eps, (1 - eps) / 2, 0), cat["W"] - p2 * eps * T(D, -1, 0),
            cat["Msharp"] + eps * T(D, -1, 0))


def _eps_ok(cat, eps):
    d = cat.d
    if not 0 < eps < cat.p1:
        return False
    He, We, Me = _eps_triples(cat, eps)
    return (str_index(He, 0, d) < 0 and str_index(Me, 0, d) < 0
            and str_index(We, 0, d) < 0 and reg(He, 0, d) < 1)


def choose_epsilon(cat):
    return largest_rational_below(lambda e: _eps_ok(cat, e), cat.p1)


def choose_nu(max_den: int = 1000, theta=None):
    """Largest nu = a/b in (0, 1/10), b <= max_den, with Theta < (1-nu)^2 when Theta is given.

    In two dimensions reg^0(X) = 1 - nu^2 < 1 and str^0(X) = 2nu - 1/2 < 0 hold
    on the whole range, so only the interval and Theta constrain nu.
    """
    def ok(nu):
        if theta is not None and not _fr(theta) < (1 - nu) ** 2:
            return False
        X = T(nu, 0, nu - nu * nu)
        return reg(X, 0, 2) < 1 and str_index(X, 0, 2) < 0
    return largest_rational_below(ok, Fr(1, 10), max_den)


# ---------------------------------------------------------------------------
# relation checks

@dataclass
class Check:
    name: str
    lhs: object
    op: str
    rhs: object
    ok: bool
    block: str = "all"
    required: bool = True

    def row(self):
        return {"name": self.name, "lhs": str(self.lhs), "op": self.op, "rhs": str(self.rhs),
                "ok": self.ok, "block": self.block, "required": self.required}


_OPS = {
    "==": lambda a, b: a == b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


@dataclass
class RelationReport:
    d: int
    p1: Fr
    p2: Fr
    checks: list
    alpha: Fr
    beta: Fr
    eps: Fr
    derivations: list

    @property
    def failures(self):
        return [c for c in self.checks if not c.ok and c.required]

    @property
    def endpoint_notes(self):
        """Strict inequalities that degenerate to equality at the closed end of the p2 window."""
        return [c for c in self.checks if not c.ok and not c.required]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> str:
        return json.dumps({
            "d": self.d, "p1": str(self.p1), "p2": str(self.p2),
            "alpha": str(self.alpha), "beta": str(self.beta), "eps": str(self.eps),
            "passed": self.passed,
            "failures": [c.row() for c in self.failures], "derivations": self.derivations,
            "checks": [c.row() for c in self.checks],
        }, indent=2)

    def table(self) -> str:
        lines = [f"d={self.d} p1={self.p1} p2={self.p2} alpha={self.alpha} "
                 f"beta={self.beta} eps={self.eps}"]
        w = max(len(c.name) for c in self.checks)
        for c in self.checks:
            flag = "ok  " if c.ok else ("FAIL" if c.required else "edge")
            lines.append(f"  {flag} [{c.block}] {c.name:<{w}}  {c.lhs} {c.op} {c.rhs}")
        lines.append(f"{len(self.checks) - len(self.failures)}/{len(self.checks)} relations hold"
                     + (f" ({len(self.endpoint_notes)} endpoint-only)" if self.endpoint_notes else ""))
        return "\n".join(lines)


def verify_relations(d: int, p1, p2) -> RelationReport:
    p1, p2 = _fr(p1), _fr(p2)
    cat = build_catalog(d, p1, p2)
    t = cat.triples
    D = _fr(d)
    checks: list[Check] = []

    at_top = p2 == p2_window(d)[1]

    def add(name, lhs, op, rhs, block="all"):
        ok = _OPS[op](lhs, rhs)
        # a strict inequality that becomes an equality at the closed end of the
        # p2 window is reported, not required
        edge = (not ok and at_top and op in ("<", ">") and lhs == rhs)
        checks.append(Check(name, lhs, op, rhs, ok, block, required=not edge))

    H, W, K = t["H"], t["W"], t["K"]
    for th in (0, 1):
        add(f"reg^{th}(H) = 1", reg(H, th, d), "==", 1)
        add(f"str^{th}(H) = 0", str_index(H, th, d), "==", 0)
    add("reg^0(W) = 1", reg(W, 0, d), "==", 1)
    add("str^0(W) = 0", str_index(W, 0, d), "==", 0)
    add("reg^1(K) = 1", reg(K, 1, d), "==", 1)
    add("str^1(K) = 0", str_index(K, 1, d), "==", 0)
    add("reg^0(K) = (d+1)/(d+2)", reg(K, 0, d), "==", (D + 1) / (D + 2))

    Ms = t["Msharp"]
    add("str^0(Msharp) < 0", str_index(Ms, 0, d), "<", 0)
    add("reg^0(Msharp) <= 1", reg(Ms, 0, d), "<=", 1)
    add("0 < Msharp_1", Ms.b, ">", 0)
    add("Msharp_1 < W_1", Ms.b, "<", W.b)

    if d <= 4:
        S, L = t["S"], t["L"]
        add("str^1(S) < 0", str_index(S, 1, d), "<", 0, "d<=4")
        add("str^0(L) < 0", str_index(L, 0, d), "<", 0, "d<=4")
        add("reg^1(S) < 1", reg(S, 1, d), "<", 1, "d<=4")
        add("reg^0(L) < 1", reg(L, 0, d), "<", 1, "d<=4")

    # interpolation relations
    R = t["R"]
    add("R + p1 R^0 = K^*(1)", R + p1 * regularity(R, 0), "==", dual(K, 1))
    alpha = (R.b - W.b) / (K.b - W.b)
    add("R = (1-alpha)W + alpha K", (1 - alpha) * W + alpha * K, "==", R)
    add("0 < alpha", alpha, ">", 0)
    add("alpha < 1", alpha, "<", 1)
    W0, R0 = regularity(W, 0), regularity(R, 0)
    beta = (Ms.b - W0.b) / (R0.b - W0.b)
    add("Msharp = (1-beta)W^0 + beta R^0", (1 - beta) * W0 + beta * R0, "==", Ms)
    add("0 < beta", beta, ">", 0)
    add("beta < 1", beta, "<", 1)

    # the exotic triple Y
    Nt, M, N, Mt, P, Q, Y = (t[k] for k in ("Ntilde", "M", "N", "Mtilde", "P", "Q", "Y"))
    Mh = t["Mhat"]
    add("Y = Ntilde + p2 M", Nt + p2 * M, "==", Y)
    add("Y = N + p2 Mtilde", N + p2 * Mt, "==", Y)
    add("Y = P + p1 Q^0", P + p1 * regularity(Q, 0), "==", Y)
    add("Y = P^0 + p1 Q", regularity(P, 0) + p1 * Q, "==", Y)
    add("P_3 = p1 Q_3", P.s, "==", p1 * Q.s)
    add("Ntilde_3 = p2 Mtilde_3", Nt.s, "==", p2 * Mt.s)
    if p2 > 1:
        add("Y = N + Mhat + (p2-1) M", N + Mh + (p2 - 1) * M, "==", Y)

    if d >= 5:
        blk = "d>=5"
        add("reg^0(Ntilde) = 1", reg(Nt, 0, d), "==", 1, blk)
        add("-reg^0(Y) = 1", -reg(Y, 0, d), "==", 1, blk)
        add("reg^0(Mhat) <= 1", reg(Mh, 0, d), "<=", 1, blk)
        add("reg^1(Q) < 1", reg(Q, 1, d), "<", 1, blk)
        add("reg^1(P) < 1", reg(P, 1, d), "<", 1, blk)
        add("-reg^1(Y) < 1", -reg(Y, 1, d), "<", 1, blk)
        for nm, Z, th in (("Mhat", Mh, 0), ("Ntilde", Nt, 0), ("Q", Q, 1), ("P", P, 1)):
            add(f"str^{th}({nm}) < 0", str_index(Z, th, d), "<", 0, blk)
        add("str^0(Ntilde) <= str^0(Y) - 2", str_index(Nt, 0, d), "<=",
            str_index(Y, 0, d) - 2, blk)
        add("str^1(P) = str^1(Y) - 2", str_index(P, 1, d), "==", str_index(Y, 1, d) - 2, blk)
        for nm, v in (("Mhat_1", Mh.b), ("Mhat_2", Mh.c), ("Q_1", Q.b), ("Q_2", Q.c),
                      ("R_1", R.b)):
            add(f"0 <= {nm}", v, ">=", 0, blk)
            add(f"{nm} < 1/2", v, "<", Fr(1, 2), blk)
        add("1 < dec^0(Y)", dec(Y, 0, d), ">", 1, blk)
        add("1 < dec^1(Y)", dec(Y, 1, d), ">", 1, blk)
        add("Y_2 < 1/2 + 1/d", Y.c, "<", Fr(1, 2) + 1 / D, blk)
        add("Ntilde_2 > 1/2 - 1/(d-1)", Nt.c, ">", Fr(1, 2) - 1 / (D - 1), blk)
        add("P_2 > 1/2 - 1/d", P.c, ">", Fr(1, 2) - 1 / D, blk)
        # side conditions of the exotic estimate for the pairings (Ntilde, Y), theta=0
        # and (P, Y), theta=1
        for nm, Z, th in (("Ntilde", Nt, 0), ("P", P, 1)):
            add(f"0 < 1/2 - {nm}_2", Fr(1, 2) - Z.c, ">", 0, blk)
            add(f"Y_2 - 1/2 < 1/(d-1+{th})", Y.c - Fr(1, 2), "<", 1 / (D - 1 + th), blk)
        if p2 == 4 / (D - 2):
            add("reg^0(Mhat) = 1 at the critical p2", reg(Mh, 0, d), "==", 1, blk)

    V = t["V"]
    add("V = K + (-1,0,1)/(2(d+2))", K + 1 / (2 * (D + 2)) * T(-1, 0, 1), "==", V)
    G = t["G"]
    add("reg^0(G) = 1", reg(G, 0, d), "==", 1)
    add("str^0(G) < 0", str_index(G, 0, d), "<", 0)
    pc = 4 / (D - 2) + 1
    add("(2^*-1) G = W^*(1) - (1,0,1)/2", pc * G, "==", dual(W, 1) - Fr(1, 2) * T(1, 0, 1))

    eps = cat.eps
    if eps is None:
        add("an admissible epsilon exists", False, "==", True)
    else:
        He, We, Me = t["H_eps"], t["W_eps"], t["Msharp_eps"]
        add("0 < eps < p1", eps, "<", p1)
        add("str^0(H_eps) < 0", str_index(He, 0, d), "<", 0)
        add("str^0(Msharp_eps) < 0", str_index(Me, 0, d), "<", 0)
        add("str^0(W_eps) < 0", str_index(We, 0, d), "<", 0)
        add("reg^0(H_eps) < 1", reg(He, 0, d), "<", 1)
        add("reg^0(W_eps) = reg^0(W)", reg(We, 0, d), "==", reg(W, 0, d))
        add("reg^0(W) = 1", reg(W, 0, d), "==", 1)
        add("reg^0(Msharp_eps) = reg^0(Msharp)", reg(Me, 0, d), "==", reg(Ms, 0, d))
        add("W_eps + p2 Msharp_eps = W + p2 Msharp", We + p2 * Me, "==", W + p2 * Ms)
        add("W + p2 Msharp = W^*(1)", W + p2 * Ms, "==", dual(W, 1))
    return RelationReport(d, p1, p2, checks, alpha, beta, eps, list(cat.derivations))


def exponential_block(nu=None):
    """Checks on X = (nu, 0, nu - nu^2) used in the two-dimensional exponential case."""
    nu = choose_nu() if nu is None else _fr(nu)
    X = T(nu, 0, nu - nu * nu)
    w1 = Fr(1, 6)   # W_1 for d = 2
    out = [
        Check("0 < nu < 1/10", nu, "<", Fr(1, 10), 0 < nu < Fr(1, 10)),
        Check("str^0(X) < 0", str_index(X, 0, 2), "<", 0, str_index(X, 0, 2) < 0),
        Check("reg^0(X) < 1", reg(X, 0, 2), "<", 1, reg(X, 0, 2) < 1),
        Check("0 < X_1 < W_1", X.b, "<", w1, 0 < X.b < w1),
    ]
    return nu, out
