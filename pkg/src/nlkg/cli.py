"""Command-line entry point: nlkg <subcommand> [flags].

Exit codes: 0 success, 1 test-style failure (a report with failures),
2 usage or precondition error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import NLKGError
from .field_core import CriticalPower, Exponential2D, PowerSum, RadialField, RadialGrid

# ---------------------------------------------------------------------------
# small parsers


def parse_model(text: str, d: int | None = None):
    """power:q | powersum:q1,l1;q2,l2 | critical | exp:p,k0,g[,lam]."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "power":
            return PowerSum(((1.0, float(rest)),))
        if kind == "powersum":
            terms = []
            for part in rest.split(";"):
                q, l = (float(x) for x in part.split(","))
                terms.append((l, q))
            return PowerSum(tuple(terms))
        if kind == "critical":
            if d is None:
                raise ValueError("the critical model needs --dim")
            return CriticalPower(d)
        if kind == "exp":
            vals = [float(x) for x in rest.split(",")]
            p, k0, g = vals[:3]
            lam = vals[3] if len(vals) > 3 else 1.0
            return Exponential2D(lam, p, k0, g)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"bad model {text!r}: {exc}") from exc
    raise argparse.ArgumentTypeError(f"unknown model kind {kind!r}")


def rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from exc


def float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


class UsageError(Exception):
    pass


GROUNDSTATE_COLUMNS = ("alpha", "beta", "K", "KQ")
CLASSIFY_COLUMNS = ("alpha", "beta", "E", "m", "K", "label")
EQUIVALENCE_COLUMNS = ("index", "K10", "E", "EQ", "lower_slack", "upper_slack")


# ---------------------------------------------------------------------------
# shared helpers

def _out_dir(args) -> Path:
    d = args.out_dir or os.environ.get("NLKG_OUT_DIR") or "."
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _out_path(args, name):
    if name is None:
        return None
    p = Path(name)
    p = p if p.is_absolute() else _out_dir(args) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _ground(model, d, r_max=30.0, n=16384):
    """(Q on a radial grid, m, mass modification c)."""
    from .ground_state import compute_m
    res = compute_m(model, d, r_max=r_max, n=n)
    w = res.witness
    if hasattr(w, "Q"):
        return w.Q, res.m, res.c
    grid = RadialGrid(d, r_max, n)
    return w.sample(grid), res.m, res.c


def _initial_state(args, model):
    """StatePair from a snapshot file or a named family."""
    from .functionals import StatePair
    from .persist import LineSnapshot, load_snapshot
    spec = args.init
    if spec.startswith("scaled-groundstate:"):
        c = float(spec.split(":", 1)[1])
        Q, m, _ = _ground(model, args.dim, args.rmax, args.nr)
        return StatePair.at_rest(Q * c), m
    fields = load_snapshot(spec)
    if isinstance(fields, LineSnapshot):
        raise UsageError("line snapshots can only be resumed by evolve")
    if len(fields) == 1:
        fields = [fields[0], type(fields[0])(fields[0].grid, np.zeros_like(fields[0].values))]
    return StatePair(fields[0], fields[1]), None


def _threshold(args, model, known):
    if getattr(args, "m", None) is not None:
        return args.m
    if known is not None:
        return known
    return _ground(model, args.dim, args.rmax, args.nr)[1]


def _pairs(d, count):
    from .functionals import sample_pairs
    return sample_pairs(d, count)


# ---------------------------------------------------------------------------
# subcommands

def cmd_groundstate(args):
    from .ground_state import compute_m
    from .persist import save_snapshot, write_csv, write_json
    model = args.model
    res = compute_m(model, args.dim, r_max=args.rmax, n=args.nr)
    w = res.witness
    summary = {"model": model.describe(), "d": args.dim, "m": res.m, "c": res.c,
               "details": res.details}
    if hasattr(w, "Q"):
        Q = w.Q
        summary.update({"residual": w.residual, "residual_ok": w.residual_ok,
                        "k_table_ok": w.k_table_ok, "Q0": w.Q0})
        rows = [[sp.alpha, sp.beta, k, kq] for sp, k, kq in w.K_table]
    else:
        Q = w.sample(RadialGrid(args.dim, args.rmax, args.nr))
        rows = []
    if args.mass is not None and args.mass != res.c:
        from .ground_state import shoot
        g = shoot(model, args.dim, args.mass, r_max=args.rmax, n=args.nr)
        Q = g.Q
        summary.update({"c": args.mass, "m": g.m, "residual": g.residual})
        rows = [[sp.alpha, sp.beta, k, kq] for sp, k, kq in g.K_table]
    if args.out:
        save_snapshot(_out_path(args, args.out), Q)
    if args.report:
        p = _out_path(args, args.report)
        write_csv(p, GROUNDSTATE_COLUMNS, rows)
        write_json(p.with_suffix(".json"), summary)
    print(f"m = {summary['m']!r}  c = {summary['c']!r}")
    return 0


def cmd_evolve(args):
    from .evolution import EvolveConfig, EvolState, RadialLineGeometry, box_state, evolve, line_state
    from .field_core import BoxGrid
    from .persist import LineSnapshot, load_snapshot, save_snapshot, write_json
    model = args.model
    m = args.m
    if args.init.startswith("scaled-groundstate:") or not _is_line_snapshot(args.init):
        s, known = _initial_state(args, model)
        if m is None and known is not None:
            m = known
        d = s.d
        geometry = args.geometry or ("line" if d == 3 else "box")
        if geometry == "line":
            if not isinstance(s.u0, RadialField):
                raise UsageError("the line geometry needs radial data")
            st = line_state(s.u0, s.u1, args.L / 2, args.n)
        else:
            st = box_state(s.u0, s.u1, BoxGrid(d, args.L, args.n)) if isinstance(s.u0, RadialField) \
                else box_state(s.u0, s.u1)
    else:
        snap = load_snapshot(args.init)
        geom = RadialLineGeometry(snap.R, snap.n)
        comps = snap.components + [np.zeros(snap.n)] * (2 - len(snap.components))
        st = EvolState.from_fields(geom, comps[0], comps[1])
    cfg = EvolveConfig(T=args.T, dt=args.dt, checkpoints=args.checkpoints, m=m,
                       method=args.method)
    rec = evolve(st, model, cfg)
    if args.out_record:
        rec.to_csv(_out_path(args, args.out_record))
    fin = rec.final
    if args.out_final:
        from .field_core import BoxField
        if isinstance(fin.geom, RadialLineGeometry):
            save_snapshot(_out_path(args, args.out_final),
                          LineSnapshot(fin.geom.R, fin.geom.n, [fin.psi, fin.psidot]))
        else:
            g = fin.geom.grid
            save_snapshot(_out_path(args, args.out_final), BoxField(g, fin.psi), BoxField(g, fin.psidot))
    summary = {"outcome": rec.outcome, "stop_reason": rec.stop_reason, "t_end": fin.t,
               "reliable": rec.reliable, "energy_drift": rec.energy_drift(),
               "certificates": {k: {"fired": c.fired, **{kk: vv for kk, vv in c.data.items()
                                                        if kk != "profile"}}
                                for k, c in rec.certificates.items()}}
    if args.summary:
        write_json(_out_path(args, args.summary), summary)
    print(f"outcome = {rec.outcome}  t = {fin.t:.6g}  stop = {rec.stop_reason}")
    return 0


def _is_line_snapshot(path):
    try:
        with open(path, "rb") as fh:
            head = fh.read(13)
    except OSError:
        return False
    return head[:5] == b"NLKG1" and np.frombuffer(head[5:13], "<f8")[0] == 2


def cmd_classify(args):
    from .functionals import classify
    from .persist import write_csv
    model = args.model
    s, known = _initial_state(args, model)
    m = _threshold(args, model, known)
    rows = []
    labels = set()
    for sp in _pairs(s.d, args.pairs):
        v = classify(s, sp, model, m)
        rows.append([sp.alpha, sp.beta, v.E, v.m, v.K, v.label])
        labels.add(v.label)
    header = CLASSIFY_COLUMNS
    if args.out:
        write_csv(_out_path(args, args.out), header, rows)
    verdict = labels.pop() if len(labels) == 1 else "Mixed"
    print(",".join(header))
    for r in rows:
        print(",".join(repr(x) if isinstance(x, float) else str(x) for x in r))
    print(f"verdict = {verdict}")
    return 0 if verdict != "Mixed" else 1


def cmd_sweep(args):
    from .evolution import EvolveConfig
    from .harness import SweepSpec, random_bumps_below, run_dichotomy, scaled_groundstates
    from .persist import write_json
    model = args.model
    Q, m, _ = _ground(model, args.dim, args.rmax, args.nr)
    rng = np.random.default_rng(args.seed)
    data = scaled_groundstates(Q, args.cs)
    if args.bumps:
        data += random_bumps_below(Q.grid, model, m, args.bumps, rng, amp=args.bump_amp)
    if args.dim == 3 and (args.geometry or "line") == "line":
        geometry = {"kind": "line", "R": args.L / 2, "n": args.n}
    else:
        geometry = {"kind": "box", "L": args.L, "n": args.n}
    spec = SweepSpec(model, args.dim, m, data, pairs=_pairs(args.dim, args.pairs),
                     geometry=geometry, config=EvolveConfig(T=args.T, dt=args.dt),
                     run_evolution=not args.no_evolve)
    rep = run_dichotomy(spec)
    rep.to_csv(_out_path(args, args.out))
    write_json(_out_path(args, args.out).with_suffix(".json"), rep.summary())
    for r in rep.rows:
        print(f"{r.name:12s} E={r.E:.6g} {r.predicted:8s} -> {r.outcome}  agree={r.agree}")
    return 0 if rep.passed else 1


def cmd_audit(args):
    from .harness import (energy_equivalence_audit, k_gap_audit, random_bump,
                          sample_audit_fields)
    from .functionals import StatePair
    from .persist import write_json
    model = args.model
    Q, m, _ = _ground(model, args.dim, args.rmax, args.nr)
    rng = np.random.default_rng(args.seed)
    if args.kind == "kgap":
        pairs = [p for p in _pairs(args.dim, args.pairs + 2) if not p.amplitude_ray][:args.pairs]
        fields = sample_audit_fields(Q.grid, model, m, args.fields, rng, Q=Q)
        aud = k_gap_audit(model, m, fields, pairs)
        aud.to_csv(_out_path(args, args.out))
        summary = aud.summary()
        ok = aud.passed
    else:
        states = [StatePair.at_rest(Q * c) for c in np.linspace(0.0, 1.0, 11)]
        states += [StatePair(random_bump(Q.grid, rng, amp=0.5), random_bump(Q.grid, rng, amp=0.2))
                   for _ in range(args.fields)]
        aud = energy_equivalence_audit(states, model)
        from .persist import write_csv
        write_csv(_out_path(args, args.out), EQUIVALENCE_COLUMNS, aud.rows)
        summary = aud.summary()
        ok = aud.passed
    write_json(_out_path(args, args.out).with_suffix(".json"), summary)
    print(f"{args.kind}: passed={ok} min_margin={summary.get('min_margin', summary.get('min_slack'))!r}")
    return 0 if ok else 1


def cmd_appendix_a(args):
    from .harness import appendix_a_scan
    from .persist import write_json
    scan = appendix_a_scan(args.dim, args.alpha, args.beta, q=args.q,
                           m_reference=args.m, allow_vacuous=args.allow_vacuous)
    if args.out:
        scan.to_csv(_out_path(args, args.out))
        write_json(_out_path(args, args.out).with_suffix(".json"), scan.summary())
    s = scan.summary()
    print(f"case {s['case']}  q = {s['q']:g}  J_min = {s['J_min']:.6g}  "
          f"decreasing = {s['decreasing']}  on_constraint = {s['on_constraint']}  "
          f"m_unbounded = {s['m_unbounded']}")
    return 0


def cmd_exponents(args):
    from .exponents import verify_relations
    rep = verify_relations(args.dim, args.p1, args.p2)
    print(rep.table())
    if args.report:
        _out_path(args, args.report).write_text(rep.to_json() + "\n")
    return 0 if rep.passed else 1


def cmd_tm_ratio(args):
    from .errors import AmplitudeOverflow
    from .ground_state import tm_ratio
    from .persist import write_json
    model = args.model
    if not isinstance(model, Exponential2D):
        raise UsageError("tm-ratio needs an exp: model")
    A = args.A if args.A is not None else math.sqrt(4 * math.pi / model.kappa0) * (1 - 1e-6)
    capped = False
    try:
        est = tm_ratio(model, A, args.family_size)
    except AmplitudeOverflow as exc:
        est, capped = exc.estimate, True
    summary = {"A": A, "ratio": est.ratio, "family": est.family, "params": est.params,
               "capped": capped}
    if args.out:
        write_json(_out_path(args, args.out), summary)
    print(f"ratio = {est.ratio!r}  family = {est.family}  capped = {capped}")
    return 0


def cmd_landscape(args):
    from .functionals import ScalingPair, landscape
    model = args.model
    s, _ = _initial_state(args, model)
    if not isinstance(s.u0, RadialField):
        raise UsageError("landscapes are computed for radial profiles")
    sp = ScalingPair(args.alpha, args.beta, s.d)
    lam = np.linspace(args.lam_min, args.lam_max, args.count)
    ls = landscape(s.u0, sp, lam, model)
    if args.out:
        ls.to_csv(_out_path(args, args.out))
    for row in ls.rows():
        print(",".join(repr(float(x)) for x in row))
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(p):
    p.add_argument("--config", help="flat key=value file; flags take precedence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None)


def _add_grid(p):
    p.add_argument("--rmax", type=float, default=30.0)
    p.add_argument("--nr", type=int, default=16384, help="radial grid nodes")


def build_parser():
    ap = argparse.ArgumentParser(prog="nlkg", description="Nonlinear Klein-Gordon laboratory")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("groundstate", help="ground state and threshold m")
    _add_common(p)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--mass", type=float, default=None)
    p.add_argument("--rmax", type=float, default=30.0)
    p.add_argument("--n", dest="nr", type=int, default=16384)
    p.add_argument("--out", default=None, help="snapshot of Q")
    p.add_argument("--report", default=None, help="CSV of the K table (+ JSON summary)")
    p.set_defaults(func=cmd_groundstate)

    p = sub.add_parser("evolve", help="time integration with certificates")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--init", required=True)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--T", type=float, default=40.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--L", type=float, default=80.0)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--checkpoints", type=int, default=8)
    p.add_argument("--geometry", choices=("box", "line"), default=None)
    p.add_argument("--method", choices=("strang", "yoshida4"), default="yoshida4")
    p.add_argument("--m", type=float, default=None)
    p.add_argument("--out-record", default=None)
    p.add_argument("--out-final", default=None)
    p.add_argument("--summary", default=None, help="JSON summary path")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("classify", help="K+/K- labels under sampled scaling pairs")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--init", required=True)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--m", type=float, default=None)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep", help="dichotomy sweep: classify and evolve")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--cs", type=float_list, default=[0.5, 0.8, 0.95, 1.05, 1.2, 2.0])
    p.add_argument("--bumps", type=int, default=0)
    p.add_argument("--bump-amp", type=float, default=0.5)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--T", type=float, default=40.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--L", type=float, default=80.0)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--geometry", choices=("box", "line"), default=None)
    p.add_argument("--no-evolve", action="store_true")
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", help="uniform K bounds or free-energy equivalence")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--kind", choices=("kgap", "equivalence"), default="kgap")
    p.add_argument("--fields", type=int, default=500)
    p.add_argument("--pairs", type=int, default=10)
    p.add_argument("--out", default="audit.csv")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("appendix-a", help="J along the unboundedness family")
    _add_common(p)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--m", type=float, default=None, help="reference threshold")
    p.add_argument("--allow-vacuous", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_appendix_a)

    p = sub.add_parser("exponents", help="exact exponent relations")
    _add_common(p)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--p1", type=rational, required=True)
    p.add_argument("--p2", type=rational, required=True)
    p.add_argument("--report", default=None, help="JSON report path")
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("tm-ratio", help="Trudinger-Moser ratio estimate")
    _add_common(p)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--A", type=float, default=None)
    p.add_argument("--family-size", type=int, default=8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_tm_ratio)

    p = sub.add_parser("landscape", help="J, K, F along a scaling ray")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--init", required=True)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--lam-min", type=float, default=-1.0)
    p.add_argument("--lam-max", type=float, default=1.0)
    p.add_argument("--count", type=int, default=41)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_landscape)
    return ap


def read_config(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"config {path}: {exc}") from exc
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config {path}:{num}: expected key=value")
        k, v = (x.strip() for x in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(subparser, cfg: dict):
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for k, v in cfg.items():
        if k not in actions:
            raise UsageError(f"unknown config key {k!r} for this subcommand")
        a = actions[k]
        if a.nargs == 0:      # store_true
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            defaults[k] = a.type(v) if a.type else v
    for a in subparser._actions:
        if a.dest in defaults:
            a.required = False
    subparser.set_defaults(**defaults)


def _config_path(argv):
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def dispatch(argv) -> int:
    ap = build_parser()
    if not argv:
        ap.print_usage(sys.stderr)
        return 2
    subs = ap._subparsers._group_actions[0].choices
    try:
        cfg_path = _config_path(argv)
        if cfg_path and argv[0] in subs:
            # config values become defaults, so explicit flags still win
            _apply_config(subs[argv[0]], read_config(cfg_path))
        try:
            args = ap.parse_args(argv)
        except SystemExit as exc:
            return 0 if exc.code in (0, None) else 2
        if args.command is None:
            ap.print_usage(sys.stderr)
            return 2
        if hasattr(args, "model") and isinstance(args.model, str):
            args.model = parse_model(args.model, getattr(args, "dim", None))
        return args.func(args)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"nlkg: {exc}", file=sys.stderr)
        return 2
    except NLKGError as exc:
        print(f"nlkg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
