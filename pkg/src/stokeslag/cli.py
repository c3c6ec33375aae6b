"""
Command-line front end: ``check``, ``derive``, ``simulate`` and ``study``.

System files are JSON trees with sections ``meta``, ``domain``, ``J``, ``P``,
``S``, ``params``, ``bc``, ``sim`` (and optional ``gauge``); ``{"builtin":
"rod_nonlocal", "params": {...}}`` expands to a preset. Matrix entries are
integers, ``"p/q"`` strings or products such as ``"-T"``, ``"1/rhoA"``,
``"-1/20*T"`` over the names in ``params``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .polymat import (
    OneVarPolyMat,
    PolyMatError,
    TwoVarPolyMat,
    classify_adjointness,
    format_onevar,
    format_poly,
    format_twovar,
    frac_zeros,
    maximal_minor_gcd,
)
from .simulator import (
    BUILTIN_NAMES,
    DEFAULT_PARAMS,
    BoundaryCondition,
    InitialProfile,
    Signal,
    SimulatorError,
    SingularSystem,
    SystemDefinition,
    ValidationError,
    balance_audit,
    builtin_system,
    default_initial,
    discretize,
    initial_state,
    simulate,
    write_csv,
)
from .stokes_dirac import HamiltonianOperator, build_stokes_dirac
from .stokes_lagrange import ReciprocalOperator, boundary_operator, check_reciprocity

__all__ = [
    "EXIT_OK",
    "EXIT_PARSE",
    "EXIT_VALIDATION",
    "EXIT_NUMERICAL",
    "EXIT_AUDIT",
    "ParseError",
    "SimConfig",
    "SystemFile",
    "RawSystem",
    "parse_polynomial",
    "parse_matrix_text",
    "load_document",
    "parse_raw",
    "build_system",
    "parse_system",
    "system_to_tree",
    "print_system",
    "derive_report",
    "main",
    "main_entry",
]

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_AUDIT = 0, 1, 2, 3, 4


class ParseError(ValueError):
    pass


# ---------------------------------------------------------------- polynomials as text

_MONO = re.compile(r"^([A-Za-z]\w*)(?:\^(\d+))?$")
_RATIONAL = re.compile(r"^\d+(?:/\d+)?$")


def parse_polynomial(text: str, variables: Sequence[str] = ("s",)) -> Dict[Tuple[int, ...], Fraction]:
    """Parse ``"1 - 3/2*z^2 + z*e"`` into ``{exponents: coefficient}``."""
    body = text.replace(" ", "")
    if not body:
        raise ParseError("empty polynomial")
    if body[0] not in "+-":
        body = "+" + body
    terms = re.findall(r"[+-][^+-]+", body)
    if "".join(terms) != body:
        raise ParseError(f"cannot parse polynomial {text!r}")
    out: Dict[Tuple[int, ...], Fraction] = {}
    for term in terms:
        coef = Fraction(-1 if term[0] == "-" else 1)
        exps = [0] * len(variables)
        for factor in term[1:].split("*"):
            if _RATIONAL.match(factor):
                coef *= Fraction(factor)
                continue
            m = _MONO.match(factor)
            if not m or m.group(1) not in variables:
                raise ParseError(f"unknown factor {factor!r} in {text!r}")
            exps[variables.index(m.group(1))] += int(m.group(2) or 1)
        key = tuple(exps)
        out[key] = out.get(key, Fraction(0)) + coef
    return {k: v for k, v in out.items() if v != 0}


def _split_matrix(text: str) -> List[List[str]]:
    body = text.strip()
    if not (body.startswith("[[") and body.endswith("]]")):
        raise ParseError(f"matrix text must look like [[..], ..], got {text!r}")
    rows = re.split(r"\]\s*,\s*\[", body[2:-2])
    return [[e.strip() for e in row.split(",")] for row in rows]


def parse_matrix_text(text: str, variables: Sequence[str] = ("s",)):
    """Inverse of ``format_onevar`` (one variable) and ``format_twovar`` (two)."""
    cells = _split_matrix(text)
    if len({len(r) for r in cells}) != 1:
        raise ParseError("ragged matrix text")
    polys = [[parse_polynomial(e, variables) for e in row] for row in cells]
    rows, cols = len(polys), len(polys[0])
    if len(variables) == 1:
        deg = max([k[0] for row in polys for e in row for k in e] + [0])
        coeffs = [frac_zeros(rows, cols) for _ in range(deg + 1)]
        for i, row in enumerate(polys):
            for j, e in enumerate(row):
                for (k,), c in e.items():
                    coeffs[k][i, j] = c
        return OneVarPolyMat.from_coeffs(coeffs)
    blocks: Dict[Tuple[int, int], np.ndarray] = {}
    for i, row in enumerate(polys):
        for j, e in enumerate(row):
            for kl, c in e.items():
                blocks.setdefault(kl, frac_zeros(rows, cols))[i, j] = c
    return TwoVarPolyMat(rows, cols, blocks)


# ---------------------------------------------------------------- system files


@dataclass(frozen=True)
class SimConfig:
    N: int = 200
    dt: float = 2.5e-3
    t_end: float = 0.5
    scheme_order: int = 2
    initial: Tuple[InitialProfile, ...] = ()


@dataclass(frozen=True)
class RawSystem:
    """Parsed but unvalidated operator data."""

    name: str
    J: OneVarPolyMat
    P: OneVarPolyMat
    S: OneVarPolyMat
    domain: Tuple[float, float]
    params: Dict[str, float]
    bcs: Tuple[BoundaryCondition, ...]
    gauge: Optional[OneVarPolyMat]
    sim: SimConfig
    builtin: Optional[str] = None


@dataclass(frozen=True)
class SystemFile:
    system: SystemDefinition
    sim: SimConfig


def _entry(value, params: Mapping[str, Fraction], where: str) -> Fraction:
    if isinstance(value, bool) or isinstance(value, float):
        raise ParseError(f"{where}: entries must be integers or rational strings, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if not isinstance(value, str):
        raise ParseError(f"{where}: cannot read entry {value!r}")
    text = value.replace(" ", "")
    sign = Fraction(1)
    if text.startswith("-"):
        sign, text = Fraction(-1), text[1:]
    out = sign
    for factor in text.split("*"):
        if _RATIONAL.match(factor):
            out *= Fraction(factor)
        elif factor.startswith("1/") and factor[2:] in params:
            if params[factor[2:]] == 0:
                raise ValidationError(f"{where}: division by zero parameter {factor[2:]}")
            out /= params[factor[2:]]
        elif factor in params:
            out *= params[factor]
        else:
            raise ValidationError(f"{where}: undefined parameter or bad entry {factor!r}")
    return out


def _matrix_list(section, name: str, params, square: Optional[int] = None) -> List[np.ndarray]:
    if not isinstance(section, dict) or "coeffs" not in section:
        raise ParseError(f"section {name!r} needs a 'coeffs' list")
    coeffs = section["coeffs"]
    if not isinstance(coeffs, list):
        raise ParseError(f"{name}.coeffs must be a list of matrices")
    out = []
    shape = None
    for k, mat in enumerate(coeffs):
        where = f"{name}.coeffs[{k}]"
        if not isinstance(mat, list) or not all(isinstance(r, list) for r in mat):
            raise ParseError(f"{where} must be a list of rows")
        widths = {len(r) for r in mat}
        if len(widths) > 1:
            raise ParseError(f"{where} is ragged")
        cur = (len(mat), widths.pop() if mat else 0)
        if shape is not None and cur != shape:
            raise ParseError(f"{where} has shape {cur}, expected {shape}")
        shape = cur
        a = frac_zeros(*cur)
        for i, row in enumerate(mat):
            for j, v in enumerate(row):
                a[i, j] = _entry(v, params, f"{where}[{i}][{j}]")
        out.append(a)
    return out


def _poly(mats: List[np.ndarray], rows: int, cols: int) -> OneVarPolyMat:
    if not mats:
        return OneVarPolyMat.zeros(rows, cols)
    if mats[0].shape != (rows, cols):
        raise ValidationError(f"coefficient shape {mats[0].shape} does not match {(rows, cols)}")
    return OneVarPolyMat.from_coeffs(mats)


def _float(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ParseError(f"{where}: expected a number, got {x!r}")
    try:
        return float(Fraction(x)) if isinstance(x, str) else float(x)
    except ValueError:
        raise ParseError(f"{where}: expected a number, got {x!r}") from None


def _int(x, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ParseError(f"{where}: expected an integer, got {x!r}")
    return x


def _signal(tree, where: str) -> Signal:
    if tree is None:
        return Signal()
    if not isinstance(tree, dict):
        raise ParseError(f"{where}: signal must be an object")
    return Signal(
        kind=tree.get("kind", "zero"),
        amplitude=_float(tree.get("amplitude", 0.0), where),
        frequency=_float(tree.get("frequency", 1.0), where),
        phase=_float(tree.get("phase", 0.0), where),
    )


def _bcs(tree) -> Tuple[BoundaryCondition, ...]:
    if not isinstance(tree, list):
        raise ParseError("section 'bc' must be a list")
    out = []
    for i, item in enumerate(tree):
        where = f"bc[{i}]"
        if not isinstance(item, dict):
            raise ParseError(f"{where} must be an object")
        for key in ("end", "kind", "component"):
            if key not in item:
                raise ParseError(f"{where} lacks {key!r}")
        row = item.get("row")
        out.append(BoundaryCondition(
            end=item["end"], kind=item["kind"], component=_int(item["component"], where),
            signal=_signal(item.get("signal"), where + ".signal"),
            row=None if row is None else _int(row, where + ".row"),
        ))
    return tuple(out)


def _sim(tree) -> SimConfig:
    if tree is None:
        return SimConfig()
    if not isinstance(tree, dict):
        raise ParseError("section 'sim' must be an object")
    d = SimConfig()
    init = []
    for i, item in enumerate(tree.get("initial", [])):
        where = f"sim.initial[{i}]"
        if not isinstance(item, dict) or "component" not in item:
            raise ParseError(f"{where} must be an object with a component")
        init.append(InitialProfile(
            component=_int(item["component"], where),
            kind=item.get("kind", "zero"),
            amplitude=_float(item.get("amplitude", 1.0), where),
            center=_float(item.get("center", 0.5), where),
            width=_float(item.get("width", 0.1), where),
            mode=_int(item.get("mode", 1), where),
        ))
    return SimConfig(
        N=_int(tree.get("N", d.N), "sim.N"),
        dt=_float(tree.get("dt", d.dt), "sim.dt"),
        t_end=_float(tree.get("t_end", d.t_end), "sim.t_end"),
        scheme_order=_int(tree.get("scheme_order", d.scheme_order), "sim.scheme_order"),
        initial=tuple(init),
    )


def load_document(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(tree, dict):
        raise ParseError(f"{path}: top level must be an object")
    return tree


def _params(tree) -> Dict[str, float]:
    if tree is None:
        return {}
    if not isinstance(tree, dict):
        raise ParseError("section 'params' must be an object")
    return {str(k): _float(v, f"params.{k}") for k, v in tree.items()}


def parse_raw(tree: dict) -> RawSystem:
    """Syntax-level parse; builtin presets expand here, validation happens in build_system."""
    sim = _sim(tree.get("sim"))
    if "builtin" in tree:
        name = tree["builtin"]
        if name in BUILTIN_NAMES and not sim.initial:
            sim = SimConfig(sim.N, sim.dt, sim.t_end, sim.scheme_order, default_initial(name))
        params = _params(tree.get("params"))
        dom = tree.get("domain", {"a": 0, "b": 1})
        domain = (_float(dom.get("a", 0), "domain.a"), _float(dom.get("b", 1), "domain.b"))
        bcs = _bcs(tree["bc"]) if "bc" in tree else None
        sys_ = builtin_system(name, params, domain, bcs)
        return RawSystem(name, sys_.J.J, sys_.P, sys_.S, sys_.domain, dict(sys_.params),
                         sys_.bcs, sys_.gauge, sim, builtin=name)
    for key in ("J", "P", "S", "domain"):
        if key not in tree:
            raise ParseError(f"missing section {key!r}")
    params = _params(tree.get("params"))
    exact = {k: Fraction(str(v)) for k, v in params.items()}
    P = _matrix_list(tree["P"], "P", exact)
    S = _matrix_list(tree["S"], "S", exact)
    if not P:
        raise ParseError("P.coeffs must not be empty")
    n = P[0].shape[0]
    J = _matrix_list(tree["J"], "J", exact)
    gauge = None
    if "gauge" in tree:
        g = _matrix_list(tree["gauge"], "gauge", exact)
        gauge = _poly(g, g[0].shape[0], n) if g else None
    dom = tree["domain"]
    if not isinstance(dom, dict):
        raise ParseError("section 'domain' must be an object")
    meta = tree.get("meta", {})
    return RawSystem(
        name=str(meta.get("name", "system")) if isinstance(meta, dict) else "system",
        J=_poly(J, n, n), P=_poly(P, n, n), S=_poly(S, *(S[0].shape if S else (n, n))),
        domain=(_float(dom.get("a"), "domain.a"), _float(dom.get("b"), "domain.b")),
        params=params, bcs=_bcs(tree.get("bc", [])), gauge=gauge, sim=sim,
    )


def build_system(raw: RawSystem) -> SystemFile:
    return SystemFile(
        SystemDefinition(
            name=raw.name, J=HamiltonianOperator(raw.J), R=ReciprocalOperator(raw.P, raw.S),
            domain=raw.domain, params=raw.params, bcs=raw.bcs, gauge=raw.gauge,
        ),
        raw.sim,
    )


def parse_system(path: str) -> SystemFile:
    return build_system(parse_raw(load_document(path)))


def _coeff_tree(p: OneVarPolyMat) -> dict:
    return {"coeffs": [[[str(x) for x in row] for row in c] for c in p.coeffs]}


def _signal_tree(s: Signal) -> dict:
    return {"kind": s.kind, "amplitude": s.amplitude, "frequency": s.frequency, "phase": s.phase}


def system_to_tree(sf: SystemFile) -> dict:
    """Canonical explicit tree; parsing it yields an equal SystemFile."""
    s, sim = sf.system, sf.sim
    tree = {
        "meta": {"name": s.name},
        "domain": {"a": s.domain[0], "b": s.domain[1]},
        "J": _coeff_tree(s.J.J),
        "P": _coeff_tree(s.P),
        "S": _coeff_tree(s.S),
        "params": dict(s.params),
        "bc": [
            dict({"end": bc.end, "kind": bc.kind, "component": bc.component,
                  "signal": _signal_tree(bc.signal)}, **({} if bc.row is None else {"row": bc.row}))
            for bc in s.bcs
        ],
        "sim": {
            "N": sim.N, "dt": sim.dt, "t_end": sim.t_end, "scheme_order": sim.scheme_order,
            "initial": [
                {"component": p.component, "kind": p.kind, "amplitude": p.amplitude,
                 "center": p.center, "width": p.width, "mode": p.mode}
                for p in sim.initial
            ],
        },
    }
    if s.gauge is not None:
        tree["gauge"] = _coeff_tree(s.gauge)
    return tree


def print_system(sf: SystemFile) -> str:
    return json.dumps(system_to_tree(sf), indent=2)


# ---------------------------------------------------------------- reports


def _signature_text(sig) -> str:
    return "diag(" + ", ".join(str(int(x)) for x in sig.diagonal()) + ")" if sig.delta else "[]"


def derive_report(sf: SystemFile) -> dict:
    s = sf.system
    D = build_stokes_dirac(s.J)
    L = boundary_operator(s.R, s.gauge)
    rec = check_reciprocity(s.P, s.S)
    Q = s.S.T.reflect() @ s.P
    return {
        "adjointness": classify_adjointness(s.J.J),
        "reciprocity_residual": format_onevar(rec.residual),
        "maximal": maximal_minor_gcd(s.R.R) == (Fraction(1),),
        "T": format_onevar(D.T),
        "Sigma": _signature_text(D.sig),
        "scale": [str(x) for x in D.scale],
        "alpha": D.sig.alpha,
        "beta": D.sig.beta,
        "delta": D.delta,
        "Pb": format_onevar(L.Pb) if L.p else "[]",
        "Sb": format_onevar(L.Sb) if L.p else "[]",
        "p": L.p,
        "H": format_twovar(L.H),
        "H0": format_twovar(L.H0),
        "Q": format_onevar(Q),
    }


def _report_text(report: dict) -> str:
    labels = [
        ("adjointness", "J adjointness"), ("reciprocity_residual", "reciprocity residual"),
        ("maximal", "maximal"), ("T", "T(s)"), ("Sigma", "Sigma"), ("scale", "row scale"),
        ("alpha", "alpha"), ("beta", "beta"), ("delta", "delta"), ("Pb", "Pb(s)"),
        ("Sb", "Sb(s)"), ("p", "p"), ("H", "H(z,e)"), ("H0", "H0(z,e)"), ("Q", "Q(s)"),
    ]
    return "\n".join(f"{label:22s}{report[key]}" for key, label in labels)


# ---------------------------------------------------------------- commands


def _load(args) -> RawSystem:
    if args.system and args.builtin:
        raise ParseError("give either --system or --builtin, not both")
    if args.builtin:
        tree = {"builtin": args.builtin, "params": _param_flag(args.param)}
        return parse_raw(tree)
    if not args.system:
        raise ParseError("one of --system or --builtin is required")
    tree = load_document(args.system)
    if args.param and "builtin" in tree:
        tree = dict(tree, params=dict(tree.get("params", {}), **_param_flag(args.param)))
    return parse_raw(tree)


def _param_flag(text: Optional[str]) -> Dict[str, float]:
    out = {}
    for item in (text or "").split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise ParseError(f"--param items look like name=value, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = _float(val.strip(), f"--param {key}")
    return out


def _sim_overrides(raw: RawSystem, args) -> SimConfig:
    sim = raw.sim
    init = sim.initial or (InitialProfile(0, "gaussian", amplitude=0.1),)
    return SimConfig(
        N=args.N if args.N is not None else sim.N,
        dt=args.dt if args.dt is not None else sim.dt,
        t_end=args.t_end if args.t_end is not None else sim.t_end,
        scheme_order=args.order if args.order is not None else sim.scheme_order,
        initial=init,
    )


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def cmd_check(raw: RawSystem, args, out) -> int:
    ok = True

    def verdict(name, passed, detail=""):
        nonlocal ok
        ok = ok and passed
        print(f"{name:20s}{'pass' if passed else 'FAIL'}{('  ' + detail) if detail else ''}", file=out)

    kind = classify_adjointness(raw.J) if raw.J.rows == raw.J.cols else "not square"
    verdict("skew-adjointness", kind == "skew_adjoint" or raw.J.is_zero(), kind)
    if raw.P.shape == raw.S.shape and raw.P.rows == raw.P.cols:
        rec = check_reciprocity(raw.P, raw.S)
        verdict("reciprocity", rec.ok, "" if rec.ok else f"residual {format_onevar(rec.residual)}")
        gcd = maximal_minor_gcd(OneVarPolyMat.vstack(raw.P, raw.S))
        verdict("maximality", gcd == (Fraction(1),), "" if gcd == (Fraction(1),) else f"minor gcd {format_poly(gcd)}")
    else:
        verdict("reciprocity", False, f"P {raw.P.shape} and S {raw.S.shape} must be equal square shapes")
    if ok:
        try:
            sf = build_system(raw)
            sf.system.lagrange()
            sf.system.dirac()
            verdict("boundary structure", True)
        except (PolyMatError, SimulatorError) as exc:
            verdict("boundary structure", False, str(exc))
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_derive(raw: RawSystem, args, out) -> int:
    report = derive_report(build_system(raw))
    text = json.dumps(report, indent=2) if args.format == "tree" else _report_text(report)
    if args.out:
        ext = "json" if args.format == "tree" else "txt"
        _atomic_write(os.path.join(args.out, f"{raw.name}_derive.{ext}"), text + "\n")
    print(text, file=out)
    return EXIT_OK


def _run_sim(sf: SystemFile, sim: SimConfig):
    D = discretize(sf.system, sim.N, sim.scheme_order)
    xi0 = initial_state(D, sim.initial)
    traj = simulate(D, xi0, sim.dt, sim.t_end)
    return D, balance_audit(D, traj)


def cmd_simulate(raw: RawSystem, args, out) -> int:
    sf = build_system(raw)
    sim = _sim_overrides(raw, args)
    D, rep = _run_sim(sf, sim)
    text = write_csv(rep, D.dirac.delta, D.lagrange.p)
    if args.out:
        _atomic_write(os.path.join(args.out, f"{raw.name}.csv"), text)
    else:
        out.write(text)
    print(f"max_rel_residual={rep.max_rel:.6e}", file=out)
    if not math.isfinite(rep.max_rel):
        return EXIT_NUMERICAL
    if args.tol is not None and rep.max_rel > args.tol:
        print(f"audit failed: max_rel_residual {rep.max_rel:.3e} > tol {args.tol:.3e}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def _order(a: float, b: float) -> float:
    return math.log2(a / b) if a > 0 and b > 0 else float("nan")


def cmd_study(raw: RawSystem, args, out) -> int:
    sf = build_system(raw)
    base = _sim_overrides(raw, args)
    Ns = [base.N, 2 * base.N, 4 * base.N]
    dts = [base.dt, base.dt / 2, base.dt / 4]
    table = {}
    for N in Ns:
        for dt in dts:
            sim = SimConfig(N, dt, base.t_end, base.scheme_order, base.initial)
            _, rep = _run_sim(sf, sim)
            table[(N, dt)] = rep
            print(f"N={N:6d} dt={dt:.6e} max_abs_residual={rep.max_abs:.6e} "
                  f"max_abs_residual_H0={rep.max_abs_H0:.6e}", file=out)
    diag = [table[(N, dt)].max_abs for N, dt in zip(Ns, dts)]
    print("joint refinement orders: "
          + " ".join(f"{_order(a, b):.3f}" for a, b in zip(diag, diag[1:])), file=out)
    space = [table[(N, dts[-1])].max_abs for N in Ns]
    print("space orders (finest dt): "
          + " ".join(f"{_order(a, b):.3f}" for a, b in zip(space, space[1:])), file=out)
    time_ = [table[(Ns[-1], dt)].max_abs for dt in dts]
    print("time orders (finest N): "
          + " ".join(f"{_order(a, b):.3f}" for a, b in zip(time_, time_[1:])), file=out)
    worst = max(r.max_rel for r in table.values())
    if args.tol is not None and worst > args.tol:
        return EXIT_AUDIT
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stokeslag", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("check", "derive", "simulate", "study"):
        sp_ = sub.add_parser(name)
        sp_.add_argument("--system", help="system file (JSON)")
        sp_.add_argument("--builtin", choices=BUILTIN_NAMES)
        sp_.add_argument("--param", help="k=...,T=...,rhoA=...,mu=...")
        sp_.add_argument("--N", type=int)
        sp_.add_argument("--dt", type=float)
        sp_.add_argument("--t-end", dest="t_end", type=float)
        sp_.add_argument("--order", type=int, choices=(2, 4))
        sp_.add_argument("--out")
        sp_.add_argument("--tol", type=float)
        sp_.add_argument("--format", choices=("text", "tree"), default="text")
    return p


COMMANDS = {"check": cmd_check, "derive": cmd_derive, "simulate": cmd_simulate, "study": cmd_study}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        raw = _load(args)
        return COMMANDS[args.command](raw, args, out)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SingularSystem as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PolyMatError, ValidationError, TypeError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
