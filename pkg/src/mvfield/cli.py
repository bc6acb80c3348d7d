"""Command-line entry point: ``mvfield <command> <problem.prob> [flags]``.

Exit codes: 0 clean positive verdict, 1 clean negative verdict, 2
inconclusive or only numerically supported, 64 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import sympy

from . import symcore
from .dsl import ProblemError, ProblemFile, load_problem
from .geometry import (
    GeometryError,
    NodeVerdict,
    integrability_algorithm,
    normalize_factors,
    transversality_check,
)
from .jet import (
    ConnectionE,
    JetFieldJ1,
    Section,
    curvature_E,
    curvature_J1,
    integral_section_residual,
    jetfield_to_mvf,
    mvf_to_jetfield,
    second_order_residual,
    sopde_check,
)
from .lagrangian import (
    Lagrangian,
    LagrangianError,
    Regularity,
    SingularVerdict,
    el_integrability_conditions,
    el_residual_on_section,
    el_system,
    regularity,
    singular_algorithm,
    solve_regular,
)
from .noether import (
    SymmetryCandidate,
    conserved_current,
    current_closed_on_section,
    preserves_contact_module,
    symmetry_defect,
)
from .numeric import FlowConfig, FlowError, NumericError, grid_axes, integrate_m_flow, numeric_residual, sample_section
from .symcore import SimplifyConfig

SCHEMA_VERSION = 1
COMMANDS = ("check-integrability", "curvature", "sopde-check", "euler-lagrange", "singular", "noether", "integrate", "residual")

OK, NEGATIVE, INCONCLUSIVE, INPUT_ERROR = 0, 1, 2, 64


@dataclass
class Report:
    command: str
    problem: str
    result: dict
    numeric: bool = False
    assumptions: list[str] = field(default_factory=list)
    exit_code: int = OK

    @property
    def confidence(self) -> str:
        return "numeric" if self.numeric else "proven"

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "problem": self.problem,
            "result": self.result,
            "confidence": self.confidence,
            "assumptions": list(self.assumptions),
            "exit_code": self.exit_code,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        lines = [f"{self.command} {self.problem}", f"confidence: {self.confidence}", f"exit code: {self.exit_code}"]
        for a in self.assumptions:
            lines.append(f"assumes: {a}")
        _text(self.result, lines, 0)
        return "\n".join(lines)


def _text(obj, lines, indent):
    pad = "  " * indent
    if isinstance(obj, dict):
        for k in sorted(obj):
            v = obj[k]
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{pad}{k}:")
                _text(v, lines, indent + 1)
            else:
                lines.append(f"{pad}{k}: {v}")
    elif isinstance(obj, list):
        for v in obj:
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{pad}-")
                _text(v, lines, indent + 1)
            else:
                lines.append(f"{pad}- {v}")
    else:
        lines.append(f"{pad}{obj}")


def _confidence_exit(positive: bool, numeric: bool) -> int:
    if numeric:
        return INCONCLUSIVE
    return OK if positive else NEGATIVE


def _zero(e, cfg) -> tuple[bool, bool]:
    v = symcore.is_zero(e, cfg)
    return v.zero, v.numeric


def _all_zero(exprs, cfg) -> tuple[bool, bool]:
    zero, numeric = True, False
    for e in exprs:
        z, n = _zero(e, cfg)
        zero &= z
        numeric |= n
    return zero, numeric


# --------------------------------------------------------------------------
# Commands


_INTEGRABLE = (NodeVerdict.INTEGRABLE_EVERYWHERE, NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD)


def cmd_check_integrability(prob: ProblemFile, opts) -> Report:
    prob.require("multivector")
    Y = prob.mvf()
    tr = transversality_check(Y, opts.cfg)
    if not tr:
        raise ProblemError("multivector field is not transverse to the base", prob.path)
    if not Y.is_normalized():
        Y = normalize_factors(Y, opts.cfg)
    tree = integrability_algorithm(Y, opts.cfg, depth=opts.depth)
    numeric = tree.confidence == "numeric"
    code = {
        NodeVerdict.INTEGRABLE_EVERYWHERE: OK,
        NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD: NEGATIVE,
        NodeVerdict.NO_SOLUTION: NEGATIVE,
        NodeVerdict.INCONCLUSIVE: INCONCLUSIVE,
    }[tree.verdict]
    if numeric:
        code = INCONCLUSIVE
    result = tree.to_dict()
    result.pop("assumptions")
    result.pop("confidence")
    result["branches"] = [
        {"id": leaf.id, "verdict": leaf.verdict.value,
         "constraints": [symcore.to_string(c) for c in leaf.constraints.exprs],
         "exit_code": OK if leaf.verdict in _INTEGRABLE else NEGATIVE}
        for leaf in tree.leaves()
    ]
    return Report("check-integrability", prob.path, result, numeric, list(tree.assumptions), code)


def _jetfield(prob: ProblemFile, opts):
    if prob.connection is not None:
        if prob.connection["kind"] == "connection":
            return ConnectionE(prob.chart, prob.connection["Gamma"])
        return JetFieldJ1(prob.chart, prob.connection["F"], prob.connection["G"])
    if prob.multivector:
        return mvf_to_jetfield(prob.mvf(), opts.cfg)
    raise ProblemError("this command needs a connection block or a multivector block on a jet chart", prob.path)


def cmd_curvature(prob: ProblemFile, opts) -> Report:
    field_ = _jetfield(prob, opts)
    if isinstance(field_, ConnectionE):
        R = curvature_E(field_)
        entries = list(sympy.flatten(R.tolist()))
        result = {"kind": "connection", "R": _nested(R)}
    else:
        K = curvature_J1(field_)
        entries = [v for _, v in K.entries()]
        result = {"kind": "jetfield", **K.to_dict()}
    zero, numeric = _all_zero(entries, opts.cfg)
    result["flat"] = zero
    return Report("curvature", prob.path, result, numeric, [], _confidence_exit(zero, numeric))


def _nested(arr):
    if arr.rank() == 1:
        return [symcore.to_string(e) for e in arr]
    return [_nested(arr[i]) for i in range(arr.shape[0])]


def cmd_sopde_check(prob: ProblemFile, opts) -> Report:
    if prob.connection is not None and prob.connection["kind"] == "jetfield":
        Y = jetfield_to_mvf(_jetfield(prob, opts))
    else:
        prob.require("multivector")
        Y = prob.mvf()
    rep = sopde_check(Y, opts.cfg)
    return Report("sopde-check", prob.path, rep.to_dict(), rep.numeric, [], _confidence_exit(rep.via_F and rep.via_theta, rep.numeric))


def _lagrangian(prob: ProblemFile) -> Lagrangian:
    prob.require("lagrangian")
    return Lagrangian(prob.chart, prob.lagrangian)


def cmd_euler_lagrange(prob: ProblemFile, opts) -> Report:
    L = _lagrangian(prob)
    reg = regularity(L, opts.cfg)
    sys_ = el_system(L)
    result = {"regularity": reg.to_dict(), "system": sys_.to_dict()}
    numeric = reg.numeric
    assumptions = []
    if reg.verdict == Regularity.SINGULAR:
        result["note"] = "singular Lagrangian: run the singular command"
        return Report("euler-lagrange", prob.path, result, numeric, assumptions, _confidence_exit(False, numeric))
    if reg.verdict == Regularity.POINTWISE:
        assumptions.append(f"Hessian determinant {symcore.to_string(reg.det)} assumed nonzero on the working region")
    fam = solve_regular(sys_, reg, pivot=opts.pivot, cfg=opts.cfg)
    result["family"] = fam.to_dict()
    positive = True
    if prob.assignment is not None:
        report = el_integrability_conditions(L, fam, prob.assignment, opts.cfg)
        result["integrability"] = report.to_dict()
        numeric |= report.numeric
        positive = report.all_zero
    return Report("euler-lagrange", prob.path, result, numeric, assumptions, _confidence_exit(positive, numeric))


def cmd_singular(prob: ProblemFile, opts) -> Report:
    L = _lagrangian(prob)
    state = singular_algorithm(L, depth=opts.depth, mode=opts.mode, cfg=opts.cfg)
    result = state.to_dict()
    assumptions = result.pop("assumptions")
    result.pop("confidence")
    code = {
        SingularVerdict.FINAL_SUBMANIFOLD: OK,
        SingularVerdict.NO_SOLUTION: NEGATIVE,
        SingularVerdict.INCONCLUSIVE: INCONCLUSIVE,
    }[state.verdict]
    if state.numeric:
        code = INCONCLUSIVE
    return Report("singular", prob.path, result, state.numeric, assumptions, code)


def cmd_noether(prob: ProblemFile, opts) -> Report:
    L = _lagrangian(prob)
    prob.require("symmetry")
    cand = SymmetryCandidate(prob.symmetry["X"], prob.symmetry["xi"])
    defect = symmetry_defect(L, cand)
    contact = preserves_contact_module(cand.X, opts.cfg)
    is_sym, numeric = _all_zero(defect.coeffs.values(), opts.cfg)
    result = {
        "defect": defect.to_dict(),
        "symmetry": is_sym,
        "preserves_contact_module": contact.preserved,
        "current": conserved_current(L, cand, force=True).to_dict()["current"],
    }
    if prob.section is not None:
        phi = Section(L.chart, prob.section)
        closed = current_closed_on_section(L, cand, phi)
        el = el_residual_on_section(L, phi)
        result["closedness_residual"] = symcore.to_string(closed)
        result["el_residual"] = [symcore.to_string(e) for e in el]
    positive = is_sym and contact.preserved
    return Report("noether", prob.path, result, numeric, [], _confidence_exit(positive, numeric))


def _flow_config(prob: ProblemFile) -> FlowConfig:
    keys = ("h", "order", "commutation_tolerance", "residual_tolerance", "constraint_tolerance")
    try:
        return FlowConfig(**{k: prob.numeric[k] for k in keys if k in prob.numeric})
    except (TypeError, ValueError) as exc:
        raise ProblemError(f"numeric block: {exc}", prob.path) from None


def _axes(prob: ProblemFile):
    m = prob.chart.m
    box = prob.numeric.get("box", [[0, 1]] * m)
    points = prob.numeric.get("points", 11)
    if len(box) != m:
        raise ProblemError(f"numeric box needs {m} intervals", prob.path)
    return grid_axes(box, points)


def cmd_integrate(prob: ProblemFile, opts) -> Report:
    prob.require("multivector", "numeric")
    if "p0" not in prob.numeric:
        raise ProblemError("numeric block needs p0", prob.path)
    Y = prob.mvf()
    if not Y.is_normalized():
        Y = normalize_factors(Y, opts.cfg)
    cfg = _flow_config(prob)
    tree = integrability_algorithm(Y, opts.cfg, depth=opts.depth)
    p0 = dict(zip(prob.chart.coords, prob.numeric["p0"]))
    if len(p0) != len(prob.chart.coords):
        raise ProblemError(f"p0 needs {len(prob.chart.coords)} coordinates", prob.path)
    constraints = None
    branch = None
    if tree.verdict != NodeVerdict.INTEGRABLE_EVERYWHERE:
        for leaf in tree.leaves():
            if leaf.verdict != NodeVerdict.INTEGRABLE_ON_SUBMANIFOLD:
                continue
            vals = [abs(float(symcore.evaluate(c, p0))) for c in leaf.constraints.exprs]
            if all(v <= cfg.constraint_tolerance for v in vals):
                constraints, branch = leaf.constraints.exprs, leaf.id
                break
        if branch is None:
            result = {"error": "initial point lies on no integrable branch", "verdict": tree.verdict.value}
            return Report("integrate", prob.path, result, False, [], NEGATIVE)
    sec = integrate_m_flow(Y, p0, _axes(prob), cfg, constraints)
    result = {
        "branch": branch or "root",
        "grid": list(sec.shape),
        "h": cfg.h,
        "order": cfg.order,
        "final": {q: format(float(sec.values[q].flat[-1]), ".17g") for q in prob.chart.coords if q not in prob.chart.base},
    }
    if prob.section is not None:
        exact = dict(zip(prob.chart.fiber, prob.section))
        err = sec.max_error(exact)
        result["max_error"] = err
    csv_path = opts.csv or prob.numeric.get("csv")
    if csv_path:
        sec.to_csv(csv_path)
        result["csv"] = str(csv_path)
    return Report("integrate", prob.path, result, True, [], INCONCLUSIVE)


def cmd_residual(prob: ProblemFile, opts) -> Report:
    prob.require("section")
    if prob.lagrangian is not None:
        target = _lagrangian(prob)
        phi = Section(prob.chart, prob.section)
        symbolic = el_residual_on_section(target, phi)
    else:
        target = _jetfield(prob, opts)
        phi = Section(prob.chart, prob.section)
        if isinstance(target, ConnectionE):
            r = integral_section_residual(target, phi, opts.cfg)
            symbolic = [e for row in r.first for e in row]
        else:
            symbolic = [e for a in second_order_residual(target, phi) for row in a for e in row]
    zero, numeric = _all_zero(symbolic, opts.cfg)
    result = {"symbolic": [symcore.to_string(e) for e in symbolic], "critical": zero}
    if "numeric" in prob.blocks:
        cfg = _flow_config(prob)
        sec = sample_section(prob.chart, prob.section, _axes(prob))
        value = numeric_residual(target, sec, cfg)
        result["numeric_max_residual"] = value
        result["numeric_within_tolerance"] = value <= cfg.residual_tolerance
    return Report("residual", prob.path, result, numeric, [], _confidence_exit(zero, numeric))


HANDLERS = {
    "check-integrability": cmd_check_integrability,
    "curvature": cmd_curvature,
    "sopde-check": cmd_sopde_check,
    "euler-lagrange": cmd_euler_lagrange,
    "singular": cmd_singular,
    "noether": cmd_noether,
    "integrate": cmd_integrate,
    "residual": cmd_residual,
}


# --------------------------------------------------------------------------
# Driver


@dataclass
class Options:
    cfg: SimplifyConfig
    depth: int = 10
    pivot: str = "diag"
    mode: str = "sopde"
    csv: str | None = None


def run(command: str, path: str, opts: Options) -> Report:
    """Run one command on one problem file; input errors become exit 64 reports."""
    if command not in HANDLERS:
        return Report(command, path, {"error": f"unknown command {command!r}"}, exit_code=INPUT_ERROR)
    try:
        prob = load_problem(path)
        return HANDLERS[command](prob, opts)
    except (ProblemError, symcore.ExprError, LagrangianError) as exc:
        return Report(command, path, {"error": str(exc)}, exit_code=INPUT_ERROR)
    except FlowError as exc:
        return Report(command, path, {"error": str(exc)}, exit_code=NEGATIVE)
    except (GeometryError, NumericError, ValueError) as exc:
        return Report(command, path, {"error": str(exc)}, exit_code=INPUT_ERROR)


def _run_packed(args):
    command, path, opts = args
    return run(command, path, opts)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(INPUT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mvfield", description="Integrability and field equations for multivector fields on jet bundles.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("problems", nargs="+", metavar="problem.prob")
    p.add_argument("--output", choices=("json", "text"), default="json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--pivot", choices=("diag", "last-diag", "auto"), default="diag")
    p.add_argument("--mode", choices=("sopde", "two-step"), default="sopde",
                   help="singular command: impose F = v first, or run the constraint algorithm first")
    p.add_argument("--tolerance", type=float, default=1e-10, help="numeric zero-test tolerance")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--csv", default=None, help="integrate: write the grid section to this CSV file")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = SimplifyConfig(tolerance=args.tolerance, seed=args.seed)
    except ValueError as exc:
        print(f"mvfield: error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    if args.depth < 1 or args.jobs < 1:
        print("mvfield: error: --depth and --jobs must be positive", file=sys.stderr)
        return INPUT_ERROR
    opts = Options(cfg, args.depth, args.pivot, args.mode, args.csv)
    work = [(args.command, path, opts) for path in args.problems]
    if args.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_run_packed, work))
    else:
        reports = [_run_packed(w) for w in work]
    for rep in reports:
        print(rep.to_json() if args.output == "json" else rep.to_text())
    return max(r.exit_code for r in reports)


if __name__ == "__main__":
    sys.exit(main())
