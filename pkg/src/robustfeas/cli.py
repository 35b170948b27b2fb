"""Command line front end and the instance / report file formats.

Instance files are JSON::

    {"schema": "robustfeas-instance", "version": 1, "name": "n3",
     "nodes": [{"id": 1, "demand": -10, "psqr": [0, 200]}, ...],
     "arcs":  [{"tail": 1, "head": 2, "phi": [1, 2]}, ...],
     "uncertainty": {"U4": {"u_scale": 4}, "tight": {"phi": [[1, 1.5], ...]}}}

``uncertainty`` is optional; each entry overrides the arc intervals either
by ``u_scale`` (every arc becomes ``[1, c]``) or by an explicit list.

Exit codes: 0 robust feasible, 1 robust infeasible, 2 undecided,
3 unreadable input, 4 unsupported topology, 5 solver unavailable.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .conic import SolverUnavailableError
from .decider import (
    DEFAULT_LEVELS,
    EPS_CERT,
    EPS_POS,
    MAX_PSD_SIDE,
    DecideConfig,
    GridBudgetError,
    MultiCycleError,
    SubproblemReport,
    Verdict,
    VerdictKind,
    decide_robust,
    oracle_grid,
    sweep_u_scale,
    sweep_values,
    tree_pressure_interval,
)
from .gasnet import Arc, Network, NetworkError, Node, TopologyError

SCHEMA = "robustfeas-instance"
REPORT_SCHEMA = "robustfeas-report"
SCHEMA_VERSION = 1

EXIT_FEASIBLE, EXIT_INFEASIBLE, EXIT_UNDECIDED = 0, 1, 2
EXIT_PARSE, EXIT_TOPOLOGY, EXIT_SOLVER = 3, 4, 5
_EXIT = {VerdictKind.FEASIBLE: EXIT_FEASIBLE, VerdictKind.INFEASIBLE: EXIT_INFEASIBLE,
         VerdictKind.UNDECIDED: EXIT_UNDECIDED}


class InstanceError(ValueError):
    """Malformed instance document."""


# ---------------------------------------------------------------------------
# instance files
# ---------------------------------------------------------------------------

@dataclass
class InstanceFile:
    network: Network
    uncertainty: dict = field(default_factory=dict)

    def network_for(self, name: Optional[str] = None, u_scale: Optional[float] = None) -> Network:
        net = self.network
        if name is not None:
            if name not in self.uncertainty:
                raise InstanceError(f"no uncertainty named {name!r}")
            spec = self.uncertainty[name]
            if "u_scale" in spec:
                net = net.with_u_scale(float(spec["u_scale"]))
            else:
                lo, hi = zip(*spec["phi"])
                net = net.with_phi_box(lo, hi)
        if u_scale is not None:
            net = net.with_u_scale(u_scale)
        return net.validate()


def _pair(x, what):
    if not (isinstance(x, (list, tuple)) and len(x) == 2):
        raise InstanceError(f"{what} must be a [lo, hi] pair")
    return float(x[0]), float(x[1])


def parse_instance(doc: dict) -> InstanceFile:
    if not isinstance(doc, dict):
        raise InstanceError("instance must be a JSON object")
    if doc.get("schema") != SCHEMA:
        raise InstanceError(f"schema must be {SCHEMA!r}")
    if doc.get("version") != SCHEMA_VERSION:
        raise InstanceError(f"unsupported schema version {doc.get('version')!r}")
    try:
        nodes = tuple(Node(int(v["id"]), float(v["demand"]), *_pair(v["psqr"], f"node {v['id']} psqr"))
                      for v in doc["nodes"])
        arcs = tuple(Arc(int(a["tail"]), int(a["head"]), *_pair(a["phi"], "arc phi"))
                     for a in doc["arcs"])
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"missing or malformed field: {exc}") from None
    unc = doc.get("uncertainty", {}) or {}
    for name, spec in unc.items():
        if "u_scale" not in spec and not (isinstance(spec.get("phi"), list) and len(spec["phi"]) == len(arcs)):
            raise InstanceError(f"uncertainty {name!r} needs u_scale or one phi pair per arc")
    try:
        net = Network(nodes, arcs, name=str(doc.get("name", ""))).validate()
    except NetworkError as exc:
        raise InstanceError(str(exc)) from None
    return InstanceFile(net, dict(unc))


def dump_instance(inst: InstanceFile) -> dict:
    net = inst.network
    doc = {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "name": net.name,
        "nodes": [{"id": v.id, "demand": v.demand, "psqr": [v.psqr_lo, v.psqr_hi]} for v in net.nodes],
        "arcs": [{"tail": a.tail, "head": a.head, "phi": [a.phi_lo, a.phi_hi]} for a in net.arcs],
    }
    if inst.uncertainty:
        doc["uncertainty"] = inst.uncertainty
    return doc


def fixture_names() -> List[str]:
    root = resources.files("robustfeas") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_instance(path_or_name: str) -> InstanceFile:
    """Load a file path, or a bundled fixture by name (``n2`` ... ``n7``)."""
    p = Path(path_or_name)
    try:
        if p.exists():
            text = p.read_text()
        else:
            name = p.name[:-5] if p.name.endswith(".json") else p.name
            res = resources.files("robustfeas") / "fixtures" / f"{name}.json"
            if not res.is_file():
                raise InstanceError(f"no such file or fixture: {path_or_name}")
            text = res.read_text()
        return parse_instance(json.loads(text))
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise InstanceError(str(exc)) from None


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _unnum(x):
    return float(x) if isinstance(x, str) else x


@dataclass
class ReportFile:
    verdict: str
    level: Optional[int]
    rows: List[SubproblemReport]
    config: dict
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        rows = sorted(self.rows, key=lambda r: (r.key, r.method))
        return {
            "schema": REPORT_SCHEMA,
            "version": SCHEMA_VERSION,
            "verdict": self.verdict,
            "level": self.level,
            "config": self.config,
            "evidence": self.evidence,
            "rows": [{**asdict(r), "objective": _num(r.objective), "time": _num(r.time)} for r in rows],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ReportFile":
        if doc.get("schema") != REPORT_SCHEMA:
            raise InstanceError("not a report file")
        rows = [SubproblemReport(**{**r, "objective": _unnum(r["objective"]), "time": _unnum(r["time"])})
                for r in doc["rows"]]
        return cls(doc["verdict"], doc["level"], rows, doc["config"], doc.get("evidence", {}))


def _vec(x):
    return [float(v) for v in np.asarray(x).ravel()]


def summarize_evidence(v: Verdict) -> dict:
    ev = v.evidence
    out = {"method": ev.get("method")}
    if ev.get("witness") is not None:
        out["witness"] = _vec(ev["witness"])
    if "row" in ev:
        out["row"] = list(ev["row"])
    if "certificate" in ev:
        rep = ev["verification"]
        cert = ev["certificate"]
        out.update(cell=ev["cell"], integral=rep.integral, error_bound=rep.error_bound,
                   min_eigenvalue=rep.min_eigenvalue, residual=rep.residual,
                   p_terms=[[list(a), c] for a, c in cert.p_in_mask().items()])
    if "confirmed" in ev:
        out["confirmed"] = [[c, i, lvl, b] for (c, i), (lvl, b) in ev["confirmed"].items()]
        out["open"] = [list(k) for k in ev.get("open", [])]
    if v.reasons:
        out["reasons"] = {str(k): list(r) for k, r in sorted(v.reasons.items())}
    return out


def make_report(v: Verdict, config: dict, timings: bool = False) -> ReportFile:
    rows = v.sorted_reports()
    if not timings:
        rows = [SubproblemReport(r.cell, r.constraint, r.level, r.objective, r.status, 0.0, r.method, r.note)
                for r in rows]
    return ReportFile(v.kind.value, v.level, rows, config, summarize_evidence(v))


# ---------------------------------------------------------------------------
# human-readable tables
# ---------------------------------------------------------------------------

def _cell_text(r: Optional[SubproblemReport], eps: float) -> str:
    if r is None:
        return ""
    if r.status == "TooLarge":
        return "too large"
    if r.status == "Skipped":
        return "skipped"
    if r.objective is None:
        return "fail"
    if r.method == "infeas" and abs(r.objective) <= eps and r.status == "Optimal":
        return "zero obj."
    text = f"{r.objective:.2f}"
    return text if r.status == "Optimal" else text + "*"


def format_table(v: Verdict, eps: float = 1e-6) -> str:
    """Levels as columns, pressure rows as rows, one block per cell."""
    rows = v.sorted_reports()
    if not rows:
        return ""
    levels = sorted({r.level for r in rows})
    by = {(r.cell, r.constraint, r.level, r.method): r for r in rows}
    lines = []
    for cell in sorted({r.cell for r in rows}):
        lines.append(f"cell {cell}")
        lines.append("  " + f"{'i':>8}" + "".join(f"{'d=' + str(d):>12}" for d in levels))
        cons = sorted({r.constraint for r in rows if r.cell == cell and r.method in ("feas", "lp")})
        for i in cons:
            cells = [_cell_text(by.get((cell, i, d, "feas")) or by.get((cell, i, d, "lp")), eps)
                     for d in levels]
            lines.append("  " + f"{i:>8}" + "".join(f"{c:>12}" for c in cells))
        if any(r.cell == cell and r.method == "infeas" for r in rows):
            cells = [_cell_text(by.get((cell, 0, d, "infeas")), eps) for d in levels]
            lines.append("  " + f"{'infeas':>8}" + "".join(f"{c:>12}" for c in cells))
    lines.append("(* = solver stopped short of full accuracy)")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _levels(text: str):
    try:
        out = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("levels must be comma separated integers") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("levels must be positive")
    return out


def _config(args) -> DecideConfig:
    return DecideConfig(levels=args.levels, eps_pos=args.eps_pos, eps_cert=args.eps_cert,
                        threads=args.threads, max_psd_side=args.max_psd_side)


def _config_echo(cfg: DecideConfig, **extra) -> dict:
    return {"levels": list(cfg.levels), "eps_pos": cfg.eps_pos, "eps_cert": cfg.eps_cert,
            "max_psd_side": cfg.max_psd_side, "seed": 0, "version": __version__, **extra}


def _write(path: Optional[str], text: str):
    if path:
        Path(path).write_text(text)


def cmd_decide(args) -> int:
    inst = load_instance(args.instance)
    net = inst.network_for(args.uncertainty, args.u_scale)
    cfg = _config(args)
    v = decide_robust(net, None, cfg)
    print(f"{net.name or args.instance}: {v.kind.value}" + (f" (level {v.level})" if v.level else ""))
    table = format_table(v)
    if table:
        print(table)
    if v.kind == VerdictKind.INFEASIBLE and v.evidence.get("witness") is not None:
        print("witness phi:", " ".join(f"{x:.6g}" for x in v.evidence["witness"]))
    if v.kind == VerdictKind.UNDECIDED:
        for d, reasons in sorted(v.reasons.items()):
            print(f"level {d}: " + "; ".join(reasons), file=sys.stderr)
    _write(args.report, make_report(v, _config_echo(cfg, u_scale=args.u_scale,
                                                    uncertainty=args.uncertainty),
                                    args.timings).dumps())
    return _EXIT[v.kind]


def cmd_sweep(args) -> int:
    inst = load_instance(args.instance)
    net = inst.network_for(args.uncertainty)
    cfg = _config(args)
    cs = sweep_values(args.c_from, args.c_to, args.c_step)
    summary = sweep_u_scale(net, cs, cfg)
    print(f"{'c':>6}  {'verdict':<17}{'level':>6}")
    for p in summary.points:
        print(f"{p.c:>6.2f}  {p.kind.value:<17}{(p.level or '-'):>6}")
    print(f"{'level':>6}{'c_feas':>10}{'c_infeas':>10}{'gap':>8}")
    fmt = lambda x: "-" if x is None else f"{x:.2f}"  # noqa: E731
    for d in summary.levels:
        print(f"{d:>6}{fmt(summary.c_feas[d]):>10}{fmt(summary.c_infeas[d]):>10}{fmt(summary.gap(d)):>8}")
    doc = {
        "schema": REPORT_SCHEMA + "/sweep", "version": SCHEMA_VERSION,
        "config": _config_echo(cfg, c_from=args.c_from, c_to=args.c_to, c_step=args.c_step),
        "points": [{"c": p.c, "verdict": p.kind.value, "level": p.level,
                    "objectives": [[r.cell, r.constraint, r.level, r.method, _num(r.objective)]
                                   for r in p.verdict.sorted_reports()]} for p in summary.points],
        "summary": {str(d): {"c_feas": summary.c_feas[d], "c_infeas": summary.c_infeas[d],
                             "gap": summary.gap(d)} for d in summary.levels},
    }
    _write(args.report, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_FEASIBLE


def cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    net = inst.network_for(args.uncertainty, args.u_scale)
    res = oracle_grid(net, None, args.resolution)
    if res.all_feasible:
        print(f"all {res.n_points} grid points feasible (evidence only, not a proof)")
    else:
        print(f"{res.n_infeasible} of {res.n_points} grid points infeasible")
        print("witness phi:", " ".join(f"{x:.6g}" for x in res.witness))
    doc = {"schema": REPORT_SCHEMA + "/oracle", "version": SCHEMA_VERSION,
           "resolution": args.resolution, "all_feasible": res.all_feasible, "certifying": not res.all_feasible,
           "n_points": res.n_points, "n_infeasible": res.n_infeasible, "max_violation": res.max_violation,
           "witness": None if res.witness is None else _vec(res.witness)}
    _write(args.report, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_FEASIBLE if res.all_feasible else EXIT_INFEASIBLE


def cmd_tree_interval(args) -> int:
    inst = load_instance(args.instance)
    net = inst.network_for(args.uncertainty, args.u_scale)
    if not net.is_tree():
        raise TopologyError("tree-interval needs a tree network")
    iv = tree_pressure_interval(net, None, args.root)
    root = min(net.node_ids) if args.root is None else args.root
    if iv is None:
        print(f"root {root}: empty interval")
        return EXIT_INFEASIBLE
    print(f"root {root}: [{iv[0]:.10g}, {iv[1]:.10g}]")
    return EXIT_FEASIBLE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robustfeas", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, u_scale=True):
        p.add_argument("instance", help="instance file or bundled fixture name (n2..n7)")
        p.add_argument("--uncertainty", help="named uncertainty override from the instance")
        if u_scale:
            p.add_argument("--u-scale", type=float, help="set every arc interval to [1, C]")
        p.add_argument("--report", help="write a JSON report here")

    def solver_opts(p):
        p.add_argument("--levels", type=_levels, default=DEFAULT_LEVELS, help="e.g. 2,3,4")
        p.add_argument("--eps-pos", type=float, default=EPS_POS)
        p.add_argument("--eps-cert", type=float, default=EPS_CERT,
                       help="certificate margin per unit of scaled cell volume")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--max-psd-side", type=int, default=MAX_PSD_SIDE)

    p = sub.add_parser("decide", help="decide robust feasibility")
    common(p)
    solver_opts(p)
    p.add_argument("--timings", action="store_true", help="record wall times in the report")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("sweep", help="decide U(c) over a range of c")
    common(p, u_scale=False)
    solver_opts(p)
    p.add_argument("--c-from", type=float, default=2.0)
    p.add_argument("--c-to", type=float, default=4.0)
    p.add_argument("--c-step", type=float, default=0.1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="brute-force grid check")
    common(p)
    p.add_argument("--resolution", type=int, default=9)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("tree-interval", help="robust root pressure interval of a tree")
    common(p)
    p.add_argument("--root", type=int)
    p.set_defaults(func=cmd_tree_interval)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (MultiCycleError, TopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except SolverUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (NetworkError, GridBudgetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
