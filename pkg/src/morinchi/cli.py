"""Command line entry points: run a scenario, list bundled ones, explain a report.

Exit codes for ``run``: 0 all identities hold, 2 genericity budget exhausted,
3 an identity or hard audit failed, 64 scenario parse or hypothesis error,
65 manifold regularity failure, 66 stratification rejected (the map is not
Morin at the required depths, or the singular set could not be computed).

Reproducibility: one root seed drives everything.  Derived generators use
fixed purpose tags (regularity sampling 11, multistart 23, covectors 7 with
the resample attempt appended), so a report is byte-identical across runs
for the same scenario, seed, and tolerances.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

from .euler import EulerReport, build_report
from .manifold import ProjectionError, RegularityError
from .morse import GenericityExhausted, MorseAuditError, run_with_genericity
from .strata import (
    MorinnessError,
    ScenarioFormatError,
    StratificationError,
    compute_stratification,
    load_scenario,
)

EXIT_OK = 0
EXIT_GENERICITY = 2
EXIT_IDENTITY = 3
EXIT_FORMAT = 64
EXIT_REGULARITY = 65
EXIT_MORIN = 66


@dataclass
class RunConfig:
    scenario: str
    seed: int | None = None
    out_dir: str = "."
    tol_residual: float | None = None
    max_resamples: int | None = None
    emit: tuple = ("report.json", "strata.csv", "critical.csv", "curves.csv")
    tolerance_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.max_resamples is not None and self.max_resamples < 1:
            raise ScenarioFormatError("max_resamples must be at least 1")


def _apply_config(S, config: RunConfig):
    overrides = dict(config.tolerance_overrides)
    if config.tol_residual is not None:
        overrides["residual"] = config.tol_residual
    if config.max_resamples is not None:
        overrides["max_resamples"] = config.max_resamples
    if overrides:
        from .strata import Tolerances
        merged = S.tolerances.as_dict()
        merged.update(overrides)
        S.tolerances = Tolerances.from_dict(merged)
    if config.seed is not None:
        S.seed = int(config.seed)
    return S


def run_pipeline(S):
    """Stratify, loop the genericity audit, assemble the report."""
    strat = compute_stratification(S)
    a, data, audit, history = run_with_genericity(S, strat)
    report = build_report(S, strat, data, attempt=audit.attempt, history=history)
    return report, strat, data


def run(config: RunConfig) -> int:
    """Execute the full pipeline for one scenario and write the artifacts."""
    try:
        S = load_scenario(config.scenario)
        S = _apply_config(S, config)
    except ScenarioFormatError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    try:
        report, strat, data = run_pipeline(S)
    except (RegularityError, ProjectionError) as exc:
        print(f"regularity failure: {exc}", file=sys.stderr)
        return EXIT_REGULARITY
    except (MorinnessError, StratificationError) as exc:
        print(f"stratification rejected: {exc}", file=sys.stderr)
        return EXIT_MORIN
    except GenericityExhausted as exc:
        print(f"genericity exhausted: {exc}", file=sys.stderr)
        return EXIT_GENERICITY
    except MorseAuditError as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return EXIT_IDENTITY

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "report.json" in config.emit:
        (out / "report.json").write_text(report.to_json())
    if "strata.csv" in config.emit:
        _write_strata_csv(out / "strata.csv", S, strat)
    if "critical.csv" in config.emit:
        _write_critical_csv(out / "critical.csv", S, data)
    if "curves.csv" in config.emit:
        _write_curves_csv(out / "curves.csv", S, strat)

    print(_verdict_line(report))
    return EXIT_OK if report.all_ok else EXIT_IDENTITY


def _verdict_line(report: EulerReport) -> str:
    mark = "ok" if report.all_ok else "FAILED"
    return (f"{report.scenario}: chi(M) = {report.identity_lhs}, signed strata sum = "
            f"{report.identity_rhs} [{mark}]")


def _write_strata_csv(path, S, strat):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(S.N)] + ["k", "sign", "residual"])
        for p in list(strat.points) + list(strat.cusps):
            w.writerow([repr(float(c)) for c in p.x]
                       + [p.depth, p.sign, repr(float(p.residuals.get("system", 0.0)))])


def _write_critical_csv(path, S, data):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(S.N)]
                   + ["k", "index", "correct", "inward_into", "eta_sign"])
        rows = ([(r, 0) for r in data.k0_records]
                + [(r, 1) for r in data.stratum_records.get(1, ())]
                + [(r, 1) for r in data.boundary_records])
        for r, k in rows:
            w.writerow([repr(float(c)) for c in r.x]
                       + [k, r.morse_index,
                          "" if r.correct is None else str(bool(r.correct)),
                          r.inward_into,
                          "" if r.eta_sign is None else r.eta_sign])


def _write_curves_csv(path, S, strat):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "node"] + [f"x{i}" for i in range(S.N)]
                   + ["det_kernel_hessian", "parity"])
        for ci, curve in enumerate(strat.curves):
            for ni, z in enumerate(curve.nodes):
                w.writerow([ci, ni] + [repr(float(c)) for c in z[:S.N]]
                           + [repr(float(curve.det_values[ni])),
                              int(curve.parities[ni])])


def bundled_scenarios():
    root = files("morinchi").joinpath("scenarios")
    out = []
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            out.append(entry)
    return out


def list_scenarios(extra_dir=None) -> str:
    """Table of bundled (and optionally user-supplied) scenarios."""
    rows = []
    sources = list(bundled_scenarios())
    if extra_dir:
        sources += sorted(Path(extra_dir).glob("*.json"))
    for src in sources:
        data = json.loads(src.read_text() if hasattr(src, "read_text")
                          else Path(src).read_text())
        rows.append((
            data.get("name", getattr(src, "name", str(src))),
            data["intrinsic_dim"],
            data["target_dim"],
            data.get("chi_expected", "?"),
            data.get("description", ""),
        ))
    header = f"{'name':<14} {'m':>2} {'n':>2} {'chi':>4}  description"
    lines = [header, "-" * len(header)]
    for name, m, n, chi, desc in rows:
        lines.append(f"{name:<14} {m:>2} {n:>2} {chi:>4}  {desc}")
    return "\n".join(lines)


def explain(report_path) -> str:
    """Human-readable digest of a run report."""
    try:
        data = json.loads(Path(report_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileNotFoundError(f"cannot read report: {exc}") from exc
    lines = []
    ok = lambda flag: "ok" if flag else "VIOLATED"  # noqa: E731
    lines.append(f"scenario {data['scenario']} (m={data['m']}, n={data['n']}, "
                 f"seed {data['seed']}, covector attempt {data['genericity_seed_used']})")
    lines.append("")
    lines.append("per-stratum Euler characteristics:")
    lines.append(f"  {'k':>2} {'sign':<8} {'morse':>6} {'oracle':>7} "
                 f"{'arcs':>5} {'circles':>8} {'points':>7}")
    for row in data["strata"]:
        oracle = "-" if row["chi_oracle"] is None else row["chi_oracle"]
        morse = "-" if row["chi_morse_boundary"] is None else row["chi_morse_boundary"]
        lines.append(f"  {row['k']:>2} {row['sign']:<8} {morse:>6} {oracle:>7} "
                     f"{row['arcs']:>5} {row['circles']:>8} {row['points']:>7}")
    lines.append("")
    lines.append(f"closed-manifold identity: {data['identity_lhs']} = "
                 f"{data['identity_rhs']} [{ok(data['identity_ok'])}]")
    lines.append(f"mod-2 congruence of closure characteristics: "
                 f"[{ok(data['mod2_congruence_ok'])}]")
    if data["fold_equality_ok"] is None:
        lines.append("fold-only equality: not applicable (deeper strata present)")
    else:
        lines.append(f"fold-only equality: [{ok(data['fold_equality_ok'])}]")
    lines.append(f"boundary telescoping: [{ok(data['telescoping_ok'])}]")
    lines.append(f"route agreement (morse vs cell counting): "
                 f"[{ok(data['route_agreement_ok'])}]")
    if data["chi_M_expected"] is not None:
        lines.append(f"expected chi(M) = {data['chi_M_expected']}: "
                     f"[{ok(data['chi_expected_ok'])}]")
    audits = data.get("audits", {})
    if audits.get("parity_violations"):
        lines.append("index-parity audit: VIOLATED at "
                     f"{audits['parity_violations']}")
    else:
        lines.append(f"index-parity audit: ok "
                     f"({audits.get('parity_checked', 0)} points)")
    if not audits.get("certificates_cancel", True):
        lines.append("perturbation-pair cancellation: VIOLATED")
    gen = audits.get("genericity", {})
    if gen.get("history"):
        lines.append("resampled covectors before acceptance:")
        for item in gen["history"]:
            lines.append(f"  - {item}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="morinchi",
        description="Stratify a polynomial map on an implicit compact manifold "
                    "and machine-check the Euler characteristic identities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full verification pipeline")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the root seed")
    p_run.add_argument("--out", default=".", help="output directory for artifacts")
    p_run.add_argument("--tol-residual", type=float, default=None)
    p_run.add_argument("--max-resamples", type=int, default=None)

    p_list = sub.add_parser("list", help="list bundled scenarios")
    p_list.add_argument("--dir", default=None, help="also list scenarios in a directory")

    p_explain = sub.add_parser("explain", help="pretty-print a run report")
    p_explain.add_argument("report", help="path to report.json")

    args = parser.parse_args(argv)
    if args.command == "run":
        try:
            config = RunConfig(
                scenario=args.scenario,
                seed=args.seed,
                out_dir=args.out,
                tol_residual=args.tol_residual,
                max_resamples=args.max_resamples,
            )
        except ScenarioFormatError as exc:
            print(f"bad configuration: {exc}", file=sys.stderr)
            return EXIT_FORMAT
        return run(config)
    if args.command == "list":
        print(list_scenarios(args.dir))
        return EXIT_OK
    if args.command == "explain":
        try:
            print(explain(args.report))
        except FileNotFoundError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_FORMAT
        return EXIT_OK
    return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
