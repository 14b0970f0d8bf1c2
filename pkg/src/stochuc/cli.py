"""Command-line entry point ``stochuc``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 infeasible.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .builder import ProblemKind, ProblemSpec, build_problem
from .config import ConfigError, bundled_case_path, load_case
from .errors import BlockInfeasible, ContractError, SolverFailure
from .evaluation import compute_in_out_of_sample, fmt_number, kpi_rows, summarize
from .orchestrator import (CommitResult, Infeasible, RunConfig, grid_tables, manifest, plan_csv, report_json,
                           run_commit, run_evaluate, run_experiment_grid, validate_commit, write_json,
                           write_rows, write_text)
from .scenarios import NS_EVAL, generate_scenario_set
from .selection import pipeline_select
from .timegrid import StageSets

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4
log = logging.getLogger("stochuc")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochuc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="bundled:desk",
                        help="case file, or bundled:NAME for a packaged case (default bundled:desk)")
    common.add_argument("--optimizer", choices=["det", "sto", "sto-relaxed"])
    common.add_argument("--framework", choices=["single", "multi"])
    common.add_argument("--scenarios", type=int, metavar="M")
    common.add_argument("--max-dev", type=float, metavar="m")
    common.add_argument("--eval-dev", type=float, metavar="m_eval")
    common.add_argument("--eval-count", type=int, metavar="K")
    common.add_argument("--select", type=int, metavar="M_SEL", help="train on the M_SEL worst scenarios (0: off)")
    common.add_argument("--select-pool", type=int, metavar="K_SEL")
    common.add_argument("--gap", type=float, metavar="G")
    common.add_argument("--eval-gap", type=float)
    common.add_argument("--time-limit", type=float, metavar="SECONDS",
                        help="per commitment solve; runs with a limit may not repeat exactly")
    common.add_argument("--seed", type=int, metavar="S")
    common.add_argument("--out", default="out", metavar="DIR")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("commit", parents=[common], help="commit and write the plan")
    ev = sub.add_parser("evaluate", parents=[common], help="commit (or read a plan) and evaluate it")
    ev.add_argument("--plan", metavar="CSV", help="evaluate this plan instead of committing")
    ev.add_argument("--kappa", action="store_true",
                    help="also report in-sample and out-of-sample costs (single-phase stochastic runs)")
    sub.add_parser("select", parents=[common], help="screen candidates and write the selected training set")
    gr = sub.add_parser("grid", parents=[common], help="run the experiment grid")
    gr.add_argument("--grid-dev", type=float, nargs="+", metavar="m_eval")
    gr.add_argument("--grid-select", type=int, nargs="+", metavar="M")
    sub.add_parser("export-model", parents=[common], help="write the commitment model as an LP file")
    rp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", metavar="DIR", help="output directory (default: a sibling of the original)")
    return p


def _resolve_config(text: str) -> Path:
    if text.startswith("bundled:"):
        return bundled_case_path(text.split(":", 1)[1])
    return Path(text)


def _config(args) -> RunConfig:
    case = load_case(_resolve_config(args.config))
    over = {"optimizer": args.optimizer.replace("-", "_") if args.optimizer else None,
            "framework": args.framework, "scenarios": args.scenarios, "max_dev": args.max_dev,
            "eval_dev": args.eval_dev, "eval_count": args.eval_count, "select": args.select,
            "select_pool": args.select_pool, "gap": args.gap, "eval_gap": args.eval_gap,
            "seed": args.seed, "time_limit": args.time_limit}
    if getattr(args, "grid_dev", None):
        over["grid_dev"] = tuple(args.grid_dev)
    if getattr(args, "grid_select", None):
        over["grid_select"] = tuple(args.grid_select)
    return RunConfig.from_case(case, **over)


def _tag(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.case.source_hash, "seed": cfg.seed}


def read_plan_csv(path: str | Path) -> tuple[dict[tuple[str, int], int], list[str]]:
    """Inverse of the plan writer: hours map back to steps in file order."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    if header[0] != "hour":
        raise ConfigError(f"{path}: not a plan file")
    units = header[1:]
    plan = {}
    for t, ln in enumerate(lines[1:]):
        cells = ln.split(",")
        for u, v in zip(units, cells[1:]):
            if v != "":
                if v not in ("0", "1"):
                    raise ConfigError(f"{path}: OFF status must be 0 or 1, got {v!r}")
                plan[u, t] = int(v)
    return plan, units


def _write_commit(out: Path, cfg: RunConfig, res: CommitResult) -> list[str]:
    files = ["plan.csv", "solve_report.json"]
    write_text(out / "plan.csv", plan_csv(res, cfg.case, _tag(cfg)))
    report = report_json(res)
    report["rule_violations"] = [str(v) for v in validate_commit(res, cfg.case)]
    write_json(out / "solve_report.json", report)
    if res.selection is not None:
        write_json(out / "selection.json", res.selection.manifest())
        files.append("selection.json")
    return files


def _cmd_commit(cfg: RunConfig, out: Path, args) -> list[str]:
    return _write_commit(out, cfg, run_commit(cfg))


def _cmd_evaluate(cfg: RunConfig, out: Path, args) -> list[str]:
    files = []
    if args.plan:
        plan, units = read_plan_csv(args.plan)
        res = CommitResult("plan", plan, units, [], None)
    else:
        res = run_commit(cfg)
        files += _write_commit(out, cfg, res)
    records = run_evaluate(cfg, res)
    write_rows(out / "kpis.csv", kpi_rows(records, _tag(cfg)))
    summary = summarize(records)
    rows = [{**_tag(cfg), "plan": res.label, "m_eval": fmt_number(cfg.eval_dev), "kpi": name,
             **{k: fmt_number(v) for k, v in stats.items()}} for name, stats in summary.items()]
    write_rows(out / "kpi_summary.csv", rows)
    files += ["kpis.csv", "kpi_summary.csv"]
    if args.kappa:
        if res.spec is None or cfg.framework != "single" or cfg.optimizer == "det":
            raise ConfigError("--kappa needs a single-phase stochastic commitment")
        case = cfg.case
        test = generate_scenario_set(case.base, case.grid, case.grid.lttd_times["t1"], (0, case.grid.n_steps),
                                     cfg.eval_count, case.errors_with(cfg.max_dev), cfg.seed, NS_EVAL)
        k = compute_in_out_of_sample(res.spec, res.model, res.x, test, cfg.eval_options())
        write_rows(out / "kappa.csv", [{**_tag(cfg), "kappa_in": fmt_number(k.kappa_in),
                                        "kappa_oos": fmt_number(k.kappa_oos),
                                        "first_stage_cost": fmt_number(k.first_stage_cost),
                                        "mean_second_stage_oos": fmt_number(k.mean_second_stage_oos),
                                        "difference": fmt_number(k.difference)}])
        files.append("kappa.csv")
    return files


def _cmd_select(cfg: RunConfig, out: Path, args) -> list[str]:
    if cfg.select < 1:
        raise ConfigError("select needs --select M_SEL >= 1")
    case = cfg.case
    det = run_commit(replace(cfg, optimizer="det", select=0, framework="single"))
    sel = pipeline_select(case.fleet, case.grid, case.base, cfg.select_pool, cfg.select, cfg.eval_dev, cfg.seed,
                          case.error_params, det.plan, case.costs, cfg.eval_options())
    write_json(out / "selection.json", {**_tag(cfg), **sel.manifest()})
    write_rows(out / "screening.csv", [{**_tag(cfg), "scenario": r.scenario, "m_eval": fmt_number(cfg.eval_dev),
                                        "lost_load_mwh": fmt_number(r.lost_load),
                                        "lost_production_mwh": fmt_number(r.lost_production),
                                        "selected": int(r.scenario in sel.worst.selected)}
                                       for r in sel.screening])
    write_text(out / "training_scenarios.txt", sel.training.to_text())
    return ["selection.json", "screening.csv", "training_scenarios.txt"]


def _cmd_grid(cfg: RunConfig, out: Path, args) -> list[str]:
    cells = run_experiment_grid(cfg)
    tidy, heat = grid_tables(cells, cfg)
    write_rows(out / "grid_kpis.csv", tidy)
    write_rows(out / "grid_heatmap.csv", heat)
    return ["grid_kpis.csv", "grid_heatmap.csv"]


def _cmd_export(cfg: RunConfig, out: Path, args) -> list[str]:
    case = cfg.case
    from .orchestrator import _training  # the same scenarios a commit would use
    det = cfg.optimizer == "det"
    scen = _training(cfg, case.grid.lttd_times["t1"], 0, det, None)
    kind = ProblemKind.DETERMINISTIC if det else ProblemKind.SINGLE_PHASE
    model = build_problem(ProblemSpec(kind, case.fleet, case.grid, scen, case.costs,
                                      stage_sets=StageSets.single_phase(case.fleet)))
    if cfg.optimizer == "sto_relaxed":
        from .builder import relax_second_stage
        model = relax_second_stage(model)
    out.mkdir(parents=True, exist_ok=True)
    model.write_lp(out / "model.lp")
    write_json(out / "model.json", {**_tag(cfg), "variables": len(model.names),
                                    "constraints": len(model.constraints),
                                    "free_binaries": len(model.free_binaries()),
                                    "metadata": {k: v for k, v in model.metadata.items()
                                                 if isinstance(v, (int, float, str, list, tuple))}})
    return ["model.lp", "model.json"]


_COMMANDS = {"commit": _cmd_commit, "evaluate": _cmd_evaluate, "select": _cmd_select, "grid": _cmd_grid,
             "export-model": _cmd_export}


def _replay(args) -> int:
    try:
        data = json.loads(Path(args.manifest).read_text())
        argv = list(data["argv"])
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if "--out" in argv:
        i = argv.index("--out")
        old = argv[i + 1]
        argv[i + 1] = args.out or f"{old}-replay"
    else:
        argv += ["--out", args.out or "out-replay"]
    # the case file must still be the one the manifest was made from
    ns = _parser().parse_args(argv)
    try:
        cfg = _config(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.case.source_hash != data.get("config_hash"):
        print("error: the case file changed since the manifest was written", file=sys.stderr)
        return EXIT_CONFIG
    return main(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _parser().parse_args(argv)
    if args.command == "replay":
        return _replay(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = Path(args.out)
        files = _COMMANDS[args.command](cfg, out, args)
        write_json(out / "manifest.json", manifest(cfg, args.command, argv, files))
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Infeasible, BlockInfeasible) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"wrote {', '.join(sorted(files))} and manifest.json to {out}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
