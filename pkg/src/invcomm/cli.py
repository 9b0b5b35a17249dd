"""Batch experiment runner: ``invcomm solve | simulate | sweep-report``.

Settings come from flags, then an optional YAML experiment file (``--config``),
then built-in defaults, in that order of precedence.

Result files are comma-separated with a leading ``# invcomm-results <version>``
line and the fixed header :data:`RESULT_COLUMNS`.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from . import scenario as scn
from .actions import ActionGrid
from .policies import PolicyConfigError, PolicyKind, PolicySpec, build_policy
from .simulator import MESSAGE, ROUND, run_replications
from .solver import SARSOP_MAX_STATES, ArtifactMismatch, PolicyArtifact, solve_policy

RESULTS_SCHEMA = 1
RESULTS_MAGIC = "# invcomm-results"
METRICS = ["Holding", "Stockout", "Comm", "Total", "Fill Rate", "comm_freq"]
RESULT_COLUMNS = (["policy", "sweep_axis", "sweep_value"] + METRICS + ["reps"]
                  + [f"ci_{m}" for m in METRICS])
PBVI_MAX_STATES = 5000
SWEEP_AXES = ("comm", "rho", "holding", "penalty")
PRESETS = {"base": scn.base_case, "tiny": scn.tiny_case}


class CliError(RuntimeError):
    pass


@dataclass
class ExperimentSpec:
    scenario: str | None = None
    preset: str | None = None
    policies: list[str] = field(default_factory=lambda: ["never"])
    artifact: str | None = None
    always_artifact: str | None = None
    method: str = "auto"
    gap: float = 0.01
    budget: float = 300.0
    grid: str | None = None
    share_only: bool = False
    horizon: int = 1000
    reps: int = 20
    seed: int = 0
    accounting: str = ROUND
    warmup: int = 0
    sweep_axis: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    out: str | None = None
    out_dir: str = "."

    def validate(self) -> None:
        if self.scenario is not None and not Path(self.scenario).is_file():
            raise CliError(f"scenario file not found: {self.scenario}")
        if self.scenario is None and self.preset not in PRESETS:
            raise CliError(f"give --scenario FILE or --preset {{{','.join(PRESETS)}}}")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise CliError(f"sweep axis must be one of {SWEEP_AXES}")
            if not self.sweep_values or not all(math.isfinite(v) for v in self.sweep_values):
                raise CliError("sweep values must be a non-empty list of finite numbers")
        if self.accounting not in (ROUND, MESSAGE):
            raise CliError(f"accounting must be {ROUND!r} or {MESSAGE!r}")


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"experiment config not found: {p}")
    doc = yaml.safe_load(p.read_text()) or {}
    if not isinstance(doc, dict):
        raise CliError(f"{p}: expected a mapping")
    known = {f.name for f in fields(ExperimentSpec)}
    unknown = set(doc) - known
    if unknown:
        raise CliError(f"{p}: unknown keys {sorted(unknown)}")
    return doc


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    """Merge flags over the config file over defaults."""
    merged = _read_config(getattr(args, "config", None))
    for f in fields(ExperimentSpec):
        v = getattr(args, f.name, None)
        if v is not None:
            merged[f.name] = v
    spec = ExperimentSpec(**merged)
    spec.validate()
    return spec


def load_scenario(spec: ExperimentSpec) -> scn.ScenarioConfig:
    if spec.scenario is not None:
        return scn.load(spec.scenario)
    return PRESETS[spec.preset]()


def apply_sweep(config: scn.ScenarioConfig, axis: str | None, value: float | None):
    if axis is None:
        return config
    if axis == "rho":
        rm = config.regime_model
        if rm.n_regimes != 2:
            raise CliError("rho sweeps need a two-regime scenario")
        r = float(value)
        regimes = scn.RegimeModel(rm.labels, [[r, 1 - r], [1 - r, r]], rm.initial)
        return scn.check(replace(config, regime_model=regimes))
    return config.with_costs(**{axis: float(value)})


def parse_grid(text: str) -> ActionGrid:
    """``"8,10,12;14,16,18"``: one comma list per regime, separated by ``;``."""
    try:
        rows = tuple(tuple(int(t) for t in row.split(",") if t.strip()) for row in text.split(";"))
    except ValueError as exc:
        raise CliError(f"bad grid {text!r}: {exc}") from exc
    return ActionGrid(rows)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- solve

def cmd_solve(spec: ExperimentSpec, stream=None) -> PolicyArtifact:
    config = load_scenario(spec)
    n = config.n_states
    method = spec.method
    if method == "auto":
        method = "sarsop" if n <= SARSOP_MAX_STATES else "pbvi"
    limit = SARSOP_MAX_STATES if method == "sarsop" else PBVI_MAX_STATES
    if n > limit:
        raise CliError(
            f"instance too large for {method}: {config.n_regimes} regimes x "
            f"({config.s_max}+1)^{config.n_retailers} inventory states = {n} states "
            f"(limit {limit}); reduce s_max or the retailer count")
    grid = parse_grid(spec.grid) if spec.grid else None
    comm_options = (1,) if spec.share_only else (0, 1)
    start = time.perf_counter()
    art = solve_policy(config, grid, method, comm_options, spec.gap, spec.budget, spec.seed)
    wall = time.perf_counter() - start
    out = Path(spec.out or Path(spec.out_dir) / "policy.txt")
    art.save(out)
    m = art.meta
    rel = m["gap"] / abs(m["lower"]) if m["lower"] else float("inf")
    print(f"solved method={m['method']} status={m['status']} lower={m['lower']:.6f} "
          f"upper={m['upper']:.6f} gap={m['gap']:.6f} rel_gap={rel:.4%} "
          f"wall={wall:.1f}s artifact={out}", file=stream or sys.stdout)
    return art


# ------------------------------------------------------------- simulate

def _artifact_for(path: str | None, value) -> PolicyArtifact | None:
    if path is None:
        return None
    p = path.format(value=value) if value is not None else path
    return PolicyArtifact.load(p)


def simulate_rows(spec: ExperimentSpec) -> list[dict]:
    base = load_scenario(spec)
    specs = [PolicySpec.parse(p) for p in spec.policies]
    values = spec.sweep_values if spec.sweep_axis else [None]
    rows = []
    for value in values:
        config = apply_sweep(base, spec.sweep_axis, value)
        need_opt = any(s.kind is PolicyKind.OPTIMAL for s in specs)
        opt = _artifact_for(spec.artifact, value) if need_opt else None
        alw = _artifact_for(spec.always_artifact, value)
        for s in specs:
            try:
                policy = build_policy(s, config, opt, alw)
            except ArtifactMismatch as exc:
                raise CliError(f"artifact does not match the scenario: {exc}") from exc
            except PolicyConfigError as exc:
                raise CliError(str(exc)) from exc
            rep = run_replications(config, policy, spec.horizon, spec.reps, spec.seed,
                                   spec.accounting, spec.warmup)
            row = {"policy": policy.label(), "sweep_axis": spec.sweep_axis or "",
                   "sweep_value": "" if value is None else float(value), "reps": rep.reps}
            row.update(rep.row())
            rows.append(row)
    return rows


def write_results(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"{RESULTS_MAGIC} {RESULTS_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def read_results(path: str | Path) -> list[dict]:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"result file not found: {p}")
    lines = p.read_text().splitlines()
    if not lines or not lines[0].startswith(RESULTS_MAGIC):
        raise CliError(f"{p}: not an invcomm result file")
    version = lines[0][len(RESULTS_MAGIC):].strip()
    if version != str(RESULTS_SCHEMA):
        raise CliError(f"{p}: result schema version {version!r}, expected {RESULTS_SCHEMA}")
    reader = csv.DictReader(lines[1:])
    if reader.fieldnames != RESULT_COLUMNS:
        raise CliError(f"{p}: unexpected columns {reader.fieldnames}")
    return list(reader)


def cmd_simulate(spec: ExperimentSpec, stream=None) -> list[dict]:
    rows = simulate_rows(spec)
    text = write_results(rows)
    if spec.out:
        Path(spec.out).write_text(text)
    else:
        (stream or sys.stdout).write(text)
    return rows


# --------------------------------------------------------- sweep-report

def merge_results(paths: list[str]) -> list[dict]:
    if not paths:
        raise CliError("sweep-report needs at least one result file")
    merged: dict[tuple, dict] = {}
    conflicts = []
    for path in paths:
        for row in read_results(path):
            key = (row["policy"], row["sweep_axis"], row["sweep_value"])
            if key in merged and merged[key] != row:
                conflicts.append(key)
            merged.setdefault(key, row)
    if conflicts:
        raise CliError(f"conflicting rows for keys: {sorted(set(conflicts))}")
    return [merged[k] for k in sorted(merged, key=lambda k: (k[0], k[1], _num(k[2])))]


def _num(s: str) -> float:
    return float(s) if s != "" else float("-inf")


def cmd_sweep_report(paths: list[str], out_dir: str, stream=None) -> list[Path]:
    rows = merge_results(paths)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "merged.csv"
    buf = io.StringIO()
    buf.write(f"{RESULTS_MAGIC} {RESULTS_SCHEMA}\n")
    w = csv.DictWriter(buf, RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    table.write_text(buf.getvalue())
    written = [table]
    by_policy: dict[str, list[dict]] = {}
    for r in rows:
        by_policy.setdefault(r["policy"], []).append(r)
    for pol, rs in by_policy.items():
        tag = pol.replace("(", "_").replace(")", "")
        swept = [r for r in rs if r["sweep_value"] != ""]
        if swept:
            axis = swept[0]["sweep_axis"]
            f = out / f"cost_vs_{axis}_{tag}.dat"
            f.write_text("".join(f"{r['sweep_value']} {r['Total']}\n" for r in swept))
            written.append(f)
        f = out / f"fill_vs_commfreq_{tag}.dat"
        pts = sorted((float(r["comm_freq"]), float(r["Fill Rate"])) for r in rs)
        f.write_text("".join(f"{x!r} {y!r}\n" for x, y in pts))
        written.append(f)
    for r in rows:
        where = f"{r['sweep_axis']}={r['sweep_value']}" if r["sweep_axis"] else "-"
        print(f"{r['policy']:>14} {where:<10} "
              f"total={float(r['Total']):.3f} fill={float(r['Fill Rate']):.4f} "
              f"comm_freq={float(r['comm_freq']):.3f}", file=stream or sys.stdout)
    return written


# ----------------------------------------------------------------- main

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment file; flags override its keys")
    p.add_argument("--scenario", help="scenario YAML file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file")
    p.add_argument("--out-dir", dest="out_dir")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="invcomm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve the coordinator problem and write a policy artifact")
    _common(s)
    s.add_argument("--method", choices=["auto", "sarsop", "pbvi"])
    s.add_argument("--gap", type=float, help="relative gap target (bounded solver)")
    s.add_argument("--budget", type=float, help="wall-clock budget in seconds")
    s.add_argument("--grid", help='target levels per regime, e.g. "8,10,12;14,16,18"')
    s.add_argument("--share-only", dest="share_only", action="store_const", const=True,
                   help="restrict to sharing actions (targets for the share-always baseline)")

    m = sub.add_parser("simulate", help="simulate policies and write a result table")
    _common(m)
    m.add_argument("--policy", dest="policies", action="append",
                   help="never | always | optimal | periodic:K | threshold:D (repeatable)")
    m.add_argument("--artifact", help="solved policy; may contain {value} for sweeps")
    m.add_argument("--always-artifact", dest="always_artifact",
                   help="share-only solved policy for the always/periodic baselines")
    m.add_argument("--horizon", type=int)
    m.add_argument("--reps", type=int)
    m.add_argument("--accounting", choices=[ROUND, MESSAGE])
    m.add_argument("--warmup", type=int)
    m.add_argument("--sweep-axis", dest="sweep_axis", choices=SWEEP_AXES)
    m.add_argument("--sweep-values", dest="sweep_values", type=_floats,
                   help="comma-separated values")

    r = sub.add_parser("sweep-report", help="merge result files and emit plot data")
    r.add_argument("results", nargs="+")
    r.add_argument("--out-dir", dest="out_dir", default="report")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "sweep-report":
            cmd_sweep_report(args.results, args.out_dir)
            return 0
        spec = build_spec(args)
        if args.command == "solve":
            cmd_solve(spec)
        else:
            cmd_simulate(spec)
    except (CliError, scn.ScenarioError, FileNotFoundError, ArtifactMismatch) as exc:
        print(f"invcomm: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
