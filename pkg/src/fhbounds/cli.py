"""Command-line experiment runner.

Subcommands: bounds, simulate, compare, sweep, recommend.
Exit codes: 0 success, 2 configuration error, 3 instability, 4 bracket violation.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from fhbounds import __version__
from fhbounds.bounds import ForkJoinConfig, bound_curve
from fhbounds.config import ExperimentConfig, load_config
from fhbounds.curves import DelayCurve, atomic_write, canonical_json, format_float
from fhbounds.errors import (
    ConfigError,
    FhBoundsError,
    InstabilityError,
    InvalidParameters,
    UnreachableReliabilityError,
)
from fhbounds.planner import (
    achievable_latency,
    default_requirements,
    load_requirements,
    match_scenarios,
    recommend_splits,
    recommended_split,
)
from fhbounds.sim.engine import replicate
from fhbounds.sim.model import NonOrthogonal, OrthogonalBandwidth, OrthogonalPath, resolve_allocation

log = logging.getLogger("fhbounds")

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_VIOLATION = 0, 2, 3, 4
DEFAULT_MIN_TAIL = 1e-4


class BracketViolation(FhBoundsError):
    def __init__(self, report: dict):
        self.report = report
        super().__init__(f"{report['violation_count']} bracket violation(s)")


def _json_dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _provenance(cfg: ExperimentConfig, command: str) -> dict:
    return {
        "command": command,
        "config": cfg.canonical(),
        "seed": int(cfg.base_seed),
        "fhbounds_version": __version__,
    }


def _curve_path(out_dir: Path, name: str, kind: str, fmt: str) -> Path:
    return out_dir / f"{name}_{kind}.{fmt}"


# -- bounds -----------------------------------------------------------------


def class_fork_joins(cfg: ExperimentConfig) -> dict[str, ForkJoinConfig]:
    """Per-class (n, k, B, psi) under an orthogonal policy."""
    if isinstance(cfg.policy, NonOrthogonal):
        raise ConfigError(
            "analytic bounds model one class per queue; the non_orthogonal policy mixes "
            "classes in shared queues, use orthogonal_bandwidth or orthogonal_path"
        )
    alloc = resolve_allocation(cfg.topology, cfg.classes, cfg.policy)
    out = {}
    for ca in alloc.classes:
        if len(set(ca.capacities)) != 1:
            raise ConfigError(f"class {ca.traffic.name!r}: analytic bounds need equal path capacities")
        out[ca.traffic.name] = ForkJoinConfig(
            ca.n_alloc, ca.traffic.k, ca.traffic.packet_size, ca.capacities[0]
        )
    return out


def compute_bounds(cfg: ExperimentConfig) -> dict[str, dict[str, DelayCurve]]:
    taus = cfg.tau_values()
    fork_joins = class_fork_joins(cfg)
    curves = {}
    for c in cfg.classes:
        fj = fork_joins[c.name]
        meta = {**_provenance(cfg, "bounds"), "class": c.name}
        curves[c.name] = {
            which: bound_curve(fj, c.arrival_rate, taus, which, cfg.eps_trunc, meta)
            for which in ("lower", "upper")
        }
    return curves


def cmd_bounds(cfg: ExperimentConfig) -> dict[str, dict[str, Path]]:
    out_dir = Path(cfg.output_dir)
    written = {}
    for name, pair in compute_bounds(cfg).items():
        written[name] = {}
        for which, curve in pair.items():
            written[name][which] = curve.save(_curve_path(out_dir, name, which, cfg.output_format), cfg.output_format)
    return written


# -- simulate ---------------------------------------------------------------


def _mm1_reference(cfg: ExperimentConfig, name: str) -> dict | None:
    """Closed-form M/M/1 mean when a class is a lone single-block queue."""
    alloc = resolve_allocation(cfg.topology, cfg.classes, cfg.policy)
    ca = next(a for a in alloc.classes if a.traffic.name == name)
    if ca.n_alloc != 1 or ca.traffic.k != 1 or (alloc.shared and len(alloc.classes) > 1):
        return None
    mu = ca.capacities[0] / ca.traffic.packet_size
    return {"service_rate_per_s": mu, "mean_delay_s": 1.0 / (mu - ca.traffic.arrival_rate)}


def cmd_simulate(cfg: ExperimentConfig, jobs: int = 1) -> dict[str, Path]:
    out_dir = Path(cfg.output_dir)
    taus = cfg.tau_values()
    rep = replicate(
        cfg.sim_spec(), cfg.replications, cfg.base_seed, taus, cfg.z,
        keep_samples=cfg.raw_samples, jobs=jobs,
    )
    written = {}
    summary = {**_provenance(cfg, "simulate"), "classes": {}}
    for name, pooled in rep.pooled.items():
        pooled.metadata.update(_provenance(cfg, "simulate"))
        written[name] = pooled.save(_curve_path(out_dir, name, "empirical", cfg.output_format), cfg.output_format)
        means = [r.mean_delay(name) for r in rep.results]
        counts = [r.sample_count(name) for r in rep.results]
        mean = float(np.dot(means, counts) / sum(counts))
        if len(means) > 1:
            stderr = float(np.std(means, ddof=1) / np.sqrt(len(means)))
        else:
            stderr = rep.results[0].delay_stderr[name]
        entry = {
            "sample_count": int(sum(counts)),
            "mean_delay_s": mean,
            "mean_delay_stderr_s": stderr,
            "replications": [
                {
                    "replication": r.replication,
                    "sample_count": r.sample_count(name),
                    "mean_delay_s": r.mean_delay(name),
                    "batch_means_stderr_s": r.delay_stderr[name],
                }
                for r in rep.results
            ],
        }
        ref = _mm1_reference(cfg, name)
        if ref is not None:
            ref["z_score"] = (mean - ref["mean_delay_s"]) / stderr if stderr > 0 else None
            entry["mm1_reference"] = ref
        summary["classes"][name] = entry
        if cfg.raw_samples:
            for r in rep.results:
                path = out_dir / f"{name}_samples_rep{r.replication}.npy"
                buf = io.BytesIO()
                np.save(buf, r.delays[name])
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".npy.tmp")
                tmp.write_bytes(buf.getvalue())
                tmp.replace(path)
    written["summary"] = out_dir / "simulate_summary.json"
    atomic_write(written["summary"], _json_dump(summary))
    return written


# -- compare ----------------------------------------------------------------


def compare_curves(
    lower: DelayCurve, upper: DelayCurve, empirical: DelayCurve, min_tail: float = DEFAULT_MIN_TAIL
) -> dict:
    """Check LB - hw <= p_emp <= UB + hw on shared grid points where p_emp >= min_tail."""
    if empirical.kind != "empirical":
        raise InvalidParameters(f"expected an empirical curve, got {empirical.kind!r}")
    li, ui, ei = [], [], []
    for e, tau in enumerate(empirical.taus):
        lm = np.nonzero(np.isclose(lower.taus, tau, rtol=1e-12, atol=0.0))[0]
        um = np.nonzero(np.isclose(upper.taus, tau, rtol=1e-12, atol=0.0))[0]
        if lm.size and um.size:
            li.append(lm[0])
            ui.append(um[0])
            ei.append(e)
    if not ei:
        raise InvalidParameters("bound and simulation curves share no tau grid points")
    checked, violations = 0, []
    for l, u, e in zip(li, ui, ei):
        p, hw = empirical.probs[e], empirical.half_widths[e]
        if p < min_tail:
            continue
        checked += 1
        lo, hi = lower.probs[l], upper.probs[u]
        if p < lo - hw or p > hi + hw:
            violations.append(
                {
                    "tau_seconds": float(empirical.taus[e]),
                    "lower": float(lo),
                    "empirical": float(p),
                    "half_width": float(hw),
                    "upper": float(hi),
                    "side": "below-lower" if p < lo - hw else "above-upper",
                }
            )
    return {
        "common_points": len(ei),
        "checked_points": checked,
        "min_tail": float(min_tail),
        "violation_count": len(violations),
        "violations": violations,
    }


def _find(directory: Path, name: str, kind: str) -> Path | None:
    for fmt in ("csv", "json"):
        p = _curve_path(directory, name, kind, fmt)
        if p.exists():
            return p
    return None


def cmd_compare(
    bounds_dir=None, sim_dir=None, *, lower=None, upper=None, empirical=None,
    min_tail: float = DEFAULT_MIN_TAIL, output_dir=None,
) -> dict:
    triples = {}
    if lower or upper or empirical:
        if not (lower and upper and empirical):
            raise ConfigError("--lower, --upper and --empirical must be given together")
        triples["curve"] = (Path(lower), Path(upper), Path(empirical))
    else:
        if bounds_dir is None or sim_dir is None:
            raise ConfigError("give --bounds-dir and --sim-dir, or --lower/--upper/--empirical")
        bounds_dir, sim_dir = Path(bounds_dir), Path(sim_dir)
        for path in sorted(sim_dir.glob("*_empirical.*")):
            name = path.name.rsplit("_empirical.", 1)[0]
            lo, up = _find(bounds_dir, name, "lower"), _find(bounds_dir, name, "upper")
            if lo and up:
                triples[name] = (lo, up, path)
        if not triples:
            raise ConfigError(f"no matching <class>_lower/_upper/_empirical files in {bounds_dir}, {sim_dir}")
    report = {"min_tail": float(min_tail), "classes": {}, "violation_count": 0}
    for name, (lo, up, em) in triples.items():
        try:
            curves = [DelayCurve.load(p) for p in (lo, up, em)]
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load curves for {name}: {exc}") from None
        res = compare_curves(*curves, min_tail=min_tail)
        res["files"] = {"lower": str(lo), "upper": str(up), "empirical": str(em)}
        report["classes"][name] = res
        report["violation_count"] += res["violation_count"]
    if output_dir is not None:
        atomic_write(Path(output_dir) / "compare_report.json", _json_dump(report))
    if report["violation_count"]:
        raise BracketViolation(report)
    return report


# -- sweep ------------------------------------------------------------------

SWEEP_PARAMETERS = ("k", "bw_u", "n_u")


def _others_share(cfg: ExperimentConfig, target: str, current: dict, total) -> dict:
    others = [c.name for c in cfg.classes if c.name != target]
    weight = sum(current[o] for o in others)
    return {o: total * current[o] / weight for o in others} if weight > 0 else {}


def sweep_config(cfg: ExperimentConfig, parameter: str, value, target: str) -> ExperimentConfig:
    """Derive the config for one sweep point (raises InstabilityError if unstable).

    ``bw_u``/``n_u`` set the target class's bandwidth fraction / path count;
    the other classes split what is left in proportion to their current
    shares. Classes whose path count changes use all of their new paths.
    """
    cfg.class_named(target)
    if parameter == "k":
        classes = tuple(replace(c, k=int(value)) if c.name == target else c for c in cfg.classes)
        return replace(cfg, classes=classes).validated()
    if parameter == "bw_u":
        if not isinstance(cfg.policy, OrthogonalBandwidth):
            raise ConfigError("a bw_u sweep needs the orthogonal_bandwidth policy")
        v = float(value)
        fracs = {target: v, **_others_share(cfg, target, dict(cfg.policy.fractions), 1.0 - v)}
        return replace(cfg, policy=OrthogonalBandwidth(fracs)).validated()
    if parameter == "n_u":
        if not isinstance(cfg.policy, OrthogonalPath):
            raise ConfigError("an n_u sweep needs the orthogonal_path policy")
        v = int(value)
        rest = cfg.topology.n_paths - v
        share = _others_share(cfg, target, dict(cfg.policy.paths), rest)
        paths = {target: v, **{o: int(s) for o, s in share.items()}}
        leftover = rest - sum(paths[o] for o in share)
        for o in list(share)[:leftover]:
            paths[o] += 1
        classes = tuple(
            replace(c, n_alloc=None) if paths[c.name] != cfg.policy.paths[c.name] else c
            for c in cfg.classes
        )
        return replace(cfg, classes=classes, policy=OrthogonalPath(paths)).validated()
    raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")


def _fmt_value(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def cmd_sweep(
    cfg: ExperimentConfig, parameter: str, values, target: str | None = None,
    simulate: bool = False, jobs: int = 1,
) -> dict:
    target = target or cfg.classes[0].name
    out_dir = Path(cfg.output_dir)
    rows = []
    for value in values:
        try:
            point = sweep_config(cfg, parameter, value, target)
        except InstabilityError as exc:
            log.warning("sweep %s=%s skipped: %s", parameter, value, exc)
            rows.append((value, target, "", None, None, "unstable"))
            continue
        point = replace(point, output_dir=str(out_dir / f"{parameter}={_fmt_value(value)}"))
        curves = {name: dict(pair) for name, pair in compute_bounds(point).items()}
        cmd_bounds(point)
        if simulate:
            cmd_simulate(point, jobs=jobs)
            for name in curves:
                curves[name]["empirical"] = DelayCurve.load(
                    _find(Path(point.output_dir), name, "empirical")
                )
        for name, pair in curves.items():
            for kind, curve in pair.items():
                for r in point.reliability_targets:
                    try:
                        tau = achievable_latency(curve, r)
                        status = "ok"
                    except UnreachableReliabilityError:
                        tau, status = None, "unreachable"
                    rows.append((value, name, kind, r, tau, status))
    buf = io.StringIO()
    buf.write("# fhbounds sweep summary\n")
    buf.write(f"# metadata: {canonical_json({**_provenance(cfg, 'sweep'), 'parameter': parameter, 'target_class': target})}\n")
    buf.write("parameter,value,class,curve,reliability,achievable_latency_s,status\n")
    for value, name, kind, r, tau, status in rows:
        tau_s = "" if tau is None else format_float(tau)
        r_s = "" if r is None else format_float(r)
        buf.write(f"{parameter},{_fmt_value(value)},{name},{kind},{r_s},{tau_s},{status}\n")
    path = out_dir / f"sweep_{parameter}.csv"
    atomic_write(path, buf.getvalue())
    return {"summary": path, "rows": rows}


# -- recommend --------------------------------------------------------------


def recommendation_report(curve: DelayCurve, reliability: float, splits, scenarios) -> dict:
    verdicts = recommend_splits(curve, reliability, splits)
    best = recommended_split(verdicts)
    try:
        latency = achievable_latency(curve, reliability)
        reason = ""
    except UnreachableReliabilityError as exc:
        latency, reason = None, str(exc)
    return {
        "fronthaul_only": True,
        "reliability": float(reliability),
        "achievable_latency_s": latency,
        "unreachable_reason": reason,
        "recommended_split": best.name if best else None,
        "splits": [
            {**v.split.as_dict(), "feasible": v.feasible, "margin_s": v.margin, "reason": v.reason}
            for v in verdicts
        ],
        "scenarios": [
            {**v.scenario.as_dict(), "supported": v.supported, "achievable_latency_s": v.latency, "reason": v.reason}
            for v in match_scenarios(curve, scenarios)
        ],
        "curve": {"kind": curve.kind, "metadata": curve.metadata},
    }


def cmd_recommend(curve_path, reliability: float, splits_path=None, scenarios_path=None, output_dir=None) -> dict:
    try:
        curve = DelayCurve.load(curve_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load curve {curve_path}: {exc}") from None
    splits, scenarios = default_requirements()
    try:
        if splits_path:
            splits = load_requirements(splits_path)[0]
        if scenarios_path:
            scenarios = load_requirements(scenarios_path)[1]
    except (OSError, InvalidParameters) as exc:
        raise ConfigError(str(exc)) from None
    report = recommendation_report(curve, reliability, splits, scenarios)
    if output_dir is not None:
        atomic_write(Path(output_dir) / "recommendation.json", _json_dump(report))
    return report


def format_recommendation(report: dict) -> str:
    lines = []
    lat = report["achievable_latency_s"]
    lines.append(f"reliability {report['reliability']!r}: fronthaul latency "
                 + (f"{lat * 1e3:.4f} ms" if lat is not None else f"unreachable ({report['unreachable_reason']})"))
    lines.append(f"{'split':<12} {'budget ms':>10} {'feasible':>9} {'margin ms':>10}")
    for s in report["splits"]:
        margin = "" if s["margin_s"] is None else f"{s['margin_s'] * 1e3:.4f}"
        lines.append(f"{s['name']:<12} {s['one_way_latency_budget_s'] * 1e3:>10.4f} "
                     f"{'yes' if s['feasible'] else 'no':>9} {margin:>10}")
    lines.append(f"recommended split: {report['recommended_split'] or 'none'}")
    for sc in report["scenarios"]:
        lines.append(f"  {'supported  ' if sc['supported'] else 'unsupported'} {sc['name']}")
    lines.append("(latencies are fronthaul-only; scenario budgets are end-to-end)")
    return "\n".join(lines)


# -- argument parsing -------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment JSON, or an fhbounds output file")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int, help="base seed (overrides simulation.base_seed)")
    p.add_argument("--packets", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--tau-min", type=float)
    p.add_argument("--tau-max", type=float)
    p.add_argument("--tau-points", type=int)
    p.add_argument("--tau-spacing", choices=("log", "linear"))
    p.add_argument("--eps-trunc", type=float)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replications")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fhbounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fhbounds {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="write lower/upper bound curves per class")
    _add_common(p)

    p = sub.add_parser("simulate", help="run replications and write pooled empirical curves")
    _add_common(p)
    p.add_argument("--raw-samples", action="store_true", help="also write raw delays (.npy)")

    p = sub.add_parser("compare", help="check simulated curves lie between the bounds")
    p.add_argument("--bounds-dir")
    p.add_argument("--sim-dir")
    p.add_argument("--lower")
    p.add_argument("--upper")
    p.add_argument("--empirical")
    p.add_argument("--min-tail", type=float, default=DEFAULT_MIN_TAIL)
    p.add_argument("--output-dir")

    p = sub.add_parser("sweep", help="vary k, bw_u or n_u and tabulate achievable latency")
    _add_common(p)
    p.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--class", dest="target", help="class the parameter applies to (default: first)")
    p.add_argument("--simulate", action="store_true", help="also simulate every sweep point")

    p = sub.add_parser("recommend", help="recommend a functional split from a delay curve")
    p.add_argument("--curve", required=True)
    p.add_argument("--reliability", type=float, default=0.999999)
    p.add_argument("--splits", help="requirements JSON providing 'splits'")
    p.add_argument("--scenarios", help="requirements JSON providing 'scenarios'")
    p.add_argument("--output-dir")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        output_dir=args.output_dir,
        base_seed=args.seed,
        packets=args.packets,
        warmup=args.warmup,
        replications=args.replications,
        tau_min=args.tau_min,
        tau_max=args.tau_max,
        tau_points=args.tau_points,
        tau_spacing=args.tau_spacing,
        eps_trunc=args.eps_trunc,
        output_format=args.format,
        raw_samples=True if getattr(args, "raw_samples", False) else None,
    )


def _latency_table(cfg: ExperimentConfig, curves: dict) -> str:
    lines = [f"{'class':<10} {'curve':<16} " + " ".join(f"{r:>12.7g}" for r in cfg.reliability_targets)]
    for name, pair in curves.items():
        for kind, curve in pair.items():
            cells = []
            for r in cfg.reliability_targets:
                try:
                    cells.append(f"{achievable_latency(curve, r) * 1e3:>9.4f} ms")
                except UnreachableReliabilityError:
                    cells.append(f"{'n/a':>12}")
            lines.append(f"{name:<10} {curve.kind:<16} " + " ".join(cells))
    return "\n".join(lines)


def _parse_values(parameter: str, text: str) -> list:
    conv = float if parameter == "bw_u" else int
    try:
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse --values {text!r} for {parameter}") from None


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "bounds":
        cfg = _config_from_args(args)
        written = cmd_bounds(cfg)
        curves = {n: {w: DelayCurve.load(p) for w, p in d.items()} for n, d in written.items()}
        print(_latency_table(cfg, curves))
    elif args.command == "simulate":
        cfg = _config_from_args(args)
        written = cmd_simulate(cfg, jobs=args.jobs)
        curves = {n: {"empirical": DelayCurve.load(p)} for n, p in written.items() if n != "summary"}
        print(_latency_table(cfg, curves))
        print(f"summary: {written['summary']}")
    elif args.command == "compare":
        try:
            report = cmd_compare(
                args.bounds_dir, args.sim_dir, lower=args.lower, upper=args.upper,
                empirical=args.empirical, min_tail=args.min_tail, output_dir=args.output_dir,
            )
        except BracketViolation as exc:
            report = exc.report
            for name, res in report["classes"].items():
                for v in res["violations"]:
                    print(f"VIOLATION {name} tau={v['tau_seconds']:.6g}s {v['side']}: "
                          f"lower={v['lower']:.6g} emp={v['empirical']:.6g}±{v['half_width']:.3g} "
                          f"upper={v['upper']:.6g}")
            print(f"{report['violation_count']} violation(s)")
            return EXIT_VIOLATION
        for name, res in report["classes"].items():
            print(f"{name}: {res['checked_points']} points checked, 0 violations")
    elif args.command == "sweep":
        cfg = _config_from_args(args)
        res = cmd_sweep(cfg, args.parameter, _parse_values(args.parameter, args.values),
                        args.target, args.simulate, args.jobs)
        print(f"summary: {res['summary']}")
    elif args.command == "recommend":
        report = cmd_recommend(args.curve, args.reliability, args.splits, args.scenarios, args.output_dir)
        print(format_recommendation(report))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        code = run(argv)
    except InstabilityError as exc:
        print(f"fhbounds: unstable configuration: {exc}", file=sys.stderr)
        code = EXIT_UNSTABLE
    except (ConfigError, InvalidParameters) as exc:
        print(f"fhbounds: configuration error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
