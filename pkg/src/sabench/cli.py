"""Experiment harness CLI.

Subcommands:

* ``run <config>``: execute every (algorithm variant, seed) cell of a config,
  writing one trace CSV per cell plus a ``summary.json``.
* ``validate <config>``: parse and fully validate, touching nothing on disk.
* ``compare <configA> <configB>``: run both grids and print a joint table.

Exit codes: 0 success, 1 configuration/validation error, 2 divergence in at
least one cell, 3 I/O failure.  Every cell is a pure function of
(config, seed), so reruns produce byte-identical outputs and ``--jobs`` only
changes wall-clock time, never results.
"""

import argparse
import concurrent.futures
import csv
import json
import pathlib
import re
import sys
from dataclasses import dataclass

import numpy as np
import yaml

from .algorithms import CISA, DSA, DSAS, GCSA, DivergenceError, StopRule, run
from .core import INIT_DOMAIN, GainSchedule, substream
from .estimators import PerturbSchedule
from .graph import (
    complete_graph,
    dynamic_edge_sampler,
    graph_from_edges,
    load_edge_list,
    ring_graph,
)
from .problems import (
    fourier_features,
    make_regression_field,
    make_separable_quadratic,
    make_surveillance,
    polynomial_features,
    run_tracking,
)

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "run_grid", "emit_trace", "main"]

TRACE_HEADER = ["k", "gain", "error", "consensus_error", "loss", "loss_evals", "grad_evals"]

_PAIRING_RULE = (
    "gcsa and dsa_s pair with a cyclic-framework problem (one global loss over the "
    "block-partitioned vector); dsa and cisa pair with a distributed-framework problem "
    "(per-agent loss terms). separable_quadratic satisfies both; regression_field is "
    "distributed-only; surveillance is cyclic-only and driven by gcsa."
)

# which frameworks each problem kind can expose
_PROBLEM_FORMS = {
    "separable_quadratic": {"cyclic", "distributed"},
    "regression_field": {"distributed"},
    "surveillance": {"cyclic"},
}
_ALGO_NEEDS = {"gcsa": "cyclic", "dsa_s": "cyclic", "dsa": "distributed", "cisa": "distributed"}


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending key or rule."""


@dataclass
class ExperimentConfig:
    """A validated experiment: problem x algorithm variants x seeds."""

    problem: dict
    algorithms: list
    init: dict
    stop: StopRule
    seeds: list
    out_dir: str | None
    path: str


# ---------------------------------------------------------------------------
# parsing


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys with a line number."""


def _strict_mapping(loader, node):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in mapping:
            raise ConfigError(f"line {key_node.start_mark.line + 1}: duplicate key {key!r}")
        mapping[key] = loader.construct_object(value_node, deep=True)
    return mapping


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _strict_mapping)


def _as_section(node, context):
    if not isinstance(node, dict):
        raise ConfigError(f"'{context}' must be a mapping, got {type(node).__name__}")
    return dict(node)


def _reject_unknown(mapping, context):
    for key in mapping:
        raise ConfigError(f"unknown key '{context}.{key}'")


def _take(mapping, key, context, required=False, default=None):
    if key in mapping:
        return mapping.pop(key)
    if required:
        raise ConfigError(f"missing required key '{context}.{key}'")
    return default


def _gain_schedule(node, context):
    node = _as_section(node, context)
    kind = _take(node, "kind", context, required=True)
    a = _take(node, "a", context, required=True)
    try:
        if kind == "constant":
            _reject_unknown(node, context)
            return GainSchedule.constant(a)
        if kind == "decay":
            stability = _take(node, "stability", context, default=0.0)
            alpha = _take(node, "alpha", context, default=1.0)
            _reject_unknown(node, context)
            return GainSchedule.decay(a, stability, alpha)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{context}: {err}") from None
    raise ConfigError(f"{context}.kind must be 'constant' or 'decay', got {kind!r}")


def _perturb_schedule(node, context):
    if node is None:
        return None
    node = _as_section(node, context)
    kind = _take(node, "kind", context, required=True)
    c = _take(node, "c", context, required=True)
    try:
        if kind == "constant":
            _reject_unknown(node, context)
            return PerturbSchedule.constant(c)
        if kind == "decay":
            gamma = _take(node, "gamma", context, default=0.101)
            _reject_unknown(node, context)
            return PerturbSchedule.decay(c, gamma)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{context}: {err}") from None
    raise ConfigError(f"{context}.kind must be 'constant' or 'decay', got {kind!r}")


def _validate_problem(node):
    spec = _as_section(node, "problem")
    kind = _take(spec, "kind", "problem", required=True)
    if kind not in _PROBLEM_FORMS:
        raise ConfigError(
            f"unknown problem kind {kind!r}; choose one of {sorted(_PROBLEM_FORMS)}"
        )
    out = {"kind": kind}
    ctx = "problem"
    if kind == "separable_quadratic":
        out["blocks"] = _take(spec, "blocks", ctx, required=True)
        out["block_optima"] = _take(spec, "block_optima", ctx)
        out["curvatures"] = _take(spec, "curvatures", ctx)
        out["noise_sigma"] = _take(spec, "noise_sigma", ctx, default=0.0)
    elif kind == "regression_field":
        out["agents"] = _take(spec, "agents", ctx)
        out["locations"] = _take(spec, "locations", ctx)
        if out["agents"] is None and out["locations"] is None:
            raise ConfigError("missing required key 'problem.agents' (or explicit 'problem.locations')")
        out["features"] = _take(spec, "features", ctx, default={"kind": "fourier"})
        out["true_theta"] = _take(spec, "true_theta", ctx, required=True)
        out["samples_per_agent"] = _take(spec, "samples_per_agent", ctx, default=50)
        out["noise_sigma"] = _take(spec, "noise_sigma", ctx, default=0.0)
        feat = _as_section(out["features"], "problem.features")
        fkind = _take(feat, "kind", "problem.features", required=True)
        if fkind not in ("fourier", "polynomial"):
            raise ConfigError(f"problem.features.kind must be 'fourier' or 'polynomial', got {fkind!r}")
        _reject_unknown(feat, "problem.features")
        out["features"] = {"kind": fkind}
    else:  # surveillance
        agents = _as_section(_take(spec, "agents", ctx, required=True), "problem.agents")
        out["positions"] = _take(agents, "positions", "problem.agents", required=True)
        out["speed"] = _take(agents, "speed", "problem.agents", default=0.05)
        out["heading_dim"] = _take(agents, "heading_dim", "problem.agents", default=1)
        _reject_unknown(agents, "problem.agents")
        targets = _take(spec, "targets", ctx, required=True)
        if not isinstance(targets, list) or not targets:
            raise ConfigError("'problem.targets' must be a nonempty list of waypoint tables")
        waypoints = []
        for j, t in enumerate(targets):
            if isinstance(t, dict):
                t = dict(t)
                wp = _take(t, "waypoints", f"problem.targets[{j}]", required=True)
                _reject_unknown(t, f"problem.targets[{j}]")
            else:
                wp = t
            waypoints.append(wp)
        out["targets"] = waypoints
        out["detection_radius"] = _take(spec, "detection_radius", ctx, required=True)
        out["measurement_noise_cov"] = _take(spec, "measurement_noise_cov", ctx)
        out["epsilon"] = _take(spec, "epsilon", ctx, default=1e-3)
        out["detection_noise"] = _take(spec, "detection_noise", ctx, default=0.05)
    _reject_unknown(spec, ctx)
    return out


def _validate_algorithm(node, index, problem_kind):
    ctx = f"algorithms[{index}]"
    spec = _as_section(node, ctx)
    kind = _take(spec, "kind", ctx, required=True)
    if kind not in _ALGO_NEEDS:
        raise ConfigError(f"unknown algorithm kind {kind!r}; choose one of {sorted(_ALGO_NEEDS)}")
    need = _ALGO_NEEDS[kind]
    if need not in _PROBLEM_FORMS[problem_kind]:
        raise ConfigError(
            f"{ctx}: '{kind}' cannot drive a '{problem_kind}' problem. {_PAIRING_RULE}"
        )
    if problem_kind == "surveillance" and kind != "gcsa":
        raise ConfigError(
            f"{ctx}: the surveillance family is tracked by gcsa sweeps only. {_PAIRING_RULE}"
        )
    out = {"kind": kind}
    out["label"] = _take(spec, "label", ctx)
    out["gain"] = _gain_schedule(_take(spec, "gain", ctx, required=True), f"{ctx}.gain")
    if kind in ("gcsa", "dsa_s"):
        out["estimator"] = _take(spec, "estimator", ctx, default="sg")
        out["perturb"] = _perturb_schedule(_take(spec, "perturb", ctx), f"{ctx}.perturb")
        if out["estimator"] not in ("sg", "fdsa", "spsa"):
            raise ConfigError(f"{ctx}.estimator must be sg, fdsa or spsa, got {out['estimator']!r}")
        if out["estimator"] == "sg" and out["perturb"] is not None:
            raise ConfigError(f"{ctx}.perturb: the direct gradient estimator takes no perturbation schedule")
        if out["estimator"] != "sg" and out["perturb"] is None:
            raise ConfigError(f"{ctx}: estimator '{out['estimator']}' requires a perturb schedule")
        if (out["gain"].kind == "decay" and out["perturb"] is not None
                and out["perturb"].kind == "decay"
                and not out["perturb"].gamma < out["gain"].alpha):
            raise ConfigError(
                f"{ctx}: perturbation decay gamma={out['perturb'].gamma} must be smaller "
                f"than gain decay alpha={out['gain'].alpha}"
            )
        if problem_kind == "surveillance" and out["estimator"] == "sg":
            raise ConfigError(
                f"{ctx}: surveillance exposes loss measurements only; use fdsa or spsa"
            )
    if kind in ("dsa", "dsa_s"):
        out["graph"] = _validate_graph(_take(spec, "graph", ctx, required=True), f"{ctx}.graph")
    _reject_unknown(spec, ctx)
    return out


def _validate_graph(node, context):
    spec = _as_section(node, context)
    kind = _take(spec, "kind", context, required=True)
    out = {"kind": kind}
    if kind in ("ring", "complete", "identity"):
        pass
    elif kind == "edge_list":
        out["path"] = _take(spec, "path", context, required=True)
    elif kind == "dynamic":
        out["base"] = _validate_graph(
            _take(spec, "base", context, default={"kind": "complete"}), f"{context}.base")
        out["activation_prob"] = _take(spec, "activation_prob", context, required=True)
    else:
        raise ConfigError(
            f"{context}.kind must be one of ring, complete, identity, edge_list, dynamic; got {kind!r}"
        )
    _reject_unknown(spec, context)
    return out


def _validate_init(node, problem_kind):
    spec = _as_section(node if node is not None else {}, "init")
    out = {}
    if problem_kind == "surveillance":
        out["headings"] = _take(spec, "headings", "init")
        _reject_unknown(spec, "init")
        return out
    out["start"] = _take(spec, "start", "init")
    out["distance"] = _take(spec, "distance", "init")
    out["spread"] = _take(spec, "spread", "init", default=0.0)
    if out["start"] is not None and out["distance"] is not None:
        raise ConfigError("init.start and init.distance are mutually exclusive")
    _reject_unknown(spec, "init")
    return out


def _validate_stop(node, problem_kind):
    spec = _as_section(node, "stop")
    fields = {
        "max_iterations": _take(spec, "max_iterations", "stop"),
        "measurement_budget": _take(spec, "measurement_budget", "stop"),
        "target_error": _take(spec, "target_error", "stop"),
    }
    _reject_unknown(spec, "stop")
    if problem_kind == "surveillance":
        if fields["max_iterations"] is None:
            raise ConfigError("missing required key 'stop.max_iterations' (surveillance runs for a fixed number of time steps)")
        if fields["measurement_budget"] is not None or fields["target_error"] is not None:
            raise ConfigError("stop: surveillance supports max_iterations only (no optimum, open-ended tracking)")
    try:
        return StopRule(**fields)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"stop: {err}") from None


def _validate_seeds(node):
    if not isinstance(node, list) or not node:
        raise ConfigError("'seeds' must be a nonempty list of integers")
    seeds = []
    for s in node:
        if not isinstance(s, int) or isinstance(s, bool):
            raise ConfigError(f"'seeds' must be integers, got {s!r}")
        seeds.append(s)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("'seeds' contains duplicates; every cell needs a distinct seed")
    return seeds


_LABEL_OK = re.compile(r"^[A-Za-z0-9._-]+$")


def _resolve_labels(algorithms):
    labels = []
    for spec in algorithms:
        label = spec["label"]
        if label is not None:
            if not _LABEL_OK.match(str(label)):
                raise ConfigError(f"label {label!r} may use letters, digits, dot, dash, underscore only")
            label = str(label)
        else:
            label = spec["kind"]
            if spec.get("estimator"):
                label = f"{label}-{spec['estimator']}"
        labels.append(label)
    seen = {}
    for i, label in enumerate(labels):
        if label in seen:
            if algorithms[i]["label"] is not None:
                raise ConfigError(f"duplicate algorithm label {label!r}")
            seen[label] += 1
            labels[i] = f"{label}-{seen[label]}"
        else:
            seen[label] = 1
    for spec, label in zip(algorithms, labels):
        spec["label"] = label


def parse_config(path):
    """Load, validate, and normalize an experiment config.

    Raises :class:`ConfigError` naming the first offending key; a dry build
    of the problem and every algorithm variant runs here so that ``validate``
    catches everything ``run`` would.
    """
    path = str(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    try:
        doc = yaml.load(text, Loader=_StrictLoader)
    except ConfigError:
        raise
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: malformed config: {err}") from None
    doc = _as_section(doc, "config")

    problem = _validate_problem(_take(doc, "problem", "config", required=True))
    algos_node = _take(doc, "algorithms", "config")
    single = _take(doc, "algorithm", "config")
    if (algos_node is None) == (single is None):
        raise ConfigError("give exactly one of 'algorithm' (mapping) or 'algorithms' (list)")
    if single is not None:
        algos_node = [single]
    if not isinstance(algos_node, list) or not algos_node:
        raise ConfigError("'algorithms' must be a nonempty list")
    algorithms = [_validate_algorithm(a, i, problem["kind"]) for i, a in enumerate(algos_node)]
    _resolve_labels(algorithms)
    init = _validate_init(_take(doc, "init", "config"), problem["kind"])
    stop = _validate_stop(_take(doc, "stop", "config", required=True), problem["kind"])
    seeds = _validate_seeds(_take(doc, "seeds", "config", required=True))
    output = _take(doc, "output", "config")
    out_dir = None
    if output is not None:
        output = _as_section(output, "output")
        out_dir = _take(output, "dir", "output")
        _reject_unknown(output, "output")
    _reject_unknown(doc, "config")

    config = ExperimentConfig(problem, algorithms, init, stop, seeds, out_dir, path)
    _dry_build(config)
    return config


def _dry_build(config):
    # Build the problem and every variant once so bad numerics (singular
    # covariance, nonpositive curvature, unreadable edge list) fail in
    # validate, not mid-grid.
    try:
        problem = _build_problem(config.problem, config.seeds[0])
        for spec in config.algorithms:
            if config.problem["kind"] != "surveillance":
                _build_algorithm(spec, problem, config.seeds[0])
                _build_init(config.init, problem, spec["kind"], config.seeds[0])
            elif config.init.get("headings") is not None:
                arr = np.asarray(config.init["headings"], dtype=float)
                if arr.shape != (problem.dim,):
                    raise ValueError(
                        f"init.headings has shape {arr.shape}, scenario needs ({problem.dim},)"
                    )
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None


# ---------------------------------------------------------------------------
# building runtime objects from validated specs


def _build_problem(spec, seed):
    kind = spec["kind"]
    if kind == "separable_quadratic":
        return make_separable_quadratic(
            spec["blocks"], spec["block_optima"], spec["curvatures"], spec["noise_sigma"])
    if kind == "regression_field":
        locations = spec["locations"]
        if locations is None:
            a = int(spec["agents"])
            locations = [2.0 * np.pi * i / a for i in range(a)]
        elif spec["agents"] is not None and len(locations) != int(spec["agents"]):
            raise ConfigError(
                f"problem.locations has {len(locations)} entries for agents={spec['agents']}")
        dim = len(spec["true_theta"])
        fmap = fourier_features(dim) if spec["features"]["kind"] == "fourier" \
            else polynomial_features(dim)
        return make_regression_field(
            len(locations), locations, fmap, spec["true_theta"],
            spec["samples_per_agent"], spec["noise_sigma"], seed)
    positions = np.asarray(spec["positions"], dtype=float)
    if positions.ndim != 2:
        raise ConfigError(f"problem.agents.positions must be a list of [x, y] pairs")
    return make_surveillance(
        positions.shape[0],
        len(spec["targets"]),
        positions,
        spec["targets"],
        spec["detection_radius"],
        spec["measurement_noise_cov"],
        spec["epsilon"],
        speed=spec["speed"],
        heading_dim=spec["heading_dim"],
        detection_noise=spec["detection_noise"],
    )


def _build_graph(spec, num_agents, seed):
    kind = spec["kind"]
    if kind == "ring":
        return ring_graph(num_agents)
    if kind == "complete":
        return complete_graph(num_agents)
    if kind == "identity":
        return graph_from_edges(num_agents, [])
    if kind == "edge_list":
        return load_edge_list(spec["path"], num_agents)
    base = _build_graph(spec["base"], num_agents, seed)
    return dynamic_edge_sampler(base, spec["activation_prob"], seed)


def _build_algorithm(spec, problem, seed):
    kind = spec["kind"]
    if kind == "gcsa":
        return GCSA(spec["gain"], spec["estimator"], spec["perturb"])
    if kind == "cisa":
        return CISA(spec["gain"])
    graph = _build_graph(spec["graph"], problem.num_agents, seed)
    if kind == "dsa":
        return DSA(spec["gain"], graph)
    return DSAS(spec["gain"], graph, spec["estimator"], spec["perturb"])


def _build_init(init, problem, algo_kind, seed):
    multi = algo_kind in ("dsa", "dsa_s")
    base = None
    if init.get("start") is not None:
        base = np.asarray(init["start"], dtype=float)
        if base.shape != (problem.dim,):
            raise ConfigError(f"init.start has shape {base.shape}, problem needs ({problem.dim},)")
    elif init.get("distance") is not None:
        if problem.true_optimum is None:
            raise ConfigError("init.distance needs a problem with a known optimum; use init.start")
        direction = np.ones(problem.dim) / np.sqrt(problem.dim)
        base = problem.true_optimum + float(init["distance"]) * direction
    if not multi:
        return base
    spread = float(init.get("spread") or 0.0)
    if base is None:
        return None
    if spread == 0.0:
        return base
    rows = [base + spread * substream(seed, INIT_DOMAIN, i).standard_normal(problem.dim)
            for i in range(problem.num_agents)]
    return np.stack(rows)


# ---------------------------------------------------------------------------
# execution and reporting


def _fmt(x):
    return "" if x is None else format(float(x), ".17g")


def emit_trace(trace, path):
    """Write a trace as CSV; see TRACE_HEADER for the column order."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for r in trace.records:
                writer.writerow([r.k, _fmt(r.gain), _fmt(r.error), _fmt(r.consensus_error),
                                 _fmt(r.loss), r.loss_evals, r.grad_evals])
    except OSError as err:
        raise OSError(f"cannot write trace to {path}: {err}") from None


def _run_cell(config, variant_index, seed, out_dir):
    spec = config.algorithms[variant_index]
    problem = _build_problem(config.problem, seed)
    status = "ok"
    if config.problem["kind"] == "surveillance":
        trace = run_tracking(
            problem,
            steps=config.stop.max_iterations,
            seed=seed,
            gain=spec["gain"],
            estimator=spec["estimator"],
            perturb=spec["perturb"],
            init_headings=config.init.get("headings"),
        )
    else:
        algorithm = _build_algorithm(spec, problem, seed)
        init = _build_init(config.init, problem, spec["kind"], seed)
        try:
            trace = run(algorithm, problem, config.stop, seed, init)
        except DivergenceError as err:
            trace = err.trace
            status = "diverged"
    trace_name = f"{spec['label']}_seed{seed}.csv"
    emit_trace(trace, pathlib.Path(out_dir) / trace_name)
    final = trace.final
    return {
        "label": spec["label"],
        "seed": seed,
        "status": status,
        "iterations": trace.iterations,
        "final_error": final.error,
        "final_consensus_error": final.consensus_error,
        "final_loss": final.loss,
        "loss_evals": final.loss_evals,
        "grad_evals": final.grad_evals,
        "trace": trace_name,
    }


def _aggregate(rows):
    by_label = {}
    for row in rows:
        by_label.setdefault(row["label"], []).append(row)
    out = {}
    for label, group in sorted(by_label.items()):
        ok = [r for r in group if r["status"] == "ok"]
        entry = {
            "seeds": len(group),
            "diverged": len(group) - len(ok),
        }
        for metric in ("final_error", "final_consensus_error", "final_loss"):
            vals = [r[metric] for r in ok]
            if vals and all(v is not None for v in vals):
                q25, q50, q75 = np.percentile(vals, [25, 50, 75])
                entry[metric] = {"median": float(q50), "iqr": float(q75 - q25)}
            else:
                entry[metric] = None
        totals = [r["loss_evals"] + r["grad_evals"] for r in ok]
        if totals:
            q25, q50, q75 = np.percentile(totals, [25, 50, 75])
            entry["total_measurements"] = {"median": float(q50), "iqr": float(q75 - q25)}
        else:
            entry["total_measurements"] = None
        out[label] = entry
    return out


def run_grid(config, out_dir, jobs=1, quiet=False, stream=None):
    """Execute every (variant, seed) cell; returns the summary report dict.

    Cells run independently (in processes when ``jobs > 1``); traces and the
    summary land in ``out_dir``.  Divergent cells are recorded with status
    "diverged" and do not abort the rest of the grid.
    """
    stream = stream if stream is not None else sys.stdout
    out_path = pathlib.Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    cells = [(vi, seed) for vi in range(len(config.algorithms)) for seed in config.seeds]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_cell, config, vi, seed, out_path): (vi, seed)
                       for vi, seed in cells}
            results = {}
            for fut in concurrent.futures.as_completed(futures):
                vi, seed = futures[fut]
                results[(vi, seed)] = fut.result()
                if not quiet:
                    row = results[(vi, seed)]
                    print(f"  {row['label']} seed={seed}: {row['status']}", file=stream)
        rows = [results[cell] for cell in cells]
    else:
        rows = []
        for vi, seed in cells:
            row = _run_cell(config, vi, seed, out_path)
            rows.append(row)
            if not quiet:
                print(f"  {row['label']} seed={seed}: {row['status']}", file=stream)
    report = {
        "config": config.path,
        "runs": rows,
        "aggregates": _aggregate(rows),
    }
    summary_path = out_path / "summary.json"
    try:
        with open(summary_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as err:
        raise OSError(f"cannot write summary to {summary_path}: {err}") from None
    return report


def _print_aggregate_table(reports, stream):
    header = f"{'label':<28} {'seeds':>5} {'div':>4} {'median err':>12} {'median cons':>12} {'median meas':>12}"
    print(header, file=stream)
    print("-" * len(header), file=stream)

    def cell(agg, metric):
        entry = agg.get(metric)
        return f"{entry['median']:.4g}" if entry else "-"

    for name, report in reports:
        for label, agg in report["aggregates"].items():
            shown = f"{name}:{label}" if name else label
            print(
                f"{shown:<28} {agg['seeds']:>5} {agg['diverged']:>4} "
                f"{cell(agg, 'final_error'):>12} {cell(agg, 'final_consensus_error'):>12} "
                f"{cell(agg, 'total_measurements'):>12}",
                file=stream,
            )


def _default_out_dir(config_path):
    return pathlib.Path("runs") / pathlib.Path(config_path).stem


def _exit_code(report):
    return 2 if any(r["status"] == "diverged" for r in report["runs"]) else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="sabench",
        description="Run seeded multi-agent stochastic-approximation benchmark grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config's full grid")
    p_run.add_argument("config")
    p_validate = sub.add_parser("validate", help="check a config without running it")
    p_validate.add_argument("config")
    p_compare = sub.add_parser("compare", help="run two configs and print a joint table")
    p_compare.add_argument("config_a")
    p_compare.add_argument("config_b")
    for p in (p_run, p_compare):
        p.add_argument("--out-dir", default=None, help="directory for traces and summaries")
        p.add_argument("--jobs", type=int, default=1, help="concurrent replicate processes")
        p.add_argument("--quiet", action="store_true", help="suppress per-cell progress")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    try:
        if args.command == "validate":
            config = parse_config(args.config)
            cells = len(config.algorithms) * len(config.seeds)
            print(f"ok: {args.config} ({len(config.algorithms)} variant(s) x "
                  f"{len(config.seeds)} seed(s) = {cells} cells)")
            return 0

        if args.command == "run":
            config = parse_config(args.config)
            out_dir = args.out_dir or config.out_dir or _default_out_dir(args.config)
            if not args.quiet:
                print(f"running {args.config} -> {out_dir}")
            report = run_grid(config, out_dir, jobs=max(1, args.jobs), quiet=args.quiet)
            if not args.quiet:
                _print_aggregate_table([("", report)], sys.stdout)
            return _exit_code(report)

        # compare
        config_a = parse_config(args.config_a)
        config_b = parse_config(args.config_b)
        base = pathlib.Path(args.out_dir) if args.out_dir else pathlib.Path("runs") / "compare"
        name_a = pathlib.Path(args.config_a).stem
        name_b = pathlib.Path(args.config_b).stem
        if name_b == name_a:
            name_b += "-b"
        report_a = run_grid(config_a, base / name_a, jobs=max(1, args.jobs), quiet=args.quiet)
        report_b = run_grid(config_b, base / name_b, jobs=max(1, args.jobs), quiet=args.quiet)
        _print_aggregate_table([(name_a, report_a), (name_b, report_b)], sys.stdout)
        return max(_exit_code(report_a), _exit_code(report_b))
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
