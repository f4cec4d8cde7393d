"""Command-line entry point.

Four commands cover the pipeline end to end:

* ``generate``: sample a ground-truth SCM and write a dataset.
* ``discover``: learn a graph posterior from a CSV and write the point
  estimate, params checkpoint and run log.
* ``eval-estimators``: run the estimator-quality study (bootstrap variance,
  held-out NLL, incorrect-structure counts).
* ``benchmark``: run the structure-recovery benchmark over synthetic tasks.

Configuration comes from an optional JSON file plus flag overrides; flags
win. Every JSON artifact echoes the fully merged config, and feeding that
echo back through ``--config`` reproduces the run. Primary outputs are
byte-stable across reruns with the same config and seed; wall-clock timing
lives only in metadata.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .estimators import (
    ConjugateGaussian,
    EstimatorError,
    EstimatorKind,
    External,
    MlpBaseline,
)
from .graphs import graph_from_text, graph_to_text
from .harness import (
    BenchmarkTask,
    benchmark_report_name,
    benchmark_shd,
    bootstrap_report_name,
    bootstrap_variance_study,
    write_benchmark_report,
    write_bootstrap_report,
)
from .plots import plot_benchmark_report, plot_bootstrap_report, plot_run_log
from .policy import map_graph, save_params
from .ppo import PpoConfig, optimize, write_run_log
from .scm import (
    generate_dataset,
    load_csv,
    sample_er_graph,
    sample_mechanisms,
    save_csv,
    scm_to_json,
    split_dataset,
)
from .scoring import ScoreConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    """Bad or inconsistent configuration; maps to exit code 2."""


_SCM_KEYS = {
    "d": 5,
    "e": 5.0,
    "mechanism": "mlp",  # "mlp" or "linear"
    "hidden_width": 16,
    "weight_scale": 1.0,
    "noise_low": 0.4,
    "noise_high": 0.8,
}

_PPO_KEYS = {
    "iterations": 300,
    "samples_per_iter": 32,
    "clip_epsilon": 0.2,
    "learning_rate": 0.05,
    "epochs": 4,
    "baseline_decay": 0.9,
    "normalize_advantages": False,
    "entropy_coef": 0.0,
    "adaptive": False,
    "temperature": 1.0,
    "temperature_final": None,
}

_ESTIMATOR_KEYS = {
    "estimator": "conjugate",  # conjugate | mlp | external
    "endpoint": "",
    "penalty": None,  # None = default rate * log(n_est)
    "split_fraction": 0.8,
}

# parallelism defaults to the machine; 1 forces serial execution (results are
# identical either way, tasks are seeded up front)
_DEFAULT_JOBS = os.cpu_count() or 1

DEFAULTS = {
    "generate": {**_SCM_KEYS, "n": 2000, "seed": 0, "out": "out"},
    "discover": {
        "data": None,
        **_ESTIMATOR_KEYS,
        **_PPO_KEYS,
        "seed": 0,
        "jobs": _DEFAULT_JOBS,
        "out": "out",
    },
    "eval-estimators": {
        **_SCM_KEYS,
        "n_per_replicate": 500,
        "n_replicates": 30,
        "n_heldout": 10_000,
        "estimators": ["conjugate", "mlp"],
        "endpoint": "",
        "penalty": None,
        "include_incorrect": True,
        "seed": 0,
        "jobs": _DEFAULT_JOBS,
        "out": "out",
    },
    "benchmark": {
        **_SCM_KEYS,
        "n": 1000,
        "n_tasks": 10,
        "tasks": None,  # optional list of {"data": path, "truth": path}
        **_ESTIMATOR_KEYS,
        **_PPO_KEYS,
        "seed": 0,
        "jobs": _DEFAULT_JOBS,
        "out": "out",
    },
}


def merge_config(command: str, args: argparse.Namespace) -> dict:
    """defaults <- config file <- flags; unknown file keys are rejected."""
    merged = dict(DEFAULTS[command])
    if args.config is not None:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(merged)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        merged.update(loaded)
    for key in ("seed", "jobs", "estimator", "endpoint", "penalty", "out", "data"):
        value = getattr(args, key, None)
        if value is not None and key in merged:
            merged[key] = value
    return merged


def _estimator_kind(cfg: dict) -> EstimatorKind:
    name = cfg["estimator"]
    if name == "conjugate":
        return ConjugateGaussian()
    if name == "mlp":
        return MlpBaseline(seed=int(cfg["seed"]))
    if name == "external":
        if not cfg["endpoint"]:
            raise ConfigError("external estimator requires --endpoint")
        return External(cfg["endpoint"])
    raise ConfigError(f"unknown estimator {name!r}")


def _build_scm(cfg: dict, rng: np.random.Generator):
    d, e = int(cfg["d"]), float(cfg["e"])
    if d < 2:
        raise ConfigError("d must be at least 2")
    if not 0 <= e <= d * (d - 1) / 2:
        raise ConfigError(f"e={e} outside [0, {d * (d - 1) // 2}] for d={d}")
    if cfg["mechanism"] not in ("mlp", "linear"):
        raise ConfigError(f"unknown mechanism {cfg['mechanism']!r}")
    if not cfg["noise_low"] > 0 or cfg["noise_high"] < cfg["noise_low"]:
        raise ConfigError("noise range must satisfy 0 < noise_low <= noise_high")
    graph = sample_er_graph(d, e, rng)
    return sample_mechanisms(
        graph,
        hidden_width=int(cfg["hidden_width"]),
        weight_scale=float(cfg["weight_scale"]),
        rng=rng,
        mechanism=cfg["mechanism"],
        noise_range=(float(cfg["noise_low"]), float(cfg["noise_high"])),
    )


def _ppo_config(cfg: dict) -> PpoConfig:
    tf = cfg["temperature_final"]
    try:
        return PpoConfig(
            iterations=int(cfg["iterations"]),
            samples_per_iter=int(cfg["samples_per_iter"]),
            clip_epsilon=float(cfg["clip_epsilon"]),
            learning_rate=float(cfg["learning_rate"]),
            epochs=int(cfg["epochs"]),
            baseline_decay=float(cfg["baseline_decay"]),
            normalize_advantages=bool(cfg["normalize_advantages"]),
            entropy_coef=float(cfg["entropy_coef"]),
            adaptive=bool(cfg["adaptive"]),
            temperature=float(cfg["temperature"]),
            temperature_final=None if tf is None else float(tf),
            seed=int(cfg["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _score_config(cfg: dict) -> ScoreConfig:
    try:
        return ScoreConfig(
            estimator=_estimator_kind(cfg),
            penalty=None if cfg["penalty"] is None else float(cfg["penalty"]),
            split_fraction=float(cfg["split_fraction"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(cfg: dict) -> int:
    out = _out_dir(cfg)
    rng = np.random.default_rng(int(cfg["seed"]))
    scm = _build_scm(cfg, rng)
    data = generate_dataset(scm, int(cfg["n"]), rng)

    save_csv(data, out / "data.csv")
    (out / "scm.json").write_text(scm_to_json(scm))
    (out / "truth.txt").write_text(graph_to_text(scm.graph))
    _write_json(out / "config.json", {"command": "generate", "config": cfg})
    print(f"wrote data.csv truth.txt scm.json config.json to {out}")
    print(f"graph: d={scm.graph.d}, {scm.graph.n_edges} edges")
    return EXIT_OK


def cmd_discover(cfg: dict) -> int:
    if not cfg["data"]:
        raise ConfigError("discover needs a dataset path (positional DATA or config 'data')")
    out = _out_dir(cfg)
    try:
        data = load_csv(cfg["data"])
    except FileNotFoundError as exc:
        raise ConfigError(f"dataset not found: {cfg['data']}") from exc
    except ValueError as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from exc

    score_cfg = _score_config(cfg)
    ppo_cfg = _ppo_config(cfg)
    rng = np.random.default_rng(int(cfg["seed"]))
    split = split_dataset(data, score_cfg.split_fraction, rng)

    started = time.perf_counter()
    params, log = optimize(split, ppo_cfg, score_cfg)
    wall_seconds = time.perf_counter() - started
    estimate = map_graph(params)

    save_params(out / "params.txt", params)
    (out / "edges.txt").write_text(graph_to_text(estimate))
    write_run_log(out / "runlog.csv", log, include_wall_ms=False)
    plot_run_log(log, out / "runlog.png")
    _write_json(
        out / "metadata.json",
        {
            "command": "discover",
            "config": cfg,
            "wall_seconds": wall_seconds,
            "n_rows": data.n,
            "d": data.d,
            "edges_found": estimate.n_edges,
        },
    )
    print(f"wrote edges.txt params.txt runlog.csv runlog.png metadata.json to {out}")
    print(f"estimate: {estimate.n_edges} edges over {data.d} variables")
    return EXIT_OK


def cmd_eval_estimators(cfg: dict) -> int:
    if int(cfg["d"]) > 5:
        raise ConfigError("the full parent-set sweep is limited to d <= 5")
    out = _out_dir(cfg)
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    scm = _build_scm(cfg, rng)

    kinds: dict[str, EstimatorKind] = {}
    for name in cfg["estimators"]:
        kinds[name] = _estimator_kind({**cfg, "estimator": name})
    if not kinds:
        raise ConfigError("no estimators requested")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        reports = bootstrap_variance_study(
            scm,
            n_per_replicate=int(cfg["n_per_replicate"]),
            n_replicates=int(cfg["n_replicates"]),
            n_heldout=int(cfg["n_heldout"]),
            estimators=kinds,
            rng=rng,
            penalty=None if cfg["penalty"] is None else float(cfg["penalty"]),
            include_incorrect=bool(cfg["include_incorrect"]),
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    for label, report in reports.items():
        paths = write_bootstrap_report(out, report, cfg, seed)
        base = bootstrap_report_name(label, report.n_per_replicate, report.d, seed)
        plot_bootstrap_report(report, out / f"{base}.png")
        print(
            f"{label}: mean BV {report.mean_bv:.6g}, median BV {report.median_bv:.6g}, "
            f"mean NLL {report.mean_nll:.6g}"
            + (
                f", mean incorrect {report.mean_incorrect:.4g}"
                if report.mean_incorrect is not None
                else ""
            )
        )
        print(f"  -> {paths['csv'].name} {paths['json'].name} {base}.png")
    return EXIT_OK


def _load_tasks(cfg: dict, rng: np.random.Generator) -> list[BenchmarkTask]:
    if cfg["tasks"]:
        tasks = []
        for i, item in enumerate(cfg["tasks"]):
            if not isinstance(item, dict) or "data" not in item or "truth" not in item:
                raise ConfigError(f"task {i} must be an object with 'data' and 'truth' paths")
            try:
                data = load_csv(item["data"])
                truth = graph_from_text(Path(item["truth"]).read_text())
            except FileNotFoundError as exc:
                raise ConfigError(f"task {i}: {exc}") from exc
            except ValueError as exc:
                raise ConfigError(f"task {i}: {exc}") from exc
            if truth.d != data.d:
                raise ConfigError(f"task {i}: graph d={truth.d} but data d={data.d}")
            tasks.append(BenchmarkTask(data, truth, name=str(item["data"])))
        return tasks
    n_tasks = int(cfg["n_tasks"])
    if n_tasks < 1:
        raise ConfigError("n_tasks must be positive")
    tasks = []
    for i in range(n_tasks):
        scm = _build_scm(cfg, rng)
        data = generate_dataset(scm, int(cfg["n"]), rng)
        tasks.append(BenchmarkTask(data, scm.graph, name=f"synthetic-{i}"))
    return tasks


def cmd_benchmark(cfg: dict) -> int:
    out = _out_dir(cfg)
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    tasks = _load_tasks(cfg, rng)
    score_cfg = _score_config(cfg)
    ppo_cfg = _ppo_config(cfg)

    report = benchmark_shd(tasks, ppo_cfg, score_cfg, rng, jobs=int(cfg["jobs"]))
    label = cfg["estimator"]
    n = int(cfg["n"]) if not cfg["tasks"] else tasks[0].data.n
    d = tasks[0].truth.d
    paths = write_benchmark_report(out, report, cfg, label, n, d, seed)
    base = benchmark_report_name(label, n, d, seed)
    plot_benchmark_report(report, out / f"{base}.png")
    print(
        f"mean SHD {report.mean_shd:.3f} "
        f"(95% CI {report.ci_low:.3f}, {report.ci_high:.3f}) over {len(report.per_task)} tasks"
        + (f", {len(report.excluded)} excluded" if report.excluded else "")
    )
    print(f"  -> {paths['csv'].name} {paths['json'].name} {base}.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dagsearch",
        description="Score-based causal discovery with a learned DAG posterior.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("--jobs", type=int, help="parallel workers (1 = serial)")
        p.add_argument(
            "--estimator",
            choices=["conjugate", "mlp", "external"],
            help="likelihood backend",
        )
        p.add_argument("--endpoint", help="external bridge address (tcp://host:port or command)")
        p.add_argument("--lambda", dest="penalty", type=float, help="edge penalty")
        p.add_argument("--out", help="output directory")

    p_gen = sub.add_parser("generate", help="sample a synthetic SCM and dataset")
    add_common(p_gen)

    p_disc = sub.add_parser("discover", help="learn a graph from a dataset CSV")
    p_disc.add_argument("data", nargs="?", help="dataset CSV path")
    add_common(p_disc)

    p_eval = sub.add_parser("eval-estimators", help="estimator-quality study")
    add_common(p_eval)

    p_bench = sub.add_parser("benchmark", help="structure-recovery benchmark")
    add_common(p_bench)

    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "discover": cmd_discover,
    "eval-estimators": cmd_eval_estimators,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = merge_config(args.command, args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimatorError, RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
