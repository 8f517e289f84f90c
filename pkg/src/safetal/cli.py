"""Command-line harness.

Subcommands: `run` (experiments to per-iteration CSVs plus summary rows),
`gen-data` (dataset export), `theory-bound` (exploration-bound report), and
`report` (cross-seed aggregation with rendered figures).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datasets, metrics, safe_loop, theory
from .kernels import KernelFamily
from .transfer import ConfigurationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

BENCHMARKS = ("gp1d", "gp2d", "branin", "hartmann3")
METHODS = ("sal", "full_hgp", "full_lmc", "eff_hgp")

_KERNEL_NAMES = {
    "rbf": KernelFamily.RBF,
    "matern12": KernelFamily.MATERN12,
    "matern32": KernelFamily.MATERN32,
    "matern52": KernelFamily.MATERN52,
}


@dataclass
class ExperimentConfig:
    benchmark: str
    method: str
    seeds: list
    n_source: int = None
    n_init: int = None
    n_query: int = None
    n_pool: int = None
    beta: float = 4.0
    noisy_safe_set: bool = True
    refit_every: int = 1
    threshold: float = 0.0
    out: str = "results"

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.benchmark!r}")
        if self.method not in METHODS:
            if self.method == "eff_lmc":
                raise ValueError(
                    "unsupported combination: modular fitting with the "
                    "coregionalization kernel is rejected")
            raise ValueError(f"unknown method {self.method!r}")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.refit_every < 1:
            raise ValueError("refit_every must be a positive count")
        for name in ("n_source", "n_init", "n_query", "n_pool"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.seeds:
            raise ValueError("at least one seed required")


_CONFIG_PARSERS = {
    "benchmark": str,
    "method": str,
    "seed": None,       # handled specially (comma list)
    "seeds": None,
    "n_source": int,
    "n_init": int,
    "n_query": int,
    "n_pool": int,
    "beta": float,
    "noisy_safe_set": None,  # boolean
    "refit_every": int,
    "threshold": float,
    "out": str,
}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def parse_config(path) -> ExperimentConfig:
    """Flat `key = value` text with '#' comments; unknown keys rejected."""
    fields: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _CONFIG_PARSERS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in ("seed", "seeds"):
                fields["seeds"] = [int(v) for v in raw.split(",") if v.strip()]
            elif key == "noisy_safe_set":
                fields[key] = _parse_bool(raw)
            else:
                fields[key] = _CONFIG_PARSERS[key](raw)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: invalid value for {key!r}: {exc}")
    for required in ("benchmark", "method", "seeds"):
        if required not in fields:
            raise ValueError(f"{path}: missing required key {required!r}")
    return ExperimentConfig(**fields)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _iteration_header(D: int, J: int) -> list:
    return (["iter", "query_index"] + [f"x{d + 1}" for d in range(D)]
            + ["y"] + [f"z{j + 1}" for j in range(J)]
            + ["safe_truth", "safe_set_size", "rmse", "tp_rate", "fp_rate",
               "region_label", "fit_seconds", "status"])


def _write_trace_csv(path, trace: safe_loop.ExperimentTrace, D: int, J: int):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_iteration_header(D, J))
        for r in trace.records:
            writer.writerow(
                [r.iteration, r.query_index]
                + [repr(float(v)) for v in r.x]
                + [repr(float(r.y))]
                + [repr(float(v)) for v in r.z]
                + [str(bool(r.was_safe)).lower(), r.safe_set_size,
                   repr(float(r.rmse)), repr(float(r.tp_rate)),
                   repr(float(r.fp_rate)),
                   "" if r.region_label is None else r.region_label,
                   repr(float(r.fit_seconds)), trace.status.value])


def _run_driver(method: str, bench, cfg: safe_loop.LoopConfig):
    if method == "sal":
        return safe_loop.run_sal(bench, cfg)
    if method == "full_hgp":
        return safe_loop.run_full_transfer(bench, cfg, variant="hgp")
    if method == "full_lmc":
        return safe_loop.run_full_transfer(bench, cfg, variant="lmc")
    return safe_loop.run_modular_transfer(bench, cfg)


def _summarize_trace(trace: safe_loop.ExperimentTrace, bench):
    last = trace.records[-1] if trace.records else None
    explored = ""
    if bench.region_labeling is not None and trace.records:
        explored = metrics.count_explored_regions(
            [r.x for r in trace.records], bench.region_labeling,
            bench.geometry)
    return {
        "final_rmse": "" if last is None else last.rmse,
        "final_tp_rate": "" if last is None else last.tp_rate,
        "final_fp_rate": "" if last is None else last.fp_rate,
        "safe_query_ratio": ("" if not trace.records else
                             metrics.safe_query_ratio(trace.safe_flags())),
        "explored_regions": explored,
        "last_fit_seconds": "" if last is None else last.fit_seconds,
        "status": trace.status.value,
    }


def cmd_run(config: ExperimentConfig, keep_going: bool = False) -> int:
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / f"{config.benchmark}_{config.method}_summary.csv"
    summary_fields = ["benchmark", "method", "seed", "n_queries",
                      "final_rmse", "final_tp_rate", "final_fp_rate",
                      "safe_query_ratio", "explored_regions",
                      "last_fit_seconds", "status"]
    exit_code = EXIT_OK
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=summary_fields)
        writer.writeheader()
        for seed in config.seeds:
            bench = datasets.build_benchmark(
                config.benchmark, seed, n_source=config.n_source,
                n_init=config.n_init, n_pool=config.n_pool)
            sizes = datasets.DEFAULT_SIZES[config.benchmark]
            n_query = config.n_query if config.n_query is not None \
                else sizes["n_query"]
            loop_cfg = safe_loop.LoopConfig(
                n_query=n_query, beta=config.beta,
                noisy_mode=config.noisy_safe_set,
                refit_every=config.refit_every, seed=seed)
            trace = _run_driver(config.method, bench, loop_cfg)
            csv_path = out_dir / (f"{config.benchmark}_{config.method}"
                                  f"_seed{seed}.csv")
            _write_trace_csv(csv_path, trace, bench.dim,
                             bench.oracle.n_constraints)
            row = {"benchmark": config.benchmark, "method": config.method,
                   "seed": seed, "n_queries": trace.n_queries}
            row.update(_summarize_trace(trace, bench))
            writer.writerow(row)
            print(f"{config.benchmark} {config.method} seed {seed}: "
                  f"{trace.n_queries} queries, status {trace.status.value}")
            if trace.status is safe_loop.Status.FIT_FAILED:
                exit_code = EXIT_RUNTIME
                if not keep_going:
                    return exit_code
    return exit_code


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

def cmd_gen_data(config: ExperimentConfig) -> int:
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for seed in config.seeds:
        bench = datasets.build_benchmark(
            config.benchmark, seed, n_source=config.n_source,
            n_init=config.n_init, n_pool=config.n_pool)
        stem = f"{config.benchmark}_seed{seed}"
        src = bench.source_main
        src_Z = np.column_stack([s.values for s in bench.source_safety])
        datasets.write_dataset_csv(out_dir / f"{stem}_source.csv", src.X,
                                   src.values, src_Z,
                                   ["source_1"] * src.n)
        init = bench.initial
        datasets.write_dataset_csv(out_dir / f"{stem}_target.csv", init.X,
                                   init.y, init.Z, ["target"] * init.n)
        meta = {"benchmark": config.benchmark, "seed": seed,
                "n_source": src.n, "n_init": init.n,
                "noise_std": bench.oracle.noise_std,
                "thresholds": bench.thresholds.tolist()}
        meta.update(bench.metadata)
        (out_dir / f"{stem}_meta.json").write_text(
            json.dumps(meta, indent=2, default=str), encoding="utf-8")
        print(f"wrote {stem}_source.csv, {stem}_target.csv, {stem}_meta.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# theory-bound
# ---------------------------------------------------------------------------

def cmd_theory_bound(args) -> int:
    family = _KERNEL_NAMES[args.kernel]
    delta = theory.find_delta(args.beta, args.T, args.k_scale, args.N,
                              args.sigma)
    if delta is None:
        if args.T < 0:
            reason = ("requires sqrt(beta) > |T| / sqrt(k_scale); got "
                      f"{math.sqrt(args.beta):.6g} <= "
                      f"{abs(args.T) / math.sqrt(args.k_scale):.6g}")
        else:
            reason = "requires beta > 0"
        print(f"no bound (trivially-safe prior regime): {reason}")
        return EXIT_OK
    r = theory.exploration_radius(family, args.lengthscale, args.beta,
                                  args.T, args.N, args.sigma, args.k_scale)
    bound = theory.safety_probability_bound(theory.BoundInputs(
        N=args.N, delta=delta, sigma=args.sigma, k_scale=args.k_scale,
        T=args.T))
    if args.csv:
        print("delta,radius,bound")
        print(f"{delta!r},{r!r},{bound!r}")
    else:
        print(f"delta*  = {delta:.6g}")
        print(f"radius  = {r:.6g}")
        print(f"bound   = {bound:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _read_trace_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(out_dir, csv_only: bool = False) -> int:
    out_dir = Path(out_dir)
    run_files = sorted(p for p in out_dir.glob("*_seed*.csv"))
    if not run_files:
        print(f"no run CSVs found under {out_dir}", file=sys.stderr)
        return EXIT_VALIDATION

    # group by (benchmark, method); aggregate metric curves across seeds
    groups: dict = {}
    for path in run_files:
        stem = path.stem  # benchmark_method_seedN
        label, _, _ = stem.rpartition("_seed")
        groups.setdefault(label, []).append(_read_trace_csv(path))

    metric_names = ("rmse", "tp_rate", "fp_rate", "safe_set_size")
    report_path = out_dir / "report.csv"
    with open(report_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "n_seeds", "iter"]
                        + [f"{m}_{s}" for m in metric_names
                           for s in ("mean", "stderr")])
        curves: dict = {}
        for label, traces in sorted(groups.items()):
            n_iters = min(len(t) for t in traces)
            rows = []
            for it in range(n_iters):
                vals = {m: np.array([float(t[it][m]) for t in traces])
                        for m in metric_names}
                row = [label, len(traces), it]
                for m in metric_names:
                    v = vals[m]
                    stderr = (v.std(ddof=1) / math.sqrt(len(v))
                              if len(v) > 1 else 0.0)
                    row.extend([v.mean(), stderr])
                rows.append(row)
                writer.writerow(row)
            curves[label] = np.array([r[3:] for r in rows], dtype=float)

    sizes = ", ".join(f"{k}: {len(v)} seeds" for k, v in sorted(groups.items()))
    print(f"wrote {report_path} (sample sizes — {sizes})")

    if not csv_only:
        _render_figures(out_dir, curves, metric_names)
    return EXIT_OK


def _render_figures(out_dir: Path, curves: dict, metric_names) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for i, metric in enumerate(metric_names):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, arr in sorted(curves.items()):
            mean = arr[:, 2 * i]
            err = arr[:, 2 * i + 1]
            its = np.arange(arr.shape[0])
            ax.plot(its, mean, label=label)
            ax.fill_between(its, mean - err, mean + err, alpha=0.2)
        ax.set_xlabel("iteration")
        ax.set_ylabel(metric)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig_path = out_dir / f"report_{metric}.png"
        fig.savefig(fig_path, dpi=120)
        plt.close(fig)
        print(f"wrote {fig_path}")


# ---------------------------------------------------------------------------
# argument parsing / entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safetal",
        description="Safe transfer active learning with Gaussian processes")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run experiments from a config file")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int, help="override config seeds")
    run_p.add_argument("--out", help="override output directory")
    run_p.add_argument("--keep-going", action="store_true",
                       help="continue remaining seeds after a fit failure")

    gen_p = sub.add_parser("gen-data", help="generate and export datasets")
    gen_p.add_argument("--config", required=True)
    gen_p.add_argument("--seed", type=int)
    gen_p.add_argument("--out")

    th_p = sub.add_parser("theory-bound",
                          help="exploration radius and safety bound")
    th_p.add_argument("--N", type=int, required=True)
    th_p.add_argument("--sigma", type=float, required=True)
    th_p.add_argument("--k-scale", dest="k_scale", type=float, default=1.0)
    th_p.add_argument("--T", type=float, default=0.0)
    th_p.add_argument("--beta", type=float, default=4.0)
    th_p.add_argument("--kernel", choices=sorted(_KERNEL_NAMES),
                      default="matern52")
    th_p.add_argument("--lengthscale", type=float, nargs="+", default=[1.0])
    th_p.add_argument("--csv", action="store_true")

    rep_p = sub.add_parser("report", help="aggregate run CSVs across seeds")
    rep_p.add_argument("--out", required=True,
                       help="directory containing run CSVs")
    rep_p.add_argument("--csv", action="store_true",
                       help="emit only the summary CSV, skip figures")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "theory-bound":
            return cmd_theory_bound(args)
        if args.command == "report":
            return cmd_report(args.out, csv_only=args.csv)
        config = parse_config(args.config)
        if args.seed is not None:
            config.seeds = [args.seed]
        if args.out:
            config.out = args.out
        config.__post_init__()  # re-validate after overrides
        if args.command == "run":
            return cmd_run(config, keep_going=args.keep_going)
        return cmd_gen_data(config)
    except (ValueError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
