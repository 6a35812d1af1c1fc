"""Command line entry point: ``wickbench <experiment> --config <path> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import EXPERIMENTS, ConfigError
from .parallel import ENV_WORKERS, resolve_workers

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_csv(path: Path, rows: list[dict]):
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in _clean(r).items()})


def write_plot(path: Path, plot) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "wickbench"
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for s in plot.series:
        style = s.get("style", "-")
        if s.get("yerr") is not None:
            ax.errorbar(s["x"], s["y"], yerr=s["yerr"], fmt=style, label=s["label"], capsize=2)
        else:
            ax.plot(s["x"], s["y"], style, label=s["label"])
    ax.set_xlabel(plot.xlabel)
    ax.set_ylabel(plot.ylabel)
    if plot.logx:
        ax.set_xscale("log")
    if plot.logy:
        ax.set_yscale("log")
    if plot.title:
        ax.set_title(plot.title)
    if len(plot.series) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_outputs(outcome, cfg: dict, out_dir: Path) -> dict:
    """Write CSV tables, SVG plots and results.json; return the JSON payload."""
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = []
    for name, rows in outcome.tables.items():
        fn = f"{name}.csv"
        write_csv(out_dir / fn, rows)
        tables.append(fn)
    for plot in outcome.plots:
        write_plot(out_dir / f"{plot.name}.svg", plot)
    echo = {k: v for k, v in cfg.items() if k != "out_dir"}
    payload = _clean({"experiment": outcome.experiment, "config_echo": echo,
                      "criteria": [c.to_json() for c in outcome.criteria], "tables": tables})
    with open(out_dir / "results.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")
    with open(out_dir / "timings.json", "w") as fh:
        json.dump(_clean(outcome.timings), fh, indent=2)
    return payload


def run(experiment: str, config_path=None, seed=None, out=None, workers=None) -> int:
    """Run one experiment; returns the process exit code."""
    from .experiments import run_experiment

    try:
        cfg = cfgmod.load(config_path, experiment)
        if seed is not None:
            cfg["seed"] = int(seed)
        w = resolve_workers(workers)
    except (ConfigError, ValueError) as e:
        print(json.dumps({"error": "config", "message": str(e)}), file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out or cfg["out_dir"] or f"results/{experiment}")
    outcome = run_experiment(cfg, workers=w)
    payload = write_outputs(outcome, cfg, out_dir)
    fails = [c for c in payload["criteria"] if not c["pass"]]
    for c in payload["criteria"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['tag']}  value={c['value']}  bound={c['bound']}")
    print(f"results: {out_dir / 'results.json'}")
    if fails:
        print(json.dumps({"error": "assertion", "failures": fails}), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def report(out_dir) -> str:
    """Plain-text summary of a results directory."""
    path = Path(out_dir) / "results.json"
    if not path.exists():
        raise FileNotFoundError(f"no results.json in {out_dir}")
    with open(path) as fh:
        res = json.load(fh)
    for key in ("experiment", "config_echo", "criteria", "tables"):
        if key not in res:
            raise ValueError(f"results.json lacks {key!r}")
    lines = [f"experiment: {res['experiment']}  seed: {res['config_echo'].get('seed')}"]
    npass = sum(c["pass"] for c in res["criteria"])
    lines.append(f"criteria: {npass}/{len(res['criteria'])} pass")
    for c in res["criteria"]:
        v = c["value"]
        v = f"{v:.6g}" if isinstance(v, float) else json.dumps(v)
        lines.append(f"  [{'PASS' if c['pass'] else 'FAIL'}] {c['tag']}: {v} (bound {json.dumps(c['bound'])})")
    lines.append("tables: " + ", ".join(res["tables"]))
    return "\n".join(lines)


def selfcheck(verbose: bool = True) -> int:
    """Exact identity suite, a small Monte Carlo smoke run and a mutation probe."""
    from . import polyseq
    from .experiments import run_experiment
    from .gff import sample_gff
    from .lattice import build_domain
    from .sets import extract_fps, mass_proxy

    t0 = time.perf_counter()
    checks = []
    small = {"n_change_var": 8, "n_binomial": 8, "n_exp_gen": 8, "n_two_var": 6,
             "n_laguerre_norm": 8, "n_reexp": 6, "n_combi": 9, "group_trials": 10,
             "subgroup_trials": 5}
    res = run_experiment(cfgmod.validate({"experiment": "identities", **small}))
    checks.append(("exact suite", res.passed))

    dom = build_domain("disk", 1.0, 1 / 8)
    m = np.array([mass_proxy(extract_fps(sample_gff(dom, 1.0, 0, k), 0.0)) for k in range(400)])
    z = (m.mean() - dom.leb) / (m.std(ddof=1) / math.sqrt(len(m)))
    checks.append(("smoke mean measure", abs(z) < 4))
    again = np.array([mass_proxy(extract_fps(sample_gff(dom, 1.0, 0, k), 0.0)) for k in range(5)])
    checks.append(("smoke determinism", bool(np.array_equal(again, m[:5]))))

    orig = polyseq.hermite_coeff
    try:
        polyseq.hermite_coeff = lambda n, k: orig(n, k) + (1 if (n, k) == (4, 1) else 0)
        mut = run_experiment(cfgmod.validate({"experiment": "identities", **small}))
    finally:
        polyseq.hermite_coeff = orig
    checks.append(("mutation detected", not mut.passed))

    ok = all(c[1] for c in checks)
    if verbose:
        for name, good in checks:
            print(f"{'PASS' if good else 'FAIL'}  {name}")
        print(f"selfcheck {'ok' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wickbench", description="Run a configured experiment.")
    p.add_argument("experiment", choices=EXPERIMENTS + ("report", "selfcheck"))
    p.add_argument("--config", help="TOML config (defaults are used when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (report: directory to summarise)")
    p.add_argument("--workers", type=int,
                   help=f"worker processes (fallback: ${ENV_WORKERS}, else 1)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.experiment == "selfcheck":
        return selfcheck()
    if args.experiment == "report":
        try:
            print(report(args.out or "."))
        except (FileNotFoundError, ValueError) as e:
            print(json.dumps({"error": "report", "message": str(e)}), file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    return run(args.experiment, args.config, args.seed, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
