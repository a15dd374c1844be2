"""Experiment runner: configuration, seeding, logging, benchmarking.

Subcommands: run / ensemble / analyze / bench.  Configs are YAML trees
validated against per-experiment defaults (unknown keys rejected); every
run is reproducible from (config, seed) and writes metrics.csv,
summary.json, a weights checkpoint, and per-experiment field/spectra CSVs.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .analysis import eigen_report, ratio_scaling, residual_spectrum, singular_bound_check
from .autodiff import ParamSet, Tape, backward
from .model import (
    convert_network,
    init_weights,
    make_kan_network,
    make_mlp_network,
    save_checkpoint,
    vectorize,
)
from .multilevel import (
    DivergenceError,
    OptimizerConfig,
    build_hierarchy,
    nested_train,
)
from .optim import LrSchedule
from .problems import AllenCahnProblem, BurgersProblem, PoissonProblem, RegressionProblem

SUMMARY_SCHEMA = 1

DEFAULTS = {
    "regression": {
        "experiment": "regression",
        "basis": "spline",
        "seed": 1234,
        "out": "runs/regression",
        "architecture": [2, 5, 1],
        "order": 4,
        "n0": 8,
        "levels": 4,
        "schedule": [32, 16, 8, 4],
        "init_scale": 0.5,
        "hidden_domain": [-1.0, 1.0],
        "optimizer": {
            "kind": "lbfgs",
            "eta": 1.0,
            "eta0": 1e-4,
            "ramp_steps": 10,
            "cycle": 100,
            "gamma": 0.9995,
            "schedule": "constant",
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "weight_decay": 0.0,
            "lbfgs_history": 10,
            "lbfgs_max_iter": 20,
        },
        "problem": {"n_samples": 20000, "theta": 0.175},
    },
    "poisson": {
        "experiment": "poisson",
        "basis": "spline",
        "seed": 1234,
        "out": "runs/poisson",
        "architecture": [3, 5, 1],
        "order": 4,
        "n0": 4,
        "levels": 4,
        "schedule": [1250, 1250, 1250, 1250],
        "init_scale": 0.5,
        "hidden_domain": [-1.0, 1.0],
        "rba_mu": 1e-4,
        "optimizer": {
            "kind": "adam",
            "eta": 1e-2,
            "eta0": 1e-4,
            "ramp_steps": 10,
            "cycle": 100,
            "gamma": 0.9995,
            "schedule": "linear_ramp",
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "weight_decay": 0.0,
            "lbfgs_history": 10,
            "lbfgs_max_iter": 20,
        },
        "problem": {"n_interior": 49, "n_boundary_per_side": 50,
                    "gamma_v": 1e-2, "gamma_b": 1.0, "gamma_i": 1e-1,
                    "offset": 1e-6},
    },
    "burgers": {
        "experiment": "burgers",
        "basis": "spline",
        "seed": 1234,
        "out": "runs/burgers",
        "architecture": [2, 10, 10, 1],
        "order": 4,
        "n0": 8,
        "levels": 3,
        "schedule": [800, 400, 200],
        "init_scale": 0.5,
        "hidden_domain": [-1.0, 1.0],
        "optimizer": {
            "kind": "adam",
            "eta": 1e-3,
            "eta0": 1e-4,
            "ramp_steps": 10,
            "cycle": 100,
            "gamma": 0.9995,
            "schedule": "exp_cyclic",
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "weight_decay": 1e-4,
            "lbfgs_history": 10,
            "lbfgs_max_iter": 20,
        },
        "problem": {"nu": 1e-2, "nx": 64, "nt": 64, "gamma_v": 1.0, "gamma_b": 1.0},
    },
    "allen-cahn": {
        "experiment": "allen-cahn",
        "basis": "spline",
        "seed": 1234,
        "out": "runs/allen-cahn",
        "architecture": [2, 5, 5, 1],
        "order": 4,
        "n0": 4,
        "levels": 4,
        "schedule": [2500, 2500, 2500, 2500],
        "init_scale": 0.5,
        "hidden_domain": [-1.0, 1.0],
        "rba_mu": 1e-4,
        "spectra_grid": 64,
        "optimizer": {
            "kind": "adam",
            "eta": 1e-3,
            "eta0": 1e-4,
            "ramp_steps": 10,
            "cycle": 100,
            "gamma": 0.9995,
            "schedule": "constant",
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "weight_decay": 0.0,
            "lbfgs_history": 10,
            "lbfgs_max_iter": 20,
        },
        "problem": {"n_collocation": 20000, "eps": 1e-4, "gamma_v": 0.1,
                    "gamma_b": 1.0, "n_ic": 501, "diffusion_sign": -1.0},
    },
}

METRIC_COLUMNS = ["step", "level", "loss_total", "loss_V", "loss_B", "loss_I",
                  "metric", "lr", "wall_ms"]


class ConfigError(ValueError):
    pass


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[key] = _merge_config(base[key], val, where)
        else:
            out[key] = val
    return out


def load_config(experiment: str, config_path: str | None = None, overrides=()) -> dict:
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = copy.deepcopy(DEFAULTS[experiment])
    if config_path:
        with open(config_path) as fh:
            user = yaml.safe_load(fh) or {}
        if user.get("experiment", experiment) != experiment:
            raise ConfigError("config experiment does not match the requested one")
        cfg = _merge_config(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key: {key}")
            node = node[part]
        leaf = parts[-1]
        if leaf not in node:
            raise ConfigError(f"unknown config key: {key}")
        value = yaml.safe_load(raw)
        if isinstance(node[leaf], float) and isinstance(value, str):
            try:
                value = float(value)  # yaml needs "1.0e-2"; accept "1e-2" too
            except ValueError as exc:
                raise ConfigError(f"cannot parse {key}={raw!r} as float") from exc
        node[leaf] = value
    return cfg


def _parse_schedule(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad schedule {text!r}") from exc


def _optimizer_config(cfg: dict) -> OptimizerConfig:
    o = cfg["optimizer"]
    schedule = LrSchedule(kind=o["schedule"], eta=o["eta"], eta0=o["eta0"],
                          ramp_steps=o["ramp_steps"], cycle=o["cycle"], gamma=o["gamma"])
    return OptimizerConfig(kind=o["kind"], schedule=schedule, beta1=o["beta1"],
                           beta2=o["beta2"], eps=o["eps"], weight_decay=o["weight_decay"],
                           lbfgs_history=o["lbfgs_history"], lbfgs_lr=o["eta"],
                           lbfgs_max_iter=o["lbfgs_max_iter"])


def _build_problem(cfg: dict):
    kind = cfg["experiment"]
    p = cfg["problem"]
    if kind == "regression":
        return RegressionProblem(seed=cfg["seed"], n_samples=p["n_samples"], theta=p["theta"])
    if kind == "poisson":
        return PoissonProblem(n_interior=p["n_interior"],
                              n_boundary_per_side=p["n_boundary_per_side"],
                              gamma_v=p["gamma_v"], gamma_b=p["gamma_b"],
                              gamma_i=p["gamma_i"], rba_mu=cfg["rba_mu"],
                              offset=p["offset"])
    if kind == "burgers":
        return BurgersProblem(nu=p["nu"], nx=p["nx"], nt=p["nt"],
                              gamma_v=p["gamma_v"], gamma_b=p["gamma_b"])
    if kind == "allen-cahn":
        return AllenCahnProblem(seed=cfg["seed"], n_collocation=p["n_collocation"],
                                eps=p["eps"], gamma_v=p["gamma_v"], gamma_b=p["gamma_b"],
                                rba_mu=cfg["rba_mu"], n_ic=p["n_ic"],
                                diffusion_sign=p["diffusion_sign"])
    raise ConfigError(f"unknown experiment {kind!r}")


def _build_network(cfg: dict):
    kind = cfg["experiment"]
    arch = list(cfg["architecture"])
    domains = {
        "regression": (0.0, 1.0),
        "poisson": (-1.0, 1.0),
        "burgers": (-1.0, 1.0),
        "allen-cahn": (-1.0, 1.0),
    }
    normalizer = "sigmoid" if kind == "allen-cahn" else "affine"
    augment = "abs0" if kind == "poisson" else None
    net = make_kan_network(arch, cfg["n0"], cfg["order"],
                           input_domain=domains[kind],
                           hidden_domain=tuple(cfg["hidden_domain"]),
                           normalizer=normalizer, augment=augment,
                           mode=cfg["basis"])
    return net


def _write_metrics(path: Path, log) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for rec in log.records:
            writer.writerow([
                rec.get("step"), rec.get("level"), rec.get("loss"),
                rec.get("loss_V", ""), rec.get("loss_B", ""), rec.get("loss_I", ""),
                rec.get("metric"), rec.get("lr"), f"{rec.get('wall_ms', 0.0):.3f}",
            ])


def run_experiment(cfg: dict, out_dir: str | Path | None = None) -> dict:
    """Execute one experiment; returns the summary dict."""
    out = Path(out_dir if out_dir is not None else cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    problem = _build_problem(cfg)
    net = _build_network(cfg)
    schedule = list(cfg["schedule"])
    if len(schedule) != cfg["levels"]:
        raise ConfigError("schedule length must equal levels")
    hierarchy = build_hierarchy(net, cfg["levels"], schedule)
    opt = _optimizer_config(cfg)
    t0 = time.perf_counter()
    aborted = None
    try:
        log, final = nested_train(hierarchy, problem, opt, seed=cfg["seed"],
                                  init_scale=cfg["init_scale"])
    except DivergenceError as exc:
        log, final = exc.log, hierarchy.networks[-1]
        aborted = str(exc)
    wall_s = time.perf_counter() - t0

    _write_metrics(out / "metrics.csv", log)
    save_checkpoint(final, str(out / "weights.npz"),
                    extra={"experiment": cfg["experiment"], "seed": cfg["seed"]})
    summary = {
        "schema": SUMMARY_SCHEMA,
        "experiment": cfg["experiment"],
        "basis": cfg["basis"],
        "seed": cfg["seed"],
        "config": cfg,
        "wall_seconds": wall_s,
        "aborted": aborted,
        **{k: v for k, v in log.summary.items()},
    }
    _write_experiment_fields(cfg, problem, hierarchy, out, summary)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
    if aborted:
        raise DivergenceError(aborted, log)
    return summary


def _write_experiment_fields(cfg, problem, hierarchy, out: Path, summary: dict) -> None:
    kind = cfg["experiment"]
    if kind == "poisson":
        final = hierarchy.networks[-1]
        pred = final.predict(problem.volume)[:, 0]
        ref = problem.reference_field()[:, 0]
        with open(out / "fields.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "x", "y", "u", "residual"])
            for (x, y), u, r in zip(problem.volume, pred, pred - ref):
                w.writerow([len(hierarchy.networks) - 1, x, y, u, r])
    if kind == "burgers":
        final = hierarchy.networks[-1]
        sol = problem.solution_field(final)
        res = problem.residual_field(final)
        with open(out / "fields.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "x", "t", "u", "residual"])
            for i, x in enumerate(problem.xs):
                for j, t in enumerate(problem.ts):
                    w.writerow([len(hierarchy.networks) - 1, x, t, sol[i, j], res[i, j]])
    if kind == "allen-cahn":
        grid = cfg["spectra_grid"]
        energies = []
        with open(out / "fields.csv", "w", newline="") as ffh, \
             open(out / "spectra.csv", "w", newline="") as sfh:
            fw, sw = csv.writer(ffh), csv.writer(sfh)
            fw.writerow(["level", "x", "t", "u", "residual"])
            sw.writerow(["level", "omega_x", "omega_t", "magnitude"])
            for level, net in enumerate(hierarchy.networks):
                xs, ts, res = problem.residual_field(net, grid, grid)
                _, _, sol = problem.solution_field(net, grid, grid)
                rep = residual_spectrum(res)
                energies.append(rep.total_energy)
                for i, x in enumerate(xs):
                    for j, t in enumerate(ts):
                        fw.writerow([level, x, t, sol[i, j], res[i, j]])
                freqs_x = np.arange(grid) - grid // 2
                for i in range(grid):
                    for j in range(grid):
                        sw.writerow([level, freqs_x[i], freqs_x[j], rep.magnitudes[i, j]])
        summary["spectral_energy_per_level"] = energies


def _ensemble_member(cfg: dict, seed: int, member_dir: str):
    member = copy.deepcopy(cfg)
    member["seed"] = int(seed)
    try:
        return seed, run_experiment(member, member_dir), None
    except DivergenceError as exc:
        return seed, None, str(exc)


def run_ensemble(cfg: dict, seeds, out_dir: str | Path | None = None,
                 jobs: int = 1) -> dict:
    """Per-seed runs (optionally in parallel processes writing to disjoint
    directories) plus mean/stdev of the final metric."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ConfigError("ensemble needs at least 2 seeds")
    out = Path(out_dir if out_dir is not None else cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    metrics, failures, summaries = [], [], []
    tasks = [(cfg, int(seed), str(out / f"seed_{seed}")) for seed in seeds]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_ensemble_member, *zip(*tasks)))
    else:
        results = [_ensemble_member(*task) for task in tasks]
    for seed, summary, error in results:
        if error is not None:
            failures.append({"seed": int(seed), "error": error})
        else:
            metrics.append(summary["final_metric"])
            summaries.append(summary)
    agg = {
        "schema": SUMMARY_SCHEMA,
        "experiment": cfg["experiment"],
        "basis": cfg["basis"],
        "seeds": [int(s) for s in seeds],
        "failures": failures,
        "n_survivors": len(metrics),
        "metric_mean": float(np.mean(metrics)) if metrics else None,
        "metric_std": float(np.std(metrics, ddof=1)) if len(metrics) > 1 else None,
        "metrics": [float(m) for m in metrics],
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(agg, fh, indent=2, default=float)
    return agg


def run_analyze(r_list, n_list, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eigen_report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "n", "index", "eigenvalue", "sign_changes"])
        vec_rows = []
        for r in r_list:
            for n in n_list:
                rep = eigen_report(r, n)
                for i, (lam, sc) in enumerate(zip(rep.eigenvalues, rep.sign_changes)):
                    w.writerow([r, n, i, lam, sc])
        with open(out / "eigenvectors.csv", "w", newline="") as vfh:
            vw = csv.writer(vfh)
            vw.writerow(["r", "n", "rank", "position", "value"])
            for r in r_list:
                n = max(n_list)
                from .basis import build_cob, make_uniform_knots
                from .linalg import matmul, sym_eig

                k = make_uniform_knots(0.0, 1.0, n, r)
                dense = build_cob(k).densify()
                eig = sym_eig(matmul(dense.T, dense))
                dim = k.dim
                for rank in list(range(5)) + list(range(dim - 5, dim)):
                    for pos in range(dim):
                        vw.writerow([r, n, rank, pos, eig.eigenvectors[pos, rank]])
    with open(out / "ratio_scaling.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "n", "ratio", "slope"])
        for r in r_list:
            if len(n_list) >= 4:
                slope = ratio_scaling(r, sorted(n_list))
            else:
                slope = ""
            for n in n_list:
                w.writerow([r, n, eigen_report(r, n).ratio, slope])
    with open(out / "bounds.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "n", "sigma_max", "bound"])
        for r in r_list:
            for n in n_list:
                sigma, bound = singular_bound_check(r, n)
                w.writerow([r, n, sigma, bound])


def bench_forward(r_list, n_list, reps: int = 10, batch: int = 256,
                  widths=(1, 64, 64, 64, 1), out_dir: str | Path | None = None,
                  seed: int = 1234):
    """Wallclock of forward+backward: change-of-basis path vs Cox-de Boor.

    Timing covers tape build, forward, and the backward sweep only (no
    data generation or artifact writing).
    """
    rng = np.random.default_rng(seed)
    rows = []
    for r in r_list:
        for n in n_list:
            net = make_kan_network(list(widths), n, r, input_domain=(0.0, 1.0))
            init_weights(net, seed, scale=0.3)
            x = rng.random((batch, widths[0]))
            flat = vectorize(net)

            def one_pass(path):
                pset = ParamSet(flat)
                tape = Tape()
                out = net.forward_tape(tape, x, pset=pset, order=0, path=path)
                loss = tape.record("sum", tape.record("mul", out.v, out.v))
                backward(tape, loss)
                return tape.val(loss)

            timings = {}
            for path in ("fast", "coxdeboor"):
                one_pass(path)  # warm up
                samples = []
                for _ in range(reps):
                    t0 = time.perf_counter()
                    one_pass(path)
                    samples.append((time.perf_counter() - t0) * 1e3)
                timings[path] = (float(np.mean(samples)), float(np.std(samples)))
            speedup = timings["coxdeboor"][0] / timings["fast"][0]
            flop_ratio = (n * r + r * r) / (n + r)
            rows.append({
                "r": r, "n": n,
                "fast_ms_mean": timings["fast"][0], "fast_ms_std": timings["fast"][1],
                "cox_ms_mean": timings["coxdeboor"][0], "cox_ms_std": timings["coxdeboor"][1],
                "speedup": speedup, "flop_ratio": flop_ratio,
            })
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            w.writerows(rows)
    return rows


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",")]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlkan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    run_p.add_argument("experiment", choices=sorted(DEFAULTS))
    ens_p = sub.add_parser("ensemble", help="run an experiment over several seeds")
    ens_p.add_argument("experiment", choices=sorted(DEFAULTS))
    ens_p.add_argument("--seeds", default="1234,1235,1236,1237,1238")
    ens_p.add_argument("--jobs", type=int, default=1)
    for p in (run_p, ens_p):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--basis", choices=["spline", "relu"], default=None)
        p.add_argument("--schedule", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--override", action="append", default=[])

    ana_p = sub.add_parser("analyze", help="eigenstructure and bound reports")
    ana_p.add_argument("--r", default="1,2,3,4")
    ana_p.add_argument("--n", default="16,32,64,128")
    ana_p.add_argument("--out", default="runs/analyze")

    ben_p = sub.add_parser("bench", help="forward-path benchmark")
    ben_p.add_argument("--r", default="1,2,3,4")
    ben_p.add_argument("--n", default="16,32")
    ben_p.add_argument("--reps", type=int, default=10)
    ben_p.add_argument("--batch", type=int, default=256)
    ben_p.add_argument("--out", default="runs/bench")

    args = parser.parse_args(argv)
    try:
        if args.command in ("run", "ensemble"):
            cfg = load_config(args.experiment, args.config, args.override)
            if args.seed is not None:
                cfg["seed"] = args.seed
            if args.basis is not None:
                cfg["basis"] = args.basis
            if args.schedule is not None:
                cfg["schedule"] = _parse_schedule(args.schedule)
                cfg["levels"] = len(cfg["schedule"])
            if args.out is not None:
                cfg["out"] = args.out
            if args.command == "run":
                summary = run_experiment(cfg)
                print(f"final loss {summary['final_loss']:.6e} "
                      f"metric {summary['final_metric']:.6e} -> {cfg['out']}")
            else:
                agg = run_ensemble(cfg, _int_list(args.seeds), jobs=args.jobs)
                print(f"ensemble metric {agg['metric_mean']:.6e} "
                      f"(std {agg['metric_std']:.2e}) over {agg['n_survivors']} seeds")
        elif args.command == "analyze":
            run_analyze(_int_list(args.r), _int_list(args.n), args.out)
            print(f"analysis written to {args.out}")
        elif args.command == "bench":
            rows = bench_forward(_int_list(args.r), _int_list(args.n),
                                 reps=args.reps, batch=args.batch, out_dir=args.out)
            for row in rows:
                print(f"r={row['r']} n={row['n']} speedup={row['speedup']:.2f} "
                      f"flop_ratio={row['flop_ratio']:.2f}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"run diverged: {exc} (partial logs preserved)", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
