"""Config-driven command line: build maps, sample, diagnose, benchmark."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import approx, dirt, problems
from .errors import BudgetExhaustedError, KrmapError

log = logging.getLogger("krmap")

_SCHEDULE_SCHEMA = {
    "oneOf": [
        {"type": "object", "additionalProperties": False,
         "required": ["kind"],
         "properties": {"kind": {"const": "adaptive"},
                        "beta_init": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "eta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}},
        {"type": "object", "additionalProperties": False,
         "required": ["kind", "betas"],
         "properties": {"kind": {"const": "fixed"},
                        "betas": {"type": "array", "items": {"type": "number"}}}},
        {"type": "object", "additionalProperties": False,
         "required": ["kind", "batches"],
         "properties": {"kind": {"const": "batching"},
                        "batches": {"type": "array",
                                    "items": {"type": "array", "items": {"type": "integer"}}}}},
    ]
}

_PROBLEM_SCHEMA = {
    "oneOf": [
        {"type": "object", "additionalProperties": False,
         "required": ["kind"],
         "properties": {"kind": {"const": "csir"},
                        "ncomp": {"type": "integer", "minimum": 1},
                        "data_seed": {"type": "integer"},
                        "sigma": {"type": "number", "exclusiveMinimum": 0},
                        "data": {"type": "array"}}},
        {"type": "object", "additionalProperties": False,
         "required": ["kind"],
         "properties": {"kind": {"enum": ["gaussian_bump", "banana", "product_beta"]},
                        "dim": {"type": "integer", "minimum": 1},
                        "sharpness": {"type": "number", "exclusiveMinimum": 0}}},
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "problem": _PROBLEM_SCHEMA,
        "schedule": _SCHEDULE_SCHEMA,
        "fit": {"type": "object", "additionalProperties": False,
                "properties": {
                    "theta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "sample_factor": {"type": "number", "exclusiveMinimum": 0},
                    "tau": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    "max_cardinality": {"type": "integer", "minimum": 1},
                    "max_degree": {"type": "integer", "minimum": 1},
                    "holdout_fraction": {"type": "number", "exclusiveMinimum": 0,
                                         "exclusiveMaximum": 1}}},
        "layering": {"type": "object", "additionalProperties": False,
                     "properties": {
                         "omega": {"type": "number", "exclusiveMinimum": 0,
                                   "exclusiveMaximum": 1},
                         "beta_sample_size": {"type": "integer", "minimum": 100},
                         "max_layers": {"type": "integer", "minimum": 1},
                         "tau_floor": {"type": "number", "exclusiveMinimum": 0},
                         "tau_ceil": {"type": "number", "exclusiveMinimum": 0}}},
        "seed": {"type": "integer"},
    },
}


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg


def build_problem(spec: dict):
    """Instantiate the target problem described by a config block."""
    kind = spec["kind"]
    if kind == "csir":
        ncomp = int(spec.get("ncomp", 1))
        sigma = float(spec.get("sigma", 1.0))
        if "data" in spec:
            data = np.asarray(spec["data"], dtype=float)
        else:
            seed = int(spec.get("data_seed", 0))
            clean = problems.CsirModel(ncomp, sigma=sigma)
            data = clean.simulate_data(problems.csir_true_parameters(ncomp), seed)
        model = problems.CsirModel(ncomp, data=data, sigma=sigma)
        return dirt.TargetProblem.from_csir(model), model
    target = problems.AnalyticTarget(kind, dim=int(spec.get("dim", 2)),
                                     sharpness=float(spec.get("sharpness", 8.0)))
    def misfit(z, subset):
        return target.potential(z)
    prob = dirt.TargetProblem(misfit, target.dim, target.family)
    return prob, target


def build_schedule(spec: dict | None):
    if spec is None:
        return dirt.AdaptiveTempering()
    kind = spec["kind"]
    if kind == "adaptive":
        return dirt.AdaptiveTempering(beta_init=float(spec.get("beta_init", 1e-2)),
                                      eta=float(spec.get("eta", 0.25)))
    if kind == "fixed":
        return dirt.FixedTempering(betas=tuple(spec["betas"]))
    return dirt.DataBatching(batches=tuple(tuple(b) for b in spec["batches"]))


def build_ls_config(spec: dict | None) -> approx.LsConfig:
    return approx.LsConfig(**(spec or {}))


def _substream(seed: int, label: str) -> np.random.Generator:
    ss = np.random.SeedSequence([seed, abs(hash(label)) % (2 ** 31)])
    return np.random.default_rng(ss)


def _write_csv(path: Path, header: list, rows: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def cmd_build(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    prob, _ = build_problem(cfg["problem"])
    schedule = build_schedule(cfg.get("schedule"))
    ls_cfg = build_ls_config(cfg.get("fit"))
    lay = cfg.get("layering", {})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = _substream(seed, "construction")
    try:
        res = dirt.layered_construct(
            prob, schedule, ls_cfg, rng,
            omega=float(lay.get("omega", 0.5)),
            beta_sample_size=int(lay.get("beta_sample_size", 10_000)),
            max_layers=int(lay.get("max_layers", 20)),
            tau_floor=float(lay.get("tau_floor", 0.01)),
            tau_ceil=float(lay.get("tau_ceil", 0.5)),
            progress=lambda rec: print(json.dumps(rec), flush=True))
    except BudgetExhaustedError as exc:
        json.dump({"error": "budget_exhausted", "message": str(exc),
                   "diagnostics": exc.diagnostics}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    res.t_map.save(out / "map.json")
    manifest = dict(res.manifest)
    manifest["seed"] = seed
    manifest["config"] = cfg
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(json.dumps({"status": "ok", "layers": len(res.t_map),
                      "n_evals": res.n_evals}))
    return 0


def cmd_sample(args) -> int:
    t_map = dirt.ComposedMap.load(args.map)
    seed = args.seed if args.seed is not None else 0
    rng = _substream(seed, "sampling")
    x, logq = t_map.sample(args.n, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = [f"x{i + 1}" for i in range(t_map.dim)] + ["logq"]
    _write_csv(out / "samples.csv", header, np.column_stack([x, logq]))
    print(json.dumps({"status": "ok", "rows": int(args.n),
                      "file": str(out / "samples.csv")}))
    return 0


def cmd_diagnose(args) -> int:
    t_map = dirt.ComposedMap.load(args.map)
    cfg = load_config(args.config)
    prob, model = build_problem(cfg["problem"])
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rng = _substream(seed, "diagnostics")
    diag = dirt.importance_diagnostics(t_map, prob, args.n, rng)
    diag["n_evals"] = getattr(model, "n_evals", args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "diagnostics.json", "w") as fh:
        json.dump(diag, fh, indent=2)
    print(json.dumps(diag))
    return 0


# frozen benchmark configurations; tuned for desk-scale budgets
CSIR_K1_CONFIG = {
    "problem": {"kind": "csir", "ncomp": 1, "data_seed": 11},
    "schedule": {"kind": "adaptive", "beta_init": 1e-3, "eta": 0.7},
    "fit": {"tau": 0.05, "sample_factor": 1.4, "max_cardinality": 200,
            "holdout_fraction": 0.15},
    "layering": {"beta_sample_size": 300, "max_layers": 10,
                 "tau_floor": 0.05, "tau_ceil": 0.12},
}

CSIR_K2_CONFIG = {
    "problem": {"kind": "csir", "ncomp": 2, "data_seed": 13},
    "schedule": {"kind": "adaptive", "beta_init": 1e-3, "eta": 0.5},
    "fit": {"tau": 0.05, "sample_factor": 1.5, "max_cardinality": 800,
            "holdout_fraction": 0.15},
    "layering": {"beta_sample_size": 500, "max_layers": 14,
                 "tau_floor": 0.05, "tau_ceil": 0.1},
}


def _csir_rep(ncomp: int, config: dict, seed: int):
    prob, model = build_problem(config["problem"])
    schedule = build_schedule(config["schedule"])
    ls_cfg = build_ls_config(config["fit"])
    lay = config["layering"]
    rng = _substream(seed, "construction")
    res = dirt.layered_construct(prob, schedule, ls_cfg, rng,
                                 beta_sample_size=lay["beta_sample_size"],
                                 max_layers=lay["max_layers"],
                                 tau_floor=lay["tau_floor"],
                                 tau_ceil=lay["tau_ceil"])
    return res, prob, model


def _suite_csir(ncomp: int, config: dict, reps: int, seed: int, out: Path):
    rows = []
    for rep in range(reps):
        res, prob, model = _csir_rep(ncomp, config, seed + rep)
        if ncomp == 1:
            fam = model.family
            d_h = problems.quadrature_hellinger(
                lambda z: -model.potential_native(z) + fam.log_weight(z).sum(axis=1),
                lambda z: res.t_map.log_pushforward_density(z)[0], fam, 2, 60)
        else:
            diag = dirt.importance_diagnostics(
                res.t_map, prob, 2000, _substream(seed + rep, "diagnostics"))
            d_h = diag["hellinger"]
        rows.append((d_h, res.n_evals, len(res.t_map)))
        log.info("rep %d: D_H %.4f evals %d layers %d", rep, *rows[-1])
    arr = np.asarray(rows, dtype=float)
    _write_csv(out / "results.csv",
               ["hellinger", "n_evals", "layers"], arr)
    summary = {
        "suite": f"csir-k{ncomp}", "repetitions": reps,
        "hellinger_mean": float(arr[:, 0].mean()),
        "hellinger_std": float(arr[:, 0].std()),
        "n_evals_mean": float(arr[:, 1].mean()),
        "n_evals_std": float(arr[:, 1].std()),
        "layers_mean": float(arr[:, 2].mean()),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))


def single_layer_csir(model, degree: int, n_samples: int,
                      rng: np.random.Generator):
    """One-shot full-tensor fit of the untempered CSIR posterior."""
    from .density import SquaredPolyDensity
    from .sparse import MultiIndexSet
    d = model.dim
    grids = np.meshgrid(*([np.arange(degree + 1)] * d), indexing="ij")
    karr = np.column_stack([g.ravel() for g in grids])
    index_set = MultiIndexSet(d, karr)
    batch = approx.sample_optimal(model.family, index_set, n_samples, rng)
    batch.y = np.exp(-0.5 * model.potential_native(batch.x))
    coeffs = approx.solve_weighted_ls(batch, index_set)
    hold = approx.sample_optimal(model.family, index_set, max(n_samples // 8, 200), rng)
    hold.y = np.exp(-0.5 * model.potential_native(hold.x))
    resid = hold.y - hold.phi @ coeffs
    norm2 = float(hold.w @ (hold.y * hold.y)) / len(hold)
    rel = float(np.sqrt((hold.w @ (resid * resid)) / max(norm2 * len(hold), 1e-300)))
    gamma = max(0.25 * rel * rel * norm2, 1e-290)
    return SquaredPolyDensity(model.family, index_set, coeffs, gamma), rel


def _suite_single_vs_layered(reps: int, seed: int, out: Path):
    rows = []
    for rep in range(reps):
        res, prob, model = _csir_rep(1, CSIR_K1_CONFIG, seed + rep)
        fam = model.family
        log_target = lambda z: -model.potential_native(z) + fam.log_weight(z).sum(axis=1)
        d_layered = problems.quadrature_hellinger(
            log_target, lambda z: res.t_map.log_pushforward_density(z)[0], fam, 2, 60)
        rho, _ = single_layer_csir(model, 60, 30_000, _substream(seed + rep, "single"))
        d_single = problems.quadrature_hellinger(
            log_target, lambda z: rho.log_density_ref(z), fam, 2, 60)
        rows.append((d_layered, d_single, res.n_evals, len(res.t_map)))
        log.info("rep %d: layered %.4f single %.4f", rep, d_layered, d_single)
    arr = np.asarray(rows, dtype=float)
    _write_csv(out / "results.csv",
               ["hellinger_layered", "hellinger_single", "n_evals_layered", "layers"],
               arr)
    summary = {
        "suite": "single-vs-layered", "repetitions": reps,
        "layered_mean": float(arr[:, 0].mean()),
        "single_mean": float(arr[:, 1].mean()),
        "ratio": float(arr[:, 1].mean() / arr[:, 0].mean()),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))


def cmd_benchmark(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    if args.suite == "csir-k1":
        _suite_csir(1, CSIR_K1_CONFIG, args.reps, seed, out)
    elif args.suite == "csir-k2":
        _suite_csir(2, CSIR_K2_CONFIG, args.reps, seed, out)
    elif args.suite == "single-vs-layered":
        _suite_single_vs_layered(args.reps, seed, out)
    else:
        raise KrmapError(f"unknown benchmark suite {args.suite!r}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krmap",
        description="Triangular transport maps from unnormalized densities")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=".")

    p_build = sub.add_parser("build", help="construct a layered map from a config")
    p_build.add_argument("--config", required=True)
    common(p_build)

    p_sample = sub.add_parser("sample", help="draw samples from a saved map")
    p_sample.add_argument("--map", required=True)
    p_sample.add_argument("--n", type=int, required=True)
    common(p_sample)

    p_diag = sub.add_parser("diagnose", help="importance-sampling diagnostics")
    p_diag.add_argument("--map", required=True)
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--n", type=int, default=2000)
    common(p_diag)

    p_bench = sub.add_parser("benchmark", help="run a named benchmark suite")
    p_bench.add_argument("--suite", required=True)
    p_bench.add_argument("--reps", type=int, default=1)
    common(p_bench)
    return parser


def main(argv=None) -> int:
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(
        os.environ.get("KRMAP_LOG", "").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        try:
            import numba
            numba.set_num_threads(args.threads)
        except (ImportError, ValueError):
            pass
    handlers = {"build": cmd_build, "sample": cmd_sample,
                "diagnose": cmd_diagnose, "benchmark": cmd_benchmark}
    try:
        return handlers[args.command](args)
    except (KrmapError, jsonschema.ValidationError, OSError,
            json.JSONDecodeError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
