"""``annealtemp`` command line: generate | sample | reference | estimate | experiment | pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..estimators import ObjectiveCurve
from ..io import read_samples, write_csv, write_samples
from ..model import IsingModel
from ..reference import ReferenceStatistics, default_beta_grid
from ..sampling import (
    BETA_T_DEFAULT,
    AnnealSchedule,
    default_ladder,
    postprocess,
    run_gibbs,
    run_parallel_tempering,
    run_sta,
)
from ..topology import build_chimera, generate
from .config import ReferenceConfig, SizeSpec, load_config, parse_postprocess
from .experiments import (
    CURVE_COLUMNS,
    ESTIMATE_COLUMNS,
    PRESETS,
    compute_reference,
    energy_function,
    run_estimators,
    run_full_pipeline,
)


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()] if text else []


def _pairs(text: str) -> list[list[int]]:
    return [[int(a) for a in p.split("-")] for p in text.split(",") if p.strip()] if text else []


def cmd_generate(a) -> int:
    size = SizeSpec(tag=a.size, shore=a.shore, dead_qubits=_ints(a.dead_qubits), dead_couplers=_pairs(a.dead_couplers))
    graph = build_chimera(size.chimera())
    kw = {"gauge_randomize": True} if a.gauge_randomize else {}
    model = generate(a.problem_class, graph, a.seed, **kw)
    model.save(a.out)
    print(f"{model.label}: {model.n_spins} spins, {model.n_edges} couplings -> {a.out}")
    return 0


def cmd_sample(a) -> int:
    model = IsingModel.load(a.instance)
    bt = a.beta_t if a.beta_t is not None else BETA_T_DEFAULT.get(str(model.metadata.get("generator")), 3.54)
    if a.sampler == "sta":
        s = run_sta(model, AnnealSchedule.linear(bt, a.sweeps), a.n_samples, seed=a.seed)
    elif a.sampler == "gibbs":
        s = run_gibbs(model, bt, a.sweeps, a.n_samples, seed=a.seed)
    else:
        burn = a.n_samples // 3
        res = run_parallel_tempering(model, default_ladder(bt), sweeps_per_exchange=a.sweeps,
                                     n_exchanges=a.n_samples + burn, burn_in=burn, seed=a.seed)
        s = res.samples[-1]
    if a.pp_beta is not None:
        s = postprocess(s, model, a.pp_beta, a.pp_sweeps, seed=[a.seed, 1])
    write_samples(a.out, s)
    print(f"{len(s)} samples -> {a.out}")
    return 0


def cmd_reference(a) -> int:
    model = IsingModel.load(a.instance)
    bt = a.beta_t if a.beta_t is not None else BETA_T_DEFAULT.get(str(model.metadata.get("generator")), 3.54)
    grid = default_beta_grid(bt, a.grid_step, a.grid_factor)
    rc = ReferenceConfig(method=a.method, enum_cap=a.enum_cap, width_cap=a.width_cap, pt_budget=a.pt_budget, pt_seed=a.seed)
    ref = compute_reference(model, grid, rc)
    j, c = ref.save(a.out)
    print(f"{ref.method} reference on {len(grid)} betas -> {j}, {c}")
    return 0


def _restrict(ref: ReferenceStatistics, spec: str) -> ReferenceStatistics:
    lo, hi = (float(x) for x in spec.split(":"))
    keep = (ref.beta_grid >= lo - 1e-12) & (ref.beta_grid <= hi + 1e-12)
    if keep.sum() < 2:
        raise ValueError(f"grid override {spec} leaves fewer than two grid points")
    se = None if ref.standard_errors is None else {k: v[keep] for k, v in ref.standard_errors.items()}
    return ReferenceStatistics(ref.beta_grid[keep], ref.mean_energy[keep], ref.edge_correlations[keep],
                               None if ref.log_z is None else ref.log_z[keep], ref.method, se,
                               None if ref.magnetizations is None else ref.magnetizations[keep], ref.edges,
                               ref.energy_levels, ref.log_degeneracy, dict(ref.metadata))


def cmd_estimate(a) -> int:
    model = IsingModel.load(a.instance)
    samples = read_samples(a.samples)
    ref = ReferenceStatistics.load(a.reference)
    if a.grid:
        ref = _restrict(ref, a.grid)
    methods = [m.strip() for m in a.methods.split(",") if m.strip()]
    reports, curves = run_estimators(samples, model, ref, methods, pp_mode=parse_postprocess(a.postprocess),
                                     pp_sweeps=a.pp_sweeps, seed=a.seed, n_boot=a.n_boot,
                                     energy_fn=energy_function(model, ref))
    write_csv(a.out, ESTIMATE_COLUMNS, [[r.row()[c] for c in ESTIMATE_COLUMNS] for r in reports])
    if a.curve_out:
        rows = []
        for r in reports:
            c: ObjectiveCurve | None = r.objective_curve
            if c is None:
                continue
            se = c.se if c.se is not None else np.full(len(c.betas), np.nan)
            rows += [[r.method, float(b), float(v), float(s)] for b, v, s in zip(c.betas, c.values, se)]
        write_csv(a.curve_out, CURVE_COLUMNS, rows)
    for r in reports:
        shown = r.sentinel if r.sentinel else f"{r.beta_hat:.6g}"
        print(f"{r.method:8s} beta_hat={shown}")
    return 0


def _config(a):
    over = list(a.set or [])
    if a.seed is not None:
        over.append(f"sampler.seed_base={a.seed}")
    if a.out is not None:
        over.append(f"output_dir={a.out}")
    return load_config(a.config, over)


def cmd_experiment(a) -> int:
    cfg = _config(a)
    res = PRESETS[a.preset](cfg)
    print(f"{a.preset}: {sum(len(v) for v in res.values())} rows -> {cfg.output_dir}")
    return 0


def cmd_pipeline(a) -> int:
    cfg = _config(a)
    res = run_full_pipeline(cfg)
    print(json.dumps(res.status, indent=1))
    print(f"manifest {res.manifest_hash[:16]} -> {res.manifest_path}")
    return 0 if res.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="annealtemp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a RAN1/AC3 Chimera instance")
    g.add_argument("--class", dest="problem_class", choices=["ran1", "ac3"], default="ran1")
    g.add_argument("--size", default="C2", help="Chimera tag, e.g. C2, C4, C3x5")
    g.add_argument("--shore", type=int, default=4)
    g.add_argument("--dead-qubits", default="", help="comma-separated ideal indices")
    g.add_argument("--dead-couplers", default="", help="comma-separated a-b pairs of ideal indices")
    g.add_argument("--gauge-randomize", action="store_true")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample", help="draw samples (.csv or .bin output)")
    s.add_argument("--instance", required=True)
    s.add_argument("--sampler", choices=["sta", "gibbs", "pt"], default="sta")
    s.add_argument("--beta-t", type=float, default=None, help="terminal / fixed beta (class default if omitted)")
    s.add_argument("--sweeps", type=int, default=2000)
    s.add_argument("--n-samples", type=int, default=10_000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--pp-beta", type=float, default=None, help="post-process at this beta")
    s.add_argument("--pp-sweeps", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    r = sub.add_parser("reference", help="reference statistics on a beta grid")
    r.add_argument("--instance", required=True)
    r.add_argument("--method", choices=["auto", "exact-enum", "exact-dp", "pt"], default="auto")
    r.add_argument("--beta-t", type=float, default=None)
    r.add_argument("--grid-step", type=float, default=0.05)
    r.add_argument("--grid-factor", type=float, default=1.5)
    r.add_argument("--enum-cap", type=int, default=20)
    r.add_argument("--width-cap", type=int, default=20)
    r.add_argument("--pt-budget", type=int, default=20_000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output stem; writes <stem>.json and <stem>.corr.csv")
    r.set_defaults(func=cmd_reference)

    e = sub.add_parser("estimate", help="estimate beta from a sample file")
    e.add_argument("--samples", required=True)
    e.add_argument("--instance", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--methods", default="ml,mlpl,min-mse,min-kl")
    e.add_argument("--grid", default=None, help="restrict the reference grid to lo:hi")
    e.add_argument("--postprocess", default="off", help="off | fixed:<beta> | coupled")
    e.add_argument("--pp-sweeps", type=int, default=1)
    e.add_argument("--n-boot", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--curve-out", default=None)
    e.set_defaults(func=cmd_estimate)

    for name, func, extra in (("experiment", cmd_experiment, True), ("pipeline", cmd_pipeline, False)):
        x = sub.add_parser(name, help=f"run {'a preset experiment' if extra else 'the full pipeline'} from a config")
        if extra:
            x.add_argument("preset", choices=sorted(PRESETS))
        x.add_argument("--config", default=None, help="YAML/JSON config file")
        x.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (dotted)")
        x.add_argument("--seed", type=int, required=True, help="sampler seed base")
        x.add_argument("--out", default=None, help="output directory")
        x.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
