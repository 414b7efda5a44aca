"""Experiment protocols: rescaling sweeps, MSE scans, estimator scatters and the full pipeline."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..estimators import (
    EstimatorReport,
    ObjectiveCurve,
    curve_with_postprocessing,
    estimate_min_kl,
    estimate_min_mse,
    estimate_ml,
    estimate_mlpl,
    kl_curve,
    mse_curve,
)
from ..io import atomic_write_text, read_samples, write_csv, write_samples
from ..model import IsingModel, SampleSet
from ..reference import (
    BucketEliminator,
    ReferenceStatistics,
    WidthExceeded,
    default_beta_grid,
    exact_stats_dp,
    exact_stats_enumeration,
    pt_stats,
)
from ..sampling import AnnealSchedule, postprocess, run_gibbs, run_sta
from ..topology import TopologyGraph, build_chimera, generate
from .config import ExperimentConfig, ReferenceConfig, SizeSpec, parse_postprocess

log = logging.getLogger(__name__)

ESTIMATE_COLUMNS = ["method", "beta_hat", "objective_at_min", "se", "bias", "sentinel_flag"]
CURVE_COLUMNS = ["method", "beta", "value", "se"]


@dataclass
class Instance:
    size: SizeSpec
    seed: int
    graph: TopologyGraph | None
    model: IsingModel

    @property
    def instance_id(self) -> str:
        return self.model.label


# -- building blocks --------------------------------------------------------------


def build_instances(cfg: ExperimentConfig, size: SizeSpec) -> list[Instance]:
    graph = build_chimera(size.chimera())
    return [Instance(size, s, graph, generate(cfg.problem_class, graph, s)) for s in cfg.instance_seeds()]


def beta_grid(cfg: ExperimentConfig, beta_terminal: float | None = None) -> np.ndarray:
    bt = cfg.beta_terminal if beta_terminal is None else beta_terminal
    return default_beta_grid(bt, cfg.reference.grid_step, cfg.reference.grid_factor)


def compute_reference(model: IsingModel, grid, rc: ReferenceConfig, graph=None) -> ReferenceStatistics:
    """Reference statistics by the configured method; ``auto`` picks the cheapest exact route."""
    method = rc.method
    if method == "auto":
        method = "exact-enum" if model.n_spins <= rc.enum_cap else "exact-dp"
    if method == "exact-enum":
        return exact_stats_enumeration(model, grid)
    if method == "exact-dp":
        try:
            return exact_stats_dp(model, grid, width_cap=rc.width_cap, graph=graph)
        except WidthExceeded:
            if rc.method != "auto":
                raise
            log.info("width cap exceeded for %s, falling back to parallel tempering", model.label)
    return pt_stats(model, grid, rc.pt_budget, seed=rc.pt_seed, thermodynamic_integration=True, graph=graph)


def energy_function(model: IsingModel, ref: ReferenceStatistics, graph=None):
    """Exact ``beta -> <H>`` for DP references (enumeration references carry a density of states)."""
    if ref.method != "exact-dp":
        return None
    be = BucketEliminator(model, ref.metadata.get("elimination_order"), width_cap=10**6, graph=graph)
    return lambda b: be.log_z_and_energy(float(b))[1]


def sample_seed(cfg: ExperimentConfig, inst_seed: int, *tags: int) -> list[int]:
    if cfg.sampler.seed_base is None:
        raise ValueError("a sampler seed is required (sampler.seed_base / --seed)")
    return [int(cfg.sampler.seed_base), int(inst_seed), *[int(t) for t in tags]]


def draw_samples(cfg: ExperimentConfig, inst: Instance, beta_terminal: float, sweeps: int, seed) -> SampleSet:
    kind = cfg.sampler.kind
    n = cfg.sampler.n_samples
    if kind == "sta":
        return run_sta(inst.model, AnnealSchedule.linear(beta_terminal, sweeps), n, seed=seed, graph=inst.graph)
    if kind == "gibbs":
        return run_gibbs(inst.model, beta_terminal, sweeps, n, seed=seed, graph=inst.graph)
    if kind == "exact":
        be = BucketEliminator(inst.model, graph=inst.graph)
        states = be.sample(beta_terminal, n, np.random.default_rng(seed))
        return SampleSet(states, inst.model.label, {"sampler": "exact", "beta": beta_terminal, "seed": seed, "postprocess": None})
    raise ValueError(f"unknown sampler kind {kind!r}")


def run_estimators(
    samples: SampleSet,
    model: IsingModel,
    ref: ReferenceStatistics,
    methods,
    pp_mode=None,
    pp_sweeps: int = 1,
    seed=0,
    n_boot: int = 200,
    graph=None,
    energy_fn=None,
) -> tuple[list[EstimatorReport], list[ObjectiveCurve]]:
    """Apply the requested estimators under a post-processing mode.

    ``pp_mode`` is None, a float (post-process once at that beta) or
    ``"coupled"`` (curve methods post-process at every grid beta; the point
    estimators then see the raw samples).
    """
    tag = "off"
    if isinstance(pp_mode, float):
        samples = postprocess(samples, model, pp_mode, pp_sweeps, seed=[*np.atleast_1d(seed).tolist(), 7], graph=graph)
        tag = f"fixed:{pp_mode}"
    reports, curves = [], []
    for m in methods:
        if m == "ml":
            r = estimate_ml(samples, model, ref, mean_energy_fn=energy_fn, n_boot=n_boot, seed=seed)
        elif m == "mlpl":
            r = estimate_mlpl(samples, model, n_boot=n_boot, seed=seed)
        elif m in ("min-mse", "min-kl"):
            if m == "min-kl" and not ref.has_log_z:
                continue
            objective = "mse" if m == "min-mse" else "kl"
            if pp_mode == "coupled":
                c = curve_with_postprocessing(samples, model, ref, n_sweeps=pp_sweeps, seed=seed, objective=objective, graph=graph)
            elif objective == "mse":
                c = mse_curve(samples, model, ref)
            else:
                c = kl_curve(samples, model, ref)
            r = estimate_min_mse(c) if m == "min-mse" else estimate_min_kl(c)
            curves.append(c)
        else:
            raise ValueError(f"unknown estimator {m!r}")
        r.postprocessed = "coupled" if (pp_mode == "coupled" and m.startswith("min")) else (tag if tag != "off" else None)
        reports.append(r)
    return reports, curves


def _quartiles(values) -> tuple[float, float, float]:
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if len(v) == 0:
        return (float("nan"),) * 3
    q = np.percentile(v, [25, 50, 75])
    return float(q[0]), float(q[1]), float(q[2])


def aggregate_quartiles(rows: list[dict], keys: tuple[str, ...], value: str = "beta_hat") -> list[dict]:
    """Quartiles of ``value`` over rows grouped by ``keys`` (groups sorted, sentinels excluded)."""
    groups: dict[tuple, list] = {}
    for r in sorted(rows, key=lambda r: (tuple(r[k] for k in keys), str(r.get("instance", "")))):
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for g, rs in groups.items():
        q1, med, q3 = _quartiles([r[value] for r in rs])
        out.append({**dict(zip(keys, g)), "q25": q1, "median": med, "q75": q3,
                    "n": len(rs), "n_sentinel": sum(1 for r in rs if r.get("sentinel_flag"))})
    return out


def _write_rows(path: Path, rows: list[dict], columns: list[str]) -> None:
    write_csv(path, columns, [[r.get(c, "") for c in columns] for r in rows])


# -- protocols --------------------------------------------------------------------


def run_rescaling_sweep(cfg: ExperimentConfig, write: bool = True) -> dict:
    """ML and MLPL estimates as the terminal beta is scaled by each configured fraction."""
    rows = []
    for size in cfg.sizes:
        sweeps = cfg.sampler.sweeps[0]
        methods = [m for m in cfg.estimators if m in ("ml", "mlpl")]
        for inst in build_instances(cfg, size):
            ref = efn = None
            if "ml" in methods:
                ref = compute_reference(inst.model, beta_grid(cfg), cfg.reference, inst.graph)
                efn = energy_function(inst.model, ref, inst.graph)
            for fi, frac in enumerate(cfg.sampler.beta_fractions):
                bt = float(frac) * cfg.beta_terminal
                samples = draw_samples(cfg, inst, bt, sweeps, sample_seed(cfg, inst.seed, sweeps, fi))
                reports, _ = run_estimators(samples, inst.model, ref, methods, seed=cfg.estimator_seed,
                                            n_boot=cfg.n_bootstrap, graph=inst.graph, energy_fn=efn)
                for r in reports:
                    rows.append({"size": size.tag, "instance": inst.instance_id, "instance_seed": inst.seed,
                                 "sweeps": sweeps, "fraction": float(frac), "beta_terminal": bt, **r.row()})
    quart = aggregate_quartiles(rows, ("size", "method", "fraction"))
    if write:
        out = Path(cfg.output_dir)
        _write_rows(out / "rescaling_rows.csv", rows,
                    ["size", "instance", "instance_seed", "sweeps", "fraction", "beta_terminal", *ESTIMATE_COLUMNS])
        _write_rows(out / "rescaling_quartiles.csv", quart,
                    ["size", "method", "fraction", "q25", "median", "q75", "n", "n_sentinel"])
    return {"rows": rows, "quartiles": quart}


def run_mse_beta_scan(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Raw and beta-coupled post-processed MSE curves for every instance and sweep count.

    Paired curves come from the same raw samples.
    """
    rows = []
    summary = []
    for size in cfg.sizes:
        for inst in build_instances(cfg, size):
            ref = compute_reference(inst.model, beta_grid(cfg), cfg.reference, inst.graph)
            for sweeps in cfg.sampler.sweeps:
                seed = sample_seed(cfg, inst.seed, sweeps)
                samples = draw_samples(cfg, inst, cfg.beta_terminal, sweeps, seed)
                raw = mse_curve(samples, inst.model, ref)
                pp = curve_with_postprocessing(samples, inst.model, ref, n_sweeps=cfg.postprocess_sweeps,
                                               seed=[cfg.estimator_seed, inst.seed, sweeps], graph=inst.graph)
                for label, c in (("raw", raw), ("pp", pp)):
                    for b, v in zip(c.betas, c.values):
                        rows.append({"size": size.tag, "instance": inst.instance_id, "sweeps": sweeps,
                                     "curve": label, "beta": float(b), "value": float(v)})
                    k = c.argmin()
                    summary.append({"size": size.tag, "instance": inst.instance_id, "sweeps": sweeps, "curve": label,
                                    "argmin_beta": float(c.betas[k]), "min_value": float(c.values[k]),
                                    "n_local_minima": len(c.local_minima())})
    if write:
        out = Path(cfg.output_dir)
        _write_rows(out / "mse_scan_curves.csv", rows, ["size", "instance", "sweeps", "curve", "beta", "value"])
        _write_rows(out / "mse_scan_summary.csv", summary,
                    ["size", "instance", "sweeps", "curve", "argmin_beta", "min_value", "n_local_minima"])
    return {"rows": rows, "summary": summary}


def run_estimator_scatter(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Per instance and sweep count: min-MSE and ML estimates, raw and post-processed."""
    rows = []
    for size in cfg.sizes:
        for inst in build_instances(cfg, size):
            ref = compute_reference(inst.model, beta_grid(cfg), cfg.reference, inst.graph)
            efn = energy_function(inst.model, ref, inst.graph)
            for sweeps in cfg.sampler.sweeps:
                samples = draw_samples(cfg, inst, cfg.beta_terminal, sweeps, sample_seed(cfg, inst.seed, sweeps))
                for pp_label, mode in (("raw", None), ("pp", "coupled")):
                    reports, _ = run_estimators(samples, inst.model, ref, ["min-mse", "ml"], pp_mode=mode,
                                                pp_sweeps=cfg.postprocess_sweeps, seed=cfg.estimator_seed,
                                                n_boot=cfg.n_bootstrap, graph=inst.graph, energy_fn=efn)
                    mse, ml = reports
                    rows.append({"size": size.tag, "instance": inst.instance_id, "sweeps": sweeps, "curve": pp_label,
                                 "beta_min_mse": mse.beta_hat, "beta_ml": ml.beta_hat if ml.finite else float("nan"),
                                 "ml_sentinel": ml.sentinel or "", "mse_at_min": mse.objective_at_min})
    if write:
        _write_rows(Path(cfg.output_dir) / "estimator_scatter.csv", rows,
                    ["size", "instance", "sweeps", "curve", "beta_min_mse", "beta_ml", "ml_sentinel", "mse_at_min"])
    return {"rows": rows}


PRESETS = {
    "rescaling-sweep": run_rescaling_sweep,
    "mse-scan": run_mse_beta_scan,
    "estimator-scatter": run_estimator_scatter,
}


# -- full pipeline ------------------------------------------------------------------


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class PipelineResult:
    manifest: dict
    manifest_path: Path
    status: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v["state"] != "error" for v in self.status.values())

    @property
    def manifest_hash(self) -> str:
        return self.manifest["manifest_hash"]


def _load_instances(cfg: ExperimentConfig) -> list[Instance]:
    if cfg.instance_files:
        out = []
        for f in cfg.instance_files:
            p = Path(f)
            if not p.exists():
                raise FileNotFoundError(f"instance file {f} does not exist")
            m = IsingModel.load(p)
            out.append(Instance(SizeSpec(tag=str(m.metadata.get("topology", "custom"))), int(m.metadata.get("seed", 0)), None, m))
        return out
    return [inst for size in cfg.sizes for inst in build_instances(cfg, size)]


def run_full_pipeline(cfg: ExperimentConfig) -> PipelineResult:
    """Instances -> references -> samples -> estimates, cached on disk and resumable.

    Each stage item is skipped when its output file already exists.  A failing
    stage is recorded in the manifest and later stages are not run, so no
    partial estimate CSVs are written.
    """
    out = Path(cfg.output_dir)
    dirs = {k: out / k for k in ("instances", "references", "samples", "estimates")}
    status: dict[str, dict] = {}
    files: dict[str, str] = {}
    pp_mode = parse_postprocess(cfg.postprocess)

    def record(stage, state, computed=0, cached=0, error=None):
        status[stage] = {"state": state, "computed": computed, "cached": cached}
        if error:
            status[stage]["error"] = error

    def finish():
        manifest = {
            "software_version": __version__,
            "config": cfg.to_dict(),
            "config_hash": cfg.config_hash(),
            "instance_seeds": cfg.instance_seeds(),
            "sampler_seed_base": cfg.sampler.seed_base,
            "files": dict(sorted(files.items())),
            "stages": {k: v["state"] for k, v in status.items()},
        }
        body = json.dumps(manifest, sort_keys=True)
        manifest["manifest_hash"] = hashlib.sha256(body.encode()).hexdigest()
        mpath = out / "manifest.json"
        atomic_write_text(mpath, json.dumps(manifest, indent=1, sort_keys=True))
        return PipelineResult(manifest, mpath, status)

    # instances
    try:
        instances = _load_instances(cfg)
        done = new = 0
        for inst in instances:
            p = dirs["instances"] / f"{inst.instance_id}.json"
            if p.exists():
                done += 1
            else:
                inst.model.save(p)
                new += 1
            files[str(p.relative_to(out))] = _sha(p)
        record("instances", "ok", new, done)
    except Exception as exc:  # noqa: BLE001
        record("instances", "error", error=f"{type(exc).__name__}: {exc}")
        return finish()

    # references
    refs = {}
    try:
        done = new = 0
        for inst in instances:
            grid = beta_grid(cfg)
            stem = dirs["references"] / inst.instance_id
            if stem.with_suffix(".json").exists() and stem.with_suffix(".corr.csv").exists():
                refs[inst.instance_id] = ReferenceStatistics.load(stem)
                done += 1
            else:
                r = compute_reference(inst.model, grid, cfg.reference, inst.graph)
                r.save(stem)
                refs[inst.instance_id] = r
                new += 1
            for suf in (".json", ".corr.csv"):
                p = stem.with_suffix(suf)
                files[str(p.relative_to(out))] = _sha(p)
        record("references", "ok", new, done)
    except Exception as exc:  # noqa: BLE001
        record("references", "error", error=f"{type(exc).__name__}: {exc}")
        return finish()

    # samples
    sample_sets = {}
    try:
        done = new = 0
        for inst in instances:
            for sweeps in cfg.sampler.sweeps:
                p = dirs["samples"] / f"{inst.instance_id}-S{sweeps}.bin"
                if p.exists():
                    s = read_samples(p)
                    done += 1
                else:
                    s = draw_samples(cfg, inst, cfg.beta_terminal, sweeps, sample_seed(cfg, inst.seed, sweeps))
                    write_samples(p, s)
                    new += 1
                sample_sets[(inst.instance_id, sweeps)] = s
                files[str(p.relative_to(out))] = _sha(p)
        record("samples", "ok", new, done)
    except Exception as exc:  # noqa: BLE001
        record("samples", "error", error=f"{type(exc).__name__}: {exc}")
        return finish()

    # estimates
    try:
        rows = []
        for inst in instances:
            ref = refs[inst.instance_id]
            efn = energy_function(inst.model, ref, inst.graph)
            for sweeps in cfg.sampler.sweeps:
                reports, _ = run_estimators(sample_sets[(inst.instance_id, sweeps)], inst.model, ref, cfg.estimators,
                                            pp_mode=pp_mode, pp_sweeps=cfg.postprocess_sweeps,
                                            seed=cfg.estimator_seed, n_boot=cfg.n_bootstrap, graph=inst.graph,
                                            energy_fn=efn)
                for r in reports:
                    rows.append({"instance": inst.instance_id, "size": inst.size.tag, "sweeps": sweeps,
                                 "postprocess": r.postprocessed or "off", **r.row()})
        p = dirs["estimates"] / "estimates.csv"
        _write_rows(p, rows, ["instance", "size", "sweeps", "postprocess", *ESTIMATE_COLUMNS])
        files[str(p.relative_to(out))] = _sha(p)
        record("estimates", "ok", len(rows), 0)
    except Exception as exc:  # noqa: BLE001
        record("estimates", "error", error=f"{type(exc).__name__}: {exc}")
    return finish()
