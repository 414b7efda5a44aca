"""Experiment configuration: a YAML (or JSON) key-value document with CLI overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..sampling import BETA_T_DEFAULT, SWEEPS_TTS
from ..topology import ChimeraSpec

_SIZE_TAG = re.compile(r"^C(\d+)(?:x(\d+))?$")


@dataclass
class SizeSpec:
    """A Chimera size; ``tag`` like ``C4`` or explicit rows/cols, plus deletions."""

    tag: str = "C2"
    rows: int | None = None
    cols: int | None = None
    shore: int = 4
    dead_qubits: list[int] = field(default_factory=list)
    dead_couplers: list[list[int]] = field(default_factory=list)

    def chimera(self) -> ChimeraSpec:
        rows, cols = self.rows, self.cols
        if rows is None:
            mt = _SIZE_TAG.match(self.tag)
            if not mt:
                raise ValueError(f"cannot parse size tag {self.tag!r}")
            rows = int(mt.group(1))
            cols = int(mt.group(2) or rows)
        return ChimeraSpec(rows, cols if cols is not None else rows, self.shore, tuple(self.dead_qubits),
                           tuple(tuple(e) for e in self.dead_couplers))

    @property
    def base_tag(self) -> str:
        return self.tag.split("-")[0]


@dataclass
class SamplerConfig:
    kind: str = "sta"  # sta | gibbs | exact
    beta_terminal: float | None = None  # None -> class default
    sweeps: list[int] = field(default_factory=lambda: [2000])
    n_samples: int = 10_000
    seed_base: int | None = None
    beta_fractions: list[float] = field(default_factory=lambda: [k / 8 for k in range(1, 9)])


@dataclass
class ReferenceConfig:
    method: str = "auto"  # auto | exact-enum | exact-dp | pt
    grid_step: float = 0.05
    grid_factor: float = 1.5
    enum_cap: int = 20
    width_cap: int = 20
    pt_budget: int = 20_000
    pt_seed: int = 0


@dataclass
class ExperimentConfig:
    problem_class: str = "ran1"
    sizes: list[SizeSpec] = field(default_factory=lambda: [SizeSpec("C2")])
    n_instances: int = 10
    instance_seed_base: int = 1000
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    estimators: list[str] = field(default_factory=lambda: ["ml", "mlpl", "min-mse", "min-kl"])
    postprocess: str = "off"  # off | fixed:<beta> | coupled
    postprocess_sweeps: int = 1
    estimator_seed: int = 0
    n_bootstrap: int = 200
    output_dir: str = "results"
    instance_files: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.problem_class not in BETA_T_DEFAULT:
            raise ValueError(f"unknown problem class {self.problem_class!r}")
        self.sizes = [s if isinstance(s, SizeSpec) else _size(s) for s in self.sizes]
        if isinstance(self.sampler, dict):
            self.sampler = SamplerConfig(**self.sampler)
        if isinstance(self.reference, dict):
            self.reference = ReferenceConfig(**self.reference)
        self.sampler.sweeps = [int(s) for s in _as_list(self.sampler.sweeps)]
        if self.postprocess is False:  # YAML 1.1 reads a bare `off` as false
            self.postprocess = "off"
        parse_postprocess(self.postprocess)
        for m in self.estimators:
            if m not in ("ml", "mlpl", "min-mse", "min-kl"):
                raise ValueError(f"unknown estimator {m!r}")

    @property
    def beta_terminal(self) -> float:
        b = self.sampler.beta_terminal
        return BETA_T_DEFAULT[self.problem_class] if b is None else float(b)

    def instance_seeds(self) -> list[int]:
        return [self.instance_seed_base + k for k in range(self.n_instances)]

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**copy.deepcopy(d))


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _size(s) -> SizeSpec:
    if isinstance(s, str):
        return SizeSpec(tag=s)
    return SizeSpec(**s)


def parse_postprocess(mode: str):
    """``off`` -> None, ``coupled`` -> "coupled", ``fixed:<beta>`` -> float."""
    if mode is None or mode is False or mode == "off":
        return None
    if mode == "coupled":
        return "coupled"
    if isinstance(mode, str) and mode.startswith("fixed:"):
        return float(mode.split(":", 1)[1])
    raise ValueError(f"post-processing mode must be off, coupled or fixed:<beta>, got {mode!r}")


def default_sweeps(size_tag: str) -> int:
    return SWEEPS_TTS.get(size_tag, 2000)


def set_dotted(d: dict, key: str, value) -> None:
    """Assign ``d["a"]["b"] = value`` for ``key="a.b"``; the value is parsed as YAML."""
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = yaml.safe_load(value) if isinstance(value, str) else value


def load_config(path=None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Read a YAML/JSON config (JSON is valid YAML) and apply ``key=value`` overrides."""
    d: dict = {}
    if path is not None:
        text = Path(path).read_text()
        d = yaml.safe_load(text) or {}
        if not isinstance(d, dict):
            raise ValueError("config must be a mapping")
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        set_dotted(d, k.strip(), v)
    return ExperimentConfig.from_dict(d)
