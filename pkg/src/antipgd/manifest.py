"""JSON experiment manifests: landscape spec, run configs, seeds, plots.

Example::

    {
      "name": "valley_noise_comparison",
      "landscape": {"kind": "widening_valley", "d": 100},
      "seeds": {"base": 2024, "count": 5},
      "out": "results/valley",
      "runs": [
        {"name": "pgd", "variant": "pgd", "eta": 0.01, "steps": 20000,
         "noise": {"distribution": "gaussian", "sigma": 0.005},
         "record_every": 100,
         "init": {"kind": "valley_floor", "u_sqnorm": 10.0}}
      ],
      "grid": {"eta": [0.1], "sigma": [0.01, 0.05], "variant": ["pgd", "anti_pgd"]},
      "plots": [{"y": "hessian_trace", "logy": true, "filename": "trace.svg"}]
    }

``runs`` holds explicit configs; ``grid`` (optional, used by the sweep
command) crosses variant x eta x sigma over a template. The noise
correlation is filled in from the variant when omitted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .landscapes import (
    Landscape,
    SparseValley,
    WideningValley,
    ZeroLoss,
    gen_matrix_sensing,
    gen_quad_regression,
    load_dataset,
)
from .noise import NoiseSpec
from .optim import InitSpec, RunConfig

_VARIANT_CORRELATION = {
    "gd": None,
    "pgd": "uncorrelated",
    "sgd": "uncorrelated",
    "label_noise_gd": "uncorrelated",
    "anti_pgd": "anticorrelated",
    "anti_sgd": "anticorrelated",
}


class ManifestError(ValueError):
    pass


@dataclass
class ExperimentManifest:
    name: str
    landscape_spec: dict
    runs: list[RunConfig]
    grid: dict | None
    base_seed: int
    n_seeds: int
    out_dir: str
    plots: list[dict] = field(default_factory=list)

    def all_configs(self) -> list[RunConfig]:
        configs = list(self.runs) + expand_grid(self)
        names = [c.name for c in configs]
        if len(set(names)) != len(names):
            raise ManifestError(f"duplicate run names in manifest {self.name!r}")
        if not configs:
            raise ManifestError("manifest defines no runs")
        return configs


def build_landscape(spec: dict) -> Landscape:
    kind = spec.get("kind")
    if kind == "widening_valley":
        return WideningValley(int(spec["d"]))
    if kind == "sparse_valley":
        return SparseValley(int(spec["m"]), int(spec["d"]), spec["b"])
    if kind == "zero_loss":
        return ZeroLoss(int(spec["dim"]))
    if kind == "quad_regression":
        return gen_quad_regression(
            d=int(spec.get("d", 100)),
            m_train=int(spec.get("m_train", 40)),
            n_nonzero=int(spec.get("n_nonzero", 10)),
            m_test=int(spec.get("m_test", 100)),
            seed=int(spec.get("seed", 0)),
        )
    if kind == "matrix_sensing":
        return gen_matrix_sensing(
            n=int(spec.get("n", 20)),
            rank=int(spec.get("rank", 5)),
            m_train=int(spec.get("m_train", 100)),
            noise_std=float(spec.get("noise_std", 0.01)),
            m_test=int(spec.get("m_test", 100)),
            seed=int(spec.get("seed", 0)),
        )
    if kind == "dataset":
        return load_dataset(spec["path"])
    raise ManifestError(f"unknown landscape kind {kind!r}")


def _noise_from_dict(d: dict | None, variant: str) -> NoiseSpec | None:
    correlation = _VARIANT_CORRELATION.get(variant)
    if d is None:
        return None
    if correlation is None:
        return None  # gd ignores noise
    return NoiseSpec(
        sigma=float(d["sigma"]),
        dim=int(d.get("dim", 0)),
        distribution=d.get("distribution", "gaussian"),
        correlation=d.get("correlation", correlation),
    )


def _init_from_dict(d: dict | None) -> InitSpec:
    if d is None:
        return InitSpec()
    return InitSpec(
        kind=d.get("kind", "gaussian"),
        scale=float(d.get("scale", 1.0)),
        u_sqnorm=float(d.get("u_sqnorm", 10.0)),
        values=tuple(d.get("values", ())),
    )


def config_from_dict(d: dict) -> RunConfig:
    try:
        variant = d["variant"]
        schedule = d.get("schedule", {})
        return RunConfig(
            name=d["name"],
            variant=variant,
            eta=float(d["eta"]),
            steps=int(d["steps"]),
            noise=_noise_from_dict(d.get("noise"), variant),
            start_step=int(schedule.get("start", 0)),
            stop_step=None if schedule.get("stop") is None else int(schedule["stop"]),
            batch=None if d.get("batch") is None else int(d["batch"]),
            record_every=int(d.get("record_every", 1)),
            init=_init_from_dict(d.get("init")),
            record_reg_grad=bool(d.get("record_reg_grad", False)),
            snapshot_steps=tuple(d.get("snapshot_steps", ())),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ManifestError(f"bad run config {d.get('name', '?')!r}: {exc}") from exc


def expand_grid(manifest: ExperimentManifest) -> list[RunConfig]:
    """Cross variant x eta x sigma over the grid template."""
    grid = manifest.grid
    if not grid:
        return []
    template = dict(grid.get("template", {}))
    variants = grid.get("variant", [template.get("variant", "gd")])
    etas = grid.get("eta", [template.get("eta", 0.1)])
    sigmas = grid.get("sigma", [template.get("sigma", 0.0)])
    configs = []
    for variant in variants:
        for eta in etas:
            for sigma in sigmas:
                d = dict(template)
                d["variant"] = variant
                d["eta"] = eta
                d["name"] = f"{variant}_eta{eta:g}_sigma{sigma:g}"
                noise = dict(d.get("noise", {}))
                noise["sigma"] = sigma
                if variant != "gd":
                    d["noise"] = noise
                configs.append(config_from_dict(d))
    return configs


def load_manifest(path) -> ExperimentManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("name", "landscape"):
        if key not in raw:
            raise ManifestError(f"{path}: missing required key {key!r}")
    seeds = raw.get("seeds", {})
    n_seeds = int(seeds.get("count", 1))
    if n_seeds < 1:
        raise ManifestError("seeds.count must be >= 1")
    manifest = ExperimentManifest(
        name=raw["name"],
        landscape_spec=raw["landscape"],
        runs=[config_from_dict(d) for d in raw.get("runs", [])],
        grid=raw.get("grid"),
        base_seed=int(seeds.get("base", 0)),
        n_seeds=n_seeds,
        out_dir=raw.get("out", "results"),
        plots=raw.get("plots", []),
    )
    manifest.all_configs()  # validates names and non-emptiness
    return manifest
