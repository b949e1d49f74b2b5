"""Sweep orchestration, persistence, and figure-data regeneration.

Grids of scattering runs are described by an ExperimentConfig (JSON with a
published schema, energies in units of the bare splitting), executed cell
by cell with per-alpha ground-state reuse, and merged into flat tables.
Figure emitters turn a finished sweep into plot-ready CSV files plus a
small manifest; reruns on identical inputs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from jsonschema import validators

from . import __version__
from .analytics import (delta_r_frustrated, delta_r_unfrustrated,
                        elastic_probabilities)
from .errors import ConfigError, FrustroError, ParameterError, SweepError
from .scattering import (ScatterConfig, ground_state, load_record,
                         run_scattering, save_record)

__all__ = [
    "CONFIG_SCHEMA",
    "SCHEMA_VERSION",
    "ExperimentConfig",
    "SweepResult",
    "run_sweep",
    "compare_frustrated_unfrustrated",
    "emit_figure_data",
    "FIGURES",
]

SCHEMA_VERSION = 1

# figure id -> (required sweep variant, analytic curve family)
FIGURES = {
    "fig2": ("frustrated", "full"),
    "fig3": ("frustrated", None),
    "figS2": (None, None),
    "figS3": ("parallel", "unfrustrated"),
    "figS4": ("parallel", None),
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "frustro experiment configuration",
    "type": "object",
    "properties": {
        "alphas": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "minimum": 0.0, "maximum": 2.0}},
        "omegas": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "exclusiveMinimum": 0.0}},
        "variant": {"enum": ["frustrated", "parallel"]},
        "species": {"enum": ["x", "y"]},
        "sigma_omega": {"type": "number", "exclusiveMinimum": 0.0},
        "omega_c": {"type": "number", "exclusiveMinimum": 0.0},
        "length": {"type": "integer", "minimum": 8},
        "boson_dim": {"type": "integer", "minimum": 2},
        "chi": {"type": "integer", "minimum": 2},
        "dt": {"type": "number", "exclusiveMinimum": 0.0},
        "t_inf": {"type": ["number", "null"], "exclusiveMinimum": 0.0},
        "x0": {"type": ["number", "null"]},
        "capture_tol": {"type": "number", "exclusiveMinimum": 0.0,
                        "maximum": 0.05},
        "out_dir": {"type": "string", "minLength": 1},
        "workers": {"type": ["integer", "null"], "minimum": 0},
    },
    "required": ["alphas", "omegas"],
    "additionalProperties": False,
}

_VALIDATOR = validators.Draft202012Validator(CONFIG_SCHEMA)

# execution details that must not change the identity of the results
_HASH_EXCLUDED = ("out_dir", "workers")


@dataclass
class ExperimentConfig:
    """A sweep of scattering runs over (alpha, packet center) cells.

    All frequencies are in units of the bare splitting; k-space inputs of
    the scattering layer are derived as omega / omega_c.
    """

    alphas: list
    omegas: list
    variant: str = "frustrated"
    species: str = "x"
    sigma_omega: float = 0.2
    omega_c: float = 10.0
    length: int = 150
    boson_dim: int = 4
    chi: int = 30
    dt: float = 0.01
    t_inf: float | None = None
    x0: float | None = None
    capture_tol: float = 1e-3
    out_dir: str = "runs"
    workers: int | None = None

    def __post_init__(self):
        self.alphas = [float(a) for a in self.alphas]
        self.omegas = [float(w) for w in self.omegas]
        err = next(iter(_VALIDATOR.iter_errors(self.to_dict())), None)
        if err is not None:
            raise ConfigError(f"invalid experiment config: {err.message}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        """12-hex digest over the physics-relevant fields.

        Output location and worker count are execution details and do not
        enter the hash, so moving a sweep or rerunning it with a different
        pool produces identical provenance.
        """
        payload = {k: v for k, v in self.to_dict().items()
                   if k not in _HASH_EXCLUDED}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def scatter_config(self, alpha: float, omega_bar: float) -> ScatterConfig:
        return ScatterConfig(
            alpha=alpha,
            k0=omega_bar / self.omega_c,
            sigma_k=self.sigma_omega / self.omega_c,
            species=self.species,
            variant=self.variant,
            delta=1.0,
            omega_c=self.omega_c,
            length=self.length,
            boson_dim=self.boson_dim,
            chi=self.chi,
            dt=self.dt,
            x0=self.x0,
            t_inf=self.t_inf,
            capture_tol=self.capture_tol,
        )


def _atomic_write(path: str, text: str):
    """Write text so that a killed process never leaves a partial file."""
    tmp = path + ".part"
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".12g")


def _csv_text(header_comment: str, columns: list, rows: list) -> str:
    lines = [header_comment, ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, (int, float, np.floating))
                              else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell_name(hash_: str, alpha: float, omega_bar: float) -> str:
    return f"record-{hash_}-a{_fmt(alpha)}-w{_fmt(omega_bar)}.json"


def _run_alpha_group(config_dict: dict, alpha: float) -> list:
    """Run every packet center at one coupling, reusing the ground state.

    Returns one cell entry per omega: either {"path": ...} plus summary
    scalars, or {"error": ...}. Runs in a worker process, so it only
    takes plain data in and out.
    """
    config = ExperimentConfig.from_dict(config_dict)
    hash_ = config.config_hash()
    cells = []
    ground = None
    for omega_bar in config.omegas:
        cell = {"alpha": alpha, "omega_bar": omega_bar}
        try:
            scfg = config.scatter_config(alpha, omega_bar)
            if ground is None:
                ground = ground_state(scfg)
            rec = run_scattering(scfg, ground=ground)
            path = os.path.join(config.out_dir,
                                _cell_name(hash_, alpha, omega_bar))
            save_record(path, rec)
            cell["path"] = path
            cell["summary"] = {
                "n_elastic_x": rec.n_elastic_x,
                "n_elastic_y": rec.n_elastic_y,
                "n_inelastic_x": rec.n_inelastic_x,
                "n_inelastic_y": rec.n_inelastic_y,
                "gamma_total": rec.gamma_total,
                "p_transmit": rec.p_transmit,
                "p_reflect": rec.p_reflect,
                "p_cross": rec.p_cross,
            }
            cell["curve"] = {
                "omega": [float(v) for v in rec.omega_c * np.asarray(rec.k)],
                "t2": [float(v) for v in np.abs(rec.t_xx) ** 2],
                "r2": [float(v) for v in np.abs(rec.r_xx) ** 2],
                "tyx2": [float(v) for v in np.abs(rec.t_yx) ** 2],
                "gamma": [float(v) for v in rec.gamma_k],
            }
        except FrustroError as exc:
            cell["error"] = f"{type(exc).__name__}: {exc}"
        cells.append(cell)
    return cells


@dataclass
class SweepResult:
    """Executed grid plus the merged flat tables and provenance."""

    config: ExperimentConfig
    cells: list
    schema_version: int = SCHEMA_VERSION
    config_hash: str = ""
    code_version: str = __version__

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = self.config.config_hash()

    @property
    def n_failed(self) -> int:
        return sum(1 for c in self.cells if "error" in c)

    def counts_rows(self) -> list:
        rows = []
        for c in sorted((c for c in self.cells if "summary" in c),
                        key=lambda c: (c["alpha"], c["omega_bar"])):
            s = c["summary"]
            rows.append([c["alpha"], c["omega_bar"],
                         s["n_elastic_x"], s["n_elastic_y"],
                         s["n_inelastic_x"], s["n_inelastic_y"],
                         s["gamma_total"]])
        return rows

    def curve_rows(self) -> list:
        rows = []
        for c in sorted((c for c in self.cells if "curve" in c),
                        key=lambda c: (c["alpha"], c["omega_bar"])):
            cv = c["curve"]
            for i in range(len(cv["omega"])):
                rows.append([c["alpha"], c["omega_bar"], cv["omega"][i],
                             cv["t2"][i], cv["r2"][i], cv["tyx2"][i],
                             cv["gamma"][i]])
        return rows

    def manifest_path(self) -> str:
        return os.path.join(self.config.out_dir,
                            f"sweep-{self.config_hash}.json")

    def save(self) -> str:
        doc = {
            "schema_version": self.schema_version,
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "config": self.config.to_dict(),
            "cells": self.cells,
        }
        path = self.manifest_path()
        _atomic_write(path, json.dumps(doc, sort_keys=True, indent=1))
        return path

    @classmethod
    def load(cls, path: str) -> "SweepResult":
        with open(path) as fh:
            doc = json.load(fh)
        config = ExperimentConfig.from_dict(doc["config"])
        stored = doc.get("config_hash", "")
        if stored != config.config_hash():
            raise ConfigError(
                f"provenance mismatch in {path}: stored hash {stored!r} does "
                f"not match the embedded config")
        return cls(config=config, cells=doc["cells"],
                   schema_version=doc.get("schema_version", SCHEMA_VERSION),
                   config_hash=stored,
                   code_version=doc.get("code_version", ""))

    def records(self):
        for c in self.cells:
            if "path" in c:
                yield c["alpha"], c["omega_bar"], load_record(c["path"])


def _worker_count(config: ExperimentConfig) -> int:
    if config.workers is not None:
        return config.workers
    env = os.environ.get("FRUSTRO_WORKERS", "")
    if env:
        return int(env)
    return os.cpu_count() or 1


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Execute the full (alpha, omega) grid and persist the manifest.

    Cells fail individually without stopping the sweep; the manifest is
    written either way. If more than 20 percent of the grid failed the
    sweep is considered unusable and a SweepError is raised after the
    manifest (with its error entries) has been saved.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    workers = _worker_count(config)
    cfg_dict = config.to_dict()
    if workers <= 1 or len(config.alphas) == 1:
        groups = [_run_alpha_group(cfg_dict, a) for a in config.alphas]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_alpha_group, cfg_dict, a)
                    for a in config.alphas]
            groups = [f.result() for f in futs]
    cells = [cell for group in groups for cell in group]
    result = SweepResult(config=config, cells=cells)
    result.save()
    n_total = len(cells)
    if result.n_failed > 0.2 * n_total:
        failed = [c for c in cells if "error" in c]
        raise SweepError(
            f"{result.n_failed} of {n_total} sweep cells failed; first "
            f"error: {failed[0]['error']}")
    return result


def compare_frustrated_unfrustrated(config: ExperimentConfig):
    """Run both coupling layouts on the same grid and merge the counts.

    Returns (rows, csv_path). Each row carries the numerically measured
    photon counts for the frustrated and the parallel layout at matched
    coupling, plus the analytic elastic probabilities and resonance
    position for both.
    """
    results = {}
    for variant in ("frustrated", "parallel"):
        sub = ExperimentConfig.from_dict({
            **{k: v for k, v in config.to_dict().items()
               if k not in ("variant", "out_dir")},
            "variant": variant,
            "out_dir": os.path.join(config.out_dir, variant),
        })
        results[variant] = run_sweep(sub)
    rows = []
    fr = {(c["alpha"], c["omega_bar"]): c["summary"]
          for c in results["frustrated"].cells if "summary" in c}
    pa = {(c["alpha"], c["omega_bar"]): c["summary"]
          for c in results["parallel"].cells if "summary" in c}
    for key in sorted(set(fr) & set(pa)):
        alpha, omega_bar = key
        f, p = fr[key], pa[key]
        af = elastic_probabilities("full", omega_bar, alpha,
                                   omega_c=config.omega_c)
        ap = elastic_probabilities("unfrustrated", omega_bar, alpha,
                                   omega_c=config.omega_c)
        rows.append([
            alpha, omega_bar,
            f["n_elastic_x"] + f["n_elastic_y"],
            f["n_inelastic_x"] + f["n_inelastic_y"],
            f["gamma_total"],
            p["n_elastic_x"] + p["n_elastic_y"],
            p["n_inelastic_x"] + p["n_inelastic_y"],
            p["gamma_total"],
            float(af["t_xx"]), float(af["r_xx"]),
            float(ap["t_xx"]), float(ap["r_xx"]),
            delta_r_frustrated(alpha, config.omega_c),
            delta_r_unfrustrated(alpha, config.omega_c),
        ])
    columns = ["alpha", "omega_bar",
               "frustrated_n_elastic", "frustrated_n_inelastic",
               "frustrated_gamma",
               "parallel_n_elastic", "parallel_n_inelastic",
               "parallel_gamma",
               "analytic_frustrated_t2", "analytic_frustrated_r2",
               "analytic_parallel_t2", "analytic_parallel_r2",
               "resonance_frustrated", "resonance_parallel"]
    hash_ = config.config_hash()
    text = _csv_text(f"# config_hash={hash_} schema={SCHEMA_VERSION} "
                     f"code={__version__}", columns, rows)
    path = os.path.join(config.out_dir, f"compare-{hash_}.csv")
    os.makedirs(config.out_dir, exist_ok=True)
    _atomic_write(path, text)
    return rows, path


def _analytic_grid(sweep: SweepResult, family: str):
    """Dense analytic curves matching the sweep's coupling axis."""
    config = sweep.config
    omega_hi = max(3.0, max(config.omegas) + 3.0 * config.sigma_omega)
    omegas = np.linspace(0.05, omega_hi, 240)
    rows = {"t2": [], "r2": [], "tyx2": []}
    for alpha in config.alphas:
        probs = elastic_probabilities(family, omegas, alpha,
                                      omega_c=config.omega_c)
        for i, w in enumerate(omegas):
            rows["t2"].append([alpha, float(w), float(probs["t_xx"][i])])
            rows["r2"].append([alpha, float(w), float(probs["r_xx"][i])])
            rows["tyx2"].append([alpha, float(w), float(probs["t_yx"][i])])
    return rows


def emit_figure_data(sweep: SweepResult, figure_id: str,
                     out_dir: str | None = None) -> list:
    """Write plot-ready CSV files plus a manifest for one figure id.

    Returns the list of written paths (manifest last). Reruns on the same
    sweep are byte-identical.
    """
    if figure_id not in FIGURES:
        raise ParameterError(
            f"unknown figure id {figure_id!r}; expected one of "
            f"{sorted(FIGURES)}")
    need_variant, family = FIGURES[figure_id]
    if need_variant is not None and sweep.config.variant != need_variant:
        raise ConfigError(
            f"{figure_id} needs a {need_variant!r} sweep, got "
            f"{sweep.config.variant!r}")
    out = out_dir or os.path.join(sweep.config.out_dir, figure_id)
    os.makedirs(out, exist_ok=True)
    comment = (f"# config_hash={sweep.config_hash} schema={SCHEMA_VERSION} "
               f"code={sweep.code_version}")
    paths = []
    axes = {"alpha": sweep.config.alphas, "omega_unit": "bare splitting"}

    def put(name: str, columns: list, rows: list):
        path = os.path.join(out, name)
        _atomic_write(path, _csv_text(comment, columns, rows))
        paths.append(path)

    if figure_id in ("fig2", "figS3"):
        curve_cols = ["alpha", "omega", "value"]
        merged = sweep.curve_rows()
        for key, col in (("t2", 3), ("r2", 4), ("tyx2", 5)):
            put(f"elastic_{key}_numeric.csv", curve_cols,
                [[r[0], r[2], r[col]] for r in merged])
        analytic = _analytic_grid(sweep, family)
        for key in ("t2", "r2", "tyx2"):
            put(f"elastic_{key}_analytic.csv", curve_cols, analytic[key])
        axes["resonance"] = {
            _fmt(a): (delta_r_frustrated(a, sweep.config.omega_c)
                      if sweep.config.variant == "frustrated"
                      else delta_r_unfrustrated(a, sweep.config.omega_c))
            for a in sweep.config.alphas}
    elif figure_id in ("fig3", "figS4"):
        counts = sweep.counts_rows()
        put("elastic_counts.csv",
            ["alpha", "omega_bar", "n_elastic_x", "n_elastic_y", "n_elastic"],
            [[r[0], r[1], r[2], r[3], r[2] + r[3]] for r in counts])
        put("inelastic_counts.csv",
            ["alpha", "omega_bar", "n_inelastic_x", "n_inelastic_y",
             "n_inelastic", "gamma_total"],
            [[r[0], r[1], r[4], r[5], r[4] + r[5], r[6]] for r in counts])
    else:  # figS2: layout description of the control model, no data panels
        axes["description"] = (
            "control layout: both photon lines couple to the same spin "
            "component, so one circular combination decouples and the "
            "model reduces to a single-bath problem")
    manifest = {
        "figure": figure_id,
        "variant": sweep.config.variant,
        "files": [os.path.basename(p) for p in paths],
        "axes": axes,
        "config_hash": sweep.config_hash,
        "schema_version": SCHEMA_VERSION,
        "code_version": sweep.code_version,
    }
    mpath = os.path.join(out, "manifest.json")
    _atomic_write(mpath, json.dumps(manifest, sort_keys=True, indent=1))
    paths.append(mpath)
    return paths
