"""Experiment configuration: INI-style files with per-section key = value pairs.

A config selects the scenario, its parameter overrides, the nominal error
levels, and the design/simulation controls.  Everything is validated
against the module invariants before any run starts; validation failures
carry the offending section and key.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

import numpy as np

from .design import DesignConfig
from .montecarlo import SimulationConfig
from .policy import CostCoefficients
from .qam import QamConfig, QamModel, square_constellation
from .shift_in_mean import QuadratureSpec, ShiftInMeanModel, SiMConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the field."""


_KNOWN_KEYS = {
    "experiment": {"scenario", "output_dir"},
    "scenario": {"sigma2", "gamma_shape", "gamma_scale", "offset", "uniform_lo",
                 "uniform_hi", "priors", "igam_shape", "igam_scale",
                 "constellation_levels", "constellation_scale"},
    "quadrature": {"node_count", "tail_mass_cut", "refinement_factor",
                   "max_refinements", "rel_tol"},
    "levels": {"alpha_bar", "beta_bar"},
    "design": {"tol_det", "tol_est", "epsilon", "runs_per_iter", "max_iters",
               "step_scale", "initial_lambda_det", "initial_lambda_est"},
    "simulation": {"runs", "n_max", "stratify", "workers", "master_seed",
                   "chunk_size"},
    "msprt": {"threshold_rule"},
}

_SCENARIO_KEYS = {
    "shift_in_mean": {"sigma2", "gamma_shape", "gamma_scale", "offset",
                      "uniform_lo", "uniform_hi", "priors"},
    "qam": {"igam_shape", "igam_scale", "constellation_levels",
            "constellation_scale", "priors"},
}


def _parse_float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}")


def _parse_int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}")


def _parse_bool(section, key, raw):
    val = raw.strip().lower()
    if val in {"true", "yes", "1", "on"}:
        return True
    if val in {"false", "no", "0", "off"}:
        return False
    raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")


def _parse_floats(section, key, raw):
    try:
        return np.array([float(tok) for tok in raw.split(",") if tok.strip()])
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected comma-separated numbers, got {raw!r}")


def _broadcast_level(section, key, values, M):
    if len(values) == 1:
        return np.full(M, values[0])
    if len(values) != M:
        raise ConfigError(f"[{section}] {key}: expected 1 or {M} values, got {len(values)}")
    return values


@dataclass
class ExperimentConfig:
    """Validated experiment: a constructed model plus run controls."""

    scenario: str
    model: object
    alpha_bar: np.ndarray
    beta_bar: np.ndarray
    design_kwargs: dict
    sim_kwargs: dict
    msprt_rule: str
    output_dir: str
    sha256: str
    master_seed: int

    def design_config(self, master_seed=None, runs_per_iter=None, workers=None):
        kw = dict(self.design_kwargs)
        kw["alpha_bar"] = self.alpha_bar
        kw["beta_bar"] = self.beta_bar
        if master_seed is not None:
            kw["master_seed"] = master_seed
        if runs_per_iter is not None:
            kw["runs_per_iter"] = runs_per_iter
        if workers is not None:
            kw["workers"] = workers
        try:
            return DesignConfig(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc))

    def sim_config(self, master_seed=None, runs=None, workers=None):
        kw = dict(self.sim_kwargs)
        if master_seed is not None:
            kw["master_seed"] = master_seed
        if runs is not None:
            kw["runs"] = runs
        if workers is not None:
            kw["workers"] = workers
        try:
            return SimulationConfig(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc))


def load_config(path):
    """Parse and validate an experiment config file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, "r") as fh:
        text = fh.read()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}")

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}")

    if not parser.has_section("experiment") or "scenario" not in parser["experiment"]:
        raise ConfigError("[experiment] scenario is required")
    scenario = parser["experiment"]["scenario"].strip()
    if scenario not in _SCENARIO_KEYS:
        raise ConfigError(f"[experiment] scenario must be one of {sorted(_SCENARIO_KEYS)}")
    output_dir = parser["experiment"].get("output_dir", "out").strip()

    scen = parser["scenario"] if parser.has_section("scenario") else {}
    for key in scen:
        if key not in _SCENARIO_KEYS[scenario]:
            raise ConfigError(f"[scenario] key {key!r} does not apply to {scenario}")

    try:
        model = _build_model(scenario, scen, parser)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[scenario] {exc}")

    M = model.M
    levels = parser["levels"] if parser.has_section("levels") else {}
    alpha_raw = levels.get("alpha_bar", "0.05")
    beta_raw = levels.get("beta_bar", "0.1")
    alpha_bar = _broadcast_level("levels", "alpha_bar",
                                 _parse_floats("levels", "alpha_bar", alpha_raw), M)
    beta_bar = _broadcast_level("levels", "beta_bar",
                                _parse_floats("levels", "beta_bar", beta_raw), M)
    if np.any((alpha_bar <= 0) | (alpha_bar >= 1)):
        raise ConfigError("[levels] alpha_bar must lie in (0,1)")
    if np.any(beta_bar <= 0):
        raise ConfigError("[levels] beta_bar must be positive")

    design_kwargs = {}
    if parser.has_section("design"):
        d = parser["design"]
        if "tol_det" in d:
            design_kwargs["tol_det"] = _parse_float("design", "tol_det", d["tol_det"])
        if "tol_est" in d:
            design_kwargs["tol_est"] = _parse_float("design", "tol_est", d["tol_est"])
        if "epsilon" in d:
            design_kwargs["epsilon"] = _parse_float("design", "epsilon", d["epsilon"])
        if "runs_per_iter" in d:
            design_kwargs["runs_per_iter"] = _parse_int("design", "runs_per_iter",
                                                        d["runs_per_iter"])
        if "max_iters" in d:
            design_kwargs["max_iters"] = _parse_int("design", "max_iters", d["max_iters"])
        if "step_scale" in d:
            design_kwargs["step_scale"] = _parse_float("design", "step_scale",
                                                       d["step_scale"])
        init_det = d.get("initial_lambda_det", "").strip()
        init_est = d.get("initial_lambda_est", "").strip()
        if bool(init_det) != bool(init_est):
            raise ConfigError("[design] initial_lambda_det and initial_lambda_est "
                              "must be given together")
        if init_det:
            ld = _parse_floats("design", "initial_lambda_det", init_det)
            le = _parse_floats("design", "initial_lambda_est", init_est)
            if len(ld) != M or len(le) != M:
                raise ConfigError(f"[design] initial coefficients need {M} values each")
            try:
                design_kwargs["initial"] = CostCoefficients(ld, le)
            except ValueError as exc:
                raise ConfigError(f"[design] {exc}")

    sim_kwargs = {}
    master_seed = 1
    if parser.has_section("simulation"):
        s = parser["simulation"]
        if "runs" in s:
            sim_kwargs["runs"] = _parse_int("simulation", "runs", s["runs"])
        if "n_max" in s:
            sim_kwargs["n_max"] = _parse_int("simulation", "n_max", s["n_max"])
            design_kwargs["n_max"] = sim_kwargs["n_max"]
        if "stratify" in s:
            sim_kwargs["stratify_by_hypothesis"] = _parse_bool(
                "simulation", "stratify", s["stratify"])
        if "workers" in s:
            sim_kwargs["workers"] = _parse_int("simulation", "workers", s["workers"])
            design_kwargs["workers"] = sim_kwargs["workers"]
        if "chunk_size" in s:
            sim_kwargs["chunk_size"] = _parse_int("simulation", "chunk_size",
                                                  s["chunk_size"])
        if "master_seed" in s:
            master_seed = _parse_int("simulation", "master_seed", s["master_seed"])

    msprt_rule = "conservative"
    if parser.has_section("msprt") and "threshold_rule" in parser["msprt"]:
        msprt_rule = parser["msprt"]["threshold_rule"].strip()
        if msprt_rule not in {"conservative", "benchmark"}:
            raise ConfigError("[msprt] threshold_rule must be 'conservative' or 'benchmark'")

    sha = hashlib.sha256(text.encode()).hexdigest()[:16]
    return ExperimentConfig(
        scenario=scenario, model=model, alpha_bar=alpha_bar, beta_bar=beta_bar,
        design_kwargs=design_kwargs, sim_kwargs=sim_kwargs, msprt_rule=msprt_rule,
        output_dir=output_dir, sha256=sha, master_seed=master_seed,
    )


def _build_model(scenario, scen, parser):
    priors = None
    if "priors" in scen:
        priors = _parse_floats("scenario", "priors", scen["priors"])

    if scenario == "shift_in_mean":
        kwargs = {}
        for key in ("sigma2", "gamma_shape", "gamma_scale", "offset",
                    "uniform_lo", "uniform_hi"):
            if key in scen:
                kwargs[key] = _parse_float("scenario", key, scen[key])
        if priors is not None:
            kwargs["priors"] = tuple(priors)
        quad = {}
        if parser.has_section("quadrature"):
            qsec = parser["quadrature"]
            for key in ("node_count", "refinement_factor", "max_refinements"):
                if key in qsec:
                    quad[key] = _parse_int("quadrature", key, qsec[key])
            for key in ("tail_mass_cut", "rel_tol"):
                if key in qsec:
                    quad[key] = _parse_float("quadrature", key, qsec[key])
        return ShiftInMeanModel(SiMConfig(**kwargs), QuadratureSpec(**quad))

    if parser.has_section("quadrature"):
        raise ConfigError("[quadrature] applies only to shift_in_mean")
    kwargs = {}
    if "igam_shape" in scen:
        kwargs["igam_shape"] = _parse_float("scenario", "igam_shape", scen["igam_shape"])
    if "igam_scale" in scen:
        kwargs["igam_scale"] = _parse_float("scenario", "igam_scale", scen["igam_scale"])
    levels = (-3.0, -1.0, 1.0, 3.0)
    if "constellation_levels" in scen:
        levels = tuple(_parse_floats("scenario", "constellation_levels",
                                     scen["constellation_levels"]))
    scale = None
    if "constellation_scale" in scen:
        scale = _parse_float("scenario", "constellation_scale",
                             scen["constellation_scale"])
    kwargs["constellation"] = square_constellation(levels, scale)
    return QamModel(QamConfig(**kwargs), priors=priors)
