"""INI experiment files.

Sections and keys::

    [problem]  kind, d, sigma, n_samples, l2, label_noise, seed
    [cluster]  m, q, n
    [rule]     kind, q
    [attack]   kind, epsilon, start_iteration, start_epoch
    [run]      T, gamma, gamma_decay, gamma_decay_interval, seed, x0,
               n_jobs, iterations_per_epoch
    [check]    mode, g, sigma, trials, confidence

Unknown sections or keys are rejected with their line number.
"""

import configparser
from dataclasses import dataclass
import math
import re
from typing import Optional

import numpy as np

from .aggregation import make_rule
from .attacks import make_attack
from .exceptions import ConfigurationError
from .problems import make_problem
from .simulator import ExperimentConfig

__all__ = ["ConfigError", "CheckSettings", "LoadedConfig", "load_config", "parse_config"]


class ConfigError(ConfigurationError):
    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f"{key}"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)


_SCHEMA = {
    "problem": {"kind": str, "d": int, "sigma": float, "n_samples": int, "l2": float,
                "label_noise": float, "seed": int},
    "cluster": {"m": int, "q": int, "n": int},
    "rule": {"kind": str, "q": int},
    "attack": {"kind": str, "epsilon": float, "start_iteration": "iteration",
               "start_epoch": float},
    "run": {"T": int, "gamma": float, "gamma_decay": float, "gamma_decay_interval": int,
            "seed": int, "x0": "vector", "n_jobs": int, "iterations_per_epoch": int},
    "check": {"mode": str, "g": "vector", "sigma": float, "trials": int,
              "confidence": float},
}

_FIELD_KEYS = {"m": "cluster.m", "q": "cluster.q", "n": "cluster.n", "rule": "rule.q",
               "T": "run.T", "gamma": "run.gamma", "gamma_decay": "run.gamma_decay",
               "gamma_decay_interval": "run.gamma_decay_interval", "n_jobs": "run.n_jobs",
               "x0": "run.x0"}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _locate(text):
    lines = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            lines.setdefault((section, m.group(1)), no)
    return lines


def _convert(kind, raw):
    if kind is int:
        return int(raw)
    if kind is float:
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value
    if kind == "iteration":
        if raw.strip().lower() in ("inf", "never", "infinity"):
            return math.inf
        return int(raw)
    if kind == "vector":
        return np.array([float(v) for v in raw.replace(",", " ").split()], dtype=np.float64)
    return raw.strip()


@dataclass
class CheckSettings:
    mode: str = "tolerance"
    g: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    trials: int = 10_000
    confidence: float = 0.99


@dataclass
class LoadedConfig:
    experiment: ExperimentConfig
    check: CheckSettings
    values: dict


def parse_config(text, seed=None):
    """Parse INI ``text`` into an :class:`ExperimentConfig` plus check settings.

    ``seed`` overrides ``run.seed``.
    """
    where = _locate(text)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed file: {exc}") from exc

    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError("unknown section", f"[{section}]", where.get((section, None)))
        for key, raw in parser.items(section):
            name = f"{section}.{key}"
            line = where.get((section, key))
            if key not in _SCHEMA[section]:
                raise ConfigError("unknown key", name, line)
            try:
                values[name] = _convert(_SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ConfigError(f"bad value {raw!r} ({exc})", name, line) from exc

    def get(name, default=None):
        return values.get(name, default)

    def fail(name, message):
        section, key = name.split(".", 1)
        raise ConfigError(message, name, where.get((section, key)))

    m = get("cluster.m", 25)
    q = get("cluster.q", 0)
    if q < 0 or not 2 * q < m:
        fail("cluster.q", f"Byzantine count must satisfy 2q < m (got m={m}, q={q})")

    try:
        problem = make_problem(get("problem.kind", "quadratic"), dimension=get("problem.d", 10),
                               sigma=get("problem.sigma", 1.0),
                               n_samples=get("problem.n_samples", 2000),
                               l2=get("problem.l2", 1e-3),
                               label_noise=get("problem.label_noise", 0.05),
                               random_state=get("problem.seed", 0))
    except ValueError as exc:
        fail("problem.kind", str(exc))

    try:
        rule = make_rule(get("rule.kind", "mean"), n_byzantine=get("rule.q", q))
    except ConfigurationError as exc:
        fail("rule.kind", str(exc))

    start = get("attack.start_iteration", 0)
    if "attack.start_epoch" in values:
        ipe = get("run.iterations_per_epoch")
        if ipe is None:
            fail("attack.start_epoch", "needs run.iterations_per_epoch")
        start = int(round(values["attack.start_epoch"] * ipe))
    try:
        attack = make_attack(get("attack.kind", "none"), epsilon=get("attack.epsilon", 0.0),
                             start_iteration=start)
    except ConfigurationError as exc:
        fail("attack.kind", str(exc))

    experiment = ExperimentConfig(
        problem=problem, rule=rule, attack=attack, m=m, q=q, n=get("cluster.n", 50),
        T=get("run.T", 300), gamma=get("run.gamma", 0.1),
        gamma_decay=get("run.gamma_decay"), gamma_decay_interval=get("run.gamma_decay_interval"),
        seed=get("run.seed", 0) if seed is None else seed, x0=get("run.x0"),
        n_jobs=get("run.n_jobs", 1), iterations_per_epoch=get("run.iterations_per_epoch"))
    try:
        experiment.validate()
    except ConfigurationError as exc:
        key = _FIELD_KEYS.get(exc.field, "cluster.m")
        section, _, opt = key.partition(".")
        raise ConfigError(str(exc), key, where.get((section, opt))) from exc

    g = get("check.g")
    if g is not None and g.size == 1:
        g = np.full(problem.dimension, g[0])
    check = CheckSettings(mode=get("check.mode", "tolerance"), g=g,
                          sigma=get("check.sigma"), trials=get("check.trials", 10_000),
                          confidence=get("check.confidence", 0.99))
    if check.mode not in ("tolerance", "krum_instance"):
        fail("check.mode", "must be 'tolerance' or 'krum_instance'")
    return LoadedConfig(experiment, check, values)


def load_config(path, seed=None):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, seed=seed)
