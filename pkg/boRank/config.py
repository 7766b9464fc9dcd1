"""
Experiment configuration: one JSON file, overridable from the command line.

Overrides are ``dotted.key=value`` strings; values are decoded as JSON and fall back to plain
strings (``method.session.acquisition.beta=2``, ``oracle.model=gpt-4o-mini``).
"""
import json
import logging
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Optional

import psutil

from boRank.evaluation.metrics import GAINS
from boRank.gp.posterior import KernelParams
from boRank.oracle.oracles import OracleConfig
from boRank.search.acquisition import AcquisitionConfig
from boRank.search.baselines import BaselineConfig, BaselineKind
from boRank.search.session import SessionConfig
from boRank.utils.errors import BoRankError, ConfigError

logger = logging.getLogger(__name__)

SESSION_METHODS = ("bo", BaselineKind.BO_TOPK.value)
METHODS = SESSION_METHODS + tuple(kind.value for kind in BaselineKind if kind is not BaselineKind.BO_TOPK)


@dataclass(frozen=True)
class DatasetPaths:
    corpus: str
    queries: str
    embeddings: str
    manifest: str
    query_embeddings: str
    query_manifest: str
    qrels: Optional[str] = None
    qrels_format: str = "beir-tsv"
    reformulations: Optional[str] = None
    reformulation_embeddings: Optional[str] = None
    reformulation_manifest: Optional[str] = None
    name: str = "dataset"

    def required(self):
        """(field name, path) of every path that must exist."""
        paths = [(f.name, getattr(self, f.name)) for f in fields(self)
                 if f.name not in ("qrels_format", "name", "reformulations") and getattr(self, f.name)]
        if self.reformulations and Path(self.reformulations).exists():
            paths.append(("reformulations", self.reformulations))
        return paths


@dataclass(frozen=True)
class MethodConfig:
    """``name`` is ``bo``, ``bo_topk`` or a baseline kind; ``session`` also sets ``output_k`` for baselines."""
    name: str = "bo"
    session: SessionConfig = field(default_factory=SessionConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def __post_init__(self):
        if self.name not in METHODS:
            raise ConfigError(f"Unknown method '{self.name}', expected one of {METHODS}")
        if self.name not in SESSION_METHODS and self.baseline.kind.value != self.name:
            object.__setattr__(self, "baseline", BaselineConfig(self.name, self.baseline.k, self.baseline.mmr_lambda,
                                                                self.baseline.batch_size))

    @property
    def is_session(self):
        return self.name in SESSION_METHODS

    @property
    def needs_oracle(self):
        return self.is_session or self.name == BaselineKind.POINTWISE.value

    @property
    def output_k(self):
        return self.session.output_k


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetPaths
    method: MethodConfig = field(default_factory=MethodConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output_dir: str = "runs"
    run_tag: str = "boRank"
    seed: int = 0
    workers: Optional[int] = None
    oracle_concurrency: int = 4
    ks: tuple = (50, 100, 200)
    ndcg_ks: tuple = (10,)
    gain: str = "exponential"

    def __post_init__(self):
        if not self.run_tag or any(c.isspace() for c in self.run_tag):
            raise ConfigError(f"run_tag must be a non-empty string without whitespace, got '{self.run_tag}'")
        if self.oracle_concurrency < 1:
            raise ConfigError("oracle_concurrency must be >= 1")
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        object.__setattr__(self, "ndcg_ks", tuple(int(k) for k in self.ndcg_ks))
        if self.gain not in GAINS:
            raise ConfigError(f"gain must be one of {GAINS}, got '{self.gain}'")

    @property
    def worker_count(self):
        """Configured workers, else hardware threads capped by the oracle concurrency limit."""
        if self.workers:
            return int(self.workers)
        return max(1, min(psutil.cpu_count(logical=True) or 1, self.oracle_concurrency))


def parse_override(text):
    """
    Split ``dotted.key=value`` into (key path, decoded value).

    Examples
    --------
    >>> parse_override("method.session.budget=50")
    (['method', 'session', 'budget'], 50)
    >>> parse_override("oracle.model=gpt-4o")
    (['oracle', 'model'], 'gpt-4o')
    """
    if "=" not in text:
        raise ConfigError(f"Override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(data, overrides):
    """Set every override on the nested dict ``data`` (in place) and return it."""
    for text in overrides or ():
        keys, value = parse_override(text)
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Override '{text}': '{key}' is not a section")
        node[keys[-1]] = value
    return data


def _build(cls, data, where):
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' must be an object")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"'{where}': {e}") from None
    except (ValueError, BoRankError) as e:
        raise ConfigError(f"'{where}': {getattr(e, 'message', e)}") from None


def config_from_dict(data):
    """Build an ``ExperimentConfig`` from a plain nested dict (JSON file plus overrides)."""
    data = json.loads(json.dumps(data))
    seed = int(data.get("seed", 0))
    method = data.get("method", {})
    session = method.get("session", {})
    acquisition = session.get("acquisition", {})
    acquisition.setdefault("rng_seed", seed)
    session["acquisition"] = _build(AcquisitionConfig, acquisition, "method.session.acquisition")
    session["kernel"] = _build(KernelParams, session.get("kernel", {}), "method.session.kernel")
    method["session"] = _build(SessionConfig, session, "method.session")
    method["baseline"] = _build(BaselineConfig, method.get("baseline", {}), "method.baseline")
    oracle = data.get("oracle", {})
    oracle.setdefault("rng_seed", seed)

    if "dataset" not in data:
        raise ConfigError("Config has no 'dataset' section")
    data["dataset"] = _build(DatasetPaths, data["dataset"], "dataset")
    data["method"] = _build(MethodConfig, method, "method")
    data["oracle"] = _build(OracleConfig, oracle, "oracle")
    data["seed"] = seed
    return _build(ExperimentConfig, data, "config")


def load_config(path, overrides=()):
    """
    Read an experiment JSON file and apply ``overrides`` (flag beats file).

    Parameters
    ----------
    path : str or Path
    overrides : iterable of str
        ``dotted.key=value`` strings

    Returns
    -------
    config : ExperimentConfig
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e.strerror}") from None
    except ValueError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from None
    return config_from_dict(apply_overrides(data, overrides))


def config_to_dict(config):
    """Plain-JSON view of a config, for recording next to the outputs."""
    if is_dataclass(config):
        return {f.name: config_to_dict(getattr(config, f.name)) for f in fields(config)}
    if isinstance(config, (list, tuple)):
        return [config_to_dict(v) for v in config]
    if hasattr(config, "value"):
        return config.value
    return config
