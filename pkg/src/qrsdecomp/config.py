"""Run configuration: a single JSON document with dotted-flag overrides.

Every run is fully determined by one RunConfig; its canonical hash is
embedded in all output files so downstream commands can detect stale
artifacts and reruns can be verified byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from . import copulas, propensity
from .data import Schema
from .errors import ConfigError
from .pipeline import QrsConfig, TauGrid, ThetaSearch

DEFAULT_QUANTILE_TAUS = (0.10, 0.25, 0.50, 0.75, 0.90)


@dataclass(frozen=True)
class RunConfig:
    schema: dict = field(default_factory=lambda: {
        "outcome_col": "y", "selection_col": "s", "group_col": "d",
        "instrument_col": "z1", "covariate_cols": ["x1"],
        "stratify_col": None})
    copula_family: str = copulas.FRANK
    instrument_fn: str = "propensity"
    link: str = propensity.PROBIT
    tau_grid: dict = field(default_factory=lambda: {"eps": 0.01, "step": 0.01})
    theta_search: dict | None = None
    bootstrap: dict = field(default_factory=lambda: {
        "replications": 200, "seed": 0})
    quantile_taus: tuple = DEFAULT_QUANTILE_TAUS
    dgp: dict = field(default_factory=lambda: {
        "n_per_group": 5000, "seed": 0, "theta0": -5.0, "theta1": -2.0,
        "family": copulas.FRANK})
    seed: int = 0
    workers: int = 1

    def to_schema(self) -> Schema:
        s = self.schema
        try:
            return Schema(outcome_col=s["outcome_col"],
                          selection_col=s["selection_col"],
                          group_col=s["group_col"],
                          instrument_col=s["instrument_col"],
                          covariate_cols=tuple(s["covariate_cols"]),
                          stratify_col=s.get("stratify_col"))
        except KeyError as exc:
            raise ConfigError("schema is missing key %s" % exc) from None

    def to_qrs_config(self) -> QrsConfig:
        grid = TauGrid(**self.tau_grid)
        search = (None if self.theta_search is None
                  else ThetaSearch(**self.theta_search))
        return QrsConfig(tau_grid=grid, copula_family=self.copula_family,
                         theta_search=search, instrument_fn=self.instrument_fn,
                         link=self.link, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quantile_taus"] = list(self.quantile_taus)
        return d


def config_hash(cfg: RunConfig) -> str:
    """Stable short digest of the canonical JSON form."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path=None, overrides=()) -> RunConfig:
    """Read JSON config and apply ``section.key=value`` overrides."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError("unknown config key(s): %s" % ", ".join(sorted(unknown)))
    cfg = RunConfig(**_normalized(data))
    for text in overrides:
        cfg = apply_override(cfg, text)
    cfg.to_schema()
    cfg.to_qrs_config()
    return cfg


def _normalized(data):
    out = dict(data)
    if "quantile_taus" in out:
        out["quantile_taus"] = tuple(out["quantile_taus"])
    return out


def apply_override(cfg: RunConfig, text) -> RunConfig:
    """Apply one ``key=value`` or ``section.key=value`` override."""
    if "=" not in text:
        raise ConfigError("override %r is not of the form key=value" % (text,))
    dotted, raw = text.split("=", 1)
    value = _parse_value(raw)
    parts = dotted.split(".")
    d = cfg.to_dict()
    node = d
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError("unknown config section %r" % (dotted,))
        node = node[p]
    leaf = parts[-1]
    if len(parts) == 1 and leaf not in d:
        raise ConfigError("unknown config key %r" % (leaf,))
    node[leaf] = value
    return RunConfig(**_normalized(d))


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw  # bare strings are allowed without quotes
