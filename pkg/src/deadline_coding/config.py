"""JSON experiment documents and the named figure presets.

A document mirrors :class:`~deadline_coding.sim.ExperimentConfig`; ``mu_star``
and ``learner`` may also be lists, in which case the document describes the
product of runs. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .model import ArrivalDistribution, ParamError, SystemParams
from .sim import MASK64, TRANSITIONS, ExperimentConfig, LearnerSpec

TOP_FIELDS = {
    "name", "description", "params", "arrivals", "mu_star", "learner",
    "horizon", "replications", "base_seed", "transition_mode", "analysis",
}
PARAM_FIELDS = {"T", "d", "lambda", "a_max", "channel_cap"}
ARRIVAL_FIELDS = {"pmf"}
LEARNER_FIELDS = {"kind", "beta"}
ANALYSIS_FIELDS = {"what", "sweep", "mu"}


class ConfigError(ValueError):
    """A configuration document is malformed; the message names the offending field."""


def _unknown(obj: dict, allowed: set, where: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown config field '{prefix}{extra[0]}'")


def _require(obj: dict, key: str, where: str = "") -> Any:
    if key not in obj:
        raise ConfigError(f"missing config field '{where + '.' if where else ''}{key}'")
    return obj[key]


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config field '{name}' must be a number, got {value!r}")
    return float(value)


def _integer(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"config field '{name}' must be an integer, got {value!r}")
    return value


@dataclass
class ConfigDocument:
    params: SystemParams
    name: str = ""
    description: str = ""
    arrivals: Optional[ArrivalDistribution] = None
    mu_star: list = field(default_factory=list)
    learners: list = field(default_factory=list)
    horizon: Optional[int] = None
    replications: Optional[int] = None
    base_seed: Optional[int] = None
    transition_mode: str = "realized"
    analysis: dict = field(default_factory=dict)

    def resolve_seed(self) -> int:
        """Fill in a fresh random seed when the document did not pin one."""
        if self.base_seed is None:
            self.base_seed = int(np.random.SeedSequence().entropy) & MASK64
        return self.base_seed

    def experiments(self) -> list[ExperimentConfig]:
        """Every (mu_star, learner) run the document describes, mu_star-major."""
        for key, val in (("arrivals", self.arrivals), ("horizon", self.horizon),
                         ("replications", self.replications)):
            if val is None:
                raise ConfigError(f"missing config field '{key}' (needed to simulate)")
        if not self.mu_star:
            raise ConfigError("missing config field 'mu_star' (needed to simulate)")
        if not self.learners:
            raise ConfigError("missing config field 'learner' (needed to simulate)")
        seed = self.resolve_seed()
        runs = []
        for mu in self.mu_star:
            for spec in self.learners:
                try:
                    runs.append(ExperimentConfig(self.params, self.arrivals, mu, spec, self.horizon,
                                                 self.replications, seed, self.transition_mode))
                except ValueError as exc:
                    raise ConfigError(f"invalid experiment: {exc}") from exc
        return runs

    def to_dict(self) -> dict:
        p = self.params
        out: dict = {}
        if self.name:
            out["name"] = self.name
        if self.description:
            out["description"] = self.description
        out["params"] = {"T": p.T, "d": p.d, "lambda": p.lam, "a_max": p.a_max, "channel_cap": p.channel_cap}
        if self.arrivals is not None:
            out["arrivals"] = {"pmf": list(self.arrivals.pmf)}
        if self.mu_star:
            out["mu_star"] = self.mu_star[0] if len(self.mu_star) == 1 else list(self.mu_star)
        if self.learners:
            ls = [_learner_dict(s) for s in self.learners]
            out["learner"] = ls[0] if len(ls) == 1 else ls
        for key in ("horizon", "replications", "base_seed"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        out["transition_mode"] = self.transition_mode
        if self.analysis:
            out["analysis"] = dict(self.analysis)
        return out


def _learner_dict(spec: LearnerSpec) -> dict:
    return {"kind": spec.kind, "beta": spec.beta} if spec.kind == "ucb" else {"kind": spec.kind}


def _parse_learner(obj: Any, where: str) -> LearnerSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"config field '{where}' must be an object")
    _unknown(obj, LEARNER_FIELDS, where)
    kind = _require(obj, "kind", where)
    beta = obj.get("beta")
    if beta is not None:
        beta = _number(beta, f"{where}.beta")
    try:
        return LearnerSpec(kind, beta)
    except ValueError as exc:
        raise ConfigError(f"config field '{where}': {exc}") from exc


def _parse_params(obj: Any) -> SystemParams:
    if not isinstance(obj, dict):
        raise ConfigError("config field 'params' must be an object")
    _unknown(obj, PARAM_FIELDS, "params")
    cap = obj.get("channel_cap")
    try:
        return SystemParams(
            T=_integer(_require(obj, "T", "params"), "params.T"),
            d=_number(_require(obj, "d", "params"), "params.d"),
            lam=_number(_require(obj, "lambda", "params"), "params.lambda"),
            a_max=_integer(_require(obj, "a_max", "params"), "params.a_max"),
            channel_cap=None if cap is None else _integer(cap, "params.channel_cap"),
        )
    except ParamError as exc:
        raise ConfigError(f"config field 'params': {exc}") from exc


def parse_config(doc: Any) -> ConfigDocument:
    """Validate a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _unknown(doc, TOP_FIELDS, "")
    out = ConfigDocument(params=_parse_params(_require(doc, "params")))
    out.name = str(doc.get("name", ""))
    out.description = str(doc.get("description", ""))

    if "arrivals" in doc:
        arr = doc["arrivals"]
        if not isinstance(arr, dict):
            raise ConfigError("config field 'arrivals' must be an object")
        _unknown(arr, ARRIVAL_FIELDS, "arrivals")
        pmf = _require(arr, "pmf", "arrivals")
        if not isinstance(pmf, list):
            raise ConfigError("config field 'arrivals.pmf' must be a list")
        try:
            out.arrivals = ArrivalDistribution(tuple(_number(v, "arrivals.pmf") for v in pmf))
        except ParamError as exc:
            raise ConfigError(f"config field 'arrivals.pmf': {exc}") from exc
        if out.arrivals.a_max != out.params.a_max:
            raise ConfigError(
                f"config field 'arrivals.pmf' has {len(pmf)} entries; params.a_max needs {out.params.a_max + 1}"
            )

    if "mu_star" in doc:
        raw = doc["mu_star"]
        vals = raw if isinstance(raw, list) else [raw]
        out.mu_star = [_number(v, "mu_star") for v in vals]
        if any(not 0.0 <= v <= 1.0 for v in out.mu_star):
            raise ConfigError("config field 'mu_star' must lie in [0, 1]")

    if "learner" in doc:
        raw = doc["learner"]
        items = raw if isinstance(raw, list) else [raw]
        out.learners = [_parse_learner(v, "learner") for v in items]

    for key in ("horizon", "replications"):
        if key in doc:
            val = _integer(doc[key], key)
            if val < 1:
                raise ConfigError(f"config field '{key}' must be at least 1")
            setattr(out, key, val)
    if "base_seed" in doc and doc["base_seed"] is not None:
        seed = _integer(doc["base_seed"], "base_seed")
        if not 0 <= seed <= MASK64:
            raise ConfigError("config field 'base_seed' must be a 64-bit unsigned integer")
        out.base_seed = seed
    if "transition_mode" in doc:
        if doc["transition_mode"] not in TRANSITIONS:
            raise ConfigError(f"config field 'transition_mode' must be one of {list(TRANSITIONS)}")
        out.transition_mode = doc["transition_mode"]
    if "analysis" in doc:
        an = doc["analysis"]
        if not isinstance(an, dict):
            raise ConfigError("config field 'analysis' must be an object")
        _unknown(an, ANALYSIS_FIELDS, "analysis")
        out.analysis = dict(an)
    return out


def load_config(path: str) -> ConfigDocument:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(doc)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

UCB4 = {"kind": "ucb", "beta": 4.0}
TS = {"kind": "ts"}
SIM_DEFAULTS = {"horizon": 10000, "replications": 200, "base_seed": 20190601, "transition_mode": "realized"}


def _point(a: int) -> dict:
    return {"pmf": [0.0] * a + [1.0]}


def _uniform(a_max: int) -> dict:
    return {"pmf": [1.0 / (a_max + 1)] * (a_max + 1)}


def _tolerant(mu: float, desc: str) -> dict:
    return {
        "description": desc,
        "params": {"T": 4, "d": 0.25, "lambda": 1.0, "a_max": 1, "channel_cap": None},
        "arrivals": _point(1),
        "mu_star": mu,
        "learner": [UCB4, TS],
        **SIM_DEFAULTS,
    }


def _intolerant(mu: float, d: float, lam: float, desc: str) -> dict:
    return {
        "description": desc,
        "params": {"T": 1, "d": d, "lambda": lam, "a_max": 6, "channel_cap": None},
        "arrivals": _uniform(6),
        "mu_star": mu,
        "learner": [UCB4, TS],
        **SIM_DEFAULTS,
    }


_CONTINUOUS = {"T": 1, "d": 0.25, "lambda": 1.0, "a_max": 6, "channel_cap": None}

PRESETS: dict[str, dict] = {
    "fig3": {
        "description": "optimal block lengths vs belief, single packet, four slots",
        "params": {"T": 4, "d": 0.25, "lambda": 1.0, "a_max": 1, "channel_cap": None},
        "analysis": {"what": "policy", "sweep": "mu:0:1:101"},
    },
    "fig5": {
        "description": "continuous-approximation optimum (m1, x1) for six queued packets",
        "params": _CONTINUOUS,
        "analysis": {"what": "continuous", "sweep": "mu:0.01:0.99:99"},
    },
    "fig6": {
        "description": "continuous-approximation code rate for six queued packets",
        "params": _CONTINUOUS,
        "analysis": {"what": "rate", "sweep": "mu:0.01:0.99:99"},
    },
    "fig7": _tolerant(0.7, "delay tolerant, mu*=0.7: regret (bounded regime)"),
    "fig8": _tolerant(0.7, "delay tolerant, mu*=0.7: throughput"),
    "tolerant-low": _tolerant(0.05, "delay tolerant, mu*=0.05: regret and throughput (logarithmic regime)"),
    "fig9": _intolerant(0.05, 0.25, 1.0, "delay intolerant, mu*=0.05: regret"),
    "fig10": _intolerant(0.05, 0.25, 1.0, "delay intolerant, mu*=0.05: throughput"),
    "fig11": _intolerant(0.81, 0.25, 1.0, "delay intolerant, mu*=0.81: regret and throughput"),
    "fig9alt": _intolerant(0.05, 0.2, 0.0, "delay intolerant, mu*=0.05: regret, d=0.2 lambda=0 variant"),
    "fig10alt": _intolerant(0.05, 0.2, 0.0, "delay intolerant, mu*=0.05: throughput, d=0.2 lambda=0 variant"),
    "fig11alt": _intolerant(0.81, 0.2, 0.0, "delay intolerant, mu*=0.81: regret and throughput, d=0.2 lambda=0 variant"),
    "fig12": {
        "description": "UCB vs TS with two packets per frame and at most two channels",
        "params": {"T": 1, "d": 0.2, "lambda": 0.0, "a_max": 2, "channel_cap": 2},
        "arrivals": _point(2),
        "mu_star": [0.1, 0.15, 0.22, 0.25, 0.3],
        "learner": [UCB4, TS],
        **SIM_DEFAULTS,
    },
}
for _name, _doc in PRESETS.items():
    _doc["name"] = _name


def preset_names() -> list[str]:
    return list(PRESETS)


def preset(name: str) -> ConfigDocument:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return parse_config(copy.deepcopy(PRESETS[name]))
