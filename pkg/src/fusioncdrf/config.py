"""Run configuration: one INI-style file, dotted-key overrides, validated objects.

A config file uses one section per module::

    [fusion]
    sources_x = 2,3
    sources_y = 1,3

    [cv]
    mode = standard
    grid = 0.0001,0.0051,0.0101

Keys are addressed as ``section.key`` (for example ``ratio.n_basis``), which
is also the form accepted by ``--set`` on the command line. ``clip_mean`` may
be given without a section.
"""

from __future__ import annotations

import configparser
import re
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .cv import CVConfig
from .data import FUSED, MODES, FusionConfig, check_mode
from .errors import ConfigError, FusionError
from .nuisance import NuisanceBounds, NuisanceConfig, OutcomeConfig, RatioConfig
from .pipeline import KernelConfig
from .reference import ReferenceMeasure
from .simulation import FAMILIES, SCENARIO_FUSION


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in _items(text))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _items(text))


def split_list(text: str) -> list[str]:
    """Split on commas that are not inside parentheses, so ``uniform,beta(5,5)``
    yields two items."""
    return [m.strip() for m in re.findall(r"(?:[^,(]|\([^)]*\))+", str(text)) if m.strip()]


_items = split_list


def _bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _bandwidth(text: str) -> float | str:
    text = str(text).strip()
    return "median" if text == "median" else float(text)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str


# Every recognised key with its parser, default and one-line description.
KEYS: dict[str, Key] = {
    "fusion.sources_x": Key(_ints, (2, 3), "source labels aligned with the target covariate law"),
    "fusion.sources_y": Key(_ints, (1, 3), "source labels aligned with the target outcome law"),
    "run.mode": Key(str, FUSED, "fused or nonfused"),
    "run.mu": Key(str, "uniform", "reference measure: uniform or beta(a,b)"),
    "run.seed": Key(int, 0, "master seed; every other seed is derived from it"),
    "run.split_fraction": Key(float, 0.5, "share of records used for the nuisance fold"),
    "kernel.family": Key(str, "laplace", "target kernel: laplace or gaussian"),
    "kernel.bandwidth": Key(_bandwidth, "median", "'median' or a positive number"),
    "kernel.bandwidth_pool": Key(str, "a_only", "points for the median heuristic: a_only or a_and_b"),
    "cv.folds": Key(int, 5, "number of cross-validation folds"),
    "cv.grid": Key(_floats, CVConfig().lambda_grid, "ridge penalties searched"),
    "cv.mode": Key(str, "standard", "standard (out-of-fold) or paper (in-fold, penalised)"),
    "cv.penalty_power": Key(int, 1, "power of the RKHS norm in the paper-mode penalty"),
    "ratio.n_basis": Key(int, 100, "maximum number of uLSIF basis functions"),
    "ratio.lambda_grid": Key(_floats, RatioConfig().lambda_grid, "uLSIF ridge penalties"),
    "ratio.bandwidth_multipliers": Key(_floats, RatioConfig().bandwidth_multipliers, "uLSIF bandwidths, in medians"),
    "ratio.folds": Key(int, 5, "uLSIF cross-validation folds"),
    "outcome.kernels": Key(lambda t: tuple(_items(t)), OutcomeConfig().kernels, "outcome kernel candidates"),
    "outcome.bandwidth_multipliers": Key(_floats, OutcomeConfig().bandwidth_multipliers, "outcome bandwidths, in medians"),
    "outcome.ridge_grid": Key(_floats, OutcomeConfig().ridge_grid, "outcome ridge penalties"),
    "outcome.folds": Key(int, 5, "outcome cross-validation folds"),
    "bounds.m_w": Key(float, 50.0, "density-ratio clip bound"),
    "bounds.m_xi": Key(float, 100.0, "cap on the inverse covariate-alignment probability"),
    "bounds.m_eta": Key(float, 100.0, "cap on the inverse outcome-alignment probability"),
    "nuisance.clip_mean": Key(_bool, False, "clip the outcome regression and plug-in curve to [-1, 1]"),
    "benchmark.families": Key(lambda t: tuple(_items(t)), ("gaussian",), "simulation families"),
    "benchmark.measures": Key(lambda t: tuple(_items(t)), ("uniform",), "reference measures"),
    "benchmark.ns": Key(_ints, (400, 1600), "sample sizes"),
    "benchmark.runs": Key(int, 100, "Monte Carlo replications per cell"),
    "benchmark.m_eval": Key(int, 1000, "evaluation draws per risk"),
}

ALIASES = {"clip_mean": "nuisance.clip_mean"}


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one CLI job."""

    fusion: FusionConfig = field(default_factory=lambda: SCENARIO_FUSION)
    mode: str = FUSED
    mu: ReferenceMeasure = field(default_factory=ReferenceMeasure.uniform)
    seed: int = 0
    split_fraction: float = 0.5
    kernel: KernelConfig = field(default_factory=KernelConfig)
    cv: CVConfig = field(default_factory=CVConfig)
    nuisance: NuisanceConfig = field(default_factory=NuisanceConfig)
    families: tuple[str, ...] = ("gaussian",)
    measures: tuple[str, ...] = ("uniform",)
    ns: tuple[int, ...] = (400, 1600)
    runs: int = 100
    m_eval: int = 1000
    values: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _canonical(key: str) -> str:
    key = key.strip().lower()
    key = ALIASES.get(key, key)
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    return key


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    key, value = text.split("=", 1)
    return _canonical(key), value.strip()


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw ``section.key -> text`` pairs from an INI file."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    # allow bare top-level keys such as ``clip_mean = true``
    try:
        parser.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    raw = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            dotted = key if section == "__top__" else f"{section}.{key}"
            raw[_canonical(dotted)] = value
    return raw


def build_config(raw: dict[str, str] | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Combine defaults, file values and ``section.key=value`` overrides."""
    texts = dict(raw or {})
    for item in overrides:
        key, value = parse_assignment(item)
        texts[key] = value
    values = {}
    for key, spec in KEYS.items():
        if key in texts:
            try:
                values[key] = spec.parse(texts[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
        else:
            values[key] = spec.default
    return _materialise(values)


def _materialise(v: dict[str, Any]) -> RunConfig:
    try:
        fusion = FusionConfig(v["fusion.sources_x"], v["fusion.sources_y"])
        mode = check_mode(v["run.mode"])
        mu = ReferenceMeasure.parse(v["run.mu"])
        if not 0.0 < v["run.split_fraction"] < 1.0:
            raise ConfigError("run.split_fraction must lie in (0, 1)")
        kernel = KernelConfig(v["kernel.family"], v["kernel.bandwidth"], v["kernel.bandwidth_pool"])
        cv = CVConfig(v["cv.folds"], v["cv.grid"], v["cv.mode"], v["cv.penalty_power"])
        ratio = RatioConfig(
            v["ratio.n_basis"], v["ratio.lambda_grid"], v["ratio.bandwidth_multipliers"], v["ratio.folds"]
        )
        outcome = OutcomeConfig(
            v["outcome.kernels"], v["outcome.bandwidth_multipliers"], v["outcome.ridge_grid"], v["outcome.folds"]
        )
        bounds = NuisanceBounds(v["bounds.m_w"], v["bounds.m_xi"], v["bounds.m_eta"])
        nuisance = NuisanceConfig(ratio, outcome, bounds, v["nuisance.clip_mean"])
        for fam in v["benchmark.families"]:
            if fam not in FAMILIES:
                raise ConfigError(f"unknown family {fam!r}")
        for m in v["benchmark.measures"]:
            ReferenceMeasure.parse(m)
        if v["benchmark.runs"] < 1:
            raise ConfigError("benchmark.runs must be >= 1")
        if v["benchmark.m_eval"] < 1 or any(n < 1 for n in v["benchmark.ns"]):
            raise ConfigError("benchmark sizes must be >= 1")
    except ConfigError:
        raise
    except (FusionError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(
        fusion, mode, mu, v["run.seed"], v["run.split_fraction"], kernel, cv, nuisance,
        tuple(v["benchmark.families"]), tuple(v["benchmark.measures"]), tuple(v["benchmark.ns"]),
        v["benchmark.runs"], v["benchmark.m_eval"], values=v,
    )


def load_config(path: str | Path | None = None, overrides: Sequence[str] = ()) -> RunConfig:
    raw = read_config_file(path) if path else {}
    return build_config(raw, overrides)


def with_values(cfg: RunConfig, **changes: Any) -> RunConfig:
    """Copy of ``cfg`` with dotted keys (underscored: ``run__seed``) replaced."""
    values = dict(cfg.values)
    for name, value in changes.items():
        values[_canonical(name.replace("__", "."))] = value
    return _materialise(values)


def reference_table() -> list[tuple[str, str, str]]:
    """``(key, default, description)`` rows documenting every setting."""
    rows = []
    for key, spec in KEYS.items():
        d = spec.default
        text = ",".join(str(x) for x in d) if isinstance(d, tuple) else str(d).lower() if isinstance(d, bool) else str(d)
        rows.append((key, text, spec.help))
    return rows


__all__ = [
    "KEYS",
    "MODES",
    "RunConfig",
    "build_config",
    "load_config",
    "read_config_file",
    "reference_table",
    "with_values",
]
