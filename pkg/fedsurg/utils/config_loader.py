#!/usr/bin/env python3
"""
Config Loader - experiment settings, pipeline presets and environment overrides
Defaults come from config/settings.json, presets from config/presets.json
"""

import copy
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

from fedsurg.datagen import GeneratorConfig
from fedsurg.errors import ValidationError
from fedsurg.fedsim import ChallengeConfig, StrategyPipeline
from fedsurg.metrics import F1_CONVENTIONS
from fedsurg.ranking import RESAMPLING_MODES, WILCOXON_MODES, BootstrapConfig
from fedsurg.utils.validators import (
    check_choice,
    check_fraction,
    check_keys,
    check_positive_int,
    require,
    suggest_key,
)

logger = logging.getLogger(__name__)

SECTION_KEYS = {
    "": ["seed", "data", "pipelines", "federated", "evaluation", "output"],
    "data": ["path", "generator"],
    "federated": ["holdout_center", "workers", "paper_scale"],
    "evaluation": ["bootstrap_iters", "metrics", "ci_level", "wilcoxon_mode",
                   "f1_absent_convention", "task2_resampling"],
    "output": ["dir", "xlsx"],
}


def get_config_dir() -> str:
    """Directory holding settings.json and presets.json"""
    project_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    return os.path.join(project_root, "config")


def read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e


def deep_merge(base: Mapping, override: Mapping) -> Dict:
    """Recursive dict merge; override wins, lists are replaced"""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_presets(path: Optional[str] = None, paper_scale: bool = False) -> Dict[str, StrategyPipeline]:
    """
    Parse every pipeline preset

    A preset may carry a "paper_scale" block with the hyperparameters used at
    full dataset scale; it is merged over the preset only when paper_scale is set.
    """
    path = path or os.path.join(get_config_dir(), "presets.json")
    raw = read_json(path)
    if not isinstance(raw, Mapping):
        raise ValidationError(f"{path}: presets must be an object keyed by preset name")
    presets = {}
    for name, body in raw.items():
        body = dict(body)
        full_scale = body.pop("paper_scale", {})
        if paper_scale and full_scale:
            body = deep_merge(body, full_scale)
            logger.debug(f"Preset {name}: applied paper_scale overrides")
        presets[name] = StrategyPipeline.from_dict({"name": name, **body})
    return presets


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated run configuration"""

    seed: int
    data_path: Optional[str]
    generator: GeneratorConfig
    pipelines: Tuple[StrategyPipeline, ...]
    challenge: ChallengeConfig
    bootstrap: BootstrapConfig
    output_dir: str = "results"
    xlsx: bool = False
    raw: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Resolved configuration as stored next to the results"""
        return copy.deepcopy(self.raw)


def _resolve_pipeline(entry, presets: Mapping[str, StrategyPipeline]) -> StrategyPipeline:
    if isinstance(entry, str):
        if entry not in presets:
            hint = suggest_key(entry, presets)
            message = f"unknown pipeline preset '{entry}' (available: {', '.join(sorted(presets))})"
            if hint:
                message += f"; did you mean '{hint}'?"
            raise ValidationError(message)
        return presets[entry]
    if isinstance(entry, Mapping):
        return StrategyPipeline.from_dict(entry)
    raise ValidationError(f"pipeline entries must be preset names or objects, got {type(entry).__name__}")


def apply_overrides(raw: Mapping, overrides: Mapping[str, Any]) -> Dict:
    """
    Apply command-line overrides given as dotted keys (e.g. "evaluation.bootstrap_iters")

    None values are skipped.
    """
    out = copy.deepcopy(dict(raw))
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return out


def parse_experiment(raw: Mapping, presets: Mapping[str, StrategyPipeline]) -> ExperimentConfig:
    """Validate a merged config dict completely before any work starts"""
    require(check_keys(raw, SECTION_KEYS[""], "config"))
    for section in ("data", "federated", "evaluation", "output"):
        require(check_keys(raw.get(section, {}), SECTION_KEYS[section], section))

    seed = raw.get("seed", 0)
    require(check_positive_int(seed, "seed", minimum=0))
    data = raw.get("data", {})
    generator = GeneratorConfig.from_dict({**data.get("generator", {}), "seed": seed})

    entries = raw.get("pipelines") or []
    if not entries:
        raise ValidationError("config lists no pipelines")
    pipelines = tuple(_resolve_pipeline(e, presets) for e in entries)

    fed = raw.get("federated", {})
    workers = fed.get("workers", 1)
    require(check_positive_int(workers, "federated.workers"))

    ev = raw.get("evaluation", {})
    iters = ev.get("bootstrap_iters", 10000)
    require(check_positive_int(iters, "evaluation.bootstrap_iters"))
    require(check_choice(ev.get("wilcoxon_mode", "auto"), WILCOXON_MODES, "evaluation.wilcoxon_mode"))
    require(check_choice(ev.get("f1_absent_convention", "zero"), F1_CONVENTIONS, "evaluation.f1_absent_convention"))
    require(check_choice(ev.get("task2_resampling", "stratified"), RESAMPLING_MODES, "evaluation.task2_resampling"))
    require(check_fraction(ev.get("ci_level", 0.95), "evaluation.ci_level", allow_zero=False))
    metrics = tuple(ev.get("metrics", ["f1", "ec"]))
    for m in metrics:
        require(check_choice(m, ["f1", "ec"], "evaluation.metrics"))

    challenge = ChallengeConfig(
        holdout_center=fed.get("holdout_center", generator.center_ids[-1]),
        seed=seed,
        workers=workers,
        num_classes=generator.num_classes,
        absent_convention=ev.get("f1_absent_convention", "zero"),
    )
    bootstrap = BootstrapConfig(
        iterations=iters,
        seed=seed,
        ci_level=float(ev.get("ci_level", 0.95)),
        wilcoxon_mode=ev.get("wilcoxon_mode", "auto"),
        resampling=ev.get("task2_resampling", "stratified"),
        num_classes=generator.num_classes,
        absent_convention=challenge.absent_convention,
        workers=workers,
        metrics=metrics,
    )
    output = raw.get("output", {})
    return ExperimentConfig(
        seed=seed,
        data_path=data.get("path"),
        generator=generator,
        pipelines=pipelines,
        challenge=challenge,
        bootstrap=bootstrap,
        output_dir=output.get("dir", "results"),
        xlsx=bool(output.get("xlsx", False)),
        raw=copy.deepcopy(dict(raw)),
    )


def load_experiment_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None,
                           settings_path: Optional[str] = None,
                           presets_path: Optional[str] = None) -> ExperimentConfig:
    """
    Defaults <- user config file <- environment <- command-line overrides

    Args:
        path: User config (falls back to FEDSURG_CONFIG, then defaults only)
        overrides: Dotted-key overrides from the command line
        settings_path: Defaults file (config/settings.json)
        presets_path: Presets file (config/presets.json)

    Returns:
        Validated ExperimentConfig
    """
    settings_path = settings_path or os.path.join(get_config_dir(), "settings.json")
    raw = read_json(settings_path)
    path = path or os.getenv("FEDSURG_CONFIG")
    if path:
        user = read_json(path)
        require(check_keys(user, SECTION_KEYS[""], f"config {path}"))
        raw = deep_merge(raw, user)
        logger.info(f"Loaded experiment config: {path}")

    env_workers = os.getenv("FEDSURG_WORKERS")
    if env_workers:
        try:
            raw = apply_overrides(raw, {"federated.workers": int(env_workers)})
        except ValueError:
            raise ValidationError(f"FEDSURG_WORKERS must be an integer, got '{env_workers}'")

    raw = apply_overrides(raw, overrides or {})
    paper_scale = raw.get("federated", {}).get("paper_scale", False)
    if not isinstance(paper_scale, bool):
        raise ValidationError(f"federated.paper_scale must be true or false, got {paper_scale!r}")
    return parse_experiment(raw, load_presets(presets_path, paper_scale=paper_scale))
