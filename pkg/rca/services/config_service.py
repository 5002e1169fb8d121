"""Plain-text experiment configuration: ``section.key = value`` lines with ``#`` comments.

Parsing is strict: unknown keys, duplicates, malformed values and domain
violations are reported as ``ConfigParseError`` naming the key and the line.
``--set key=value`` overrides are applied after the file values.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable
from pathlib import Path
from typing import Any, NamedTuple

from rca.exceptions import ConfigParseError, ConfigurationError

from .estimator import EstimatorConfig, SearchRegion
from .innovations import DEFAULT_REFERENCE_M, ELaw, InnovationSpec
from .montecarlo.config import ExperimentConfig, ProfileGrids, SurfaceLattice, VerdictThresholds
from .process import ModelParams

logger = logging.getLogger(__name__)

_REQUIRED = object()
_FROM_REGION = object()


def _to_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}")
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {text!r}")
    return value


def _to_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = _to_float(text)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)


def _to_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _to_floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    if not all(parts):
        raise ValueError(f"expected a comma-separated list of numbers, got {text!r}")
    return tuple(_to_float(p) for p in parts)


def _to_text(text: str) -> str:
    if not text:
        raise ValueError("expected a value")
    return text


class _Key(NamedTuple):
    convert: Callable[[str], Any]
    default: Any


_thresholds = VerdictThresholds()
_estimator = EstimatorConfig()
_profile = ProfileGrids()

SCHEMA: dict[str, _Key] = {
    "experiment.kind": _Key(_to_text, _REQUIRED),
    "experiment.n": _Key(_to_int, _REQUIRED),
    "experiment.reps": _Key(_to_int, 100),
    "experiment.seed": _Key(_to_int, 0),
    "experiment.y_values": _Key(_to_floats, (1.0,)),
    "experiment.max_failed_fraction": _Key(_to_float, 0.05),
    "experiment.log_space": _Key(_to_bool, True),
    "model.phi": _Key(_to_float, _REQUIRED),
    "model.x0": _Key(_to_float, 1.0),
    "innov.variant": _Key(_to_text, _REQUIRED),
    "innov.omega_sq": _Key(_to_float, 1.0),
    "innov.sigma_sq": _Key(_to_float, 1.0),
    "innov.alpha": _Key(_to_float, 1.5),
    "innov.b_point": _Key(_to_float, 0.0),
    "innov.e_law": _Key(_to_text, "Gaussian"),
    "region.s_lo": _Key(_to_float, _REQUIRED),
    "region.s_hi": _Key(_to_float, _REQUIRED),
    "region.x_lo": _Key(_to_float, _REQUIRED),
    "region.x_hi": _Key(_to_float, _REQUIRED),
    "estimator.grid_s": _Key(_to_int, _estimator.grid_s),
    "estimator.grid_x": _Key(_to_int, _estimator.grid_x),
    "estimator.newton_tol": _Key(_to_float, _estimator.newton_tol),
    "estimator.max_iters": _Key(_to_int, _estimator.max_iters),
    "estimator.refine_starts": _Key(_to_int, _estimator.refine_starts),
    "ci.level": _Key(_to_float, 0.95),
    "stable.reference_m": _Key(_to_int, DEFAULT_REFERENCE_M),
    "stable.reference_reps": _Key(_to_int, 2000),
    "surface.s_lo": _Key(_to_float, _FROM_REGION),
    "surface.s_hi": _Key(_to_float, _FROM_REGION),
    "surface.s_points": _Key(_to_int, 9),
    "surface.x_lo": _Key(_to_float, _FROM_REGION),
    "surface.x_hi": _Key(_to_float, _FROM_REGION),
    "surface.x_points": _Key(_to_int, 9),
    "surface.y_lo": _Key(_to_float, 0.5),
    "surface.y_hi": _Key(_to_float, 2.0),
    "surface.y_points": _Key(_to_int, 3),
    **{
        f"profile.{name}": _Key(_to_int if name.endswith("points") else _to_float, value)
        for name, value in vars(_profile).items()
    },
    **{f"verdict.{name}": _Key(_to_float, value) for name, value in vars(_thresholds).items()},
}


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _split_assignment(text: str, line: int | None) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigParseError(f"expected 'section.key = value', got {text!r}", line=line)
    key, value = text.split("=", 1)
    key = key.strip()
    if key not in SCHEMA:
        raise ConfigParseError("unknown key", key=key, line=line)
    return key, value.strip()


def _collect(text: str, overrides: Iterable[str]) -> tuple[dict[str, str], dict[str, int | None]]:
    raw: dict[str, str] = {}
    lines: dict[str, int | None] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line)
        if not body:
            continue
        key, value = _split_assignment(body, number)
        if key in raw:
            raise ConfigParseError(f"duplicate key (first set on line {lines[key]})", key=key, line=number)
        raw[key] = value
        lines[key] = number
    for item in overrides:
        key, value = _split_assignment(item.strip(), None)
        raw[key] = value
        lines[key] = None
    return raw, lines


def _convert(raw: dict[str, str], lines: dict[str, int | None]) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for key, spec in SCHEMA.items():
        if key in raw:
            try:
                values[key] = spec.convert(raw[key])
            except ValueError as e:
                raise ConfigParseError(str(e), key=key, line=lines[key])
        elif spec.default is _REQUIRED:
            raise ConfigParseError("required key is missing", key=key)
        else:
            values[key] = spec.default
    return values


def _section(values: dict[str, Any], prefix: str) -> dict[str, Any]:
    return {key.split(".", 1)[1]: value for key, value in values.items() if key.startswith(prefix + ".")}


def _build(values: dict[str, Any]) -> ExperimentConfig:
    """Assemble the config, tagging domain errors with their section prefix."""

    def build(prefix: str, factory: Callable[..., Any], **kwargs):
        try:
            return factory(**kwargs)
        except ConfigurationError as e:
            e.field = f"{prefix}.{e.field}" if e.field and "." not in e.field else e.field
            raise

    region = build("region", SearchRegion, **_section(values, "region"))
    surface_values = _section(values, "surface")
    for name in ("s_lo", "s_hi", "x_lo", "x_hi"):
        if surface_values[name] is _FROM_REGION:
            surface_values[name] = getattr(region, name)

    innov = _section(values, "innov")
    innov["e_law"] = build("innov", ELaw.parse, text=innov["e_law"])
    estimator = _section(values, "estimator")
    return build(
        "experiment",
        ExperimentConfig,
        kind=values["experiment.kind"],
        params=build("model", ModelParams, phi=values["model.phi"], x0=values["model.x0"]),
        spec=build("innov", InnovationSpec, **innov),
        n=values["experiment.n"],
        reps=values["experiment.reps"],
        region=region,
        y_values=values["experiment.y_values"],
        estimator_cfg=build("estimator", EstimatorConfig, **estimator),
        master_seed=values["experiment.seed"],
        max_failed_fraction=values["experiment.max_failed_fraction"],
        log_space=values["experiment.log_space"],
        ci_level=values["ci.level"],
        reference_m=values["stable.reference_m"],
        reference_reps=values["stable.reference_reps"],
        surface=build("surface", SurfaceLattice, **surface_values),
        profile=build("profile", ProfileGrids, **_section(values, "profile")),
        verdict=build("verdict", VerdictThresholds, **_section(values, "verdict")),
    )


def parse_config(text: str, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Parse and validate an experiment config.

    Every domain invariant is checked here, including the Lyapunov gate.

    Raises:
        ConfigParseError: with ``key`` and ``line`` (``None`` for overrides
            and missing keys) of the offending entry.
    """
    raw, lines = _collect(text, overrides)
    values = _convert(raw, lines)
    try:
        return _build(values)
    except ConfigParseError:
        raise
    except ConfigurationError as e:
        key = e.field if e.field in SCHEMA else None
        raise ConfigParseError(str(e), key=key, line=lines.get(key) if key else None) from e


def read_config(path: Path | str, overrides: Iterable[str] = ()) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigParseError(f"config file not found: {path}")
    except OSError as e:
        raise ConfigParseError(f"cannot read config file {path}: {e}")
    logger.debug(f"Parsing config {path}")
    return parse_config(text, overrides)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def config_values(cfg: ExperimentConfig) -> dict[str, Any]:
    """Every schema key with its effective value."""
    spec = cfg.spec
    values: dict[str, Any] = {
        "experiment.kind": cfg.kind.value,
        "experiment.n": cfg.n,
        "experiment.reps": cfg.reps,
        "experiment.seed": cfg.master_seed,
        "experiment.y_values": cfg.y_values,
        "experiment.max_failed_fraction": float(cfg.max_failed_fraction),
        "experiment.log_space": cfg.log_space,
        "model.phi": float(cfg.params.phi),
        "model.x0": float(cfg.params.x0),
        "innov.variant": spec.variant.value,
        "innov.omega_sq": float(spec.omega_sq),
        "innov.sigma_sq": float(spec.sigma_sq),
        "innov.alpha": float(spec.alpha),
        "innov.b_point": float(spec.b_point),
        "innov.e_law": str(spec.e_law),
        "ci.level": float(cfg.ci_level),
        "stable.reference_m": cfg.reference_m,
        "stable.reference_reps": cfg.reference_reps,
    }
    for prefix, obj in (
        ("region", cfg.region),
        ("estimator", cfg.estimator_cfg),
        ("surface", cfg.surface),
        ("profile", cfg.profile),
        ("verdict", cfg.verdict),
    ):
        for name, value in vars(obj).items():
            values[f"{prefix}.{name}"] = value
    return {key: values[key] for key in SCHEMA}


def render_config(cfg: ExperimentConfig) -> str:
    """Canonical text of ``cfg``; ``parse_config(render_config(cfg)) == cfg``."""
    lines = ["# Effective configuration (every key, canonical order)"]
    section = None
    for key, value in config_values(cfg).items():
        prefix = key.split(".", 1)[0]
        if prefix != section:
            if section is not None:
                lines.append("")
            section = prefix
        lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines) + "\n"
