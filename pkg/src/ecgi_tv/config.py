"""Structured text configuration: dotted key-value lines.

Format: one ``section.key = value`` per line, ``#`` comments.  Values are
coerced to int, float, bool, or comma-separated lists of those; everything
else stays a string.  Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from .errors import ConfigurationError
from .experiment import ExperimentConfig
from .mesh import GeometryConfig, default_lungs
from .simulate import ConductivityTable, SimConfig


def _coerce(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if "," in text:
        return tuple(_coerce(part) for part in text.split(",") if part.strip())
    return text


def parse_config_text(text: str) -> dict:
    tree: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = line.split("=", 1)
        parts = [p.strip() for p in key.strip().split(".")]
        if any(not p for p in parts):
            raise ConfigurationError(f"line {lineno}: bad key '{key.strip()}'")
        node = tree
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"line {lineno}: '{part}' is both a key and a section")
        node[parts[-1]] = _coerce(value)
    return tree


def load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _pop_section(tree: dict, name: str) -> dict:
    section = tree.pop(name, {})
    if not isinstance(section, dict):
        raise ConfigurationError(f"'{name}' must be a section")
    return section


def _build(cls, section: dict, name: str, special=()):
    valid = set(cls.__dataclass_fields__) - set(special)
    unknown = set(section) - valid - set(special)
    if unknown:
        raise ConfigurationError(f"unknown {name} keys: {sorted(unknown)}")
    return section


def _as_tuple(value):
    return value if isinstance(value, tuple) else (value,)


def experiment_config_from_tree(tree: dict) -> ExperimentConfig:
    tree = dict(tree)

    geo_raw = _pop_section(tree, "geometry")
    _build(GeometryConfig, geo_raw, "geometry", special=("lungs",))
    if "heart_center" in geo_raw:
        geo_raw["heart_center"] = tuple(float(v) for v in _as_tuple(geo_raw["heart_center"]))
    lungs_flag = geo_raw.pop("lungs", True)
    geo_raw["lungs"] = default_lungs() if lungs_flag else ()
    geometry = GeometryConfig(**geo_raw)

    sim_raw = _pop_section(tree, "sim")
    _build(SimConfig, sim_raw, "sim")
    if "source_angles" in sim_raw:
        sim_raw["source_angles"] = tuple(float(v) for v in _as_tuple(sim_raw["source_angles"]))
    sim = SimConfig(**sim_raw)

    cond_raw = _pop_section(tree, "conductivity")
    _build(ConductivityTable, cond_raw, "conductivity")
    for key in ("myo_sigma_i", "myo_sigma_e"):
        if key in cond_raw:
            cond_raw[key] = tuple(float(v) for v in _as_tuple(cond_raw[key]))
    table = ConductivityTable(**cond_raw)

    exp_raw = _pop_section(tree, "experiment")
    _build(ExperimentConfig, exp_raw, "experiment", special=("geometry", "sim", "table"))
    for key in ("electrode_counts", "snr_db", "methods", "seeds"):
        if key in exp_raw:
            exp_raw[key] = _as_tuple(exp_raw[key])
    if tree:
        raise ConfigurationError(f"unknown config sections: {sorted(tree)}")
    return ExperimentConfig(geometry=geometry, sim=sim, table=table, **exp_raw)


def load_experiment_config(path) -> ExperimentConfig:
    return experiment_config_from_tree(load_config_file(path))
