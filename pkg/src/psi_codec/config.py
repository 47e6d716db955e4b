"""INI-style configuration mapped onto the package dataclasses.

Sections [data], [encoder], [decoder], [train] override dataclass defaults
field by field; [experiment] is free-form and interpreted by the harness.
The canonical dump (sorted keys, every field explicit) feeds the config
hash embedded in checkpoints and result files.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .psi_data import DatasetConfig
from .training import TrainConfig

_SECTIONS = {
    "data": DatasetConfig,
    "encoder": EncoderConfig,
    "decoder": DecoderConfig,
    "train": TrainConfig,
}


@dataclass
class ConfigBundle:
    data: DatasetConfig = field(default_factory=DatasetConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: dict = field(default_factory=dict)


def _coerce(raw: str, f: dataclasses.Field, section: str):
    raw = raw.strip()
    ann = str(f.type)
    try:
        if "tuple" in ann:
            parts = [p for p in raw.replace(",", " ").split() if p]
            return tuple(float(p) for p in parts)
        if "| None" in ann or "Optional" in ann:
            if raw.lower() in ("none", ""):
                return None
            return float(raw)
        if ann == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if ann == "int":
            return int(raw)
        if ann == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {f.name}: cannot parse {raw!r} as {ann}") from exc


def _apply(cls, items: dict, section: str):
    by_name = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in items.items():
        if key not in by_name:
            raise ConfigError(f"[{section}] unknown key {key!r}; valid: {sorted(by_name)}")
        kwargs[key] = _coerce(raw, by_name[key], section)
    return cls(**kwargs)


def load_bundle(path: str | None = None, text: str | None = None) -> ConfigBundle:
    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found or unreadable: {path}")
    elif text is not None:
        parser.read_string(text)
    bundle = ConfigBundle()
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "experiment":
            bundle.experiment = items
        elif section in _SECTIONS:
            setattr(bundle, section, _apply(_SECTIONS[section], items, section))
        else:
            raise ConfigError(f"unknown config section [{section}]; valid: {sorted(_SECTIONS) + ['experiment']}")
    return bundle


def bundle_text(bundle: ConfigBundle) -> str:
    """Canonical dump: every field of every section, keys sorted."""
    buf = io.StringIO()
    for section in sorted(_SECTIONS):
        buf.write(f"[{section}]\n")
        obj = getattr(bundle, section)
        for f in sorted(dataclasses.fields(obj), key=lambda f: f.name):
            val = getattr(obj, f.name)
            if isinstance(val, tuple):
                val = " ".join("%.10g" % v for v in val)
            buf.write(f"{f.name} = {val}\n")
        buf.write("\n")
    if bundle.experiment:
        buf.write("[experiment]\n")
        for key in sorted(bundle.experiment):
            buf.write(f"{key} = {bundle.experiment[key]}\n")
        buf.write("\n")
    return buf.getvalue()


def config_hash(bundle: ConfigBundle) -> str:
    return hashlib.sha256(bundle_text(bundle).encode("utf-8")).hexdigest()[:16]


def bundle_from_text(text: str) -> ConfigBundle:
    return load_bundle(text=text)
