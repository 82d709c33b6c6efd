"""Key/value configuration files for topology and model calibration.

An INI-style file with optional ``[topology]``, ``[calibration]``,
``[pipeline]`` and ``[bsdp]`` sections. Keys are the field names of
:class:`ServerTopology`, :class:`TransferCalibration`, :class:`PipelineConfig`
and :class:`BsdpSchedule`; missing keys keep their defaults. For example::

    [calibration]
    host_write_agg_cap_gbps = 28.0
    cross_numa_penalty = 0.7

    [bsdp]
    kind = register
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields

from .bsdp import BsdpSchedule
from .cycle_model import PipelineConfig
from .isa import ContractError
from .transfer import ServerTopology, TransferCalibration

_SECTIONS = {
    "topology": ServerTopology,
    "calibration": TransferCalibration,
    "pipeline": PipelineConfig,
    "bsdp": BsdpSchedule,
}


@dataclass(frozen=True)
class Settings:
    topology: ServerTopology = field(default_factory=ServerTopology)
    calibration: TransferCalibration = field(default_factory=TransferCalibration)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    bsdp: BsdpSchedule = field(default_factory=BsdpSchedule)

    def as_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}


def _coerce(cls, key: str, raw: str):
    default = {f.name: f.default for f in fields(cls)}[key]
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ContractError(f"{cls.__name__}.{key}: cannot parse {raw!r}") from exc
    return raw.strip()


def parse_settings(text: str) -> Settings:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    unknown = set(parser.sections()) - set(_SECTIONS)
    if unknown:
        raise ContractError(f"unknown config sections: {sorted(unknown)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        if not parser.has_section(name):
            parts[name] = cls()
            continue
        known = {f.name for f in fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise ContractError(f"unknown key {key!r} in [{name}]")
            values[key] = _coerce(cls, key, raw)
        parts[name] = cls(**values)
    return Settings(**parts)


def load_settings(path: str | None) -> Settings:
    if path is None:
        return Settings()
    with open(path, encoding="utf-8") as fh:
        return parse_settings(fh.read())


def dump_settings(settings: Settings) -> str:
    lines = []
    for name, values in settings.as_dict().items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)
