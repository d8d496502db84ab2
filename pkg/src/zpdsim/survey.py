"""Machine-readable catalog of published zero-power defense designs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Sequence, Tuple, Union

__all__ = ["TRI_STATE", "UNKNOWN", "SurveyEntry", "UnknownField", "raw_catalog", "catalog_sha256",
           "load_catalog", "filter_catalog", "parse_filters", "catalog_json"]

UNKNOWN = "unknown"
TRI_STATE = ("yes", "no", UNKNOWN)
_DATA = "data/survey_table2.json"

Value = Union[str, None, Tuple[str, ...]]


class UnknownField(KeyError):
    pass


@dataclass(frozen=True)
class SurveyEntry:
    technique: str
    citation: str
    satisfies_safety: str
    satisfies_band: str
    harvested_vs_consumed: str
    real_time: str
    energy_reservoir: str
    wpt_type: str
    comm_scheme: str
    rx_path: str
    tx_path: str
    primitives: str
    mutual_auth: str
    avoids_preshared_keys: str
    avoids_preshared_keys_note: Value
    documented_vulnerabilities: Value
    emergency_access: str
    touch_to_access: str
    max_depth: str
    bedside_operation: str
    suitability: str

    TRI_FIELDS = ("satisfies_safety", "satisfies_band", "harvested_vs_consumed", "real_time", "mutual_auth",
                  "avoids_preshared_keys", "emergency_access", "touch_to_access", "bedside_operation")

    def __post_init__(self):
        for name in self.TRI_FIELDS:
            if getattr(self, name) not in TRI_STATE:
                raise ValueError(f"{self.technique}: {name} must be one of {TRI_STATE}")

    @property
    def short_name(self) -> str:
        return self.technique.split()[0]

    def as_dict(self) -> Dict[str, object]:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            out[name] = list(value) if isinstance(value, tuple) else value
        return out


def raw_catalog() -> bytes:
    return resources.files("zpdsim").joinpath(_DATA).read_bytes()


def catalog_sha256() -> str:
    return hashlib.sha256(raw_catalog()).hexdigest()


@lru_cache(maxsize=None)
def load_catalog() -> Tuple[SurveyEntry, ...]:
    rows = json.loads(raw_catalog().decode("utf-8"))
    entries = []
    for row in rows:
        vulns = row["documented_vulnerabilities"]
        row = dict(row, documented_vulnerabilities=tuple(vulns) if isinstance(vulns, list) else vulns)
        entries.append(SurveyEntry(**row))
    return tuple(entries)


def parse_filters(specs: Sequence[str]) -> List[Tuple[str, str]]:
    """Turn ``key=value`` strings into pairs, rejecting unknown keys."""
    fields = set(SurveyEntry.__dataclass_fields__)
    out = []
    for spec in specs:
        key, sep, value = spec.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"filter {spec!r} is not of the form key=value")
        if key not in fields:
            raise UnknownField(f"unknown survey field {key!r}; known: {', '.join(sorted(fields))}")
        out.append((key, value.strip()))
    return out


def _matches(entry: SurveyEntry, key: str, wanted: str) -> bool:
    value = getattr(entry, key)
    if isinstance(value, tuple):
        return wanted in value
    return value is not None and value.lower() == wanted.lower()


def filter_catalog(filters: Sequence[Tuple[str, str]] = ()) -> List[SurveyEntry]:
    return [e for e in load_catalog() if all(_matches(e, k, v) for k, v in filters)]


def catalog_json(entries: Sequence[SurveyEntry]) -> str:
    """Same layout as the packaged data file, so an unfiltered dump is byte-identical to it."""
    return json.dumps([e.as_dict() for e in entries], indent=2, sort_keys=True, ensure_ascii=False) + "\n"
