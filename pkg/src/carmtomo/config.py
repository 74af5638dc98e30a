"""Scenario configuration (INI syntax).

Sections and keys are fixed; anything unknown is rejected with the line
number where it appears. Bundled scenarios live in ``carmtomo/configs`` and
can be named without a path (``paper_sim``, ``kidney_sim``).

::

    [run]       stages, seed, algorithms
    [geometry]  d_mm, n_views, span_deg, nu, nv, pitch_mm
    [phantom]   preset (sphere|kidney|file), file, radius_mm, mu, offset_mm,
                i0, noise
    [grid]      shape, spacing_mm, center_mm
    [recon.bp]
    [recon.fbp] window, cutoff, cosine_weight
    [recon.sart] iterations, lambda0, decay, nonneg
    [recon.mlem] iterations, initial, floor
    [metrics]   object_center_mm, focus_plane, profile_axis, feature_roi,
                background_roi, background_offset_mm, asf_min_offset_mm
    [export]    window (auto or lo, hi)
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from .exceptions import ConfigError

STAGES = ("simulate", "project", "reconstruct", "metrics", "export")
ALGORITHMS = ("bp", "fbp", "sart", "mlem")


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(n):
    def parse(text):
        vals = [float(v) for v in text.replace(",", " ").split()]
        if len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        return tuple(vals)
    return parse


def _ints(n):
    def parse(text):
        vals = [int(v) for v in text.replace(",", " ").split()]
        if len(vals) != n:
            raise ValueError(f"expected {n} integers, got {len(vals)}")
        return tuple(vals)
    return parse


def _choice(*options):
    def parse(text):
        val = text.strip()
        if val not in options:
            raise ValueError(f"must be one of {options}, got {val!r}")
        return val
    return parse


def _names(options):
    def parse(text):
        vals = [v.strip() for v in text.replace(",", " ").split() if v.strip()]
        for v in vals:
            if v not in options:
                raise ValueError(f"unknown entry {v!r}; choose from {options}")
        if not vals:
            raise ValueError("list is empty")
        return tuple(vals)
    return parse


def _stages(text):
    vals = [v.strip() for v in text.replace(",", " ").split() if v.strip()]
    if vals == ["all"]:
        return STAGES
    return _names(STAGES)(text)


def _window(text):
    if text.strip() == "auto":
        return None
    lo, hi = _floats(2)(text)
    if not lo < hi:
        raise ValueError("window needs lo < hi")
    return (lo, hi)


def _opt_int(text):
    return None if text.strip() in ("", "auto") else int(text)


# section -> key -> (parser, default)
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "run": {
        "stages": (_stages, STAGES),
        "seed": (int, 0),
        "algorithms": (_names(ALGORITHMS), ALGORITHMS),
    },
    "geometry": {
        "d_mm": (float, 440.0),
        "n_views": (int, 25),
        "span_deg": (float, 40.0),
        "nu": (int, 256),
        "nv": (int, 256),
        "pitch_mm": (float, 0.24),
    },
    "phantom": {
        "preset": (_choice("sphere", "kidney", "file"), "sphere"),
        "file": (str, None),
        "radius_mm": (float, 1.0),
        "mu": (float, 0.01),
        "offset_mm": (float, 30.0),
        "i0": (float, 1e5),
        "noise": (_bool, False),
    },
    "grid": {
        "shape": (_ints(3), (128, 128, 64)),
        "spacing_mm": (float, 0.12),
        "center_mm": (_floats(3), (0.0, 0.0, 0.0)),
    },
    "recon.bp": {},
    "recon.fbp": {
        "window": (_choice("ramp_only", "ramp_hann"), "ramp_hann"),
        "cutoff": (float, 1.0),
        "cosine_weight": (_bool, False),
    },
    "recon.sart": {
        "iterations": (int, 10),
        "lambda0": (float, 1.0),
        "decay": (float, 0.8),
        "nonneg": (_bool, True),
    },
    "recon.mlem": {
        "iterations": (int, 20),
        "initial": (float, 0.001),
        "floor": (float, 0.0),
    },
    "metrics": {
        "object_center_mm": (_floats(3), (0.0, 0.0, 0.0)),
        "focus_plane": (_opt_int, None),
        "profile_axis": (_choice("y", "z"), "y"),
        "feature_roi": (int, 3),
        "background_roi": (int, 9),
        "background_offset_mm": (float, 5.0),
        "asf_min_offset_mm": (float, 5.0),
    },
    "export": {
        "window": (_window, None),
    },
}


@dataclass
class Scenario:
    values: Dict[str, Dict[str, Any]]
    text: str
    source: Optional[str] = None

    def __getitem__(self, section):
        return self.values[section]

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    @property
    def base_dir(self) -> Path:
        return Path(self.source).parent if self.source else Path.cwd()


def _line_of(text, section, key=None):
    sec_re = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]\s*$")
    key_re = re.compile(r"^\s*" + re.escape(key) + r"\s*[=:]", re.IGNORECASE) if key else None
    inside = False
    for n, line in enumerate(text.splitlines(), 1):
        if line.strip().startswith("["):
            inside = bool(sec_re.match(line))
            if inside and key is None:
                return n
            continue
        if inside and key_re is not None and key_re.match(line):
            return n
    return None


def parse_scenario(text: str, source: Optional[str] = None) -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"cannot parse config: {exc.message if hasattr(exc, 'message') else exc}",
                          line=line) from None

    values = {sec: {k: default for k, (_, default) in keys.items()} for sec, keys in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", line=_line_of(text, section), field=section)
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", line=_line_of(text, section, key), field=f"{section}.{key}")
            conv: Callable = SCHEMA[section][key][0]
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value {raw!r}: {exc}", line=_line_of(text, section, key),
                                  field=f"{section}.{key}") from None
    if values["phantom"]["preset"] == "file" and not values["phantom"]["file"]:
        raise ConfigError("preset 'file' needs a 'file' entry", line=_line_of(text, "phantom"),
                          field="phantom.file")
    return Scenario(values, text, source)


def bundled_names():
    return sorted(p.name[:-4] for p in resources.files("carmtomo.configs").iterdir() if p.name.endswith(".ini"))


def load_scenario(name_or_path) -> Scenario:
    """Read a config file, or a bundled scenario by name."""
    path = Path(name_or_path)
    if not path.exists() and str(name_or_path) in bundled_names():
        res = resources.files("carmtomo.configs") / f"{name_or_path}.ini"
        return parse_scenario(res.read_text(), source=None)
    if not path.exists():
        raise ConfigError(f"config not found: {name_or_path}")
    return parse_scenario(path.read_text(), source=str(path))
