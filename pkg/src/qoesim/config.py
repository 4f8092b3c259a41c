"""Scenario files: loading, default filling, validation and the effective-config echo.

A scenario is a YAML mapping.  It may start from a bundled preset
(``preset: grandma-desk``) and override any field.  Content-dependent
defaults (link capacity, queue size, beta and its coefficients) come from the
content profile when the scenario leaves them out.
"""

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .traces import ContentProfile

ARCHITECTURES = ("non_adaptive", "adaptive", "cross_layer")
POLICIES = ("uniform_window", "per_second_random")

DEFAULTS = {
    "name": "scenario",
    "architecture": "cross_layer",
    "content": "grandma",
    "trace_manifest": None,
    "duration_s": 500.0,
    "link": {
        "capacity_mbps": None,
        "delay_ms": 1.0,
        "queue_packets": None,
        "ecn_threshold": 0.8,
    },
    "sources": {
        "n_video": 24,
        "n_ftp": 48,
        "packet_size": 1052,
        "access_delay_ms": 0.0,
        "ftp_start_s": [0.0, 20.0],
        "ftp_rwnd": 20,
        "ftp_ecn": False,
    },
    "admission": {
        "beta_mode": "experimental",
        "beta": None,
        "alpha": None,
        "delta": None,
        "epsilon_mode": "literal",
        "window_s": 1.0,
        "tick_ms": 100.0,
    },
    "controller": {
        "step": 1,
        "quiet_intervals": 3,
        "bucket_tolerance": 1.2,
        "cap_at_granted": False,
    },
    "arrivals": {
        "policy": None,
        "window_s": [20.0, 50.0],
        "request_start_s": 20.0,
    },
    "metrics": {
        "theta": 0.75,
    },
    "seeds": list(range(1, 31)),
}

PROFILE_DEFAULT_KEYS = {
    ("link", "capacity_mbps"): "capacity_mbps",
    ("link", "queue_packets"): "queue_packets",
    ("admission", "beta"): "beta",
    ("admission", "alpha"): "alpha",
    ("admission", "delta"): "delta",
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _preset_dir():
    return resources.files("qoesim") / "presets"


def preset_names():
    return sorted(p.name[:-5] for p in _preset_dir().iterdir() if p.name.endswith(".yaml"))


def load_yaml(path):
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return data


def load_preset(name):
    p = _preset_dir() / f"{name}.yaml"
    if not p.is_file():
        raise ConfigError([f"preset: unknown preset {name!r} (have {', '.join(preset_names())})"])
    return yaml.safe_load(p.read_text())


def load_profile(ref, base_dir=None):
    """Resolve a content reference (bundled name or YAML path) to (profile, defaults)."""
    if isinstance(ref, dict):
        data = copy.deepcopy(ref)
    else:
        bundled = _preset_dir() / "profiles" / f"{ref}.yaml"
        if bundled.is_file():
            data = yaml.safe_load(bundled.read_text())
        else:
            path = Path(ref)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            if not path.is_file():
                raise ConfigError([f"content: no bundled profile or file named {ref!r}"])
            data = load_yaml(path)
    defaults = data.pop("defaults", {}) or {}
    return ContentProfile.from_dict(data), defaults


def _merge(base, over, path, errors):
    for k, v in over.items():
        p = f"{path}.{k}" if path else k
        if k not in base:
            errors.append(f"{p}: unknown field")
            continue
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                errors.append(f"{p}: expected a mapping")
                continue
            _merge(base[k], v, p, errors)
        else:
            base[k] = v


@dataclass
class ScenarioConfig:
    """Fully resolved scenario.  ``data`` holds the normalized mapping."""

    data: dict
    profile: ContentProfile

    def __getattr__(self, name):
        try:
            return self.__dict__["data"][name]
        except KeyError:
            raise AttributeError(name) from None

    def section(self, name):
        return self.data[name]

    def with_changes(self, **changes):
        d = copy.deepcopy(self.data)
        for key, value in changes.items():
            node = d
            parts = key.split("__")
            for part in parts[:-1]:
                node = node[part]
            node[parts[-1]] = value
        return normalize(d)

    def to_dict(self):
        out = copy.deepcopy(self.data)
        p = self.profile
        out["profile"] = {
            "name": p.name, "resolution": p.resolution, "base_rate_qp2": p.base_rate_qp2,
            "duration": p.duration, "frame_rate": p.frame_rate, "gop_length": p.gop_length,
            "burstiness": p.burstiness, "i_to_p_ratio": p.i_to_p_ratio, "gamma": p.gamma,
        }
        return out

    def config_hash(self):
        """Hash of the effective config, seeds excluded."""
        d = self.to_dict()
        d.pop("seeds", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def policy(self):
        return self.data["arrivals"]["policy"]


def normalize(raw, base_dir=None):
    """Fill defaults and check constraints.  Raises ConfigError listing every problem."""
    errors = []
    raw = copy.deepcopy(raw or {})
    data = copy.deepcopy(DEFAULTS)
    preset = raw.pop("preset", None)
    if preset is not None:
        try:
            _merge(data, load_preset(preset), "", errors)
        except ConfigError as e:
            raise ConfigError(e.errors) from None
    _merge(data, raw, "", errors)

    profile = None
    try:
        profile, pdefaults = load_profile(data["content"], base_dir)
    except ConfigError as e:
        errors.extend(e.errors)
        pdefaults = {}
    except (TypeError, ValueError) as e:
        errors.append(f"content: invalid profile ({e})")
        pdefaults = {}
    if isinstance(data["content"], dict) and profile is not None:
        data["content"] = profile.name
    for (sec, key), pkey in PROFILE_DEFAULT_KEYS.items():
        if data[sec][key] is None and pkey in pdefaults:
            data[sec][key] = pdefaults[pkey]

    arch = data["architecture"]
    if arch not in ARCHITECTURES:
        errors.append(f"architecture: must be one of {', '.join(ARCHITECTURES)}")
    arr = data["arrivals"]
    if arr["policy"] is None:
        arr["policy"] = "per_second_random" if arch == "cross_layer" else "uniform_window"
    _check(data, errors)
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(data, profile)


def _num(data, path, errors, lo=None, hi=None, lo_open=False, integer=False, required=True):
    node = data
    for part in path.split("."):
        node = node[part]
    if node is None:
        if required:
            errors.append(f"{path}: required")
        return None
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        errors.append(f"{path}: expected a number")
        return None
    if integer and not float(node).is_integer():
        errors.append(f"{path}: expected an integer")
        return None
    if lo is not None and (node <= lo if lo_open else node < lo):
        errors.append(f"{path}: must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and node > hi:
        errors.append(f"{path}: must be <= {hi}")
    return node


def _window(data, path, errors, limit):
    sec, key = path.split(".")
    w = data[sec][key]
    if not (isinstance(w, (list, tuple)) and len(w) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in w)):
        errors.append(f"{path}: expected [start, end] in seconds")
        return
    if not 0 <= w[0] <= w[1]:
        errors.append(f"{path}: need 0 <= start <= end")
    elif limit is not None and w[1] > limit:
        errors.append(f"{path}: end {w[1]} s is past the run duration {limit} s")
    data[sec][key] = [float(w[0]), float(w[1])]


def _check(data, errors):
    dur = _num(data, "duration_s", errors, lo=0, lo_open=True)
    _num(data, "link.capacity_mbps", errors, lo=0, lo_open=True)
    _num(data, "link.delay_ms", errors, lo=0)
    _num(data, "link.queue_packets", errors, lo=1, integer=True)
    _num(data, "link.ecn_threshold", errors, lo=0, hi=1, lo_open=True)
    _num(data, "sources.n_video", errors, lo=0, integer=True)
    _num(data, "sources.n_ftp", errors, lo=0, integer=True)
    _num(data, "sources.packet_size", errors, lo=29, integer=True)
    _num(data, "sources.access_delay_ms", errors, lo=0)
    _num(data, "sources.ftp_rwnd", errors, lo=1, integer=True)
    _window(data, "sources.ftp_start_s", errors, dur)
    _num(data, "admission.window_s", errors, lo=0, lo_open=True)
    _num(data, "admission.tick_ms", errors, lo=0, lo_open=True)
    _num(data, "controller.step", errors, lo=1, hi=29, integer=True)
    _num(data, "controller.quiet_intervals", errors, lo=1, integer=True)
    _num(data, "controller.bucket_tolerance", errors, lo=1)
    _num(data, "metrics.theta", errors, lo=0, hi=1, lo_open=True)
    _window(data, "arrivals.window_s", errors, dur)
    _num(data, "arrivals.request_start_s", errors, lo=0)

    for sec, key in (("sources", "ftp_ecn"), ("controller", "cap_at_granted")):
        if not isinstance(data[sec][key], bool):
            errors.append(f"{sec}.{key}: expected true or false")

    adm = data["admission"]
    if adm["epsilon_mode"] not in ("literal", "per_session"):
        errors.append("admission.epsilon_mode: must be literal or per_session")
    if adm["beta_mode"] not in ("experimental", "modeled"):
        errors.append("admission.beta_mode: must be experimental or modeled")
    needs_beta = data["architecture"] == "cross_layer"
    if adm["beta_mode"] == "experimental":
        b = _num(data, "admission.beta", errors, required=needs_beta)
        if b is not None and not 0 < b <= 1:
            errors.append("admission.beta: β must lie in (0,1]")
    else:
        _num(data, "admission.alpha", errors, required=needs_beta)
        d = _num(data, "admission.delta", errors, required=needs_beta)
        if d == 0:
            errors.append("admission.delta: must be non-zero")

    if data["arrivals"]["policy"] not in POLICIES:
        errors.append(f"arrivals.policy: must be one of {', '.join(POLICIES)}")

    seeds = data["seeds"]
    if not isinstance(seeds, list) or not seeds:
        errors.append("seeds: expected a non-empty list of integers")
    else:
        if not all(isinstance(s, int) and not isinstance(s, bool) and 0 <= s < 2**64 for s in seeds):
            errors.append("seeds: every seed must be an integer in [0, 2^64)")
        elif len(set(seeds)) != len(seeds):
            dups = sorted({s for s in seeds if seeds.count(s) > 1})
            errors.append(f"seeds: duplicate seeds {dups}")


def load_config(path=None, preset=None, overrides=None):
    """Load a scenario from a file and/or a preset name, then normalize it."""
    raw = {}
    base_dir = None
    if path is not None:
        raw = load_yaml(path)
        base_dir = Path(path).parent
    if preset is not None:
        raw.setdefault("preset", preset)
    if overrides:
        for key, value in overrides.items():
            node = raw
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
    return normalize(raw, base_dir)


def validate_config(path):
    """Returns ``(config, [])`` or ``(None, errors)``."""
    try:
        return load_config(path), []
    except ConfigError as e:
        return None, e.errors
    except (OSError, yaml.YAMLError) as e:
        return None, [f"{path}: {e}"]


def write_effective(config, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)
