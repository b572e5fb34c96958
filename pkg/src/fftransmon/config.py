"""Experiment configuration files (TOML) with strict key checking.

The grammar is documented in ``docs/config.md``. Every table accepts only
the keys listed in the schema tables below; anything else is an error that points at
the offending line.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .device import AwgModel, CrossResonanceModel, DeviceConfig, TlsSampler, TlsSpec

EXPERIMENTS = ("simulate", "qpt", "additivity", "ham-tomog", "calibrate-phase", "low-amp", "delay-scan", "purity-scan")

# every experiment except a plain deterministic simulation samples shots
STOCHASTIC = frozenset(EXPERIMENTS) - {"simulate"}

_REQUIRED = object()

_DEVICE_KEYS = {
    "omega": _REQUIRED, "alpha": None, "couplings": [], "T1": None, "T2": None,
    "readout_flip": None, "detuning": None, "awg": {}, "tls": [], "tls_sampler": None, "cr": {},
}
_AWG_KEYS = {"amplitude_step": 0.0, "gain_nonlinearity": 0.0, "phase_offset": 0.0, "min_one_step": False}
_TLS_KEYS = {"qubit": _REQUIRED, "chi": _REQUIRED, "p_excited": 0.5, "lifetime": None}
_SAMPLER_KEYS = {"qubit": 0, "counts": [0, 1, 2, 3], "chi_range": [0.01, 0.05], "p_range": [0.2, 0.8], "lifetime": None}
_CR_KEYS = {"model": "default", "J": 2.0, "Omega": 36.0, "rates": None}
_SIM_KEYS = {"frame": "rotating", "rwa": True, "cr_mode": "effective"}
_DRIVE_KEYS = {"qubit": _REQUIRED, "amplitude": _REQUIRED, "phase": 0.0, "carrier": None, "ramp": 0.0}
_TOP_KEYS = {"experiment": _REQUIRED, "seed": None, "output": None, "device": _REQUIRED, "simulator": {}, "params": {}}

_PARAMS = {
    "simulate": {"prep": None, "drives": [], "duration": _REQUIRED, "times": None, "dt_sample": 0.01},
    "qpt": {"qubits": _REQUIRED, "control": _REQUIRED, "target": _REQUIRED, "Omega": _REQUIRED, "phase": 0.0,
            "durations": _REQUIRED, "shots": 4096},
    "additivity": {"q1": 0, "q2": 1, "q3": 2, "Omega": _REQUIRED, "phase": 0.0,
                   "durations": [0.04, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], "shots": 4096, "threshold": 0.2},
    "ham-tomog": {"control": 0, "target": 1, "Omega": _REQUIRED, "phase": 0.0, "times": _REQUIRED,
                  "stark_times": None, "shots": 4096, "refine": True},
    "calibrate-phase": {"control": 0, "target": 1, "Omega": _REQUIRED, "tol": 0.01, "times": None,
                        "shots": 1024, "max_calls": 20},
    "low-amp": {"qubit": 0, "Omega": _REQUIRED, "phase": 0.0, "times": _REQUIRED, "shots": 1024},
    "delay-scan": {"qubit": 0, "basis": "X", "delays": _REQUIRED, "shots": 1024, "repetitions": 1, "prep": "+",
                   "fit": True},
    "purity-scan": {"qubit": 0, "delays": _REQUIRED, "shots": 1024, "prominence": 0.02, "prep": "+"},
}


class ConfigError(ValueError):
    """Invalid configuration, with the source position when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None, key: str | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.message, self.line, self.column, self.key = message, line, column, key

    def to_dict(self) -> dict:
        return {"type": "config", "message": self.message, "line": self.line, "column": self.column, "key": self.key}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int | None
    output: str | None
    device: DeviceConfig
    simulator: dict
    params: dict
    tls_sampler: TlsSampler | None = None
    raw: dict = field(default_factory=dict)
    source: str = ""

    @property
    def sha256(self) -> str:
        # hash of the parsed content after overrides, independent of layout and comments
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _locate(text: str, key: str) -> tuple[int | None, int | None]:
    """First line and column where ``key`` appears as a key or table name."""
    pat = re.compile(r"^(\s*\[{0,2}\s*(?:[\w\-\"]+\.)*)" + re.escape(key) + r"\s*(=|\]|\.)")
    for i, line in enumerate(text.splitlines(), 1):
        m = pat.match(line)
        if m:
            return i, len(m.group(1)) + 1
    for i, line in enumerate(text.splitlines(), 1):
        col = line.find(key)
        if col >= 0:
            return i, col + 1
    return None, None


def _check(table: Any, schema: dict, where: str, text: str) -> dict:
    if not isinstance(table, dict):
        line, col = _locate(text, where.rsplit(".", 1)[-1]) if where else (None, None)
        raise ConfigError(f"{where or 'config'} must be a table", line, col, where)
    for key in table:
        if key not in schema:
            line, col = _locate(text, key)
            raise ConfigError(f"unknown key '{key}' in {where or 'top level'}", line, col, f"{where}.{key}".strip("."))
    out = {}
    for key, default in schema.items():
        if key in table:
            out[key] = table[key]
        elif default is _REQUIRED:
            line, col = _locate(text, where.rsplit(".", 1)[-1]) if where else (None, None)
            raise ConfigError(f"missing key '{key}' in {where or 'top level'}", line, col, f"{where}.{key}".strip("."))
        else:
            out[key] = copy.deepcopy(default)
    return out


def grid(value) -> list[float]:
    """A time grid written either as a list or as ``{start, stop, num}``."""
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num"}
        if extra or not {"stop", "num"} <= set(value):
            raise ConfigError("grid tables need 'stop' and 'num' (and optionally 'start') only")
        return [float(x) for x in np.linspace(float(value.get("start", 0.0)), float(value["stop"]), int(value["num"]))]
    if isinstance(value, list):
        return [float(x) for x in value]
    raise ConfigError(f"expected a list or grid table, got {value!r}")


def _device(raw: dict, text: str) -> tuple[DeviceConfig, TlsSampler | None]:
    d = _check(raw, _DEVICE_KEYS, "device", text)
    awg = AwgModel(**_check(d["awg"], _AWG_KEYS, "device.awg", text))
    if not isinstance(d["tls"], list):
        raise ConfigError("device.tls must be an array of tables", *_locate(text, "tls"), "device.tls")
    tls = tuple(TlsSpec(**_check(t, _TLS_KEYS, "device.tls", text)) for t in d["tls"])
    cr = _check(d["cr"], _CR_KEYS, "device.cr", text)
    if cr["model"] == "default":
        model = CrossResonanceModel()
    elif cr["model"] == "measured":
        model = CrossResonanceModel.measured(cr["J"], cr["Omega"])
    elif cr["model"] == "ideal":
        model = CrossResonanceModel.ideal(cr["J"], cr["Omega"])
    elif cr["model"] == "rates":
        if not isinstance(cr["rates"], dict):
            raise ConfigError("device.cr.rates must be a table of Pauli labels", *_locate(text, "rates"), "device.cr.rates")
        model = CrossResonanceModel.from_rates(cr["rates"], cr["J"], cr["Omega"])
    else:
        raise ConfigError(f"unknown cross-resonance model '{cr['model']}'", *_locate(text, "model"), "device.cr.model")
    couplings = {}
    for entry in d["couplings"]:
        if not (isinstance(entry, list) and len(entry) == 3):
            raise ConfigError("couplings entries are [i, j, J]", *_locate(text, "couplings"), "device.couplings")
        couplings[(int(entry[0]), int(entry[1]))] = float(entry[2])
    sampler = None
    if d["tls_sampler"] is not None:
        s = _check(d["tls_sampler"], _SAMPLER_KEYS, "device.tls_sampler", text)
        sampler = TlsSampler(int(s["qubit"]), tuple(int(c) for c in s["counts"]), tuple(s["chi_range"]),
                             tuple(s["p_range"]), s["lifetime"])
    try:
        cfg = DeviceConfig(
            omega=tuple(d["omega"]), alpha=d["alpha"], couplings=couplings, T1=d["T1"], T2=d["T2"],
            readout_flip=d["readout_flip"], detuning=d["detuning"], awg=awg, tls=tls, cr_model=model,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid device: {exc}", *_locate(text, "device"), "device") from exc
    return cfg, sampler


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values use TOML syntax, bare words are strings."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value")
        path, value = item.split("=", 1)
        keys = path.strip().split(".")
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{path}' walks into a non-table value")
        node[keys[-1]] = _parse_value(value.strip())
    return raw


def parse_config(text: str, overrides: list[str] = ()) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigError(f"TOML syntax error: {str(exc).split(' (at')[0]}", line, col) from exc
    return config_from_raw(raw, overrides, text)


def config_from_raw(raw: dict, overrides: list[str] = (), text: str = "") -> ExperimentConfig:
    """Validate an already parsed config table (``text`` is only used to locate errors)."""
    raw = apply_overrides(raw, list(overrides))
    top = _check(raw, _TOP_KEYS, "", text)
    exp = top["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{exp}'; choose one of {', '.join(EXPERIMENTS)}",
                          *_locate(text, "experiment"), "experiment")
    seed = top["seed"]
    if exp in STOCHASTIC and seed is None:
        raise ConfigError(f"experiment '{exp}' is stochastic and needs an integer seed", None, None, "seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("seed must be a non-negative integer", *_locate(text, "seed"), "seed")
    device, sampler = _device(top["device"], text)
    sim = _check(top["simulator"], _SIM_KEYS, "simulator", text)
    params = _check(top["params"], _PARAMS[exp], "params", text)
    if exp == "simulate":
        params["drives"] = [_check(d, _DRIVE_KEYS, "params.drives", text) for d in params["drives"]]
    return ExperimentConfig(exp, seed, top["output"], device, sim, params, sampler, raw, text)


def load_config(path: str, overrides: list[str] = ()) -> ExperimentConfig:
    """Read a TOML config, or the config embedded in a ``manifest.json`` of an earlier run."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        try:
            manifest = json.loads(text)
        except ValueError as exc:
            raise ConfigError(f"JSON syntax error: {exc.msg}", exc.lineno, exc.colno) from exc
        if not isinstance(manifest, dict) or not isinstance(manifest.get("config"), dict):
            raise ConfigError("manifest has no embedded config table", key="config")
        return config_from_raw(manifest["config"], overrides)
    return parse_config(text, overrides)
