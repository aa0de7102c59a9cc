"""Experiment configuration: flat key = value files with one section per
subcommand, strict schemas, and provenance snapshots.

CLI flags override file keys; unknown keys are rejected; every run's
resolved configuration is echoed into its output directory.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path

OUTPUT_ROOT_ENV = "MRN_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


def _parse_bool(raw):
    low = str(raw).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean from {raw!r}")


def _parse_list(cast):
    def parse(raw):
        raw = str(raw).strip()
        if not raw:
            return []
        return [cast(part.strip()) for part in raw.split(",")]

    return parse


_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "int_list": _parse_list(int),
    "float_list": _parse_list(float),
    "str_list": _parse_list(str),
}

# key -> (type name, default); defaults of None mean "required by command code
# or genuinely optional"
SCHEMAS = {
    "gradcheck": {
        "seed": ("int", 0),
        "trials": ("int", 100),
        "tol": ("float", 1e-4),
        "step": ("float", 1e-5),
        "out": ("str", None),
    },
    "verify-theory": {
        "corpus_seed": ("int", 7),
        "n_mdps": ("int", 50),
        "n_sup_mdps": ("int", 20),
        "gammas": ("float_list", [0.9, 0.98]),
        "tol": ("float", 1e-10),
        "out": ("str", None),
    },
    "toy": {
        "etas": ("float_list", [0.1, 0.25, 0.5, 1.0]),
        "k_values": ("int_list", [0, 1, 8, 64, 176]),
        "seeds": ("int_list", [100, 200, 300, 400, 500]),
        "grid_n": ("int", 64),
        "iterations": ("int", 300),
        "lr": ("float", 1e-3),
        "dataset_seed": ("int", 42),
        "archs": ("str_list", ["mrn", "mrn-sym-only"]),
        "out": ("str", None),
    },
    "train": {
        "archs": ("str_list", ["mrn"]),
        "seeds": ("int_list", [100, 200, 300, 400, 500]),
        "epochs": ("int", 50),
        "episodes_per_epoch": ("int", 100),
        "cycles_per_epoch": ("int", 10),
        "updates_per_cycle": ("int", 40),
        "batch_size": ("int", 256),
        "lr": ("float", 1e-3),
        "gamma": ("float", 0.98),
        "polyak": ("float", 0.998),
        "future_p": ("float", 0.8),
        "noise_sigma": ("float", 0.2),
        "random_eps": ("float", 0.2),
        "action_l2": ("float", 0.1),
        "eval_rollouts": ("int", 100),
        "buffer_episodes": ("int", 10000),
        "wall": ("bool", False),
        "early_stop_success": ("float", -1.0),
        "sym_reduction": ("str", "mean"),
        "save_checkpoints": ("bool", True),
        "workers": ("int", 1),
        "out": ("str", None),
    },
    "eval": {
        "checkpoint": ("str", None),
        "arch": ("str", "mrn"),
        "n_rollouts": ("int", 100),
        "seed": ("int", 0),
        "wall": ("bool", False),
        "out": ("str", None),
    },
}


def defaults_for(command):
    if command not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {command!r}")
    return {key: default for key, (_, default) in SCHEMAS[command].items()}


def load_file(path, command):
    """Parse one section of a config file against the command schema."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if not parser.has_section(command):
        return {}
    schema = SCHEMAS[command]
    out = {}
    for key, raw in parser.items(command):
        if key not in schema:
            raise ConfigError(f"{path}: unknown key {key!r} in section [{command}]")
        type_name, _ = schema[key]
        try:
            out[key] = _PARSERS[type_name](raw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{path}: key {key!r}: {exc}") from exc
    return out


def resolve(command, file_path=None, overrides=None):
    """defaults <- file section <- CLI overrides; returns the final dict."""
    cfg = defaults_for(command)
    if file_path:
        cfg.update(load_file(file_path, command))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in SCHEMAS[command]:
            raise ConfigError(f"unknown key {key!r} for subcommand {command}")
        cfg[key] = value
    return cfg


def format_config(command, cfg):
    lines = [f"[{command}]"]
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def snapshot(command, cfg, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.txt").write_text(format_config(command, cfg))


def output_dir(cfg, command):
    if cfg.get("out"):
        return Path(cfg["out"])
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return Path(root) / command
