"""Run plumbing: config resolution, deterministic CSV output, manifests.

Every run directory gets a manifest echoing the fully resolved config,
git-style content hashes of each input file, and the list of outputs.
Nothing in an output file depends on wall-clock time.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "FOMCDISSENT_"


def git_blob_sha1(path) -> str:
    """Hash file contents the way git hashes a blob."""
    data = Path(path).read_bytes()
    h = hashlib.sha1()
    h.update(b"blob %d\x00" % len(data))
    h.update(data)
    return h.hexdigest()


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def apply_overrides(cfg: dict, args) -> dict:
    """Priority: command-line flag > environment variable > config file."""
    out = dict(cfg)
    env_seed = os.environ.get(ENV_PREFIX + "SEED")
    env_workers = os.environ.get(ENV_PREFIX + "WORKERS")
    env_out = os.environ.get(ENV_PREFIX + "OUT")
    if env_seed is not None:
        out["seed"] = int(env_seed)
    if env_workers is not None:
        out["workers"] = int(env_workers)
    if env_out is not None:
        out["out"] = env_out
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        out["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        out["out"] = args.out
    out.setdefault("seed", 0)
    out.setdefault("workers", 1)
    if "out" not in out:
        raise ConfigError("missing required config field: out")
    return out


def data_path(cfg: dict, key: str, required: bool = True) -> Path | None:
    path = cfg.get("data", {}).get(key)
    if path is None:
        if required:
            raise ConfigError(f"missing required config field: data.{key}")
        return None
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"data.{key}: file not found: {p}")
    return p


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: list[str], rows: list[dict | list]) -> None:
    """Stable column order, repr floats, newline-terminated lines."""
    lines = [",".join(header)]
    for row in rows:
        if isinstance(row, dict):
            lines.append(",".join(_fmt(row.get(col, "")) for col in header))
        else:
            lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


class RunContext:
    """Collects inputs/outputs of one subcommand run and writes the manifest."""

    def __init__(self, subcommand: str, cfg: dict):
        self.subcommand = subcommand
        self.cfg = cfg
        self.out_dir = Path(cfg["out"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []

    def track_input(self, path) -> Path:
        p = Path(path)
        self.inputs[str(p)] = git_blob_sha1(p)
        return p

    def out_path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(name)
        return p

    def finish(self) -> None:
        write_json(self.out_dir / "manifest.json", {
            "subcommand": self.subcommand,
            "config": self.cfg,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
        })
