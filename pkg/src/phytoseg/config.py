"""Run configuration and manifests.

One YAML file declares dataset roots, backend checkpoints, cache dir and
seeds; CLI flags override fields, and ``PHYTOSEG_<ID>_CHECKPOINT``
environment variables override checkpoint paths (highest precedence). Every
CLI run snapshots its effective settings into a JSON manifest next to its
artifacts so any output can be regenerated from the manifest alone.
"""

from __future__ import annotations

import dataclasses
import getpass
import json
import os
import platform
import time
from dataclasses import dataclass, field
from importlib import metadata as importlib_metadata
from pathlib import Path

import yaml

from .errors import DataError


def _package_version() -> str:
    try:
        return importlib_metadata.version("phytoseg")
    except importlib_metadata.PackageNotFoundError:  # running from a checkout
        return "unknown"


@dataclass
class Settings:
    """Effective configuration for a run."""

    dataset_roots: dict[str, str] = field(default_factory=dict)
    checkpoints: dict[str, str] = field(default_factory=dict)
    model_configs: dict[str, str] = field(default_factory=dict)
    cache_dir: str | None = None
    seed: int = 0
    device: str = "cpu"

    def checkpoint_for(self, backend_id: str) -> str | None:
        """Checkpoint path for a backend; env var wins over config file."""
        env_key = checkpoint_env_var(backend_id)
        return os.environ.get(env_key) or self.checkpoints.get(backend_id)

    def dataset_root(self, dataset_id: str) -> str | None:
        return self.dataset_roots.get(dataset_id)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def checkpoint_env_var(backend_id: str) -> str:
    return "PHYTOSEG_" + backend_id.upper().replace("-", "_") + "_CHECKPOINT"


_KNOWN_KEYS = {"dataset_roots", "checkpoints", "model_configs", "cache_dir",
               "seed", "device"}


def load_settings(path: str | Path | None) -> Settings:
    """Parse the YAML config file; a missing path yields defaults."""
    if path is None:
        return Settings()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file '{path}' not found")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise DataError(f"config file '{path}' is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"config file '{path}' must contain a mapping")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise DataError(
            f"config file '{path}' has unknown keys {sorted(unknown)}; "
            f"expected a subset of {sorted(_KNOWN_KEYS)}"
        )
    kwargs = {}
    for key in ("dataset_roots", "checkpoints", "model_configs"):
        value = raw.get(key, {})
        if not isinstance(value, dict):
            raise DataError(f"config key '{key}' must be a mapping")
        kwargs[key] = {str(k): str(v) for k, v in value.items()}
    if raw.get("cache_dir") is not None:
        kwargs["cache_dir"] = str(raw["cache_dir"])
    if "seed" in raw:
        kwargs["seed"] = int(raw["seed"])
    if "device" in raw:
        kwargs["device"] = str(raw["device"])
    return Settings(**kwargs)


def write_manifest(
    out_dir: str | Path,
    command: str,
    settings: Settings,
    arguments: dict,
    extra: dict | None = None,
) -> Path:
    """Write the run manifest JSON and return its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "arguments": {k: (str(v) if isinstance(v, Path) else v)
                      for k, v in sorted(arguments.items())},
        "settings": settings.to_dict(),
        "version": _package_version(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "host": platform.node(),
        "user": _safe_user(),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _safe_user() -> str:
    try:
        return getpass.getuser()
    except (KeyError, OSError):
        return "unknown"
