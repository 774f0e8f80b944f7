"""
Run manifests: everything needed to replay a command bit-exactly.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import yaml

from .config import ScenarioConfig, config_hash, load_config
from .constants import VERSION
from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    version: str
    key_hex: str
    options: Dict[str, Any] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def for_run(cls, command: str, cfg: ScenarioConfig, options: Dict[str, Any]) -> "RunManifest":
        return cls(
            command=command,
            config_hash=cfg.config_hash,
            seed=cfg.seed,
            version=VERSION,
            key_hex=cfg.resolved["victim"]["key_hex"],
            options=dict(options),
            config=cfg.resolved,
        )

    def scenario_config(self) -> ScenarioConfig:
        """Rebuild the run's config; refuses a manifest whose hash does not match."""
        if config_hash(self.config) != self.config_hash:
            raise ConfigError("manifest.config_hash", "does not match the embedded config")
        return load_config(self.config, require_thresholds=self.command != "calibrate")


def save_manifest(manifest: RunManifest, out_dir: Union[str, Path], name: str) -> Path:
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        yaml.safe_dump(asdict(manifest), f, sort_keys=False, allow_unicode=True)
    return path


def load_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(str(path), f"cannot read manifest: {e.strerror or e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"invalid YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "manifest must be a mapping")
    try:
        manifest = RunManifest(**raw)
    except TypeError as e:
        raise ConfigError(str(path), f"malformed manifest: {e}") from None
    if manifest.version != VERSION:
        log.warning("manifest written by shieldsim %s, replaying with %s", manifest.version, VERSION)
    return manifest
