"""Pipeline configuration: one flat JSON document, overridable per run.

Precedence is CLI flag > --set override > config file > built-in default.
Unknown keys are rejected up front so typos fail before any stage runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from tagmap.errors import ConfigError

KNOWN_KEYS = frozenset(
    {
        "region",
        "region_id",
        "spacing_m",
        "anchor_lat",
        "anchor_lon",
        "n_random",
        "seed",
        "plan",
        "k",
        "provider",
        "provider_seed",
        "provider_url",
        "corpus_dir",
        "images_dir",
        "manifest",
        "rate_per_s",
        "workers",
        "detector",
        "detector_seed",
        "detector_url",
        "detections",
        "ground_truth",
        "iou_thr",
        "width",
        "height",
        "tau",
        "mode",
        "dedup",
        "scores_dir",
        "field_seed",
        "bumps",
        "systematic_spacings",
        "random_ns",
        "runs",
        "out",
        "out_dir",
    }
)


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path | None, overrides: list[str] | None = None) -> "PipelineConfig":
        values: dict = {}
        if path is not None:
            try:
                values = json.loads(Path(path).read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
            if not isinstance(values, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"--set needs key=value, got {item!r}")
            key, _, raw = item.partition("=")
            try:
                values[key] = json.loads(raw)
            except json.JSONDecodeError:
                values[key] = raw  # bare strings are fine unquoted
        unknown = set(values) - KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(values=values)

    def get(self, args, key: str, default=None):
        """Resolve one setting: CLI flag, then config value, then default."""
        cli = getattr(args, key, None)
        if cli is not None:
            return cli
        if key in self.values:
            return self.values[key]
        return default

    def require(self, args, key: str):
        value = self.get(args, key)
        if value is None:
            raise ConfigError(f"missing required setting --{key.replace('_', '-')}")
        return value
