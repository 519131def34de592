"""Run configuration, its canonical fingerprint, and loading from JSON files."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .evaluate import DEFAULT_EXEC_SIGMA, BackendSpec
from .marker import HsvThresholds
from .pipeline import DEFAULT_RADIUS
from .scene import CATEGORIES


class ConfigError(ValueError):
    pass


# fields that shape the generated benchmark; everything else only affects evaluation
GENERATION_FIELDS = ("categories", "variants", "seed", "resolution")
# fields that never influence results
UNHASHED_FIELDS = ("out", "verbose_artifacts")


@dataclass(frozen=True)
class RunConfig:
    categories: tuple = CATEGORIES
    variants: int = 5
    trials: int = 50
    seed: int = 0
    backend: str = "oracle"
    sigma_px: float = 0.0
    endpoint: str = ""
    timeout: float = 60.0
    exec_sigma: float = DEFAULT_EXEC_SIGMA
    radius: float = DEFAULT_RADIUS
    resolution: tuple = (640, 480)
    thresholds: HsvThresholds = field(default_factory=HsvThresholds)
    out: str = "out"
    verbose_artifacts: bool = False

    def __post_init__(self):
        cats = tuple(self.categories)
        object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "resolution", tuple(int(x) for x in self.resolution))
        bad = [c for c in cats if c not in CATEGORIES]
        if bad:
            raise ConfigError(f"unknown categories: {', '.join(bad)}")
        if len(set(cats)) != len(cats):
            raise ConfigError("categories repeat")
        if self.variants < 1:
            raise ConfigError("variants must be at least 1")
        if self.trials < 0:
            raise ConfigError("trials must be nonnegative")
        if self.exec_sigma < 0:
            raise ConfigError("exec_sigma must be nonnegative")
        if not self.radius > 0:
            raise ConfigError("radius must be positive")
        if len(self.resolution) != 2 or min(self.resolution) < 16:
            raise ConfigError("resolution must be WIDTH HEIGHT, each at least 16")
        try:
            self.backend_spec()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def backend_spec(self) -> BackendSpec:
        return BackendSpec(self.backend, self.sigma_px, self.endpoint, self.timeout)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["categories"] = list(self.categories)
        d["resolution"] = list(self.resolution)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        d = dict(d)
        if "thresholds" in d and isinstance(d["thresholds"], dict):
            try:
                d["thresholds"] = HsvThresholds(**d["thresholds"])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad thresholds: {e}") from e
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def fingerprint(self) -> str:
        d = self.to_dict()
        for k in UNHASHED_FIELDS:
            d.pop(k)
        return _digest(d)

    def generation_fingerprint(self) -> str:
        d = self.to_dict()
        return _digest({k: d[k] for k in GENERATION_FIELDS})


def _digest(d: dict) -> str:
    canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return RunConfig.from_dict(doc)
