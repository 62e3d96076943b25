"""Run configuration: one JSON file, overridable by CLI flags, echoed to
the output directory so every run is reproducible from its artifacts."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .matcher import MatchTolerances


@dataclass
class RunConfig:
    backend: dict = field(
        default_factory=lambda: {"kind": "http", "base_url": "http://localhost:8081/v1", "model": "default"}
    )
    db_path: str | None = None
    hull_path: str | None = None
    out_dir: str = "runs"
    ltol: float = 0.2
    stol: float = 0.3
    angle_tol: float = 5.0
    relax_max_steps: int = 100
    relax_fmax: float = 0.05
    seed: int = 0
    workers: int = 1
    temperature: float = 0.0
    #: optional JSON file overriding element data (oxidation states,
    #: electronegativities, radii); see elements.load_overrides
    element_overrides: str | None = None

    def tolerances(self) -> MatchTolerances:
        return MatchTolerances(ltol=self.ltol, stol=self.stol, angle_tol=self.angle_tol)

    def apply_element_overrides(self) -> None:
        if self.element_overrides:
            from .elements import load_overrides

            load_overrides(self.element_overrides)

    def as_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path:
        with open(path) as fh:
            data = json.load(fh)
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    return cfg


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def echo_config(cfg: RunConfig, outdir: str | Path) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    path.write_text(json.dumps(cfg.as_dict(), indent=2, sort_keys=True) + "\n")
    return path
