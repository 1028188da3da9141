"""JSON run configuration.

Example::

    {
      "params": {"mu": 1.0, "n": 64},
      "data": {
        "amplitude": 0.01,
        "u_in": {"family": "sine", "scale": [1.0, 1.0], "k": 1},
        "rho_in": {"family": "bump"},
        "b_top": {"samples": [0.0, 0.1, 0.0]}
      },
      "sweep": {"mu": [1.0, 0.1], "amplitudes": [0.02, 0.01]},
      "output": "out",
      "seed": 0
    }

Every boundary trace defaults to ``{"family": "sine", "k": 1, "scale": 1}``.
Explicit ``samples`` are linearly resampled onto the grid and multiplied by
``amplitude`` like the analytic families.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .background import BoundarySpec, profile
from .core import Params
from .errors import ConfigError

VECTOR_TRACES = ("u_in", "u_out")
SCALAR_TRACES = ("rho_in", "b_bottom", "b_top")
TRACE_KEYS = {"family", "scale", "k", "samples"}
DATA_KEYS = {"amplitude", *VECTOR_TRACES, *SCALAR_TRACES}
TOP_KEYS = {"mode", "params", "data", "sweep", "output", "seed"}
SWEEP_KEYS = {"mu", "amplitudes", "n_list", "epsilon", "count"}
MODES = ("solve", "mms", "korn", "threshold", "scaling")

REFERENCE_AMPLITUDE = 1e-2


@dataclass
class RunConfig:
    params: Params = field(default_factory=Params)
    data: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    output: str = "out"
    seed: int = 0
    mode: str | None = None

    @property
    def amplitude(self) -> float:
        return float(self.data.get("amplitude", REFERENCE_AMPLITUDE))

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(raw, TOP_KEYS, "config")
        data = dict(raw.get("data", {}))
        sweep = dict(raw.get("sweep", {}))
        _check_keys(data, DATA_KEYS, "data")
        _check_keys(sweep, SWEEP_KEYS, "sweep")
        for name in (*VECTOR_TRACES, *SCALAR_TRACES):
            if name in data:
                _check_keys(data[name], TRACE_KEYS, f"data.{name}")
        mode = raw.get("mode")
        if mode is not None and mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        try:
            seed = int(raw.get("seed", 0))
        except (TypeError, ValueError) as exc:
            raise ConfigError("seed must be an integer") from exc
        cfg = cls(
            params=Params.from_dict(raw.get("params", {})),
            data=data,
            sweep=sweep,
            output=str(raw.get("output", "out")),
            seed=seed,
            mode=mode,
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self) -> None:
        if self.amplitude < 0:
            raise ConfigError("amplitude must be nonnegative")
        amps = self.sweep.get("amplitudes", [])
        if any(a < 0 for a in amps):
            raise ConfigError("sweep amplitudes must be nonnegative")
        if any(m <= 0 for m in self.sweep.get("mu", [])):
            raise ConfigError("sweep viscosities must be positive")

    def boundary_spec(self, params: Params | None = None, amplitude: float | None = None) -> BoundarySpec:
        params = params or self.params
        amp = self.amplitude if amplitude is None else amplitude
        t = np.linspace(0.0, 1.0, params.n + 1)
        traces = {}
        for name in VECTOR_TRACES:
            traces[name] = np.stack([_trace(self.data.get(name, {}), t, amp, c) for c in range(2)])
        for name in SCALAR_TRACES:
            traces[name] = _trace(self.data.get(name, {}), t, amp, None)
        return BoundarySpec.from_perturbation(
            params,
            traces["u_in"],
            traces["u_out"],
            traces["rho_in"],
            traces["b_bottom"],
            traces["b_top"],
        )


def _check_keys(block, allowed: set, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _trace(entry: dict, t: np.ndarray, amplitude: float, component: int | None) -> np.ndarray:
    scale = entry.get("scale", 1.0)
    if component is not None and isinstance(scale, (list, tuple)):
        if len(scale) != 2:
            raise ConfigError("vector trace scale must have two entries")
        scale = scale[component]
    if "samples" in entry:
        samples = np.asarray(entry["samples"], dtype=float)
        if component is not None and samples.ndim == 2:
            samples = samples[component]
        if samples.ndim != 1 or samples.size < 2:
            raise ConfigError("samples must be a list of at least two values")
        base = np.interp(t, np.linspace(0.0, 1.0, samples.size), samples)
    else:
        base = profile(t, entry.get("family", "sine"), 1.0, int(entry.get("k", 1)))
    return amplitude * float(scale) * base
