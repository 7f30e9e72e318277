"""Flat key=value experiment configuration with flag overrides."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .binning import BinPartition
from .experiment import MODES, ChainSetup
from .markov import Distribution, Observable, TransitionMatrix, build_three_well_chain
from .serialize import observable_from_csv, read_matrix_csv


def parse_state_set(text: str) -> list[int]:
    """1-indexed state list: '81..90' for an interval or '1,5,7'. Returns
    0-indexed sorted indices."""
    text = text.strip()
    if not text:
        return []
    if ".." in text:
        lo, hi = text.split("..")
        states = range(int(lo), int(hi) + 1)
    else:
        states = [int(t) for t in text.split(",")]
    out = sorted(set(int(s) - 1 for s in states))
    if out and out[0] < 0:
        raise ValueError(f"states must be >= 1 in {text!r}")
    return out


@dataclass
class ExperimentConfig:
    chain: str = "three-well"  # or csv:<path> to an i,j,value matrix
    lag: int = 4
    bin_width: int = 3
    mode: str = "adaptive"  # adaptive | traditional | naive | all
    n_particles: int = 150
    n_floor: float = 1.0
    per_bin_target: float = 5.0
    horizons: tuple[int, ...] = (5, 10, 15, 20, 25, 30)
    reps: int = 1000
    seed: int = 0
    out: str = "out"
    threads: int = 1
    f_states: str = "28..33"  # interval/list, or csv:<path> to an i,value vector
    coarse_samples: int = 0  # 0 = exact coarse builder
    source_state: int = 1
    sink_states: str = "81..90"
    hill_horizon: int = 500
    hit_a: str = ""
    hit_b: str = ""
    diag_horizon: int = 5
    diag_reps: int = 2000

    _INT = ("lag", "bin_width", "n_particles", "reps", "seed", "threads",
            "coarse_samples", "source_state", "hill_horizon", "diag_horizon",
            "diag_reps")
    _FLOAT = ("n_floor", "per_bin_target")

    def validate(self):
        if self.mode not in MODES + ("all",):
            raise ValueError(f"mode must be one of {MODES + ('all',)}, got {self.mode!r}")
        if self.n_particles < 1 or self.reps < 1:
            raise ValueError("n_particles and reps must be positive")
        if sorted(self.horizons) != list(self.horizons):
            raise ValueError("horizons must be sorted ascending")
        if any(n < 0 for n in self.horizons):
            raise ValueError("horizons must be nonnegative")
        if self.per_bin_target <= 0:
            raise ValueError("per_bin_target must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def modes(self) -> tuple[str, ...]:
        return MODES if self.mode == "all" else (self.mode,)

    # fields that do not affect results and are excluded from the config hash
    _UNHASHED = ("out", "threads")

    def canonical_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name.startswith("_") or f.name in self._UNHASHED:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_file(cls, path: Optional[Path] = None, **overrides) -> "ExperimentConfig":
        values: dict = {}
        if path is not None:
            for raw in Path(path).read_text().splitlines():
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"bad config line: {raw!r}")
                key, val = (part.strip() for part in line.split("=", 1))
                values[key] = val
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key, val in values.items():
            if key == "horizons":
                if isinstance(val, str):
                    val = tuple(int(t) for t in val.split(","))
                kwargs[key] = tuple(val)
            elif key in cls._INT:
                kwargs[key] = int(val)
            elif key in cls._FLOAT:
                kwargs[key] = float(val)
            else:
                kwargs[key] = val
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def build_setup(self) -> ChainSetup:
        """Materialize the chain, bins, observable, and sampling measure."""
        if self.chain == "three-well":
            Q, K = build_three_well_chain(self.lag)
        elif self.chain.startswith("csv:"):
            Q = None
            K = read_matrix_csv(Path(self.chain[4:]))
        else:
            raise ValueError(f"unknown chain {self.chain!r}")
        n = K.n_states
        bins = BinPartition.from_width(n, self.bin_width)
        if self.f_states.startswith("csv:"):
            f = observable_from_csv(Path(self.f_states[4:]))
            if f.n_states != n:
                raise ValueError("observable vector length does not match chain")
        else:
            f = Observable.indicator(parse_state_set(self.f_states), n)
        zeta = Distribution(np.full(n, 1.0 / n))
        return ChainSetup(K=K, bins=bins, f=f, zeta=zeta, Q=Q)
