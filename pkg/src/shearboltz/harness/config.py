"""Scenario definitions and their INI serialisation."""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path

from ..kernels import CollisionKernel

SCENARIOS = ("relax_k0", "subcritical", "supercritical", "hard_potential", "k_sweep", "selfsim")

_DEFAULTS = {
    "relax_k0": dict(K=0.0, n_particles=100_000, t_end=2.0, n_records=21),
    "subcritical": dict(K=1.0, n_particles=200_000, t_end=5.0, n_records=11),
    "supercritical": dict(K_factor=2.0, n_particles=100_000, n_records=21),
    "hard_potential": dict(gamma=0.5, K=5.0, n_particles=100_000, t_end=20.0, n_records=41),
    "k_sweep": dict(K_grid=(0.0, 0.5, 0.9, 1.1, 2.0), n_particles=50_000, n_records=41),
    "selfsim": dict(K_factor=2.0, n_particles=100_000, n_records=11),
}

# section -> fields stored there
_LAYOUT = {
    "scenario": ("name", "seed", "n_particles", "t_end", "n_records", "substep", "out_dir"),
    "kernel": ("kernel", "gamma", "kernel_table"),
    "shear": ("K", "K_factor", "K_grid"),
    "moments": ("third_source",),
}


@dataclass(frozen=True)
class Scenario:
    """One fully specified experiment.

    ``K`` is an absolute shear rate; ``K_factor`` gives it as a multiple of
    the spectral threshold instead, and ``K_grid`` lists such multiples for
    the sweep. ``t_end = None`` picks a scenario-specific horizon.
    """

    name: str
    kernel: str = "constant"
    gamma: float = 0.0
    kernel_table: str | None = None
    K: float | None = None
    K_factor: float | None = None
    K_grid: tuple = ()
    n_particles: int = 100_000
    t_end: float | None = None
    n_records: int = 21
    seed: int = 0
    substep: float | None = None
    third_source: bool = False
    out_dir: str = "runs"

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; expected one of {SCENARIOS}")
        if self.name == "k_sweep":
            if not self.K_grid:
                raise ValueError("k_sweep needs a K_grid")
        elif (self.K is None) == (self.K_factor is None):
            raise ValueError("give exactly one of K and K_factor")
        if self.n_particles < 1 or self.n_records < 2:
            raise ValueError("n_particles >= 1 and n_records >= 2 required")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "K_grid", tuple(float(k) for k in self.K_grid))

    @classmethod
    def preset(cls, name: str, **overrides) -> "Scenario":
        if name not in _DEFAULTS:
            raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
        params = dict(_DEFAULTS[name])
        if "K" in overrides or "K_factor" in overrides:
            params.pop("K", None)
            params.pop("K_factor", None)
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(name=name, **params)

    def collision_kernel(self) -> CollisionKernel:
        if self.kernel_table:
            return CollisionKernel.from_csv(self.kernel_table, gamma=self.gamma)
        return CollisionKernel.preset(self.kernel, gamma=self.gamma)

    def with_overrides(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["K_grid"] = list(self.K_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        d["K_grid"] = tuple(d.get("K_grid", ()))
        return cls(**d)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        d = self.to_dict()
        for section, keys in _LAYOUT.items():
            cp[section] = {}
            for k in keys:
                v = d[k]
                if v is None:
                    continue
                if k == "K_grid":
                    if not v:
                        continue
                    v = ", ".join(repr(x) for x in v)
                cp[section][k] = repr(v) if isinstance(v, float) else str(v)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


_FLOATS = {"gamma", "K", "K_factor", "t_end", "substep"}
_INTS = {"n_particles", "n_records", "seed"}


def parse_ini(text: str) -> Scenario:
    """Build a scenario from ``key = value`` sections; unset keys take the preset defaults."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    known = {k for keys in _LAYOUT.values() for k in keys}
    raw = {}
    for section in cp.sections():
        if section not in _LAYOUT:
            raise ValueError(f"unknown config section [{section}]")
        for k, v in cp[section].items():
            if k not in known:
                raise ValueError(f"unknown config key {k!r} in [{section}]")
            raw[k] = v.strip()
    if "name" not in raw:
        raise ValueError("config needs [scenario] name")
    out = {}
    for k, v in raw.items():
        if k in _FLOATS:
            out[k] = float(v)
        elif k in _INTS:
            out[k] = int(v, 0)
        elif k == "K_grid":
            out[k] = tuple(float(x) for x in v.split(",") if x.strip())
        elif k == "third_source":
            out[k] = cp.getboolean("moments", k)
        else:
            out[k] = v
    name = out.pop("name")
    return Scenario.preset(name, **out)


def load_scenario(path: str | Path) -> Scenario:
    return parse_ini(Path(path).read_text())
