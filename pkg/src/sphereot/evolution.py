"""Parameter sweeps of sliced distances between vMF samples.

Each sweep varies one of ``kappa``, ``theta``, ``L`` or ``d`` while the
others stay fixed, repeats the evaluation over seeds and summarises the
values by their median and standard deviation.

* ``kappa``: vMF(e_1, kappa) against a uniform sample;
* ``theta``: vMF(e_1, kappa) against an independent vMF sample rotated by
  ``theta`` in the (e_1, e_2) plane;
* ``L``: the samples are drawn once, only the slices change with the seed;
* ``d``: as ``kappa`` but across ambient dimensions.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .sliced import SlicedConfig, dssw_hat, ssw_hat, sw_hat
from .sphere import VmfComponent, rotate_along_great_circle, sample_uniform_sphere, sample_vmf
from .validation import check_choice
from .weighting import EnergySpec

SWEEPS = ("kappa", "theta", "L", "d")
CSV_FIELDS = ("sweep", "value", "median", "dispersion", "n_seeds")


@dataclass(frozen=True)
class EvolveConfig:
    sweep: str = "kappa"
    values: tuple = (1.0, 5.0, 10.0, 50.0, 100.0)
    seeds: int = 20
    n: int = 500
    d: int = 3
    L: int = 100
    kappa: float = 10.0
    method: str = "dssw"
    kind: str = "exp"
    p: int = 2
    prefactor: str = "literal"
    seed: int = 0

    def __post_init__(self):
        check_choice(self.sweep, "sweep", SWEEPS)
        check_choice(self.method, "method", ("sw", "ssw", "dssw"))
        if len(self.values) == 0:
            raise ConfigError("a sweep needs at least one value")
        if self.seeds < 2:
            raise ConfigError("a sweep needs at least two seeds for a dispersion")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass
class EvolveRow:
    sweep: str
    value: float
    median: float
    dispersion: float
    n_seeds: int


def _distance(X, Y, cfg, method):
    if method == "sw":
        return sw_hat(X, Y, cfg)
    fn = dssw_hat if method == "dssw" else ssw_hat
    return fn(X, Y, cfg).value


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def _one(cfg, value, s):
    d, kappa, L = cfg.d, cfg.kappa, cfg.L
    if cfg.sweep == "kappa":
        kappa = float(value)
    elif cfg.sweep == "d":
        d = int(value)
    elif cfg.sweep == "L":
        L = int(value)
    base = cfg.seed
    # samples do not depend on the seed index in the L sweep
    sample_key = base if cfg.sweep == "L" else base + 1_000_003 * (s + 1)
    mu = np.eye(d)[0]
    X = sample_vmf(VmfComponent(mu, kappa), cfg.n, _rng(sample_key, 0))
    if cfg.sweep == "theta":
        Y = sample_vmf(VmfComponent(mu, kappa), cfg.n, _rng(sample_key, 1))
        Y = rotate_along_great_circle(Y, (np.eye(d)[0], np.eye(d)[1]), float(value))
    else:
        Y = sample_uniform_sphere(d, cfg.n, _rng(sample_key, 1))
    sc = SlicedConfig(p=cfg.p, L=L, seed=base + s, prefactor=cfg.prefactor,
                      energy=EnergySpec(kind=cfg.kind))
    return _distance(X, Y, sc, cfg.method)


def evolve(cfg):
    """Run a sweep; returns one :class:`EvolveRow` per swept value."""
    rows = []
    for value in cfg.values:
        vals = np.array([_one(cfg, value, s) for s in range(cfg.seeds)])
        rows.append(EvolveRow(cfg.sweep, float(value), float(np.median(vals)),
                              float(np.std(vals, ddof=1)), cfg.seeds))
    return rows


def to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in rows:
        writer.writerow([r.sweep, repr(r.value), repr(r.median), repr(r.dispersion), r.n_seeds])
    return buf.getvalue()


THETA_GRID = tuple(k * np.pi / 4.0 for k in range(8))
DEFAULT_VALUES = {
    "kappa": (1.0, 5.0, 10.0, 50.0, 100.0),
    "theta": THETA_GRID,
    "L": (10, 100, 1000),
    "d": (3, 10, 50, 100),
}
