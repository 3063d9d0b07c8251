"""Wall-clock benchmarks of the sliced estimators.

Every grid point gets its own deterministic inputs (samples and slices are
drawn before timing starts), one untimed warm-up call per method and then
``repeats`` timed calls. Methods of one grid point are timed in an
interleaved round-robin so slow drifts of the machine hit all of them alike.
"""

import csv
import hashlib
import io
import logging
import time
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .sliced import SlicedConfig, dssw_hat, ssw_hat, sw_hat
from .sphere import VmfComponent, sample_uniform_sphere, sample_vmf
from .stiefel import sample_directions, sample_frames
from .validation import check_positive_int
from .weighting import ENERGY_KINDS, EnergySpec

logger = logging.getLogger(__name__)

CSV_FIELDS = ("method", "p", "L", "n", "d", "seed", "median_s", "p10_s", "p90_s")
METHODS = ("sw", "ssw") + tuple(f"dssw-{k}" for k in ENERGY_KINDS)
DEFAULT_METHODS = ("ssw", "dssw-exp", "dssw-identity", "dssw-poly", "sw")


@dataclass
class BenchPoint:
    method: str
    p: int
    L: int
    n: int
    d: int
    seed: int
    median_s: float
    p10_s: float
    p90_s: float
    mean_s: float
    repeats: int
    input_hash: str

    def row(self):
        return {k: getattr(self, k) for k in CSV_FIELDS}


def bench_inputs(n, d, L, seed):
    """Samples ``X ~ Unif``, ``Y ~ vMF(e_1, 10)`` and the slices for one point."""
    ss = np.random.SeedSequence([seed, n, d, L])
    rx, ry, rf, rd = (np.random.default_rng(s) for s in ss.spawn(4))
    X = sample_uniform_sphere(d, n, rx)
    Y = sample_vmf(VmfComponent(np.eye(d)[0], 10.0), n, ry)
    frames = sample_frames(d, L, rf)
    directions = sample_directions(d, L, rd)
    return X, Y, frames, directions


def input_hash(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def _runner(method, X, Y, frames, directions, p, seed, epochs, threads):
    if method not in METHODS:
        raise ConfigError(f"unknown bench method {method!r}; choose from {METHODS}")
    L = frames.L
    if method == "sw":
        cfg = SlicedConfig(p=p, L=L, seed=seed)
        return lambda: sw_hat(X, Y, cfg, directions=directions)
    if method == "ssw":
        cfg = SlicedConfig(p=p, L=L, seed=seed, threads=threads)
        return lambda: ssw_hat(X, Y, cfg, frames=frames)
    kind = method.split("-", 1)[1]
    cfg = SlicedConfig(p=p, L=L, seed=seed, threads=threads,
                       energy=EnergySpec(kind=kind, epochs=epochs))
    return lambda: dssw_hat(X, Y, cfg, frames=frames)


def run_bench(grid, repeats=5, seed=0, p=2, epochs=50, threads=1, methods=DEFAULT_METHODS):
    """Time every method on every ``(n, L, d)`` grid point.

    Parameters
    ----------
    grid : iterable of (n, L, d) tuples
    repeats : int
        Timed repetitions per method (at least 5).
    epochs : int
        Training epochs for parametric DSSW variants.
    methods : sequence of str
        Any of ``sw``, ``ssw`` and ``dssw-<kind>``.

    Returns
    -------
    list of BenchPoint
    """
    repeats = check_positive_int(repeats, "repeats", 5)
    points = []
    for n, L, d in grid:
        X, Y, frames, directions = bench_inputs(n, d, L, seed)
        digest = input_hash(X, Y, frames.frames, directions)
        logger.info("bench point n=%d L=%d d=%d inputs=%s", n, L, d, digest)
        runners = {m: _runner(m, X, Y, frames, directions, p, seed, epochs, threads)
                   for m in methods}
        for fn in runners.values():
            fn()  # warm-up
        times = {m: np.empty(repeats) for m in methods}
        for r in range(repeats):
            for m, fn in runners.items():
                t0 = time.perf_counter()
                fn()
                times[m][r] = time.perf_counter() - t0
        for m in methods:
            t = times[m]
            pt = BenchPoint(m, p, L, n, d, seed, float(np.median(t)),
                            float(np.percentile(t, 10)), float(np.percentile(t, 90)),
                            float(np.mean(t)), repeats, digest)
            logger.info("%s: median %.4gs mean %.4gs", m, pt.median_s, pt.mean_s)
            points.append(pt)
    return points


def overhead_ratios(points, baseline="ssw"):
    """Median-time ratio of every method to ``baseline`` at each grid point."""
    base = {(p.n, p.L, p.d): p.median_s for p in points if p.method == baseline}
    return {(p.method, p.n, p.L, p.d): p.median_s / base[(p.n, p.L, p.d)]
            for p in points if (p.n, p.L, p.d) in base}


def to_csv(points):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for pt in points:
        writer.writerow(pt.row())
    return buf.getvalue()


DEFAULT_GRID = tuple((n, 200, 101) for n in (100, 500, 1000, 5000)) + tuple(
    (500, L, 101) for L in (50, 100, 400, 800))
