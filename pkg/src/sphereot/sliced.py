"""Sliced estimators on the sphere: SW, SSW and the discriminative DSSW.

All three average one-dimensional transport costs over random slices. SW
projects linearly onto directions of R^d; SSW and DSSW project geodesically
onto random great circles (one per Stiefel frame) and solve circular OT
there. DSSW reweights the per-circle costs with the projected energy
function from :mod:`sphereot.weighting`.
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import circular
from .exceptions import ConfigError, DegenerateProjection
from .sphere import PROJ_EPS, circle_coordinate
from .stiefel import FrameBatch, _mgs, sample_directions, sample_frames
from .validation import check_choice, check_positive_int, check_sphere_array
from .weighting import EnergySpec, ProjectionPair, WeightVector, compute_weights

logger = logging.getLogger(__name__)

SOLVERS = ("auto", "level_median", "binary_search", "vs_uniform")
PREFACTORS = ("literal", "normalized")
JITTER = 1e-10


@dataclass(frozen=True)
class SlicedConfig:
    """Configuration shared by the sliced estimators.

    Parameters
    ----------
    p : {1, 2}
    L : int
        Number of slices (great circles or line directions).
    solver : {"auto", "level_median", "binary_search", "vs_uniform"}
        ``auto`` picks the level median for ``p=1`` and bisection for ``p=2``.
        ``vs_uniform`` compares against the uniform law (pass ``Y=None``).
    energy : EnergySpec
        Direction weighting for DSSW; ignored by SW and SSW.
    seed : int
        Master seed for frames and network initialisation.
    prefactor : {"literal", "normalized"}
        ``literal`` reports ``(1/L) sum_l w_l W_l``; since the weights sum to
        one this shrinks with L. ``normalized`` reports ``sum_l w_l W_l``,
        which is on the scale of SSW.
    threads : int
        Workers for the per-direction solves; results do not depend on it.
    """

    p: int = 2
    L: int = 100
    solver: str = "auto"
    energy: EnergySpec = field(default_factory=EnergySpec)
    seed: int = 0
    tol: float = 1e-8
    prefactor: str = "literal"
    threads: int = 1

    def __post_init__(self):
        check_choice(self.p, "p", (1, 2))
        check_positive_int(self.L, "L", 1)
        check_choice(self.solver, "solver", SOLVERS)
        check_choice(self.prefactor, "prefactor", PREFACTORS)
        check_positive_int(self.threads, "threads", 1)
        check_positive_int(self.seed, "seed", 0)
        if not isinstance(self.energy, EnergySpec):
            raise ConfigError("energy must be an EnergySpec")
        if self.solver == "level_median" and self.p != 1:
            raise ConfigError("the level-median solver is only valid for p = 1")
        if self.solver == "vs_uniform" and self.p != 2:
            raise ConfigError("the closed form against the uniform law is for p = 2")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")

    @property
    def resolved_solver(self):
        if self.solver != "auto":
            return self.solver
        return "level_median" if self.p == 1 else "binary_search"

    def seeds(self):
        """Independent seed streams for (frames, network initialisation)."""
        frames, net = np.random.SeedSequence(self.seed).spawn(2)
        return frames, net


@dataclass
class DistanceReport:
    """Outcome of one sliced evaluation.

    ``value == scale * sum(weights * distances)``, where ``scale`` is
    ``1/L`` in the literal convention and 1 in the normalised one.
    """

    value: float
    distances: np.ndarray
    weights: np.ndarray
    scale: float
    frames_seed: int
    method: str
    p: int
    wallclock: float = 0.0
    uniform_fallback: bool = False
    loss_trace: np.ndarray = None

    @property
    def L(self):
        return self.distances.shape[0]

    @property
    def per_direction(self):
        """``(L, 2)`` array of (W_p^p, weight) pairs."""
        return np.stack([self.distances, self.weights], axis=1)

    def recompute(self):
        return float(self.scale * np.dot(self.weights, self.distances))

    def to_dict(self, timing=True):
        out = {
            "method": self.method,
            "p": self.p,
            "L": self.L,
            "value": self.value,
            "scale": self.scale,
            "frames_seed": self.frames_seed,
            "uniform_fallback": self.uniform_fallback,
            "per_direction": self.per_direction.tolist(),
            "wallclock": self.wallclock if timing else None,
        }
        if self.loss_trace is not None:
            out["loss_trace"] = np.asarray(self.loss_trace).tolist()
        return out

    def to_json(self, timing=True, **kwargs):
        return json.dumps(self.to_dict(timing), **kwargs)


# --------------------------------------------------------------------------
# projections

def project_circle(X, frames):
    """Circle coordinates of every point on every frame, shape (L, n).

    Returns ``None`` if some point is within ``PROJ_EPS`` of a frame's
    orthogonal complement.
    """
    Z = (X @ frames.as_matrix()).reshape(X.shape[0], frames.L, 2)
    if np.any(np.einsum("nlc,nlc->nl", Z, Z) <= PROJ_EPS**2):
        return None
    return circle_coordinate(Z).T


def _jittered(frames, seed_seq):
    rng = np.random.default_rng(seed_seq)
    Q, _ = _mgs(frames.frames + JITTER * rng.standard_normal(frames.frames.shape))
    return FrameBatch(Q, frames.seed)


def _draw_frames(d, cfg):
    frame_ss, _ = cfg.seeds()
    return sample_frames(d, cfg.L, np.random.default_rng(frame_ss))


def _project_pair(X, Y, frames, seed):
    """Project both samples, retrying once with jittered frames."""
    for attempt in range(2):
        TX = project_circle(X, frames)
        TY = None if Y is None else project_circle(Y, frames)
        if TX is not None and (Y is None or TY is not None):
            return TX, TY, frames
        if attempt == 0:
            logger.debug("degenerate projection, jittering frames once")
            frames = _jittered(frames, np.random.SeedSequence([seed, 1]))
    raise DegenerateProjection("a point is orthogonal to a projection plane after one jitter retry")


def _chunks(L, threads):
    bounds = np.linspace(0, L, min(threads, L) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def directional_distances(TX, TY, p=2, solver="binary_search", tol=1e-8, with_grad=False,
                          threads=1):
    """Circular ``W_p^p`` for every row of ``TX`` against ``TY``.

    ``TY=None`` selects the closed form against the uniform law (p = 2).
    With ``threads > 1`` rows are split into contiguous blocks whose results
    are written into preallocated slots, so the output does not depend on
    the worker count.
    """
    L, n = TX.shape
    values = np.empty(L)
    gx = np.empty((L, n)) if with_grad else None
    gy = np.empty(TY.shape) if (with_grad and TY is not None) else None

    def work(sl):
        if TY is None:
            res = circular.batch_vs_uniform(TX[sl], with_grad=with_grad)
        elif solver == "level_median" and not with_grad:
            res = circular.batch_level_median(TX[sl], TY[sl])
        else:
            res = circular.batch_binary_search(TX[sl], TY[sl], p=p, tol=tol,
                                               with_grad=with_grad)
        if not with_grad:
            values[sl] = res if TY is None or solver == "level_median" else res[0]
            return
        if TY is None:
            values[sl], gx[sl] = res
        else:
            values[sl], _, gx[sl], gy[sl] = res

    slices = _chunks(L, threads)
    if len(slices) == 1:
        work(slices[0])
    else:
        with ThreadPoolExecutor(max_workers=len(slices)) as pool:
            list(pool.map(work, slices))
    if with_grad:
        return values, gx, gy
    return values


def _uniform_grid(n):
    return (np.arange(n) + 0.5) / n


def _prepare(X, Y, cfg):
    X = check_sphere_array(X, name="X")
    if cfg.resolved_solver == "vs_uniform":
        if Y is not None:
            raise ConfigError("solver='vs_uniform' compares against the uniform law; pass Y=None")
    else:
        if Y is None:
            raise ConfigError("Y is required unless solver='vs_uniform'")
        Y = check_sphere_array(Y, name="Y", d=X.shape[1])
    return X, Y


def _slice(X, Y, cfg, frames=None):
    X, Y = _prepare(X, Y, cfg)
    if frames is None:
        frames = _draw_frames(X.shape[1], cfg)
    elif frames.d != X.shape[1]:
        raise ConfigError(f"frames live in dimension {frames.d}, samples in {X.shape[1]}")
    TX, TY, frames = _project_pair(X, Y, frames, cfg.seed)
    return X, Y, frames, TX, TY


# --------------------------------------------------------------------------
# estimators

def sw_hat(X, Y, cfg=None, directions=None):
    """Sliced-Wasserstein ``(1/L) sum_l W_p^p(<X, theta_l>, <Y, theta_l>)``.

    Directions ``theta_l`` are uniform on S^{d-1} and the 1-D problems are
    solved on the real line by sorted matching.
    """
    cfg = cfg or SlicedConfig()
    X = check_sphere_array(X, name="X")
    Y = check_sphere_array(Y, name="Y", d=X.shape[1])
    if directions is None:
        frame_ss, _ = cfg.seeds()
        directions = sample_directions(X.shape[1], cfg.L, np.random.default_rng(frame_ss))
    theta = np.asarray(directions, dtype=np.float64)
    values = circular.batch_line_wasserstein(theta @ X.T, theta @ Y.T, p=cfg.p)
    return float(np.mean(values))


def ssw_hat(X, Y=None, cfg=None, frames=None):
    """Spherical sliced-Wasserstein with uniform averaging over great circles.

    The report stores unit weights with ``scale = 1/L`` so that
    ``value = mean_l W_l``. ``frames`` (a FrameBatch) overrides the frames
    drawn from ``cfg.seed``.
    """
    cfg = cfg or SlicedConfig()
    start = time.perf_counter()
    X, Y, frames, TX, TY = _slice(X, Y, cfg, frames)
    W = directional_distances(TX, TY, cfg.p, cfg.resolved_solver, cfg.tol,
                              threads=cfg.threads)
    weights = np.ones(frames.L)
    scale = 1.0 / frames.L
    return DistanceReport(float(scale * np.dot(weights, W)), W, weights, scale, cfg.seed,
                          "ssw", cfg.p, time.perf_counter() - start)


def _weights_for(TX, TY, W, cfg):
    _, net_ss = cfg.seeds()
    pair = None
    if cfg.energy.parametric:
        pair = ProjectionPair(TX, TY if TY is not None
                              else np.tile(_uniform_grid(TX.shape[1]), (TX.shape[0], 1)))
    return compute_weights(cfg.energy, pair, W, rng=np.random.default_rng(net_ss))


def dssw_hat(X, Y=None, cfg=None, frames=None):
    """Discriminative spherical sliced-Wasserstein estimate.

    ``value = scale * sum_l w_l W_l`` with ``w`` from the projected energy
    function and ``scale = 1/L`` (literal) or 1 (normalised). Two calls with
    the same inputs and configuration are bit-identical.

    Parameters
    ----------
    X : array of shape (n, d)
    Y : array of shape (m, d), or None with ``solver="vs_uniform"``
    cfg : SlicedConfig
    frames : FrameBatch, optional
        Overrides the frames drawn from ``cfg.seed``.

    Returns
    -------
    DistanceReport
    """
    cfg = cfg or SlicedConfig()
    start = time.perf_counter()
    X, Y, frames, TX, TY = _slice(X, Y, cfg, frames)
    W = directional_distances(TX, TY, cfg.p, cfg.resolved_solver, cfg.tol,
                              threads=cfg.threads)
    wv, _, trace = _weights_for(TX, TY, W, cfg)
    if wv.uniform_fallback:
        logger.info("all directional distances are zero; using uniform weights")
    scale = 1.0 / frames.L if cfg.prefactor == "literal" else 1.0
    return DistanceReport(float(scale * np.dot(wv.w, W)), W, wv.w, scale, cfg.seed,
                          "dssw", cfg.p, time.perf_counter() - start,
                          wv.uniform_fallback, trace)


@dataclass
class GradientInfo:
    value: float
    weights: np.ndarray
    nondifferentiable: bool


def _circle_chain(X, frames, gt, coef):
    """Pull per-direction coordinate gradients ``gt`` (L, n) back to R^d."""
    M = frames.as_matrix()
    Z = (X @ M).reshape(X.shape[0], frames.L, 2)
    r2 = np.einsum("nlc,nlc->nl", Z, Z)
    s = coef[None, :] * gt.T / (2.0 * np.pi * r2)
    V = np.empty_like(Z)
    V[..., 0] = -Z[..., 1] * s
    V[..., 1] = Z[..., 0] * s
    G = V.reshape(X.shape[0], -1) @ M.T
    return G - np.sum(G * X, axis=1, keepdims=True) * X


def _ties(TX, TY):
    T = TX if TY is None else np.concatenate([TX, TY], axis=1)
    Ts = np.sort(T, axis=1)
    return bool(np.any(np.diff(Ts, axis=1) == 0.0) or np.any(T == 0.0))


def sliced_gradient(X, Y, cfg=None, method="dssw", frames=None, weights=None,
                    return_info=False):
    """Particle gradients of a sliced distance with respect to ``X``.

    The optimal circular matching, optimal shift and direction weights are
    held fixed (envelope gradient). Each row is projected onto the tangent
    space at the corresponding point.

    Parameters
    ----------
    method : {"sw", "ssw", "dssw"}
    frames : FrameBatch or (L, d) directions for ``sw``, optional
        Frozen slices; drawn from ``cfg.seed`` when omitted.
    weights : array of shape (L,), optional
        Frozen DSSW weights; computed from the energy function when omitted.
    return_info : bool
        Also return a :class:`GradientInfo`; its ``nondifferentiable`` flag
        is set when an atom sits on the coordinate cut or coordinates tie,
        in which case a one-sided gradient is returned.
    """
    cfg = cfg or SlicedConfig()
    check_choice(method, "method", ("sw", "ssw", "dssw"))
    X, Y = _prepare(X, Y, cfg) if method != "sw" else (
        check_sphere_array(X, name="X"), check_sphere_array(Y, name="Y"))
    L = cfg.L
    if method == "sw":
        if frames is None:
            frame_ss, _ = cfg.seeds()
            frames = sample_directions(X.shape[1], L, np.random.default_rng(frame_ss))
        theta = np.asarray(frames)
        W, gx, _ = circular.batch_line_wasserstein(theta @ X.T, theta @ Y.T, p=cfg.p,
                                                   with_grad=True)
        G = (gx.T @ theta) / theta.shape[0]
        G = G - np.sum(G * X, axis=1, keepdims=True) * X
        info = GradientInfo(float(np.mean(W)), np.ones(theta.shape[0]), False)
        return (G, info) if return_info else G

    if frames is None:
        frames = _draw_frames(X.shape[1], cfg)
    TX, TY, frames = _project_pair(X, Y, frames, cfg.seed)
    L = frames.L
    W, gx, _ = directional_distances(TX, TY, cfg.p, "binary_search", cfg.tol,
                                     with_grad=True, threads=cfg.threads)
    if method == "ssw":
        w, scale = np.ones(L), 1.0 / L
    else:
        w = weights if weights is not None else _weights_for(TX, TY, W, cfg)[0].w
        w = np.asarray(w, dtype=np.float64)
        scale = 1.0 / L if cfg.prefactor == "literal" else 1.0
    G = _circle_chain(X, frames, gx, scale * w)
    if not return_info:
        return G
    return G, GradientInfo(float(scale * np.dot(w, W)), w, _ties(TX, TY))


def dssw_gradient(X, Y=None, cfg=None, frames=None, weights=None, return_info=False):
    """Envelope gradient of :func:`dssw_hat` with respect to the points ``X``."""
    return sliced_gradient(X, Y, cfg, "dssw", frames, weights, return_info)


def frozen_value(X, Y, frames, weights, cfg):
    """``scale * sum_l w_l W_l`` on given frames and weights (no retraining)."""
    TX = project_circle(np.asarray(X, dtype=np.float64), frames)
    TY = None if Y is None else project_circle(np.asarray(Y, dtype=np.float64), frames)
    if TX is None or (Y is not None and TY is None):
        raise DegenerateProjection("a point is orthogonal to a projection plane")
    W = directional_distances(TX, TY, cfg.p, cfg.resolved_solver, cfg.tol)
    scale = 1.0 / frames.L if cfg.prefactor == "literal" else 1.0
    return float(scale * np.dot(weights, W))


def config_to_dict(cfg):
    return asdict(cfg)


def config_from_dict(obj):
    obj = dict(obj)
    energy = obj.pop("energy", None) or {}
    unknown = set(obj) - set(SlicedConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown SlicedConfig keys: {sorted(unknown)}")
    unknown = set(energy) - set(EnergySpec.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown EnergySpec keys: {sorted(unknown)}")
    return SlicedConfig(energy=EnergySpec(**energy), **obj)


__all__ = [
    "SlicedConfig", "DistanceReport", "GradientInfo", "WeightVector", "sw_hat", "ssw_hat",
    "dssw_hat", "dssw_gradient", "sliced_gradient", "frozen_value", "project_circle",
    "directional_distances", "config_to_dict", "config_from_dict",
]
