"""Particle flows on the sphere driven by sliced distances, plus evaluation metrics.

A flow moves particles ``x_i`` to reduce a sliced distance to a target
sample. Each step takes the envelope gradient from :mod:`sphereot.sliced`,
applies a plain gradient (``pgd``) or Adam update in ambient coordinates and
renormalises every particle. :func:`gla_step` is the geodesic Langevin
update used to sample from an unnormalised density on the sphere.
"""

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import (ConfigError, NonFinitePotential, NonFiniteUpdate, SizeMismatch,
                         TooLarge)
from .sliced import SlicedConfig, sliced_gradient
from .sphere import (icosahedron_mixture, mixture_log_density, sample_uniform_sphere,
                     sample_vmf)
from .stiefel import sample_directions, sample_frames
from .validation import check_choice, check_positive_int, check_sphere_array
from .weighting import EnergySpec

logger = logging.getLogger(__name__)

MAX_ASSIGNMENT = 4096

# seed-stream tags: SeedSequence([seed, tag, step])
_INIT, _FRAMES, _BATCH, _EVAL = 0, 1, 2, 3


# --------------------------------------------------------------------------
# metrics

def exact_sphere_w2(X, Y):
    """Exact W_2 between two equal-size empirical measures with geodesic cost.

    Solves the assignment problem on ``arccos(<x_i, y_j>)**2`` and returns
    the square root of the mean matched cost.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] != Y.shape[0]:
        raise SizeMismatch(f"exact W2 needs equal counts, got {X.shape[0]} and {Y.shape[0]}")
    if X.shape[0] > MAX_ASSIGNMENT:
        raise TooLarge(f"exact W2 is limited to n <= {MAX_ASSIGNMENT}")
    C = np.arccos(np.clip(X @ Y.T, -1.0, 1.0)) ** 2
    rows, cols = linear_sum_assignment(C)
    return float(np.sqrt(C[rows, cols].mean()))


def nll(particles, mixture):
    """Summed negative log-likelihood ``-sum_i log p(x_i)`` under ``mixture``."""
    return float(-np.sum(mixture_log_density(mixture, particles)))


def icosahedron_target(n_per_component=200, kappa=50.0, rng=None):
    """Equal-count sample of the 12-component icosahedron vMF mixture."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    mix = icosahedron_mixture(kappa)
    parts = [sample_vmf(c, n_per_component, rng) for c in mix.components]
    return np.concatenate(parts, axis=0)


# --------------------------------------------------------------------------
# configuration and state

@dataclass(frozen=True)
class FlowConfig:
    """Settings of a particle flow.

    Parameters
    ----------
    method : {"sw", "ssw", "dssw"}
    distance : SlicedConfig
        ``distance.seed`` is the master seed of the whole run.
    optimizer : {"adam", "pgd"}
    lr : float
        Step size ``gamma``; 0 leaves particles unchanged.
    betas : (float, float)
        Adam moment decay rates.
    steps : int
    batch_size : int or None
        Target points drawn per step; None uses the whole target set.
    eval_every : int
    n_particles : int
    eval_subsample : int or None
        Particles used for log W2 (a fixed random subset); None uses all.
    fixed_frames : bool
        Reuse the step-0 slices at every step instead of redrawing them.
    """

    method: str = "dssw"
    distance: SlicedConfig = field(default_factory=SlicedConfig)
    optimizer: str = "adam"
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    steps: int = 500
    batch_size: int = None
    eval_every: int = 50
    n_particles: int = 2400
    eval_subsample: int = None
    fixed_frames: bool = False

    def __post_init__(self):
        check_choice(self.method, "method", ("sw", "ssw", "dssw"))
        check_choice(self.optimizer, "optimizer", ("adam", "pgd"))
        check_positive_int(self.steps, "steps", 0)
        check_positive_int(self.eval_every, "eval_every", 1)
        check_positive_int(self.n_particles, "n_particles", 1)
        if self.batch_size is not None:
            check_positive_int(self.batch_size, "batch_size", 1)
        if self.eval_subsample is not None:
            check_positive_int(self.eval_subsample, "eval_subsample", 1)
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ConfigError("lr must be finite and >= 0")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @property
    def seed(self):
        return self.distance.seed


PRESETS = {
    "mini": dict(optimizer="adam", lr=1e-3, steps=500, batch_size=200, n_particles=2400,
                 eval_every=50, eval_subsample=500, L=1000),
    "full": dict(optimizer="adam", lr=1e-2, steps=500, batch_size=None, n_particles=2400,
                 eval_every=50, eval_subsample=500, L=1000),
}


def preset_config(name, method="dssw", kind="exp", p=2, seed=0, **overrides):
    """Flow configuration of a named experiment preset (``mini`` or ``full``)."""
    check_choice(name, "preset", tuple(PRESETS))
    opts = dict(PRESETS[name])
    opts.update(overrides)
    L = opts.pop("L")
    dist = SlicedConfig(p=p, L=L, energy=EnergySpec(kind=kind), seed=seed)
    return FlowConfig(method=method, distance=dist, **opts)


@dataclass
class FlowState:
    """Particles, step counter and Adam moments of a running flow."""

    particles: np.ndarray
    step: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros_like(self.particles)
        if self.v is None:
            self.v = np.zeros_like(self.particles)

    def copy(self):
        return FlowState(self.particles.copy(), self.step, self.m.copy(), self.v.copy())


@dataclass
class FlowResult:
    state: FlowState
    trace: list
    trajectory: list = field(default_factory=list)

    def metrics_ndjson(self, timing=True):
        rows = []
        for r in self.trace:
            r = dict(r)
            if not timing:
                r["wallclock"] = None
            rows.append(json.dumps(r))
        return "\n".join(rows) + "\n"

    def trajectory_csv(self):
        if not self.trajectory:
            return ""
        d = self.trajectory[0][1].shape[1]
        lines = ["step,particle_id," + ",".join(f"x{j}" for j in range(d))]
        for step, P in self.trajectory:
            for i, x in enumerate(P):
                lines.append(f"{step},{i}," + ",".join(repr(float(v)) for v in x))
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# dynamics

def _slices(cfg, d, step):
    k = 0 if cfg.fixed_frames else step
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _FRAMES, k]))
    if cfg.method == "sw":
        return sample_directions(d, cfg.distance.L, rng)
    return sample_frames(d, cfg.distance.L, rng)


def flow_step(state, target_batch, cfg, frames=None):
    """Advance the flow by one step against ``target_batch``.

    The envelope gradient of the configured distance is fed to the
    optimiser in ambient coordinates, then every particle is renormalised.

    Raises
    ------
    NonFiniteUpdate
        If the gradient or the updated particles are not finite.
    """
    Y = check_sphere_array(target_batch, name="target_batch")
    X = state.particles
    if frames is None:
        frames = _slices(cfg, X.shape[1], state.step)
    g = sliced_gradient(X, Y, cfg.distance, cfg.method, frames=frames)
    if not np.all(np.isfinite(g)):
        raise NonFiniteUpdate(f"non-finite gradient at step {state.step}")
    new = state.copy()
    new.step = state.step + 1
    if cfg.optimizer == "pgd":
        upd = g
    else:
        b1, b2 = cfg.betas
        new.m = b1 * state.m + (1.0 - b1) * g
        new.v = b2 * state.v + (1.0 - b2) * g * g
        mhat = new.m / (1.0 - b1 ** new.step)
        vhat = new.v / (1.0 - b2 ** new.step)
        upd = mhat / (np.sqrt(vhat) + cfg.eps)
    if cfg.lr == 0.0:
        return new
    Xn = X - cfg.lr * upd
    Xn /= np.linalg.norm(Xn, axis=1, keepdims=True)
    if not np.all(np.isfinite(Xn)):
        raise NonFiniteUpdate(f"non-finite particles after step {state.step}")
    new.particles = Xn
    return new


def _draw_target(target, n, rng):
    if callable(target):
        return check_sphere_array(target(n, rng), name="target sample")
    if n >= target.shape[0]:
        return target
    return target[rng.choice(target.shape[0], size=n, replace=False)]


def run_flow(initial, target, cfg, mixture=None, eval_sampler=None, record_trajectory=False):
    """Run ``cfg.steps`` flow steps from ``initial`` towards ``target``.

    Parameters
    ----------
    initial : array of shape (n, d), or None
        Starting particles; None draws ``cfg.n_particles`` uniform points.
    target : array of shape (N, d) or callable ``(n, rng) -> array``
        Fixed target sample (mini-batches are subsets without replacement)
        or a sampler.
    mixture : VmfMixture, optional
        Target density for the NLL metric (d = 3).
    eval_sampler : callable ``(n, rng) -> array``, optional
        Fresh target draws for log W2; defaults to ``mixture.sample`` or to
        subsets of ``target``.
    record_trajectory : bool
        Keep a copy of the particles at every evaluation step.

    Returns
    -------
    FlowResult
        Metric rows ``{step, nll, log_w2, wallclock}`` are recorded at step
        0, every ``eval_every`` steps and at the final step.
    """
    master = cfg.seed
    if initial is None:
        d = target.shape[1] if not callable(target) else 3
        initial = sample_uniform_sphere(
            d, cfg.n_particles, np.random.default_rng(np.random.SeedSequence([master, _INIT])))
    X0 = check_sphere_array(initial, name="initial", normalize=True)
    if not callable(target):
        target = check_sphere_array(target, name="target", d=X0.shape[1])
    if eval_sampler is None:
        if mixture is not None:
            eval_sampler = mixture.sample
        else:
            eval_sampler = lambda n, rng: _draw_target(target, n, rng)  # noqa: E731

    n = X0.shape[0]
    eval_rng = np.random.default_rng(np.random.SeedSequence([master, _EVAL]))
    eval_idx = (np.sort(eval_rng.choice(n, cfg.eval_subsample, replace=False))
                if cfg.eval_subsample is not None and cfg.eval_subsample < n else np.arange(n))

    state = FlowState(X0.copy())
    trace, trajectory = [], []
    start = time.perf_counter()

    def evaluate(st):
        P = st.particles[eval_idx]
        rng = np.random.default_rng(np.random.SeedSequence([master, _EVAL, st.step]))
        ref = eval_sampler(P.shape[0], rng)
        w2 = exact_sphere_w2(P, ref)
        row = {
            "step": st.step,
            "nll": nll(st.particles, mixture) if mixture is not None else None,
            "log_w2": float(np.log(w2)) if w2 > 0 else float("-inf"),
            "wallclock": time.perf_counter() - start,
        }
        trace.append(row)
        if record_trajectory:
            trajectory.append((st.step, st.particles.copy()))
        logger.debug("flow step %d: %s", st.step, row)

    evaluate(state)
    for k in range(cfg.steps):
        rng = np.random.default_rng(np.random.SeedSequence([master, _BATCH, k]))
        batch = _draw_target(target, cfg.batch_size or (
            target.shape[0] if not callable(target) else n), rng)
        state = flow_step(state, batch, cfg)
        if state.step % cfg.eval_every == 0 or state.step == cfg.steps:
            evaluate(state)
    return FlowResult(state, trace, trajectory)


def gla_step(particles, grad_potential, gamma, rng):
    """One geodesic Langevin step.

    ``x+ = normalize(x - gamma * (g - <g, x> x) + sqrt(2 gamma) Z)`` with
    ``g = grad V(x)`` and ``Z`` standard normal in the ambient space.

    Parameters
    ----------
    particles : array of shape (n, d)
    grad_potential : array of shape (n, d) or callable ``x -> grad V(x)``
    gamma : float > 0
    rng : numpy Generator
    """
    if not gamma > 0:
        raise ConfigError("gamma must be > 0")
    X = np.asarray(particles, dtype=np.float64)
    g = grad_potential(X) if callable(grad_potential) else np.asarray(grad_potential, float)
    if not np.all(np.isfinite(g)):
        raise NonFinitePotential("potential gradient is not finite")
    drift = g - np.sum(g * X, axis=1, keepdims=True) * X
    Xn = X - gamma * drift + np.sqrt(2.0 * gamma) * rng.standard_normal(X.shape)
    return Xn / np.linalg.norm(Xn, axis=1, keepdims=True)


def run_gla(initial, grad_potential, gamma, steps, rng):
    """Iterate :func:`gla_step` and return the final particles."""
    X = np.asarray(initial, dtype=np.float64)
    for _ in range(int(steps)):
        X = gla_step(X, grad_potential, gamma, rng)
    return X


def vmf_potential_grad(comp):
    """Gradient of ``V = -log p`` for a single vMF component: ``-kappa * mu``."""
    kmu = comp.kappa * comp.mean

    def grad(X):
        return np.broadcast_to(-kmu, X.shape)

    return grad


__all__ = [
    "FlowConfig", "FlowState", "FlowResult", "PRESETS", "preset_config", "flow_step",
    "run_flow", "gla_step", "run_gla", "vmf_potential_grad", "exact_sphere_w2", "nll",
    "icosahedron_target", "replace",
]
