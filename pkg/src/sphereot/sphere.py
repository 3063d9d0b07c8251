"""Geometry and distributions on the unit sphere S^{d-1}.

Points are stored as rows of float64 arrays. A "frame" is a ``(d, 2)``
matrix with orthonormal columns spanning the plane of a great circle.
Circle coordinates are normalised angles in ``[0, 1)`` (one full turn = 1).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import (ConfigError, DegenerateProjection, NonOrthonormalAxis,
                         UnsupportedDimension)
from .validation import check_positive_int, check_random_state

PROJ_EPS = 1e-12
GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0


def unit_vector(coords):
    """Normalise ``coords`` to a unit vector of dimension >= 2."""
    x = np.asarray(coords, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ConfigError("a unit vector needs a 1-D array with at least 2 entries")
    nrm = np.linalg.norm(x)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ConfigError("cannot normalise a zero or non-finite vector")
    return x / nrm


@dataclass(frozen=True)
class VmfComponent:
    """von Mises-Fisher component; ``kappa == 0`` is the uniform law."""

    mean: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "mean", unit_vector(self.mean))
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ConfigError(f"kappa must be finite and >= 0, got {self.kappa}")
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True)
class VmfMixture:
    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.asarray(self.weights, dtype=np.float64)
        if len(comps) == 0 or w.shape != (len(comps),):
            raise ConfigError("mixture needs one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError("mixture weights must be non-negative and sum to 1")
        if len({c.dim for c in comps}) != 1:
            raise ConfigError("mixture components must share a dimension")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    @classmethod
    def equal(cls, components):
        components = tuple(components)
        return cls(components, np.full(len(components), 1.0 / len(components)))

    @property
    def dim(self):
        return self.components[0].dim

    def log_density(self, X):
        return mixture_log_density(self, X)

    def sample(self, n, rng=None):
        return sample_mixture(self, n, rng)


# --------------------------------------------------------------------------
# projections onto great circles

def geodesic_project(x, frame, eps=PROJ_EPS):
    """Project points onto the great circle spanned by ``frame``.

    Parameters
    ----------
    x : array of shape (d,) or (n, d)
    frame : array of shape (d, 2) with orthonormal columns
    eps : float
        Points with ``||U^T x|| <= eps`` raise :class:`DegenerateProjection`.

    Returns
    -------
    array of shape (2,) or (n, 2), unit norm rows
    """
    x = np.asarray(x, dtype=np.float64)
    z = x @ np.asarray(frame, dtype=np.float64)
    nrm = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(nrm <= eps):
        raise DegenerateProjection(
            "point is orthogonal to the projection plane (||U^T x|| <= %g)" % eps)
    return z / nrm


def circle_coordinate(p):
    """Map points of S^1 (last axis of size 2) to normalised angles in [0, 1).

    ``t = (pi + atan2(-p2, -p1)) / (2 pi)``, with ``t == 1`` wrapped to 0.
    Inputs need not be normalised: the angle is scale invariant.
    """
    p = np.asarray(p, dtype=np.float64)
    t = (np.pi + np.arctan2(-p[..., 1], -p[..., 0])) / (2.0 * np.pi)
    return np.where(t >= 1.0, t - 1.0, t)


def circle_point(t):
    """Inverse of :func:`circle_coordinate`."""
    ang = 2.0 * np.pi * np.asarray(t, dtype=np.float64)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


# --------------------------------------------------------------------------
# sampling

def sample_uniform_sphere(d, n, rng=None):
    """Draw ``n`` points uniformly on S^{d-1} by normalising Gaussians."""
    d = check_positive_int(d, "d", 2)
    n = check_positive_int(n, "n", 1)
    rng = check_random_state(rng)
    z = rng.standard_normal((n, d))
    nrm = np.linalg.norm(z, axis=1, keepdims=True)
    # a zero Gaussian draw has probability zero, but keep the invariant anyway
    bad = nrm[:, 0] == 0.0
    while np.any(bad):
        z[bad] = rng.standard_normal((int(bad.sum()), d))
        nrm = np.linalg.norm(z, axis=1, keepdims=True)
        bad = nrm[:, 0] == 0.0
    return z / nrm


def _wood_cosines(kappa, d, n, rng):
    """Sample w = <mu, x> for vMF(mu, kappa) on S^{d-1} (Wood, 1994)."""
    dm1 = d - 1.0
    b = dm1 / (np.sqrt(4.0 * kappa**2 + dm1**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dm1 * np.log1p(-x0**2)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        z = rng.beta(dm1 / 2.0, dm1 / 2.0, size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=m)
        ok = kappa * w + dm1 * np.log1p(-x0 * w) - c >= np.log(u)
        acc = w[ok][: n - filled]
        out[filled: filled + acc.size] = acc
        filled += acc.size
    return out


def sample_vmf(comp, n, rng=None):
    """Sample ``n`` points from a von Mises-Fisher component.

    Rejection sampling on the cosine to the mean direction, a uniform
    tangent direction, then a Householder reflection taking e_1 to the mean.
    """
    n = check_positive_int(n, "n", 1)
    rng = check_random_state(rng)
    mu = comp.mean
    d = mu.shape[0]
    if comp.kappa == 0.0:
        return sample_uniform_sphere(d, n, rng)

    w = _wood_cosines(comp.kappa, d, n, rng)
    v = rng.standard_normal((n, d - 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    X = np.empty((n, d))
    X[:, 0] = w
    X[:, 1:] = np.sqrt(np.clip(1.0 - w**2, 0.0, None))[:, None] * v

    e1 = np.zeros(d)
    e1[0] = 1.0
    u = e1 - mu
    un = np.linalg.norm(u)
    if un > 1e-12:
        u /= un
        X = X - 2.0 * np.outer(X @ u, u)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X


def sample_mixture(mixture, n, rng=None):
    rng = check_random_state(rng)
    counts = rng.multinomial(n, mixture.weights)
    parts = [sample_vmf(c, k, rng) for c, k in zip(mixture.components, counts) if k > 0]
    X = np.concatenate(parts, axis=0)
    return X[rng.permutation(n)]


# --------------------------------------------------------------------------
# densities (S^2 only)

def _log_vmf_normaliser_s2(kappa):
    if kappa == 0.0:
        return -np.log(4.0 * np.pi)
    if kappa < 1.0:
        return np.log(kappa / np.sinh(kappa)) - np.log(4.0 * np.pi)
    # log sinh k = k + log(1 - exp(-2k)) - log 2
    log_sinh = kappa + np.log1p(-np.exp(-2.0 * kappa)) - np.log(2.0)
    return np.log(kappa) - np.log(4.0 * np.pi) - log_sinh


def vmf_log_density(comp, x):
    """Log density of vMF(mean, kappa) on S^2 w.r.t. surface measure."""
    if comp.dim != 3:
        raise UnsupportedDimension("vMF densities are implemented for d = 3 only")
    x = np.asarray(x, dtype=np.float64)
    return _log_vmf_normaliser_s2(comp.kappa) + comp.kappa * (x @ comp.mean)


def mixture_log_density(mixture, x):
    """``log sum_i w_i p_i(x)`` evaluated with a max-shift."""
    x = np.asarray(x, dtype=np.float64)
    comps = np.stack([vmf_log_density(c, x) for c in mixture.components], axis=-1)
    with np.errstate(divide="ignore"):
        logw = np.log(mixture.weights)
    return logsumexp(comps + logw, axis=-1)


def mixture_log_density_grad(mixture, x):
    """Ambient gradient of :func:`mixture_log_density` for ``x`` of shape (n, 3)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    comps = np.stack([vmf_log_density(c, x) for c in mixture.components], axis=-1)
    with np.errstate(divide="ignore"):
        logr = comps + np.log(mixture.weights)
    resp = np.exp(logr - logsumexp(logr, axis=-1, keepdims=True))
    kmu = np.stack([c.kappa * c.mean for c in mixture.components])
    return resp @ kmu


# --------------------------------------------------------------------------
# fixed configurations and rotations

def icosahedron_means():
    """Return the 12 unit vertices of a regular icosahedron, shape (12, 3)."""
    phi = GOLDEN_RATIO
    pts = []
    for s1 in (1.0, -1.0):
        for s2 in (phi, -phi):
            pts.append((0.0, s1, s2))
            pts.append((s1, s2, 0.0))
            pts.append((s2, 0.0, s1))
    V = np.array(pts)
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def icosahedron_mixture(kappa=50.0):
    return VmfMixture.equal(VmfComponent(m, kappa) for m in icosahedron_means())


def rotate_along_great_circle(x, axis_pair, theta, tol=1e-9):
    """Rotate ``x`` by ``theta`` in the plane spanned by two orthonormal vectors.

    Components orthogonal to the plane are left untouched; the rotation
    takes ``a`` towards ``b`` for positive ``theta``.
    """
    a, b = (np.asarray(v, dtype=np.float64) for v in axis_pair)
    gram = np.array([[a @ a, a @ b], [a @ b, b @ b]])
    if np.max(np.abs(gram - np.eye(2))) > tol:
        raise NonOrthonormalAxis("rotation axes must be orthonormal")
    x = np.asarray(x, dtype=np.float64)
    xa = x @ a
    xb = x @ b
    c, s = np.cos(theta), np.sin(theta)
    xa_new = c * xa - s * xb
    xb_new = s * xa + c * xb
    out = (x + np.multiply.outer(xa_new - xa, a) + np.multiply.outer(xb_new - xb, b))
    return out / np.linalg.norm(out, axis=-1, keepdims=True)
