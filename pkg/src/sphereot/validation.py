"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import logging
import numbers

import numpy as np

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-9


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts ``None``, an int, a ``SeedSequence`` or an existing Generator
    (returned unchanged, so callers share its state on purpose).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ConfigError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_sphere_array(X, *, name="X", d=None, normalize=False, warn_tol=1e-6,
                       reject_tol=1e-3, min_dim=2):
    """Validate an ``(n, d)`` array of points on the unit sphere.

    Parameters
    ----------
    X : array-like of shape (n, d)
    d : int, optional
        Required ambient dimension.
    normalize : bool
        If True, rows are L2-normalised; a warning is logged when a norm
        deviates by more than ``warn_tol`` and a :class:`ConfigError` is
        raised above ``reject_tol``. If False, rows must already be unit
        norm within ``reject_tol``.

    Returns
    -------
    X : ndarray of shape (n, d), float64, C-contiguous
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ConfigError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] < 1:
        raise ConfigError(f"{name} must contain at least one point")
    if X.shape[1] < min_dim:
        raise ConfigError(f"{name} must have dimension >= {min_dim}, got {X.shape[1]}")
    if d is not None and X.shape[1] != d:
        raise ConfigError(f"{name} has dimension {X.shape[1]}, expected {d}")
    if not np.all(np.isfinite(X)):
        raise ConfigError(f"{name} contains non-finite values")
    norms = np.linalg.norm(X, axis=1)
    dev = np.max(np.abs(norms - 1.0))
    if dev > reject_tol:
        raise ConfigError(f"{name} rows are not unit vectors (max |norm-1| = {dev:.3g})")
    if normalize:
        if dev > warn_tol:
            logger.warning("%s: renormalising rows (max |norm-1| = %.3g)", name, dev)
        X = X / norms[:, None]
    return np.ascontiguousarray(X)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_choice(value, name, choices):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
