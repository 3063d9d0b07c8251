"""Uniform sampling of 2-frames on the Stiefel manifold V_{d,2}."""

from dataclasses import dataclass

import numpy as np

from .exceptions import GramSchmidtBreakdown
from .validation import check_positive_int, check_random_state

BREAKDOWN_TOL = 1e-12
MAX_RETRIES = 8


@dataclass(frozen=True)
class FrameBatch:
    """``L`` frames stacked as an array of shape ``(L, d, 2)``."""

    frames: np.ndarray
    seed: object = None

    @property
    def L(self):
        return self.frames.shape[0]

    @property
    def d(self):
        return self.frames.shape[1]

    def as_matrix(self):
        """Frames laid out as a ``(d, 2L)`` matrix: columns 2l, 2l+1 are frame l."""
        return self.frames.transpose(1, 0, 2).reshape(self.d, 2 * self.L)


def _mgs(Z):
    """Modified Gram-Schmidt on a stack of (d, 2) matrices.

    Returns the orthonormal factor (R has a positive diagonal by construction)
    and a mask of matrices whose column norms fell below the breakdown tol.
    """
    z1 = Z[:, :, 0]
    n1 = np.linalg.norm(z1, axis=1)
    bad = n1 < BREAKDOWN_TOL
    q1 = z1 / np.where(bad, 1.0, n1)[:, None]
    z2 = Z[:, :, 1].copy()
    # two passes keep |q1.q2| at machine precision
    for _ in range(2):
        z2 -= np.sum(q1 * z2, axis=1)[:, None] * q1
    n2 = np.linalg.norm(z2, axis=1)
    bad |= n2 < BREAKDOWN_TOL
    q2 = z2 / np.where(n2 < BREAKDOWN_TOL, 1.0, n2)[:, None]
    return np.stack([q1, q2], axis=2), bad


def sample_frames(d, L, rng=None):
    """Draw ``L`` i.i.d. frames from the uniform law on V_{d,2}.

    Each frame is the Q factor (positive-diagonal convention) of a ``d x 2``
    matrix of standard normals. The same seed gives bit-identical frames.

    Raises
    ------
    GramSchmidtBreakdown
        If a matrix is still rank deficient after 8 redraws.
    """
    d = check_positive_int(d, "d", 2)
    L = check_positive_int(L, "L", 1)
    seed = rng if not isinstance(rng, np.random.Generator) else None
    rng = check_random_state(rng)
    Z = rng.standard_normal((L, d, 2))
    Q, bad = _mgs(Z)
    for _ in range(MAX_RETRIES):
        if not np.any(bad):
            break
        idx = np.flatnonzero(bad)
        Qi, bi = _mgs(rng.standard_normal((idx.size, d, 2)))
        Q[idx] = Qi
        bad[idx] = bi
    else:
        if np.any(bad):
            raise GramSchmidtBreakdown(
                f"{int(bad.sum())} frame(s) still degenerate after {MAX_RETRIES} retries")
    return FrameBatch(Q, seed)


def sample_directions(d, L, rng=None):
    """Uniform directions on S^{d-1} for Euclidean slicing, shape (L, d)."""
    rng = check_random_state(rng)
    z = rng.standard_normal((L, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)
