"""Exact Wasserstein distances between uniform empirical measures on the circle.

Coordinates live in ``[0, 1)`` (a full turn is 1, so the largest geodesic
distance is 1/2). Quantile functions are lifted to the real line,
``Q(q + 1) = Q(q) + 1``, and

    W_p^p(mu, nu) = min_alpha  int_0^1 |Q_mu(s) - Q_nu(s - alpha)|^p ds.

For uniform atom masses the objective is convex and piecewise linear in
``alpha`` with kinks at ``k/n - j/m``, so its one-sided slopes are available
in closed form and bisection on the slope sign is exact up to ``tol``.

All ``batch_*`` routines operate row-wise on ``(B, n)`` / ``(B, m)`` arrays so
that the ``L`` projection directions of a sliced estimator are solved in one
vectorised pass.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyMeasure, NonConvergence, SizeMismatch, TooLarge

MAX_BISECTION_STEPS = 200


@dataclass(frozen=True)
class CircularEmpirical:
    """Uniform empirical measure on the circle; atoms sorted in ``[0, 1)``."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=np.float64).ravel()
        if a.size == 0:
            raise EmptyMeasure("a circular measure needs at least one atom")
        a = np.mod(a, 1.0)
        a[a >= 1.0] = 0.0
        object.__setattr__(self, "atoms", np.sort(a))

    @property
    def n(self):
        return self.atoms.size


def _atoms(m):
    if isinstance(m, CircularEmpirical):
        return m.atoms
    return CircularEmpirical(m).atoms


def _cost(d, p):
    if p == 2:
        return d * d
    ad = np.abs(d)
    return ad if p == 1 else ad**p


def _dcost(d, p):
    if p == 2:
        return 2.0 * d
    if p == 1:
        return np.sign(d)
    return p * np.abs(d) ** (p - 1) * np.sign(d)


def _lifted(vals, k):
    """Lifted quantile value ``vals[k mod n] + floor(k / n)`` for integer ``k``."""
    B, n = vals.shape
    q, r = np.divmod(k, n)
    r += (np.arange(B) * n)[:, None]
    return vals.ravel()[r] + q


# --------------------------------------------------------------------------
# p = 1: level median

def batch_level_median(X, Y):
    """Row-wise W_1 via the weighted level median of F_mu - F_nu.

    ``X`` (B, n) and ``Y`` (B, m) hold circle coordinates; rows need not be
    sorted. Returns an array of shape (B,).
    """
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    B, n = X.shape
    m = Y.shape[1]
    z = np.concatenate([X, Y], axis=1)
    inc = np.concatenate([np.full(n, 1.0 / n), np.full(m, -1.0 / m)])
    order = np.argsort(z, axis=1)
    zs = np.take_along_axis(z, order, axis=1)
    D = np.cumsum(inc[order], axis=1)
    D[:, -1] = 0.0  # exact total mass balance
    lengths = np.empty_like(zs)
    lengths[:, :-1] = np.diff(zs, axis=1)
    lengths[:, -1] = 1.0 - zs[:, -1] + zs[:, 0]
    # weighted median of D with segment lengths as weights
    o = np.argsort(D, axis=1)
    Ds = np.take_along_axis(D, o, axis=1)
    cw = np.cumsum(np.take_along_axis(lengths, o, axis=1), axis=1)
    idx = np.argmax(cw >= 0.5 * cw[:, -1:], axis=1)
    alpha = Ds[np.arange(B), idx]
    return np.sum(lengths * np.abs(D - alpha[:, None]), axis=1)


def circ_w1_level_median(mu, nu):
    """W_1 between two circular empirical measures (level-median formula)."""
    x = _atoms(mu)
    y = _atoms(nu)
    return float(batch_level_median(x[None], y[None])[0])


# --------------------------------------------------------------------------
# general p: bisection on the shift

class _LiftTable:
    """Sorted atoms over three periods, for divmod-free lifted lookups.

    Entry ``k`` (``-n <= k <= 2n``) of row ``b`` is ``xs[b, k mod n] + floor(k / n)``.
    """

    def __init__(self, xs):
        B, n = xs.shape
        self.n = n
        self.stride = 3 * n + 1
        self.flat = np.concatenate([xs - 1.0, xs, xs + 1.0, xs[:, :1] + 2.0], axis=1).ravel()

    def lookup(self, rows, k):
        return self.flat[k + (self.n + rows * self.stride)[:, None]]


def _slopes(table, ys, rows, alpha, p):
    """Left and right derivatives of the shift objective at ``alpha``.

    ``rows`` selects the rows of the lift table, ``ys`` holds the matching
    sorted nu atoms. Moving ``alpha`` right slides every jump of
    ``Q_nu(s - alpha)`` (located at ``s_j = alpha + j/m``) to the right, so
    the region using the pre-jump value grows:
    slope = sum_j c(Q_mu(s_j), y_{j-1}) - c(Q_mu(s_j), y_j).
    """
    n = table.n
    m = ys.shape[1]
    j = np.arange(1, m + 1)
    ylift = np.concatenate([ys, ys[:, :1] + 1.0], axis=1)
    y_before = ylift[:, :-1]
    y_after = ylift[:, 1:]
    sn = (alpha[:, None] + j[None, :] / m) * n
    fl = np.floor(sn)
    k_right = fl.astype(np.int64)
    q_right = table.lookup(rows, k_right)
    right = np.sum(_cost(q_right - y_before, p) - _cost(q_right - y_after, p), axis=1)
    on_kink = sn == fl
    if not np.any(on_kink):
        return right, right
    # a jump of nu meets a jump of mu: the left limit uses the previous mu atom
    q_left = np.where(on_kink, table.lookup(rows, k_right - 1), q_right)
    left = np.sum(_cost(q_left - y_before, p) - _cost(q_left - y_after, p), axis=1)
    return left, right


def _pieces(xs, ys, alpha):
    """Common refinement of the two quantile functions at shift ``alpha``.

    Returns piece lengths, the mu-atom index, the nu-atom index and the
    signed lifted displacement ``Q_mu - Q_nu`` on every piece, each (B, n+m).
    """
    B, n = xs.shape
    m = ys.shape[1]
    a = np.broadcast_to(np.arange(n) / n, (B, n))
    b = np.mod(alpha[:, None] + np.arange(m)[None, :] / m, 1.0)
    b[b >= 1.0] = 0.0
    edges = np.sort(np.concatenate([a, b], axis=1), axis=1)
    right = np.concatenate([edges[:, 1:], np.ones((B, 1))], axis=1)
    lengths = right - edges
    mid = 0.5 * (edges + right)
    rows = np.arange(B)
    i = np.minimum(np.floor(mid * n).astype(np.int64), n - 1)
    k = np.floor((mid - alpha[:, None]) * m).astype(np.int64)
    qx = xs.ravel()[i + (rows * n)[:, None]]
    if k.min() >= -m and k.max() <= 2 * m:
        qy = _LiftTable(ys).lookup(rows, k)
    else:
        qy = _lifted(ys, k)
    return lengths, i, np.mod(k, m), qx - qy


def _objective(xs, ys, alpha, p):
    lengths, _, _, diff = _pieces(xs, ys, alpha)
    return np.sum(lengths * _cost(diff, p), axis=1)


def _evaluate(xs, ys, alpha, p, with_grad):
    """Objective at ``alpha`` and, optionally, envelope gradients (sorted order)."""
    B, n = xs.shape
    m = ys.shape[1]
    lengths, i, k, diff = _pieces(xs, ys, alpha)
    values = np.sum(lengths * _cost(diff, p), axis=1)
    if not with_grad:
        return values, None, None
    g = lengths * _dcost(diff, p)
    rows = np.arange(B)[:, None]
    gx = np.bincount((rows * n + i).ravel(), weights=g.ravel(),
                     minlength=B * n).reshape(B, n)
    gy = -np.bincount((rows * m + k).ravel(), weights=g.ravel(),
                      minlength=B * m).reshape(B, m)
    return values, gx, gy


def _nearest_kink(alpha, n, m):
    j = np.arange(m)[None, :] / m
    k = np.round((alpha[:, None] + j) * n)
    cand = k / n - j
    best = np.argmin(np.abs(cand - alpha[:, None]), axis=1)
    return cand[np.arange(alpha.size), best]


def _golden_section(xs, ys, p, lo, hi, tol):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _objective(xs, ys, c, p)
    fd = _objective(xs, ys, d, p)
    for _ in range(MAX_BISECTION_STEPS):
        if np.all(b - a < tol):
            break
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - invphi * (b - a)
        d_new = a + invphi * (b - a)
        c, d = c_new, d_new
        fc = _objective(xs, ys, c, p)
        fd = _objective(xs, ys, d, p)
    return 0.5 * (a + b)


def batch_binary_search(X, Y, p=2, tol=1e-8, with_grad=False, presorted=False):
    """Row-wise W_p^p on the circle by bisection on the optimal shift.

    Parameters
    ----------
    X, Y : arrays of shape (B, n) and (B, m)
        Circle coordinates in [0, 1).
    p : {1, 2}
    tol : float
        Width of the final shift bracket.
    with_grad : bool
        Also return envelope gradients of each row's value with respect to
        the coordinates in ``X`` and ``Y`` (original, unsorted order),
        holding the optimal shift and matching fixed.

    Returns
    -------
    values : (B,) array
    alpha : (B,) array of optimal shifts
    grad_x, grad_y : (B, n), (B, m) arrays, only if ``with_grad``
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] == 0 or Y.shape[1] == 0:
        raise EmptyMeasure("both measures need at least one atom")
    if X.shape[0] != Y.shape[0]:
        raise SizeMismatch("X and Y must have the same number of rows")
    B, n = X.shape
    m = Y.shape[1]
    if presorted:
        xs, ys, ox, oy = X, Y, None, None
    else:
        ox = np.argsort(X, axis=1)
        oy = np.argsort(Y, axis=1)
        xs = np.take_along_axis(X, ox, axis=1)
        ys = np.take_along_axis(Y, oy, axis=1)

    # a bracket narrower than the kink spacing already pins the minimiser
    tol = max(tol, 0.2 / (n * m))
    lo = np.full(B, -1.0)
    hi = np.full(B, 1.0)
    table = _LiftTable(xs)
    all_rows = np.arange(B)
    _, slope_lo = _slopes(table, ys, all_rows, lo, p)
    slope_hi, _ = _slopes(table, ys, all_rows, hi, p)
    alpha = np.zeros(B)
    bracketed = (slope_lo < 0) & (slope_hi > 0)
    active = bracketed.copy()

    steps = 0
    while np.any(active):
        if steps >= MAX_BISECTION_STEPS:
            raise NonConvergence(
                f"shift bisection did not reach tol={tol:g} in {MAX_BISECTION_STEPS} steps")
        steps += 1
        idx = np.flatnonzero(active)
        mid = 0.5 * (lo[idx] + hi[idx])
        sl, sr = _slopes(table, ys if idx.size == B else ys[idx], idx, mid, p)
        at_min = (sl <= 0) & (sr >= 0)
        go_right = (sr < 0) & ~at_min
        go_left = ~at_min & ~go_right
        lo[idx[go_right]] = mid[go_right]
        hi[idx[go_left]] = mid[go_left]
        alpha[idx] = mid
        lo[idx[at_min]] = mid[at_min]
        hi[idx[at_min]] = mid[at_min]
        active = bracketed & (hi - lo >= tol)
        if steps > 1 and np.any(active):
            stalled = active & ((0.5 * (lo + hi) == lo) | (0.5 * (lo + hi) == hi))
            if np.any(stalled):
                raise NonConvergence(f"tol={tol:g} is below the float resolution of the shift")
    alpha[bracketed] = 0.5 * (lo[bracketed] + hi[bracketed])

    if np.any(~bracketed):
        # the finite-difference slope does not change sign on [-1, 1]
        idx = np.flatnonzero(~bracketed)
        alpha[idx] = _golden_section(xs[idx], ys[idx], p, lo[idx], hi[idx], tol)

    # The objective is piecewise linear in the shift with kinks on the grid
    # k/n - j/m, so a minimiser sits on a kink. Distinct kinks are at least
    # 1/(n m) apart; once the bracket is far narrower than that, the kink
    # nearest to it is the minimiser. Otherwise both candidates are compared.
    kink = _nearest_kink(alpha, n, m)
    values, gx_sorted, gy_sorted = _evaluate(xs, ys, kink, p, with_grad)
    check = np.flatnonzero(~(bracketed & (tol < 0.25 / (n * m))))
    if check.size:
        cand, cgx, cgy = _evaluate(xs[check], ys[check], alpha[check], p, with_grad)
        better = cand < values[check]
        kink[check[better]] = alpha[check[better]]
        values[check[better]] = cand[better]
        if with_grad:
            gx_sorted[check[better]] = cgx[better]
            gy_sorted[check[better]] = cgy[better]
    alpha = kink
    values = np.maximum(values, 0.0)
    if not with_grad:
        return values, alpha
    if presorted:
        return values, alpha, gx_sorted, gy_sorted
    grad_x = np.empty_like(gx_sorted)
    grad_y = np.empty_like(gy_sorted)
    np.put_along_axis(grad_x, ox, gx_sorted, axis=1)
    np.put_along_axis(grad_y, oy, gy_sorted, axis=1)
    return values, alpha, grad_x, grad_y


def circ_w_binary_search(mu, nu, p=2, tol=1e-8):
    """W_p^p between two circular empirical measures (p in {1, 2})."""
    x = _atoms(mu)
    y = _atoms(nu)
    values, _ = batch_binary_search(x[None], y[None], p=p, tol=tol, presorted=True)
    return float(values[0])


# --------------------------------------------------------------------------
# against the uniform measure

def batch_vs_uniform(X, with_grad=False):
    """Row-wise closed-form W_2^2 between empirical rows and Unif(S^1).

    With sorted atoms ``t_1 <= ... <= t_n``::

        W_2^2 = mean(t^2) - mean(t)^2 + sum_i (n + 1 - 2i) t_i / n^2 + 1/12
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    B, n = X.shape
    if n == 0:
        raise EmptyMeasure("measure needs at least one atom")
    order = np.argsort(X, axis=1)
    t = np.take_along_axis(X, order, axis=1)
    coef = (n + 1.0 - 2.0 * np.arange(1, n + 1)) / n**2
    mean = t.mean(axis=1)
    values = np.mean(t * t, axis=1) - mean**2 + t @ coef + 1.0 / 12.0
    values = np.maximum(values, 0.0)
    if not with_grad:
        return values
    g_sorted = 2.0 * t / n - 2.0 * mean[:, None] / n + coef[None, :]
    grad = np.empty_like(g_sorted)
    np.put_along_axis(grad, order, g_sorted, axis=1)
    return values, grad


def circ_w2_vs_uniform(mu):
    """W_2^2 between a circular empirical measure and the uniform measure."""
    return float(batch_vs_uniform(_atoms(mu)[None])[0])


# --------------------------------------------------------------------------
# oracle

def brute_force_circ_w(mu, nu, p=2, grid_size=100_000, max_atoms=12):
    """Brute-force W_p^p for equal-size measures (test oracle).

    For each of ``grid_size`` equally spaced cut points the circle is
    unrolled at the cut, both atom sets are sorted, and matched in order
    with the straight-line cost. Every such matching is feasible, so the
    result is an upper bound; it is exact once the grid hits a cut that no
    optimal transport path crosses.
    """
    x = _atoms(mu)
    y = _atoms(nu)
    if x.size != y.size:
        raise SizeMismatch("brute force oracle needs equal atom counts")
    if x.size > max_atoms:
        raise TooLarge(f"brute force oracle limited to {max_atoms} atoms")
    if grid_size < 1000:
        raise ValueError("grid_size must be >= 1000")
    best = np.inf
    chunk = 20_000
    for start in range(0, grid_size, chunk):
        cuts = np.arange(start, min(start + chunk, grid_size)) / grid_size
        a = np.sort(np.mod(x[None, :] - cuts[:, None], 1.0), axis=1)
        b = np.sort(np.mod(y[None, :] - cuts[:, None], 1.0), axis=1)
        best = min(best, float(np.min(np.mean(_cost(a - b, p), axis=1))))
    return best


# --------------------------------------------------------------------------
# the real line (Euclidean slicing)

def batch_line_wasserstein(X, Y, p=2, with_grad=False):
    """Row-wise W_p^p between empirical measures on the real line."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    B, n = X.shape
    m = Y.shape[1]
    ox = np.argsort(X, axis=1)
    oy = np.argsort(Y, axis=1)
    xs = np.take_along_axis(X, ox, axis=1)
    ys = np.take_along_axis(Y, oy, axis=1)
    if n == m:
        diff = xs - ys
        values = np.mean(_cost(diff, p), axis=1)
        if not with_grad:
            return values
        gx_sorted = _dcost(diff, p) / n
        gy_sorted = -gx_sorted
    else:
        edges = np.unique(np.concatenate([np.arange(n) / n, np.arange(m) / m]))
        right = np.append(edges[1:], 1.0)
        lengths = right - edges
        mid = 0.5 * (edges + right)
        i = np.minimum(np.floor(mid * n).astype(np.int64), n - 1)
        k = np.minimum(np.floor(mid * m).astype(np.int64), m - 1)
        diff = xs[:, i] - ys[:, k]
        values = _cost(diff, p) @ lengths
        if not with_grad:
            return values
        g = _dcost(diff, p) * lengths
        gx_sorted = np.zeros((B, n))
        gy_sorted = np.zeros((B, m))
        np.add.at(gx_sorted, (slice(None), i), g)
        np.add.at(gy_sorted, (slice(None), k), -g)
    grad_x = np.empty_like(gx_sorted)
    grad_y = np.empty_like(gy_sorted)
    np.put_along_axis(grad_x, ox, gx_sorted, axis=1)
    np.put_along_axis(grad_y, oy, gy_sorted, axis=1)
    return values, grad_x, grad_y
