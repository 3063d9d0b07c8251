"""Projection-direction weights (the projected energy function).

Two families are provided:

* non-parametric: ``w_l = g(W_l) / sum_k g(W_k)`` with ``g`` one of
  ``exp``, ``identity`` (``x``) or ``poly`` (``x**2``);
* parametric: ``w = softmax(h_psi(A))`` where ``A`` is the ``(L, n + m)``
  matrix of circle coordinates of both samples on every direction and
  ``h_psi`` is a linear map, a linear map followed by a small
  dense-sigmoid-dense head, or a single scaled dot-product attention block.
  ``h_psi`` is fitted by gradient steps on ``sum_l w_l(psi) W_l``.
"""

import copy
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .exceptions import ConfigError, NonFiniteLoss, ShapeMismatch
from .validation import check_choice, check_random_state

NONPARAMETRIC_KINDS = ("exp", "identity", "poly")
PARAMETRIC_KINDS = ("linear", "nonlinear", "attention")
ENERGY_KINDS = NONPARAMETRIC_KINDS + PARAMETRIC_KINDS

CHECKPOINT_FORMAT = "sphereot-network"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EnergySpec:
    """Choice and hyper-parameters of the projected energy function.

    ``final_weights="network"`` evaluates the trained network for the final
    weights; ``"distance"`` reproduces the literal two-stage recipe where the
    final weights are ``softmax(W)`` regardless of the network.
    """

    kind: str = "exp"
    epochs: int = 10
    lr: float = 0.1
    maximize: bool = False
    init: str = "uniform"
    final_weights: str = "network"
    hidden: int = None
    key_dim: int = 640

    def __post_init__(self):
        check_choice(self.kind, "kind", ENERGY_KINDS)
        check_choice(self.init, "init", ("uniform", "zeros"))
        check_choice(self.final_weights, "final_weights", ("network", "distance"))
        if self.parametric:
            if self.epochs < 0:
                raise ConfigError("epochs must be >= 0")
            if not self.lr > 0:
                raise ConfigError("lr must be > 0")

    @property
    def parametric(self):
        return self.kind in PARAMETRIC_KINDS


@dataclass
class WeightVector:
    """Normalised direction weights; ``uniform_fallback`` marks an all-zero input."""

    w: np.ndarray
    uniform_fallback: bool = False

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.w, dtype=dtype)

    def __len__(self):
        return self.w.shape[0]


@dataclass
class ProjectionPair:
    """Circle coordinates of both samples: ``x`` is (L, n), ``y`` is (L, m)."""

    x: np.ndarray
    y: np.ndarray

    @property
    def L(self):
        return self.x.shape[0]

    @property
    def width(self):
        return self.x.shape[1] + self.y.shape[1]

    def concat(self, swapped=False):
        parts = (self.y, self.x) if swapped else (self.x, self.y)
        return np.concatenate(parts, axis=1)


def _softmax(s):
    z = s - np.max(s)
    e = np.exp(z)
    return e / e.sum()


# --------------------------------------------------------------------------
# non-parametric

def nonparametric_weights(distances, kind="exp"):
    """Normalise ``g(distances)`` into direction weights.

    ``exp`` is evaluated with a max-shift (a softmax). For ``identity`` and
    ``poly`` an all-zero input has no preferred direction; uniform weights
    are returned and ``uniform_fallback`` is set.
    """
    check_choice(kind, "kind", NONPARAMETRIC_KINDS)
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise ShapeMismatch("distances must be a non-empty 1-D array")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ConfigError("distances must be finite and non-negative")
    if kind == "exp":
        return WeightVector(_softmax(d))
    g = d if kind == "identity" else d * d
    total = g.sum()
    if total <= 0.0:
        return WeightVector(np.full(d.size, 1.0 / d.size), uniform_fallback=True)
    return WeightVector(g / total)


# --------------------------------------------------------------------------
# networks

@dataclass
class NetworkParams:
    """Parameters of a weighting network plus the shapes they were built for."""

    kind: str
    L: int
    width: int
    params: dict = field(default_factory=dict)
    hidden: int = None
    key_dim: int = None

    def copy(self):
        return copy.deepcopy(self)

    @property
    def n_params(self):
        return int(sum(v.size for v in self.params.values()))

    def to_dict(self):
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "L": self.L,
            "width": self.width,
            "hidden": self.hidden,
            "key_dim": self.key_dim,
            "params": {
                name: {"shape": list(v.shape), "data": v.ravel(order="C").tolist()}
                for name, v in self.params.items()
            },
        }

    @classmethod
    def from_dict(cls, obj):
        if obj.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError("not a sphereot network checkpoint")
        if obj.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {obj.get('version')!r}")
        params = {
            name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in obj["params"].items()
        }
        net = cls(obj["kind"], obj["L"], obj["width"], params,
                  obj.get("hidden"), obj.get("key_dim"))
        _check_params(net)
        return net

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _param_shapes(kind, L, width, hidden, key_dim):
    if kind == "linear":
        return {"w": (width,), "b": ()}
    if kind == "nonlinear":
        return {"w": (width,), "b": (), "W1": (L, hidden), "b1": (hidden,),
                "W2": (hidden, L), "b2": (L,)}
    if kind == "attention":
        return {"Wq": (L, key_dim), "bq": (key_dim,), "Wk": (L, key_dim),
                "bk": (key_dim,), "Wv": (L, L), "bv": (L,)}
    raise ConfigError(f"unknown network kind {kind!r}")


def _fan_in(kind, name, L, width, hidden):
    if name in ("w", "b"):
        return width
    if name in ("W1", "b1", "Wq", "bq", "Wk", "bk", "Wv", "bv"):
        return L
    return hidden  # W2, b2


def init_network(kind, L, width, rng=None, init="uniform", hidden=None, key_dim=640):
    """Create a network for ``L`` directions and ``width = n + m`` samples.

    ``init="uniform"`` draws every entry from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``;
    ``init="zeros"`` gives a network whose scores are identically zero.
    """
    check_choice(kind, "kind", PARAMETRIC_KINDS)
    hidden = L if hidden is None else int(hidden)
    rng = check_random_state(rng)
    params = {}
    for name, shape in _param_shapes(kind, L, width, hidden, key_dim).items():
        if init == "zeros":
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(_fan_in(kind, name, L, width, hidden))
            params[name] = rng.uniform(-bound, bound, size=shape)
    return NetworkParams(kind, L, width, params,
                         hidden if kind == "nonlinear" else None,
                         key_dim if kind == "attention" else None)


def _check_params(net):
    expected = _param_shapes(net.kind, net.L, net.width, net.hidden, net.key_dim)
    if set(expected) != set(net.params):
        raise ShapeMismatch(f"{net.kind} network expects parameters {sorted(expected)}")
    for name, shape in expected.items():
        if net.params[name].shape != tuple(shape):
            raise ShapeMismatch(f"parameter {name} has shape {net.params[name].shape}, "
                                f"expected {tuple(shape)}")
        if not np.all(np.isfinite(net.params[name])):
            raise ConfigError(f"parameter {name} is not finite")


def _forward(net, A, P):
    """Scores graph for one input matrix ``A`` (L, width); ``P`` maps names to Tensors."""
    if net.kind == "linear":
        return ad.matmul(A, P["w"]) + P["b"]
    if net.kind == "nonlinear":
        s0 = ad.matmul(A, P["w"]) + P["b"]
        h = ad.sigmoid(ad.matmul(s0, P["W1"]) + P["b1"])
        return ad.matmul(h, P["W2"]) + P["b2"]
    # attention: Q = A^T Wq + bq, K = A^T Wk + bk, V = A^T Wv + bv.
    # Q K^T = A^T (Wq Wk^T) A + A^T Wq bk 1^T + 1 bq^T Wk^T A + bq.bk; the
    # second and last terms are constant along each row and cancel in the
    # row-wise softmax, so only the rank-L product and a column term remain.
    # the 1/sqrt(key_dim) scale is applied to the small factors, not the logits
    At = A.T
    scale = 1.0 / np.sqrt(net.key_dim)
    G = ad.matmul(P["Wq"], ad.transpose(P["Wk"])) * scale
    col = ad.matmul(At, ad.matmul(P["Wk"], P["bq"]) * scale)
    logits = ad.matmul(At, ad.matmul(G, A)) + col
    attn = ad.softmax(logits, axis=1)
    V = ad.matmul(At, P["Wv"]) + P["bv"]
    return ad.matmul(ad.mean(attn, axis=0), V)


def _inputs(net, projections):
    if isinstance(projections, ProjectionPair):
        if projections.L != net.L or projections.width != net.width:
            raise ShapeMismatch(
                f"network built for (L={net.L}, width={net.width}), got "
                f"(L={projections.L}, width={projections.width})")
        if net.kind == "attention":
            # attention is invariant to permuting sample columns already
            return [projections.concat()]
        return [projections.concat(), projections.concat(swapped=True)]
    A = np.asarray(projections, dtype=np.float64)
    if A.ndim != 2 or A.shape != (net.L, net.width):
        raise ShapeMismatch(f"projections must have shape ({net.L}, {net.width}), got {A.shape}")
    return [A]


def _scores_graph(net, projections, P):
    inputs = _inputs(net, projections)
    out = _forward(net, inputs[0], P)
    if len(inputs) == 2:
        out = (out + _forward(net, inputs[1], P)) * 0.5
    return out


def _constants(net):
    return {k: ad.Tensor(v) for k, v in net.params.items()}


def network_forward(net, projections):
    """Per-direction scores of ``h_psi``.

    ``projections`` is either an ``(L, n + m)`` matrix (raw forward pass) or a
    :class:`ProjectionPair`, in which case linear and nonlinear scores are
    averaged over both concatenation orders so that swapping the two
    samples leaves the scores unchanged.
    """
    _check_params(net)
    out = _scores_graph(net, projections, _constants(net)).data
    if not np.all(np.isfinite(out)):
        raise ConfigError("network produced non-finite scores")
    return out


def parametric_weights(net, projections):
    """``softmax(network_forward(net, projections))`` as a WeightVector."""
    return WeightVector(_softmax(network_forward(net, projections)))


def loss_and_grad(net, projections, distances, maximize=False):
    """Training objective ``sum_l softmax(h_psi)_l W_l`` and its gradient."""
    P = {k: ad.Tensor(v, requires_grad=True) for k, v in net.params.items()}
    scores = _scores_graph(net, projections, P)
    w = ad.softmax(scores, axis=0)
    loss = ad.tsum(w * np.asarray(distances, dtype=np.float64))
    if maximize:
        loss = -loss
    if not np.isfinite(loss.data):
        return float(loss.data), None
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
             for k, t in P.items()}
    return float(loss.data), grads


def train_network(net, projections, distances, epochs, lr, maximize=False):
    """Run ``epochs`` full-batch gradient steps on a private copy of ``net``.

    The loss ``sum_l softmax(h_psi)_l W_l`` is descended (or ascended with
    ``maximize=True``). Returns the trained copy and the per-epoch loss
    trace (loss evaluated before each update).

    Raises
    ------
    NonFiniteLoss
        With the offending epoch index.
    """
    distances = np.asarray(distances, dtype=np.float64)
    if distances.shape != (net.L,):
        raise ShapeMismatch(f"expected {net.L} distances, got shape {distances.shape}")
    net = net.copy()
    trace = []
    for epoch in range(int(epochs)):
        loss, grads = loss_and_grad(net, projections, distances, maximize)
        if not np.isfinite(loss):
            raise NonFiniteLoss(epoch, loss)
        trace.append(loss)
        for name, g in grads.items():
            net.params[name] = net.params[name] - lr * g
    return net, np.asarray(trace)


def _loss_value(net, projections, distances, maximize):
    w = _softmax(_scores_graph(net, projections, _constants(net)).data)
    val = float(w @ distances)
    return -val if maximize else val


def grad_check(net, projections, distances, step=1e-5, maximize=False):
    """Largest relative error between reverse-mode and central-difference gradients.

    The error of each entry is ``|fd - ad| / max(|fd|, |ad|, 1e-6 * max|ad|)``;
    the floor keeps entries whose true gradient is zero from dividing by
    round-off.
    """
    distances = np.asarray(distances, dtype=np.float64)
    _, grads = loss_and_grad(net, projections, distances, maximize)
    scale = max(max(float(np.max(np.abs(g))) if g.size else 0.0 for g in grads.values()), 1e-300)
    probe = net.copy()
    worst = 0.0
    for name, g in grads.items():
        theta = probe.params[name]
        flat = theta.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = _loss_value(probe, projections, distances, maximize)
            flat[i] = orig - step
            down = _loss_value(probe, projections, distances, maximize)
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            a = g.reshape(-1)[i]
            err = abs(fd - a) / max(abs(fd), abs(a), 1e-6 * scale)
            worst = max(worst, err)
    return worst


def compute_weights(energy, projections, distances, rng=None, net=None):
    """Weights for one sliced evaluation according to an :class:`EnergySpec`.

    Returns ``(WeightVector, trained_net_or_None, loss_trace_or_None)``.
    """
    distances = np.asarray(distances, dtype=np.float64)
    if not energy.parametric:
        return nonparametric_weights(distances, energy.kind), None, None
    if net is None:
        net = init_network(energy.kind, projections.L, projections.width, rng,
                           init=energy.init, hidden=energy.hidden, key_dim=energy.key_dim)
    net, trace = train_network(net, projections, distances, energy.epochs, energy.lr,
                               energy.maximize)
    if energy.final_weights == "distance":
        return nonparametric_weights(distances, "exp"), net, trace
    return parametric_weights(net, projections), net, trace


class ProjectionWeighter(TransformerMixin, BaseEstimator):
    """Estimator wrapper around the projected energy function.

    ``fit(projections, distances)`` trains the network (parametric kinds) and
    ``transform(projections)`` returns direction weights. Non-parametric
    kinds need the distances at transform time, so ``transform`` ignores its
    input and reuses the distances seen in ``fit``.

    Parameters
    ----------
    kind : {"exp", "identity", "poly", "linear", "nonlinear", "attention"}
    epochs, lr, maximize, init, hidden, key_dim
        See :class:`EnergySpec`.
    random_state : int or None
        Seeds network initialisation.
    """

    def __init__(self, kind="linear", epochs=10, lr=0.1, maximize=False, init="uniform",
                 hidden=None, key_dim=640, random_state=None):
        self.kind = kind
        self.epochs = epochs
        self.lr = lr
        self.maximize = maximize
        self.init = init
        self.hidden = hidden
        self.key_dim = key_dim
        self.random_state = random_state

    def _spec(self):
        return EnergySpec(self.kind, self.epochs, self.lr, self.maximize, self.init,
                          "network", self.hidden, self.key_dim)

    def fit(self, projections, distances):
        spec = self._spec()
        self.distances_ = np.asarray(distances, dtype=np.float64)
        if spec.parametric:
            L, width = ((projections.L, projections.width)
                        if isinstance(projections, ProjectionPair)
                        else np.shape(projections))
            net = init_network(spec.kind, L, width, self.random_state, init=spec.init,
                               hidden=spec.hidden, key_dim=spec.key_dim)
            self.network_, self.loss_trace_ = train_network(
                net, projections, self.distances_, spec.epochs, spec.lr, spec.maximize)
        else:
            self.network_, self.loss_trace_ = None, np.empty(0)
        return self

    def transform(self, projections):
        check_is_fitted(self, "distances_")
        if self.network_ is None:
            return nonparametric_weights(self.distances_, self.kind).w
        return parametric_weights(self.network_, projections).w
