"""scikit-learn style wrappers around the functional API."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .flows import FlowConfig, run_flow
from .sliced import SlicedConfig, dssw_hat, ssw_hat, sw_hat
from .validation import check_choice, check_sphere_array
from .weighting import EnergySpec


class SphericalSlicedDistance(BaseEstimator):
    """Sliced distance between two samples on the sphere.

    Parameters
    ----------
    method : {"dssw", "ssw", "sw"}
    kind : str
        Energy function for ``dssw``.
    p : {1, 2}
    n_projections : int
    epochs, lr, maximize
        Training settings of parametric energy functions.
    prefactor : {"literal", "normalized"}
    random_state : int

    Attributes
    ----------
    value_ : float
    report_ : DistanceReport or None
        Per-direction data (``None`` for ``sw``).

    Examples
    --------
    >>> from sphereot import SphericalSlicedDistance, sample_uniform_sphere
    >>> X = sample_uniform_sphere(3, 50, 0)
    >>> est = SphericalSlicedDistance(n_projections=20).fit(X, X)
    >>> est.value_
    0.0
    """

    def __init__(self, method="dssw", kind="exp", p=2, n_projections=100, epochs=10, lr=0.1,
                 maximize=False, prefactor="literal", random_state=0):
        self.method = method
        self.kind = kind
        self.p = p
        self.n_projections = n_projections
        self.epochs = epochs
        self.lr = lr
        self.maximize = maximize
        self.prefactor = prefactor
        self.random_state = random_state

    def _config(self):
        return SlicedConfig(p=self.p, L=self.n_projections, seed=self.random_state,
                            prefactor=self.prefactor,
                            energy=EnergySpec(kind=self.kind, epochs=self.epochs, lr=self.lr,
                                              maximize=self.maximize))

    def fit(self, X, Y):
        check_choice(self.method, "method", ("dssw", "ssw", "sw"))
        cfg = self._config()
        X = check_sphere_array(X, name="X")
        Y = check_sphere_array(Y, name="Y", d=X.shape[1])
        if self.method == "sw":
            self.report_ = None
            self.value_ = sw_hat(X, Y, cfg)
        else:
            fn = dssw_hat if self.method == "dssw" else ssw_hat
            self.report_ = fn(X, Y, cfg)
            self.value_ = self.report_.value
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, Y):
        """Negative distance, so that larger is better."""
        return -self.fit(X, Y).value_


class SphericalGradientFlow(BaseEstimator):
    """Transport particles towards a target sample by a sliced-distance flow.

    ``fit(Y)`` runs the flow against the target sample ``Y`` and stores the
    final particles in ``particles_``; ``transform`` returns them.

    Parameters
    ----------
    method, kind, p, n_projections
        Distance settings, as in :class:`SphericalSlicedDistance`.
    optimizer : {"adam", "pgd"}
    lr : float
    steps : int
    batch_size : int or None
    n_particles : int
    eval_every : int
    random_state : int
    """

    def __init__(self, method="dssw", kind="exp", p=2, n_projections=200, optimizer="adam",
                 lr=1e-2, steps=100, batch_size=None, n_particles=500, eval_every=10,
                 random_state=0):
        self.method = method
        self.kind = kind
        self.p = p
        self.n_projections = n_projections
        self.optimizer = optimizer
        self.lr = lr
        self.steps = steps
        self.batch_size = batch_size
        self.n_particles = n_particles
        self.eval_every = eval_every
        self.random_state = random_state

    def fit(self, Y, initial=None, mixture=None):
        Y = check_sphere_array(Y, name="Y")
        cfg = FlowConfig(
            method=self.method,
            distance=SlicedConfig(p=self.p, L=self.n_projections, seed=self.random_state,
                                  energy=EnergySpec(kind=self.kind)),
            optimizer=self.optimizer, lr=self.lr, steps=self.steps,
            batch_size=self.batch_size, eval_every=self.eval_every,
            n_particles=self.n_particles,
            eval_subsample=min(self.n_particles, Y.shape[0], 1000))
        result = run_flow(initial, Y, cfg, mixture=mixture)
        self.particles_ = result.state.particles
        self.trace_ = result.trace
        self.n_features_in_ = Y.shape[1]
        return self

    def transform(self, X=None):
        check_is_fitted(self, "particles_")
        return np.array(self.particles_, copy=True)
