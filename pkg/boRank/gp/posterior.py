"""
Zero-mean Gaussian-process regression with an RBF kernel.

Posteriors are immutable: ``insert`` returns a new posterior whose Cholesky factor
extends the previous one by a block update, so any reader holds a consistent
snapshot and scratch copies (Kriging Believer) cost nothing.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from boRank.utils.errors import CholeskyBreakdownError, InvalidParameterError, IllConditionedWarning
from boRank.utils.utils import as_matrix, check_dimension, check_positive

logger = logging.getLogger(__name__)

# Rows of corpus points predicted per kernel block
PREDICT_CHUNK = 8192


class Provenance(str, Enum):
    INITIAL_QUERY = "initial-query"
    REFORMULATION = "reformulation"
    ORACLE = "oracle"
    HALLUCINATED = "hallucinated"  # Kriging Believer scratch observations only


@dataclass(frozen=True)
class KernelParams:
    """
    RBF kernel hyperparameters.

    Attributes
    ----------
    signal_variance : float
        sigma_s^2, must be > 0. Default 1
    length_scale : float
        l, must be > 0. Default 1
    noise_variance : float
        sigma_n^2, must be >= 0. Default 1
    jitter : float
        Floor on the diagonal noise term (matters when sigma_n^2 = 0), must be > 0. Default 1e-8
    """
    signal_variance: float = 1.0
    length_scale: float = 1.0
    noise_variance: float = 1.0
    jitter: float = 1e-8

    def __post_init__(self):
        check_positive("signal_variance", self.signal_variance)
        check_positive("length_scale", self.length_scale)
        check_positive("noise_variance", self.noise_variance, strict=False)
        check_positive("jitter", self.jitter)


@dataclass(frozen=True)
class Observation:
    location: np.ndarray = field(repr=False)
    value: float
    provenance: Provenance = Provenance.ORACLE
    doc_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        location = np.array(self.location, dtype=np.float64).ravel()
        location.setflags(write=False)
        object.__setattr__(self, "location", location)
        object.__setattr__(self, "value", float(self.value))

        if not np.all(np.isfinite(location)):
            raise InvalidParameterError("Observation location has non-finite entries")
        if not np.isfinite(self.value):
            raise InvalidParameterError(f"Observation value {self.value} is not finite")
        has_doc = self.provenance in (Provenance.ORACLE, Provenance.HALLUCINATED)
        if has_doc != (self.doc_id is not None):
            raise InvalidParameterError(f"doc_id must be given exactly for document observations "
                                        f"(provenance={self.provenance.value}, doc_id={self.doc_id})")
        if self.provenance is not Provenance.HALLUCINATED and self.value < 0:
            raise InvalidParameterError(f"Observation value {self.value} is negative")


def rbf(a, b, params=KernelParams()):
    """
    Squared-exponential kernel sigma_s^2 * exp(-|a - b|^2 / (2 l^2)).

    Examples
    --------
    >>> rbf([0, 0], [1, 1])  # squared distance 2, defaults
    0.36787944117144233
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    check_dimension(len(a), len(b))
    sq = float(np.sum((a - b) ** 2))
    return params.signal_variance * float(np.exp(-sq / (2 * params.length_scale ** 2)))


def effective_noise(params):
    """Diagonal added to K: sigma_n^2, floored at the jitter."""
    return max(params.noise_variance, params.jitter)


def kernel_matrix(A, B, params):
    sq = cdist(A, B, "sqeuclidean")
    return params.signal_variance * np.exp(-sq / (2 * params.length_scale ** 2))


class GpPosterior:
    """
    GP posterior over relevance, conditioned on a list of observations.

    Attributes
    ----------
    params : KernelParams
        May carry a raised jitter if a factorisation had to be retried.
    dim : int
    s_max : float
        Upper bound enforced on non-hallucinated observation values.
    observations : tuple of Observation
    chol : ndarray, shape (t, t)
        Lower Cholesky factor of K + max(sigma_n^2, jitter) I
    alpha : ndarray, shape (t,)
        (K + max(sigma_n^2, jitter) I)^-1 y
    """

    def __init__(self, params=KernelParams(), dim=1, s_max=3.0):
        check_positive("dim", dim)
        self.params = params
        self.dim = int(dim)
        self.s_max = float(s_max)
        self.observations = ()
        self.locations = np.empty((0, self.dim))
        self.values = np.empty(0)
        self.chol = np.empty((0, 0))
        self.alpha = np.empty(0)

    @classmethod
    def from_observations(cls, observations, params=KernelParams(), dim=None, s_max=3.0):
        """Build a posterior with a single from-scratch factorisation."""
        observations = list(observations)
        if dim is None:
            dim = len(observations[0].location)
        return cls(params, dim, s_max).insert(observations)

    def __len__(self):
        return len(self.observations)

    def _derive(self, params, observations, locations, values, chol):
        new = GpPosterior.__new__(GpPosterior)
        new.params = params
        new.dim = self.dim
        new.s_max = self.s_max
        new.observations = tuple(observations)
        new.locations = locations
        new.values = values
        new.chol = chol
        new.alpha = cho_solve((chol, True), values) if len(values) else np.empty(0)
        for array in (new.locations, new.values, new.chol, new.alpha):
            array.setflags(write=False)
        return new

    def _validate(self, batch):
        for obs in batch:
            check_dimension(self.dim, len(obs.location), "observation location")
            if obs.provenance is not Provenance.HALLUCINATED and obs.value > self.s_max:
                raise InvalidParameterError(f"Observation value {obs.value} exceeds s_max={self.s_max}")

    def _extend(self, new_locations, params):
        diag = effective_noise(params)
        K22 = kernel_matrix(new_locations, new_locations, params) + diag * np.eye(len(new_locations))
        if len(self.observations) == 0:
            return cholesky(K22, lower=True)
        K12 = kernel_matrix(self.locations, new_locations, params)
        L21t = solve_triangular(self.chol, K12, lower=True)
        L22 = cholesky(K22 - L21t.T @ L21t, lower=True)
        t, b = len(self.observations), len(new_locations)
        chol = np.zeros((t + b, t + b))
        chol[:t, :t] = self.chol
        chol[t:, :t] = L21t.T
        chol[t:, t:] = L22
        return chol

    def insert(self, batch):
        """
        Condition on a batch of observations.

        Parameters
        ----------
        batch : list of Observation

        Returns
        -------
        posterior : GpPosterior
            A new posterior; ``self`` is left untouched. An empty batch returns ``self``.

        Warnings
        --------
        If the block update breaks down, the whole factor is recomputed once with 10x jitter
        (an ``IllConditionedWarning`` is emitted); a second failure raises ``CholeskyBreakdownError``.
        """
        batch = list(batch)
        if not batch:
            return self
        self._validate(batch)

        new_locations = np.vstack([obs.location for obs in batch])
        locations = np.vstack([self.locations, new_locations])
        values = np.concatenate([self.values, [obs.value for obs in batch]])
        params = self.params
        try:
            chol = self._extend(new_locations, params)
        except LinAlgError:
            params = replace(params, jitter=params.jitter * 10)
            warnings.warn(IllConditionedWarning(f"Cholesky update failed at t={len(locations)}; "
                                                f"refactorising with jitter={params.jitter:g}"))
            try:
                scratch = GpPosterior(params, self.dim, self.s_max)
                chol = scratch._extend(locations, params)
            except LinAlgError as e:
                raise CholeskyBreakdownError() from e
        return self._derive(params, self.observations + tuple(batch), locations, values, chol)

    def predict(self, points):
        """
        Predictive mean and variance at each row of ``points``.

        Parameters
        ----------
        points : array-like, shape (n, dim)

        Returns
        -------
        mean : ndarray, shape (n,)
        variance : ndarray, shape (n,)
            Clipped below at 0.
        """
        points = as_matrix(points, self.dim)
        n = len(points)
        prior = self.params.signal_variance
        if not self.observations:
            return np.zeros(n), np.full(n, prior)

        mean = np.empty(n)
        variance = np.empty(n)
        for start in range(0, n, PREDICT_CHUNK):
            stop = min(start + PREDICT_CHUNK, n)
            Ks = kernel_matrix(points[start:stop], self.locations, self.params)
            mean[start:stop] = Ks @ self.alpha
            V = solve_triangular(self.chol, Ks.T, lower=True)
            variance[start:stop] = prior - np.einsum("ij,ij->j", V, V)
        np.clip(variance, 0.0, None, out=variance)
        return mean, variance

    def predict_mean(self, points):
        points = as_matrix(points, self.dim)
        if not self.observations:
            return np.zeros(len(points))
        mean = np.empty(len(points))
        for start in range(0, len(points), PREDICT_CHUNK):
            stop = min(start + PREDICT_CHUNK, len(points))
            mean[start:stop] = kernel_matrix(points[start:stop], self.locations, self.params) @ self.alpha
        return mean

    def predict_variance(self, points):
        return self.predict(points)[1]


def insert(posterior, batch):
    return posterior.insert(batch)


def predict_mean(posterior, points):
    """Posterior mean mu = k^T (K + sigma_n^2 I)^-1 y for each row of ``points``."""
    return posterior.predict_mean(points)


def predict_variance(posterior, points):
    """Posterior variance k(x, x) - k^T (K + sigma_n^2 I)^-1 k for each row of ``points``."""
    return posterior.predict_variance(points)
