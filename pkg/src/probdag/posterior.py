"""Gaussian-process posterior over generative scores of discrete states.

Prior ``g ~ N(mu, c * Sigma)``, likelihood ``r_t ~ N(g_t, lam)``.  The
observed-leaf Gram ``K = c Sigma_OO + (lam + c jitter) I`` is kept as a
lower Cholesky factor that grows by one row per observation, together with
``z = L^-1 (r - mu_O)`` so that for any state i

    mean_i = mu_i + v_i . z,   var_i = c Sigma_ii - |v_i|^2,   v_i = L^-1 k_Oi.

Marginals of *tracked* keys are maintained incrementally: each new
observation appends one entry to every ``v_i``.  Kernels that expose a
finite feature map (``Sigma(a, b) = phi_a . phi_b + white [a == b]``) let
unobserved keys skip storing ``v_i`` altogether since ``v_i = A phi_i``
with ``A = L^-1 c Phi_O``.
"""

from __future__ import annotations

import math
import warnings
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .extremal import GaussianBelief

__all__ = [
    "Kernel",
    "FeatureKernel",
    "FactorizationError",
    "GaussianPosterior",
    "posterior_marginal",
    "standardize_from_pilot",
]


class FactorizationError(np.linalg.LinAlgError):
    def __init__(self, message, key=None, partner=None):
        super().__init__(message)
        self.key = key
        self.partner = partner


class Kernel:
    """State-similarity covariance ``Sigma`` scaled by ``scale`` (the c).

    Subclasses implement :meth:`cov` on state keys.  ``level_variance`` is
    the growth of ``Sigma_ii`` per level of the search space; times
    ``scale`` it is the Brownian step variance of the unexplored-subtree
    model.
    """

    level_variance: float = 1.0

    def __init__(self, scale: float = 1.0, jitter: float = 0.0):
        if scale <= 0:
            raise ValueError("kernel scale must be positive")
        if jitter < 0:
            raise ValueError("jitter must be nonnegative")
        self.scale = float(scale)
        self.jitter = float(jitter)

    def cov(self, a: bytes, b: bytes) -> float:
        raise NotImplementedError

    def prior_mean(self, key: bytes) -> float:
        return 0.0

    def features(self, keys: Sequence[bytes]) -> Optional[np.ndarray]:
        """Finite feature map, or ``None`` for kernels without one."""
        return None

    @property
    def white(self) -> float:
        return 0.0

    def gram(self, keys_a: Sequence[bytes], keys_b: Sequence[bytes]) -> np.ndarray:
        return np.array([[self.cov(a, b) for b in keys_b] for a in keys_a], dtype=float).reshape(
            len(keys_a), len(keys_b))

    def with_jitter(self, jitter: float) -> "Kernel":
        import copy

        other = copy.copy(self)
        other.jitter = float(jitter)
        return other

    def describe(self) -> dict:
        return {"type": type(self).__name__, "scale": self.scale, "jitter": self.jitter}


class FeatureKernel(Kernel):
    """``Sigma(a, b) = phi(a) . phi(b) + white * [a == b]``."""

    def __init__(self, scale: float = 1.0, jitter: float = 0.0, white: float = 0.0):
        super().__init__(scale, jitter)
        self._white = float(white)

    @property
    def white(self) -> float:
        return self._white

    def feature_vector(self, key: bytes) -> np.ndarray:
        raise NotImplementedError

    def features(self, keys: Sequence[bytes]) -> np.ndarray:
        if len(keys) == 0:
            return np.zeros((0, self.n_features))
        return np.stack([self.feature_vector(k) for k in keys])

    @property
    def n_features(self) -> int:
        raise NotImplementedError

    def cov(self, a: bytes, b: bytes) -> float:
        val = float(self.feature_vector(a) @ self.feature_vector(b))
        if a == b:
            val += self._white
        return val

    def gram(self, keys_a, keys_b) -> np.ndarray:
        fa = self.features(keys_a)
        fb = self.features(keys_b)
        g = fa @ fb.T
        if self._white:
            g += self._white * (np.asarray(keys_a, dtype=object)[:, None]
                                == np.asarray(keys_b, dtype=object)[None, :])
        return g


def _grow(arr: np.ndarray, rows: int, cols: Optional[int] = None) -> np.ndarray:
    if arr.shape[0] >= rows and (cols is None or arr.shape[1] >= cols):
        return arr
    new_rows = arr.shape[0] if arr.shape[0] >= rows else max(rows, 2 * arr.shape[0], 16)
    if arr.ndim == 1:
        out = np.zeros(new_rows, dtype=arr.dtype)
        out[: arr.shape[0]] = arr
        return out
    if cols is None or arr.shape[1] >= cols:
        new_cols = arr.shape[1]
    else:
        new_cols = max(cols, 2 * arr.shape[1], 16)
    out = np.zeros((new_rows, new_cols), dtype=arr.dtype)
    out[: arr.shape[0], : arr.shape[1]] = arr
    return out


class GaussianPosterior:
    """Incrementally conditioned GP over state keys (one per search)."""

    def __init__(self, kernel: Kernel, noise: float):
        if not noise > 0:
            raise ValueError("observation noise must be strictly positive")
        self.kernel = kernel
        self.noise = float(noise)
        self.c = kernel.scale
        self.keys: List[bytes] = []
        self.rewards: List[float] = []
        self._obs_count: Dict[bytes, int] = {}
        self._L = np.zeros((0, 0))
        self._z = np.zeros(0)
        phi = kernel.features([])
        self._featured = phi is not None
        self._F = phi.shape[1] if self._featured else 0
        self._white = kernel.white if self._featured else 0.0
        if self._featured:
            self._A = np.zeros((0, self._F))
            self._Phi_O = np.zeros((0, self._F))
            self._M = np.zeros((self._F, self._F))  # A^T A
            self._b = np.zeros(self._F)  # A^T z
        # tracked keys
        self._index: Dict[bytes, int] = {}
        self._tkeys: List[bytes] = []
        self._mean = np.zeros(0)
        self._var = np.zeros(0)
        self._prior_var = np.zeros(0)
        self._explicit = np.zeros(0, dtype=bool)
        self._row = np.zeros(0, dtype=np.int64)
        self._V = np.zeros((0, 0))
        self._vkeys: List[int] = []  # tracked index per explicit row
        if self._featured:
            self._tphi = np.zeros((0, self._F))

    # ------------------------------------------------------------------ basics
    @property
    def n(self) -> int:
        return len(self.keys)

    @property
    def factor(self) -> np.ndarray:
        """Lower Cholesky factor of ``K`` (a copy)."""
        return self._L[: self.n, : self.n].copy()

    @property
    def alpha(self) -> np.ndarray:
        """``K^-1 (r - mu_O)``."""
        n = self.n
        if n == 0:
            return np.zeros(0)
        return solve_triangular(self._L[:n, :n], self._z[:n], lower=True, trans="T")

    def gram_matrix(self) -> np.ndarray:
        """``K`` rebuilt densely from the kernel (reference, O(n^2) kernel calls)."""
        K = self.c * self.kernel.gram(self.keys, self.keys)
        K[np.diag_indices_from(K)] += self.noise + self.c * self.kernel.jitter
        return K

    def _k_obs(self, key: bytes, phi: Optional[np.ndarray]) -> np.ndarray:
        n = self.n
        if self._featured:
            k = self._Phi_O[:n] @ phi
            if self._white and key in self._obs_count:
                k = k + self._white * np.fromiter((o == key for o in self.keys), bool, n)
            return self.c * k
        return self.c * np.array([self.kernel.cov(o, key) for o in self.keys], dtype=float)

    def _prior_cov_self(self, key: bytes, phi) -> float:
        if self._featured:
            return self.c * (float(phi @ phi) + self._white)
        return self.c * self.kernel.cov(key, key)

    def _solve_v(self, key: bytes, phi) -> np.ndarray:
        n = self.n
        if n == 0:
            return np.zeros(0)
        k = self._k_obs(key, phi)
        return solve_triangular(self._L[:n, :n], k, lower=True, check_finite=False)

    def _needs_explicit(self, key: bytes) -> bool:
        if not self._featured:
            return True
        return bool(self._white) and key in self._obs_count

    # ------------------------------------------------------------------ queries
    def marginal(self, key: bytes) -> GaussianBelief:
        """Posterior marginal of any state by a fresh triangular solve."""
        phi = self.kernel.features([key])[0] if self._featured else None
        v = self._solve_v(key, phi)
        mean = self.kernel.prior_mean(key) + float(v @ self._z[: self.n])
        var = self._prior_cov_self(key, phi) - float(v @ v)
        return GaussianBelief(mean, max(var, 0.0))

    # ------------------------------------------------------------------ tracking
    def track(self, keys: Iterable[bytes]) -> np.ndarray:
        """Register keys for incremental maintenance; returns their indices."""
        new = [k for k in dict.fromkeys(keys) if k not in self._index]
        if new:
            self._register(new)
        return np.fromiter((self._index[k] for k in keys), dtype=np.int64)

    def _register(self, keys: List[bytes]) -> None:
        start = len(self._tkeys)
        stop = start + len(keys)
        self._mean = _grow(self._mean, stop)
        self._var = _grow(self._var, stop)
        self._prior_var = _grow(self._prior_var, stop)
        self._explicit = _grow(self._explicit, stop)
        self._row = _grow(self._row, stop)
        mu = np.array([self.kernel.prior_mean(k) for k in keys], dtype=float)
        if self._featured:
            phi = self.kernel.features(keys)
            self._tphi = _grow(self._tphi, stop)
            self._tphi[start:stop] = phi
            prior = self.c * (np.einsum("ij,ij->i", phi, phi) + self._white)
            mean = mu + phi @ self._b
            var = prior - np.einsum("ij,jk,ik->i", phi, self._M, phi)
        else:
            phi = [None] * len(keys)
            prior = np.array([self._prior_cov_self(k, None) for k in keys])
            mean = mu.copy()
            var = prior.copy()
        self._prior_var[start:stop] = prior
        self._mean[start:stop] = mean
        self._var[start:stop] = var
        for j, key in enumerate(keys):
            idx = start + j
            self._index[key] = idx
            self._tkeys.append(key)
            self._explicit[idx] = False
            if self._needs_explicit(key):
                v = self._solve_v(key, phi[j])
                self._make_explicit(idx, v)
                self._mean[idx] = mu[j] + float(v @ self._z[: self.n])
                self._var[idx] = prior[j] - float(v @ v)

    def _make_explicit(self, idx: int, v: np.ndarray) -> None:
        row = len(self._vkeys)
        self._V = _grow(self._V, row + 1, max(self.n + 1, self._V.shape[1]))
        self._V[row, : self.n] = v
        self._vkeys.append(idx)
        self._row[idx] = row
        self._explicit[idx] = True

    def tracked_index(self, key: bytes) -> Optional[int]:
        return self._index.get(key)

    @property
    def tracked_means(self) -> np.ndarray:
        return self._mean[: len(self._tkeys)]

    @property
    def tracked_variances(self) -> np.ndarray:
        return np.maximum(self._var[: len(self._tkeys)], 0.0)

    def tracked_belief(self, key: bytes) -> GaussianBelief:
        i = self._index[key]
        return GaussianBelief(float(self._mean[i]), max(float(self._var[i]), 0.0))

    # ------------------------------------------------------------------ update
    def add_observation(self, key: bytes, reward: float) -> None:
        """Condition on ``reward`` observed at leaf ``key``; O(n (F + rows))."""
        n = self.n
        phi = self.kernel.features([key])[0] if self._featured else None
        t_idx = self._index.get(key)
        if t_idx is not None and self._explicit[t_idx]:
            l = self._V[self._row[t_idx], :n].copy()
        elif self._featured and not self._needs_explicit(key):
            l = self._A[:n] @ phi
        else:
            l = self._solve_v(key, phi)
        k_tt = self._prior_cov_self(key, phi)
        d2 = k_tt + self.noise + self.c * self.kernel.jitter - float(l @ l)
        if not d2 > 0.0 or not math.isfinite(d2):
            partner = self.keys[int(np.argmax(np.abs(l)))] if n else None
            raise FactorizationError(
                f"Gram matrix lost positive definiteness adding {key.hex()} "
                f"(closest observed leaf {partner.hex() if partner else None}); raise jitter",
                key, partner)
        d = math.sqrt(d2)
        resid = float(reward) - self.kernel.prior_mean(key)
        z_new = (resid - float(l @ self._z[:n])) / d

        ntr = len(self._tkeys)
        s = np.zeros(ntr)
        if self._featured:
            a_new = (self.c * phi - self._A[:n].T @ l) / d
            s = self._tphi[:ntr] @ a_new
        nrows = len(self._vkeys)
        if nrows:
            rows_idx = np.asarray(self._vkeys, dtype=np.int64)
            if self._featured:
                k_jt = self.c * (self._tphi[rows_idx] @ phi)
                if self._white:
                    same = np.fromiter((self._tkeys[i] == key for i in self._vkeys), bool, nrows)
                    k_jt = k_jt + self.c * self._white * same
            else:
                k_jt = self.c * np.array([self.kernel.cov(self._tkeys[i], key) for i in self._vkeys])
            s_rows = (k_jt - self._V[:nrows, :n] @ l) / d
            s[rows_idx] = s_rows
        self._mean[:ntr] += s * z_new
        self._var[:ntr] -= s * s

        # grow the factor and per-observation state
        self._L = _grow(self._L, n + 1, n + 1)
        self._L[n, :n] = l
        self._L[n, n] = d
        self._z = _grow(self._z, n + 1)
        self._z[n] = z_new
        if self._featured:
            self._A = _grow(self._A, n + 1)
            self._A[n] = a_new
            self._Phi_O = _grow(self._Phi_O, n + 1)
            self._Phi_O[n] = phi
            self._M += np.outer(a_new, a_new)
            self._b += a_new * z_new
        if nrows:
            self._V = _grow(self._V, nrows, n + 1)
            self._V[:nrows, n] = s_rows
        self.keys.append(key)
        self.rewards.append(float(reward))
        self._obs_count[key] = self._obs_count.get(key, 0) + 1
        # a key observed for the first time under a white-noise kernel now
        # correlates with its own observation beyond the feature part
        if t_idx is not None and not self._explicit[t_idx] and self._needs_explicit(key):
            v = np.empty(n + 1)
            v[:n] = l
            v[n] = (k_tt - float(l @ l)) / d
            # undo the feature-only update and apply the exact one
            self._mean[t_idx] += (v[n] - s[t_idx]) * z_new
            self._var[t_idx] += s[t_idx] ** 2 - v[n] ** 2
            self._make_explicit(t_idx, v)

    def rebuilt(self, kernel: Optional[Kernel] = None) -> "GaussianPosterior":
        """Fresh posterior replaying the observation log (same tracked keys)."""
        other = GaussianPosterior(kernel or self.kernel, self.noise)
        other.track(self._tkeys)
        for key, r in zip(self.keys, self.rewards):
            other.add_observation(key, r)
        return other


def posterior_marginal(state: GaussianPosterior, key: bytes) -> GaussianBelief:
    return state.marginal(key)


def standardize_from_pilot(rewards: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation used to standardise rewards."""
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise ValueError("need at least two pilot rewards")
    shift = float(r.mean())
    scale = float(r.std(ddof=1))
    if not scale > 1e-6:
        warnings.warn("pilot rewards have no spread; scale floored at 1e-6", RuntimeWarning)
        scale = 1e-6
    return shift, scale
