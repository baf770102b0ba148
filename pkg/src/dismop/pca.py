"""Deterministic PCA via power iteration with deflation.

Used both to reduce the action space and to project policy trajectories.
The iteration starts from the normalized ones vector and runs until the
eigenvalue estimate moves by less than 1e-12 or 1000 iterations, so fits
are reproducible with no RNG involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ITER = 1000
EIG_TOL = 1e-12


class PcaError(Exception):
    pass


class InsufficientComponents(PcaError):
    pass


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (k, d) orthonormal rows, descending eigenvalue
    explained_variance: np.ndarray  # (k,) eigenvalues
    total_variance: float  # trace of the covariance matrix
    degenerate: bool = False  # rank < requested k

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, x: np.ndarray, k: int | None = None) -> np.ndarray:
        """Project rows of x onto the top-k components (all by default).

        A degenerate model (data rank below the requested k at fit time)
        zero-fills the axes it could not extract; asking a non-degenerate
        model for more components than it holds is an error."""
        k = self.n_components if k is None else k
        if k > self.n_components and not self.degenerate:
            raise InsufficientComponents(f"model has {self.n_components} components, need {k}")
        x = np.asarray(x, dtype=np.float64)
        avail = min(k, self.n_components)
        out = np.zeros((x.shape[0], k), dtype=np.float64)
        if avail:
            out[:, :avail] = (x - self.mean) @ self.components[:avail].T
        return out

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "total_variance": self.total_variance,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PcaModel":
        return cls(
            mean=np.array(d["mean"], dtype=np.float64),
            components=np.array(d["components"], dtype=np.float64),
            explained_variance=np.array(d["explained_variance"], dtype=np.float64),
            total_variance=float(d["total_variance"]),
            degenerate=bool(d["degenerate"]),
        )


def _power_iteration(a: np.ndarray, prev: list[np.ndarray]) -> tuple[np.ndarray, float]:
    n = a.shape[0]
    v = np.ones(n, dtype=np.float64) / np.sqrt(n)
    lam = 0.0
    for _ in range(MAX_ITER):
        w = a @ v
        # Re-orthogonalize against already-extracted components to keep the
        # deflated iteration from drifting back into their span.
        for p in prev:
            w = w - np.dot(w, p) * p
        norm = float(np.sqrt(np.dot(w, w)))
        if norm < 1e-300:
            return v, 0.0
        v_new = w / norm
        lam_new = float(v_new @ a @ v_new)
        if abs(lam_new - lam) < EIG_TOL:
            return v_new, lam_new
        v, lam = v_new, lam_new
    return v, lam


def fit_pca(data: np.ndarray, k: int) -> PcaModel:
    """Fit top-k principal components of the rows of data.

    Sign convention: the largest-magnitude entry of each component is made
    positive. If the data rank is below k, the achievable components are
    returned and the model is flagged degenerate.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise PcaError(f"need an n x d matrix with n >= 2, got shape {x.shape}")
    n, d = x.shape
    if not 1 <= k <= min(n, d):
        raise PcaError(f"k={k} out of range for data shape {x.shape}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (n - 1)
    total_variance = float(np.trace(cov))

    a = cov.copy()
    comps: list[np.ndarray] = []
    eigs: list[float] = []
    degenerate = False
    rank_floor = max(total_variance, 1.0) * 1e-12
    for _ in range(k):
        v, lam = _power_iteration(a, comps)
        if lam <= rank_floor:
            degenerate = True
            break
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            v = -v
        comps.append(v)
        eigs.append(lam)
        a = a - lam * np.outer(v, v)
    components = np.stack(comps) if comps else np.zeros((0, d))
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=np.array(eigs, dtype=np.float64),
        total_variance=total_variance,
        degenerate=degenerate,
    )
