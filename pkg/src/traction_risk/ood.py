"""Density-based confidence scores for terrain feature vectors.

Features are projected onto their leading principal components and a
full-covariance Gaussian mixture is fit there by EM. A feature's confidence
is its log-density rescaled so that the densest training feature scores 1
and the least dense scores 0; novel features fall below 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DETECTOR_SCHEMA = "ood_detector"
FEATURE_MAP_SCHEMA = "feature_map"
SCHEMA_VERSION = 1

COV_REG = 1e-6
EM_TOL = 1e-6
EM_MAX_ITER = 200
KMEANS_RESTARTS = 10


@dataclass(frozen=True)
class PCA:
    mean: np.ndarray
    components: np.ndarray  # (n_pca, D), orthonormal rows
    explained_variance: np.ndarray

    def project(self, features: np.ndarray) -> np.ndarray:
        # broadcast-and-sum rather than matmul: every row is reduced the same
        # way whatever the batch size, so scores do not depend on batching
        diff = np.atleast_2d(features) - self.mean
        return (diff[:, None, :] * self.components[None]).sum(axis=2)


def fit_pca(features: np.ndarray, n_components: int) -> PCA:
    """PCA by eigendecomposition of the sample covariance."""
    x = np.asarray(features, dtype=np.float64)
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False, bias=False).reshape(x.shape[1], x.shape[1])
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n_components]
    comps = evecs[:, order].T
    # deterministic sign: largest-magnitude entry of each component is positive
    signs = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
    comps = comps * np.where(signs == 0, 1.0, signs)[:, None]
    return PCA(mean, comps, evals[order])


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def component_log_pdf(self, z: np.ndarray) -> np.ndarray:
        """``log w_k + log N(z; mu_k, Sigma_k)`` with shape (n, K)."""
        z = np.atleast_2d(z)
        n, d = z.shape
        out = np.empty((n, len(self.weights)))
        for k, (w, mu, cov) in enumerate(zip(self.weights, self.means, self.covariances)):
            chol = np.linalg.cholesky(cov)
            chol_inv = np.linalg.inv(chol)
            sol = ((z - mu)[:, None, :] * chol_inv[None]).sum(axis=2)
            maha = np.sum(sol**2, axis=1)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, k] = np.log(w) - 0.5 * (d * np.log(2 * np.pi) + logdet + maha)
        return out

    def log_pdf(self, z: np.ndarray) -> np.ndarray:
        return _logsumexp(self.component_log_pdf(z))


def _logsumexp(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def _kmeans(z: np.ndarray, k: int, rng: np.random.Generator, iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns labels."""
    n = len(z)
    centers = [z[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min([np.sum((z - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(z[idx])
    centers = np.array(centers)
    labels = np.zeros(n, dtype=np.int64)
    for it in range(iters):
        d2 = ((z[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        if it > 0 and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            if np.any(labels == j):
                centers[j] = z[labels == j].mean(axis=0)
    return labels


def _m_step(z: np.ndarray, resp: np.ndarray) -> GaussianMixture:
    nk = resp.sum(axis=0)
    if np.any(nk <= 1e-12):
        raise ValueError("degenerate mixture: empty component")
    means = (resp.T @ z) / nk[:, None]
    d = z.shape[1]
    covs = np.empty((len(nk), d, d))
    for k in range(len(nk)):
        diff = z - means[k]
        covs[k] = (resp[:, k, None] * diff).T @ diff / nk[k] + COV_REG * np.eye(d)
        if np.linalg.eigvalsh(covs[k]).min() <= 0:
            raise ValueError("degenerate covariance after regularization")
    return GaussianMixture(nk / len(z), means, covs)


def fit_gmm(
    z: np.ndarray,
    n_components: int,
    seed: int = 0,
    restarts: int = KMEANS_RESTARTS,
) -> tuple[GaussianMixture, list[float]]:
    """EM from k-means starts; keeps the restart with the best log-likelihood.

    Returns the mixture and the total log-likelihood recorded after every
    E-step of the winning run.
    """
    rng = np.random.default_rng(seed)
    best: tuple[GaussianMixture, list[float]] | None = None
    for _ in range(restarts):
        labels = _kmeans(z, n_components, rng)
        resp = np.eye(n_components)[labels]
        try:
            gmm = _m_step(z, resp)
        except ValueError:
            continue
        history: list[float] = []
        for _ in range(EM_MAX_ITER):
            comp = gmm.component_log_pdf(z)
            ll_rows = _logsumexp(comp)
            history.append(float(np.sum(ll_rows)))
            if len(history) > 1 and history[-1] - history[-2] < EM_TOL:
                break
            gmm = _m_step(z, np.exp(comp - ll_rows[:, None]))
        else:
            history.append(float(np.sum(gmm.log_pdf(z))))
        if best is None or history[-1] > best[1][-1]:
            best = (gmm, history)
    if best is None:
        raise ValueError("degenerate covariance: no restart produced a valid mixture")
    return best


@dataclass(frozen=True)
class OodDetector:
    pca: PCA
    gmm: GaussianMixture
    p_max: float
    p_min: float
    log_likelihood_history: list[float] = field(default_factory=list, compare=False)

    @property
    def dim(self) -> int:
        return self.pca.mean.size

    def _check_dim(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[-1] != self.dim:
            raise ValueError(f"feature dimension {x.shape[-1]} does not match detector dimension {self.dim}")
        return x

    def log_density(self, features: np.ndarray) -> np.ndarray:
        """Mixture log-density of the projected features."""
        return self.gmm.log_pdf(self.pca.project(self._check_dim(features)))

    def confidence(self, features: np.ndarray) -> np.ndarray:
        if not self.p_max > self.p_min:
            raise ValueError("degenerate training density: p_max == p_min")
        return (self.log_density(features) - self.p_min) / (self.p_max - self.p_min)

    def confidence_grid(self, feature_grid: np.ndarray) -> np.ndarray:
        """Confidence for an (H, W, D) feature grid."""
        h, w, d = feature_grid.shape
        return self.confidence(feature_grid.reshape(h * w, d)).reshape(h, w)

    def to_dict(self) -> dict:
        return {
            "schema": DETECTOR_SCHEMA,
            "version": SCHEMA_VERSION,
            "pca_mean": self.pca.mean.tolist(),
            "pca_components": self.pca.components.tolist(),
            "pca_explained_variance": self.pca.explained_variance.tolist(),
            "weights": self.gmm.weights.tolist(),
            "means": self.gmm.means.tolist(),
            "covariances": self.gmm.covariances.tolist(),
            "p_max": self.p_max,
            "p_min": self.p_min,
        }

    @classmethod
    def from_dict(cls, data: dict) -> OodDetector:
        _check_schema(data, DETECTOR_SCHEMA)
        pca = PCA(
            np.asarray(data["pca_mean"], dtype=np.float64),
            np.asarray(data["pca_components"], dtype=np.float64),
            np.asarray(data.get("pca_explained_variance", []), dtype=np.float64),
        )
        gmm = GaussianMixture(
            np.asarray(data["weights"], dtype=np.float64),
            np.asarray(data["means"], dtype=np.float64),
            np.asarray(data["covariances"], dtype=np.float64),
        )
        return cls(pca, gmm, float(data["p_max"]), float(data["p_min"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> OodDetector:
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(features: np.ndarray, n_components: int = 2, n_pca: int = 2, seed: int = 0) -> OodDetector:
    """Fit PCA, the mixture, and the training log-density range."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a (K, D) array")
    if len(x) < 10 * n_components:
        raise ValueError(f"need at least {10 * n_components} training features, got {len(x)}")
    if x.shape[1] < n_pca:
        raise ValueError(f"feature dimension {x.shape[1]} is below n_pca={n_pca}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    pca = fit_pca(x, n_pca)
    z = pca.project(x)
    gmm, history = fit_gmm(z, n_components, seed)
    train_ll = gmm.log_pdf(z)
    return OodDetector(pca, gmm, float(train_ll.max()), float(train_ll.min()), history)


def log_density(detector: OodDetector, features: np.ndarray) -> np.ndarray:
    return detector.log_density(features)


def confidence(detector: OodDetector, features: np.ndarray) -> np.ndarray:
    return detector.confidence(features)


def ood_mask(
    detector: OodDetector,
    feature_grid: np.ndarray,
    g_thres: float,
    known: np.ndarray | None = None,
) -> np.ndarray:
    """Cells whose confidence is below ``g_thres``, plus every unknown cell."""
    g = detector.confidence_grid(np.asarray(feature_grid, dtype=np.float64))
    mask = g < g_thres
    if known is not None:
        mask |= ~np.asarray(known, dtype=bool)
    return mask


@dataclass(frozen=True)
class FeatureMap:
    """Per-cell feature vectors on the same geometry as a traction map."""

    height: int
    width: int
    cell_size: float
    origin: tuple[float, float]
    features: np.ndarray  # (H, W, D)
    known: np.ndarray

    def to_dict(self) -> dict:
        h, w, d = self.features.shape
        return {
            "schema": FEATURE_MAP_SCHEMA,
            "version": SCHEMA_VERSION,
            "height": h,
            "width": w,
            "cell_size": self.cell_size,
            "origin": list(self.origin),
            "feature_dim": d,
            "features": self.features.reshape(h * w, d).tolist(),
            "known": self.known.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> FeatureMap:
        _check_schema(data, FEATURE_MAP_SCHEMA)
        h, w, d = int(data["height"]), int(data["width"]), int(data["feature_dim"])
        return cls(
            h,
            w,
            float(data.get("cell_size", 1.0)),
            tuple(data.get("origin", (0.0, 0.0))),
            np.asarray(data["features"], dtype=np.float64).reshape(h, w, d),
            np.asarray(data.get("known", [True] * (h * w)), dtype=bool).reshape(h, w),
        )

    def known_features(self) -> np.ndarray:
        return self.features[self.known]


def _check_schema(data: dict, schema: str) -> None:
    if data.get("schema") != schema:
        raise ValueError(f"expected schema {schema!r}, got {data.get('schema')!r}")
    if data.get("version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported {schema} version {data.get('version')!r}")
