"""Categorical traction distributions, tail risk measures and traction maps.

Traction values live in [0, 1]. A distribution is a probability mass over
``bin_count`` uniform bins; each bin is represented by its center value.
Maps store one distribution per cell for the linear and the angular traction
channel, as dense ``(height, width, bin_count)`` arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAP_SCHEMA = "traction_distribution_map"
REALIZATION_SCHEMA = "traction_realization_map"
SCHEMA_VERSION = 1

_PROB_TOL = 1e-9


def bin_centers(bin_count: int) -> np.ndarray:
    return (np.arange(bin_count) + 0.5) / bin_count


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 1.0) or math.isnan(alpha):
        raise ValueError(f"invalid risk level: alpha={alpha!r} must lie in (0, 1]")


@dataclass(frozen=True)
class CategoricalDistribution:
    """Probability mass over uniform traction bins in [0, 1]."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=np.float64).reshape(-1)
        if p.size < 1:
            raise ValueError("bin_count must be >= 1")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {p.sum():.12g}, expected 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def bin_count(self) -> int:
        return self.probs.size

    @property
    def centers(self) -> np.ndarray:
        return bin_centers(self.bin_count)

    def mean(self) -> float:
        return float(self.probs @ self.centers)

    @classmethod
    def point_mass(cls, value: float, bin_count: int = 20) -> CategoricalDistribution:
        """All mass on the bin containing ``value``."""
        p = np.zeros(bin_count)
        p[_bin_index(np.array([value]), bin_count)[0]] = 1.0
        return cls(p)

    @classmethod
    def from_normal_mixture(
        cls,
        components: Sequence[tuple[float, float, float]],
        bin_count: int = 20,
    ) -> CategoricalDistribution:
        """Discretize a mixture of ``(weight, mean, std)`` normals onto the bins.

        Mass outside [0, 1] is dropped and the remainder renormalized.
        """
        edges = np.linspace(0.0, 1.0, bin_count + 1)
        mass = np.zeros(bin_count)
        for weight, mu, sigma in components:
            if sigma <= 0:
                mass[_bin_index(np.array([mu]), bin_count)[0]] += weight
                continue
            cdf = np.array([_normal_cdf((e - mu) / sigma) for e in edges])
            mass += weight * np.diff(cdf)
        total = mass.sum()
        if total <= 0:
            raise ValueError("mixture has no mass inside [0, 1]")
        return cls(mass / total)


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _bin_index(values: np.ndarray, bin_count: int) -> np.ndarray:
    # boundary values go to the higher bin, 1.0 to the last one
    idx = np.floor(np.asarray(values, dtype=np.float64) * bin_count).astype(np.int64)
    return np.clip(idx, 0, bin_count - 1)


def fit_categorical(samples: Sequence[float], bin_count: int = 20) -> CategoricalDistribution:
    """Normalized histogram of traction samples over ``bin_count`` uniform bins."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("no samples")
    if np.any(~np.isfinite(x)) or np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("sample out of range [0, 1]")
    counts = np.bincount(_bin_index(x, bin_count), minlength=bin_count).astype(np.float64)
    return CategoricalDistribution(counts / counts.sum())


def left_var(dist: CategoricalDistribution, alpha: float) -> float:
    """Left-tail value at risk: the smallest center whose CDF exceeds ``alpha``."""
    _check_alpha(alpha)
    cdf = np.cumsum(dist.probs)
    idx = min(int(np.searchsorted(cdf, alpha, side="right")), dist.bin_count - 1)
    return float(dist.centers[idx])


def _lower_tail_mean(values: np.ndarray, probs: np.ndarray, alpha: float) -> float:
    """Mean of the lowest ``alpha`` probability mass; ``values`` sorted ascending."""
    before = np.cumsum(probs) - probs
    taken = np.clip(alpha - before, 0.0, probs)
    return float(taken @ values) / alpha


def left_cvar(dist: CategoricalDistribution, alpha: float) -> float:
    """Expected traction within the worst (lowest) ``alpha`` fraction of mass.

    The boundary bin contributes only the fraction of its mass needed to make
    the tail exactly ``alpha``, so the result is continuous in ``alpha`` and
    equals the mean at ``alpha = 1``.
    """
    _check_alpha(alpha)
    return _lower_tail_mean(dist.centers, dist.probs, alpha)


def right_cvar(dist: CategoricalDistribution, alpha: float) -> float:
    """Expected value within the highest ``alpha`` fraction of mass."""
    _check_alpha(alpha)
    return -_lower_tail_mean(-dist.centers[::-1], dist.probs[::-1], alpha)


def right_cvar_empirical(values: Sequence[float], alpha: float) -> float:
    """Sample CVaR of costs: mean of the largest ``ceil(alpha * M)`` values."""
    _check_alpha(alpha)
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("no values")
    k = max(1, math.ceil(alpha * x.size - 1e-12))
    return float(np.sort(x)[::-1][:k].mean())


def right_cvar_rows(costs: np.ndarray, alpha: float) -> np.ndarray:
    """Row-wise ``right_cvar_empirical`` for an ``(N, M)`` cost matrix."""
    _check_alpha(alpha)
    m = costs.shape[1]
    k = max(1, math.ceil(alpha * m - 1e-12))
    if k == m:
        return costs.mean(axis=1)
    top = np.partition(costs, m - k, axis=1)[:, m - k:]
    # sort so the reduction order is fixed regardless of partition internals
    return np.sort(top, axis=1).mean(axis=1)


@dataclass(frozen=True)
class GridGeometry:
    height: int
    width: int
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("grid dimensions must be positive")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """(row, col) of the cell containing world point ``(x, y)``, or None off-map.

        Rows index y and columns index x; points on a cell edge belong to the
        higher-index cell.
        """
        col = math.floor((x - self.origin[0]) / self.cell_size)
        row = math.floor((y - self.origin[1]) / self.cell_size)
        if 0 <= row < self.height and 0 <= col < self.width:
            return row, col
        return None

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin[0] + (col + 0.5) * self.cell_size,
            self.origin[1] + (row + 0.5) * self.cell_size,
        )

    def contains(self, x: float, y: float) -> bool:
        return self.cell_of(x, y) is not None

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "cell_size": self.cell_size,
            "origin": list(self.origin),
        }


def _validate_prob_grid(probs: np.ndarray, name: str) -> np.ndarray:
    p = np.array(probs, dtype=np.float64)
    if p.ndim != 3:
        raise ValueError(f"{name} must have shape (height, width, bin_count)")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{name} probabilities must be finite and non-negative")
    return p


@dataclass(frozen=True)
class TractionDistributionMap:
    """Per-cell linear and angular traction distributions.

    ``known`` marks cells with a valid prediction; unknown cells carry
    arbitrary (ignored) probability rows and are treated as zero traction.
    """

    geometry: GridGeometry
    linear: np.ndarray
    angular: np.ndarray
    known: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        lin = _validate_prob_grid(self.linear, "linear")
        ang = _validate_prob_grid(self.angular, "angular")
        if lin.shape != ang.shape:
            raise ValueError("linear and angular grids differ in shape")
        if lin.shape[:2] != self.geometry.shape:
            raise ValueError("probability grids do not match the geometry")
        known = (
            np.ones(self.geometry.shape, dtype=bool)
            if self.known is None
            else np.array(self.known, dtype=bool)
        )
        if known.shape != self.geometry.shape:
            raise ValueError("known mask does not match the geometry")
        for p, name in ((lin, "linear"), (ang, "angular")):
            sums = p.sum(axis=2)
            if np.any(np.abs(sums[known] - 1.0) > _PROB_TOL):
                raise ValueError(f"{name} distributions of known cells must sum to 1")
        for arr in (lin, ang, known):
            arr.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "angular", ang)
        object.__setattr__(self, "known", known)

    @property
    def bin_count(self) -> int:
        return self.linear.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.geometry.shape

    def cell(self, row: int, col: int) -> tuple[CategoricalDistribution, CategoricalDistribution]:
        return (
            CategoricalDistribution(self.linear[row, col]),
            CategoricalDistribution(self.angular[row, col]),
        )

    @classmethod
    def uniform(
        cls,
        geometry: GridGeometry,
        linear: CategoricalDistribution,
        angular: CategoricalDistribution | None = None,
    ) -> TractionDistributionMap:
        angular = linear if angular is None else angular
        shape = geometry.shape + (linear.bin_count,)
        return cls(
            geometry,
            np.broadcast_to(linear.probs, shape).copy(),
            np.broadcast_to(angular.probs, shape).copy(),
        )

    def with_known(self, known: np.ndarray) -> TractionDistributionMap:
        return TractionDistributionMap(self.geometry, self.linear, self.angular, known)

    def to_dict(self) -> dict:
        h, w, b = self.linear.shape
        return {
            "schema": MAP_SCHEMA,
            "version": SCHEMA_VERSION,
            **self.geometry.to_dict(),
            "bin_count": b,
            "linear": self.linear.reshape(h * w, b).tolist(),
            "angular": self.angular.reshape(h * w, b).tolist(),
            "known": self.known.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> TractionDistributionMap:
        check_schema(data, MAP_SCHEMA)
        geometry = _geometry_from_dict(data)
        h, w, b = geometry.height, geometry.width, int(data["bin_count"])
        known = np.asarray(data.get("known", [True] * (h * w)), dtype=bool).reshape(h, w)
        return cls(
            geometry,
            np.asarray(data["linear"], dtype=np.float64).reshape(h, w, b),
            np.asarray(data["angular"], dtype=np.float64).reshape(h, w, b),
            known,
        )


@dataclass(frozen=True)
class TractionRealizationMap:
    """Concrete per-cell ``(linear, angular)`` traction values in [0, 1]."""

    geometry: GridGeometry
    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self) -> None:
        lin = np.array(self.linear, dtype=np.float64)
        ang = np.array(self.angular, dtype=np.float64)
        if lin.shape != self.geometry.shape or ang.shape != self.geometry.shape:
            raise ValueError("traction grids do not match the geometry")
        for arr in (lin, ang):
            if np.any(~np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
                raise ValueError("traction values must lie in [0, 1]")
            arr.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "angular", ang)

    @property
    def shape(self) -> tuple[int, int]:
        return self.geometry.shape

    def lookup(self, x: float, y: float) -> tuple[float, float]:
        """Traction at a world position; zero outside the map."""
        cell = self.geometry.cell_of(x, y)
        if cell is None:
            return 0.0, 0.0
        return float(self.linear[cell]), float(self.angular[cell])

    @classmethod
    def constant(cls, geometry: GridGeometry, linear: float, angular: float | None = None):
        angular = linear if angular is None else angular
        return cls(
            geometry,
            np.full(geometry.shape, float(linear)),
            np.full(geometry.shape, float(angular)),
        )

    def to_dict(self) -> dict:
        return {
            "schema": REALIZATION_SCHEMA,
            "version": SCHEMA_VERSION,
            **self.geometry.to_dict(),
            "linear": self.linear.reshape(-1).tolist(),
            "angular": self.angular.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> TractionRealizationMap:
        check_schema(data, REALIZATION_SCHEMA)
        geometry = _geometry_from_dict(data)
        return cls(
            geometry,
            np.asarray(data["linear"], dtype=np.float64).reshape(geometry.shape),
            np.asarray(data["angular"], dtype=np.float64).reshape(geometry.shape),
        )


def check_schema(data: dict, schema: str) -> None:
    if data.get("schema") != schema:
        raise ValueError(f"expected schema {schema!r}, got {data.get('schema')!r}")
    if data.get("version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported {schema} version {data.get('version')!r}")


def _geometry_from_dict(data: dict) -> GridGeometry:
    return GridGeometry(
        int(data["height"]),
        int(data["width"]),
        float(data.get("cell_size", 1.0)),
        tuple(data.get("origin", (0.0, 0.0))),
    )


def sample_realizations(
    dist_map: TractionDistributionMap, rng: np.random.Generator, count: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` realizations as ``(count, H, W)`` linear and angular arrays.

    Each cell draws a bin by its probability and takes the bin center; unknown
    cells are zero in every draw.
    """
    from ._kernels import draw_centers

    h, w = dist_map.shape
    u = rng.random((2, count, h, w))
    known = np.ascontiguousarray(dist_map.known)
    lin = draw_centers(np.ascontiguousarray(dist_map.linear), known, u[0])
    ang = draw_centers(np.ascontiguousarray(dist_map.angular), known, u[1])
    return lin, ang


def sample_realization(
    dist_map: TractionDistributionMap, rng: np.random.Generator
) -> TractionRealizationMap:
    lin, ang = sample_realizations(dist_map, rng, 1)
    return TractionRealizationMap(dist_map.geometry, lin[0], ang[0])


def _cvar_grid(probs: np.ndarray, alpha: float) -> np.ndarray:
    b = probs.shape[-1]
    before = np.cumsum(probs, axis=-1) - probs
    taken = np.clip(alpha - before, 0.0, probs)
    return taken @ bin_centers(b) / alpha


def cvar_traction_map(dist_map: TractionDistributionMap, alpha: float) -> TractionRealizationMap:
    """Per-cell worst-case expected traction; ``alpha = 1`` gives the mean map."""
    _check_alpha(alpha)
    lin = np.where(dist_map.known, _cvar_grid(dist_map.linear, alpha), 0.0)
    ang = np.where(dist_map.known, _cvar_grid(dist_map.angular, alpha), 0.0)
    return TractionRealizationMap(dist_map.geometry, np.clip(lin, 0, 1), np.clip(ang, 0, 1))


def nominal_traction_map(dist_map: TractionDistributionMap, traction: float = 1.0):
    """Fixed traction on every known cell (``1.0`` is the no-slip assumption)."""
    value = np.where(dist_map.known, float(traction), 0.0)
    return TractionRealizationMap(dist_map.geometry, value, value.copy())


def save_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj.to_dict()))


def load_distribution_map(path: str | Path) -> TractionDistributionMap:
    return TractionDistributionMap.from_dict(json.loads(Path(path).read_text()))
