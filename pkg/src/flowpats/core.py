"""Flow domain types and distance primitives.

A geographical flow is an ordered origin-destination pair of planar points,
treated as a single object in the four-dimensional product of the origin
plane and the destination plane.  This module holds the data model (points,
flows, datasets, distance configuration) and the exact pairwise machinery
that everything else builds on.

All types are immutable after construction and all operations are pure, so
they are safe to use from multiple threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "LABEL_AGGREGATED",
    "LABEL_NOISE",
    "LABEL_BACKGROUND",
    "LABEL_UNLABELED",
    "VALID_LABELS",
    "InvalidInputError",
    "InvalidParameterError",
    "UnsupportedMetricError",
    "InsufficientDataError",
    "DegenerateIntensityError",
    "GenerationError",
    "PlanePoint",
    "Flow",
    "DistanceSpec",
    "MANHATTAN_MAX",
    "EUCLIDEAN_MAX",
    "PlaneBounds",
    "FlowDomain",
    "UNIT_DOMAIN",
    "FlowDataset",
    "point_distance",
    "flow_distance",
    "pairwise_distances",
    "distances_from",
    "count_within",
    "sphere_volume",
]

LABEL_AGGREGATED = "aggregated"
LABEL_NOISE = "noise"
LABEL_BACKGROUND = "background"
LABEL_UNLABELED = "unlabeled"
VALID_LABELS = frozenset(
    {LABEL_AGGREGATED, LABEL_NOISE, LABEL_BACKGROUND, LABEL_UNLABELED}
)

_POINT_METRICS = ("manhattan", "euclidean")
_COMBINATORS = ("max", "additive")


class InvalidInputError(ValueError):
    """User-supplied data violates a documented invariant."""


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its legal range."""


class UnsupportedMetricError(ValueError):
    """The requested quantity has no closed form under this metric."""


class InsufficientDataError(ValueError):
    """The dataset is too small for the requested statistic."""


class DegenerateIntensityError(ValueError):
    """All nearest-neighbour distances vanish, so intensity is undefined."""


class GenerationError(RuntimeError):
    """A synthetic-data request cannot be satisfied by the chosen layout."""


@dataclass(frozen=True)
class PlanePoint:
    """A point in one of the two coordinate planes."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError(
                f"coordinates must be finite, got ({self.x}, {self.y})"
            )


@dataclass(frozen=True)
class Flow:
    """An origin-destination pair.  Zero-length flows are legal input."""

    origin: PlanePoint
    destination: PlanePoint


@dataclass(frozen=True)
class DistanceSpec:
    """Distance configuration: a point metric plus a flow combinator.

    ``point_metric`` is ``"manhattan"`` or ``"euclidean"``; ``combinator``
    is ``"max"`` (the larger of the origin-pair and destination-pair
    distances) or ``"additive"`` (their weighted sum).  The additive
    weights must be non-negative and sum to one; they are ignored under
    ``"max"``.
    """

    point_metric: str = "manhattan"
    combinator: str = "max"
    weight_origin: float = 0.5
    weight_destination: float = 0.5

    def __post_init__(self) -> None:
        if self.point_metric not in _POINT_METRICS:
            raise InvalidParameterError(
                f"unknown point metric {self.point_metric!r}; "
                f"expected one of {_POINT_METRICS}"
            )
        if self.combinator not in _COMBINATORS:
            raise InvalidParameterError(
                f"unknown combinator {self.combinator!r}; "
                f"expected one of {_COMBINATORS}"
            )
        if self.combinator == "additive":
            w_o, w_d = self.weight_origin, self.weight_destination
            if w_o < 0 or w_d < 0 or abs(w_o + w_d - 1.0) > 1e-9:
                raise InvalidParameterError(
                    "additive weights must be non-negative and sum to 1, "
                    f"got ({w_o}, {w_d})"
                )


MANHATTAN_MAX = DistanceSpec("manhattan", "max")
EUCLIDEAN_MAX = DistanceSpec("euclidean", "max")


@dataclass(frozen=True)
class PlaneBounds:
    """Axis-aligned bounding box of one coordinate plane."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self) -> None:
        values = (self.min_x, self.min_y, self.max_x, self.max_y)
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError("bounds must be finite")
        if self.max_x < self.min_x or self.max_y < self.min_y:
            raise InvalidInputError("bounds must satisfy min <= max")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def area(self) -> float:
        return self.width * self.height

    def diameter(self, metric: str = "manhattan") -> float:
        """Largest point-pair distance inside the box under ``metric``."""
        if metric == "manhattan":
            return self.width + self.height
        return math.hypot(self.width, self.height)

    def contains(self, x, y) -> bool:
        return bool(
            np.all(x >= self.min_x)
            and np.all(x <= self.max_x)
            and np.all(y >= self.min_y)
            and np.all(y <= self.max_y)
        )


@dataclass(frozen=True)
class FlowDomain:
    """Bounding boxes of the origin plane and the destination plane."""

    origin: PlaneBounds
    destination: PlaneBounds

    @property
    def volume(self) -> float:
        """Product of the two plane areas."""
        return self.origin.area * self.destination.area

    def diameter(self, spec: DistanceSpec = MANHATTAN_MAX) -> float:
        """Largest possible flow distance inside the domain."""
        d_o = self.origin.diameter(spec.point_metric)
        d_d = self.destination.diameter(spec.point_metric)
        if spec.combinator == "max":
            return max(d_o, d_d)
        return spec.weight_origin * d_o + spec.weight_destination * d_d


UNIT_DOMAIN = FlowDomain(PlaneBounds(0.0, 0.0, 1.0, 1.0), PlaneBounds(0.0, 0.0, 1.0, 1.0))


class FlowDataset:
    """An immutable collection of flows with dense integer ids ``0..n-1``.

    Parameters
    ----------
    coords : array-like, shape (n, 4)
        Columns are origin x, origin y, destination x, destination y.
    labels : sequence of str, optional
        One category per flow, each in :data:`VALID_LABELS`.
    domain : FlowDomain, optional
        Bounding domain of the two planes.  Defaults to the tight bounds
        of the data.  Must contain every endpoint.
    """

    def __init__(self, coords, labels=None, domain: Optional[FlowDomain] = None):
        arr = np.array(coords, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise InvalidInputError(
                f"coords must have shape (n, 4), got {arr.shape}"
            )
        if arr.shape[0] == 0:
            raise InvalidInputError("a dataset needs at least one flow")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("coordinates must be finite")
        arr.setflags(write=False)
        self._coords = arr

        if labels is not None:
            lab = np.array(list(labels), dtype="U16")
            if lab.shape != (arr.shape[0],):
                raise InvalidInputError(
                    f"expected {arr.shape[0]} labels, got {lab.shape}"
                )
            bad = set(lab.tolist()) - VALID_LABELS
            if bad:
                raise InvalidInputError(f"unknown labels: {sorted(bad)}")
            lab.setflags(write=False)
        else:
            lab = None
        self._labels = lab

        if domain is None:
            domain = FlowDomain(
                PlaneBounds(
                    float(arr[:, 0].min()), float(arr[:, 1].min()),
                    float(arr[:, 0].max()), float(arr[:, 1].max()),
                ),
                PlaneBounds(
                    float(arr[:, 2].min()), float(arr[:, 3].min()),
                    float(arr[:, 2].max()), float(arr[:, 3].max()),
                ),
            )
        else:
            if not (
                domain.origin.contains(arr[:, 0], arr[:, 1])
                and domain.destination.contains(arr[:, 2], arr[:, 3])
            ):
                raise InvalidInputError("domain does not contain all endpoints")
        self._domain = domain

    @classmethod
    def from_flows(
        cls,
        flows: Iterable[Flow],
        labels: Optional[Sequence[str]] = None,
        domain: Optional[FlowDomain] = None,
    ) -> "FlowDataset":
        coords = [
            (f.origin.x, f.origin.y, f.destination.x, f.destination.y)
            for f in flows
        ]
        return cls(coords, labels=labels, domain=domain)

    def __len__(self) -> int:
        return self._coords.shape[0]

    @property
    def n(self) -> int:
        return self._coords.shape[0]

    @property
    def coords(self) -> np.ndarray:
        """Read-only (n, 4) coordinate array."""
        return self._coords

    @property
    def ox(self) -> np.ndarray:
        return self._coords[:, 0]

    @property
    def oy(self) -> np.ndarray:
        return self._coords[:, 1]

    @property
    def dx(self) -> np.ndarray:
        return self._coords[:, 2]

    @property
    def dy(self) -> np.ndarray:
        return self._coords[:, 3]

    @property
    def labels(self) -> Optional[np.ndarray]:
        return self._labels

    @property
    def domain(self) -> FlowDomain:
        return self._domain

    def flow(self, i: int) -> Flow:
        self.check_id(i)
        ox, oy, dx, dy = self._coords[i]
        return Flow(PlanePoint(ox, oy), PlanePoint(dx, dy))

    def check_id(self, i: int) -> None:
        if not (isinstance(i, (int, np.integer)) and 0 <= i < self.n):
            raise InvalidInputError(f"flow id {i!r} out of range [0, {self.n})")

    def __repr__(self) -> str:
        labelled = "labelled" if self._labels is not None else "unlabelled"
        return f"FlowDataset(n={self.n}, {labelled})"


def point_distance(a: PlanePoint, b: PlanePoint, metric: str = "manhattan") -> float:
    """Distance between two plane points under the given metric.

    The taxicab ("manhattan") form is ``|ax - bx| + |ay - by|``.
    """
    if metric not in _POINT_METRICS:
        raise InvalidParameterError(f"unknown point metric {metric!r}")
    dx = abs(a.x - b.x)
    dy = abs(a.y - b.y)
    if metric == "manhattan":
        return dx + dy
    return math.hypot(dx, dy)


def flow_distance(f: Flow, g: Flow, spec: DistanceSpec = MANHATTAN_MAX) -> float:
    """Distance between two flows: combine the origin-pair and
    destination-pair point distances according to ``spec``."""
    d_o = point_distance(f.origin, g.origin, spec.point_metric)
    d_d = point_distance(f.destination, g.destination, spec.point_metric)
    if spec.combinator == "max":
        return max(d_o, d_d)
    return spec.weight_origin * d_o + spec.weight_destination * d_d


def _plane_pairwise(x: np.ndarray, y: np.ndarray, metric: str) -> np.ndarray:
    dx = np.abs(x[:, None] - x[None, :])
    dy = np.abs(y[:, None] - y[None, :])
    if metric == "manhattan":
        return dx + dy
    return np.hypot(dx, dy)


def _combine(d_o: np.ndarray, d_d: np.ndarray, spec: DistanceSpec) -> np.ndarray:
    if spec.combinator == "max":
        return np.maximum(d_o, d_d)
    return spec.weight_origin * d_o + spec.weight_destination * d_d


def pairwise_distances(
    dataset: FlowDataset, spec: DistanceSpec = MANHATTAN_MAX
) -> np.ndarray:
    """Full (n, n) flow-distance matrix.  Exact, no approximation."""
    d_o = _plane_pairwise(dataset.ox, dataset.oy, spec.point_metric)
    d_d = _plane_pairwise(dataset.dx, dataset.dy, spec.point_metric)
    return _combine(d_o, d_d, spec)


def distances_from(
    dataset: FlowDataset, i: int, spec: DistanceSpec = MANHATTAN_MAX
) -> np.ndarray:
    """Distances from flow ``i`` to every flow (including itself)."""
    dataset.check_id(i)
    metric = spec.point_metric
    if metric == "manhattan":
        d_o = np.abs(dataset.ox - dataset.ox[i]) + np.abs(dataset.oy - dataset.oy[i])
        d_d = np.abs(dataset.dx - dataset.dx[i]) + np.abs(dataset.dy - dataset.dy[i])
    else:
        d_o = np.hypot(dataset.ox - dataset.ox[i], dataset.oy - dataset.oy[i])
        d_d = np.hypot(dataset.dx - dataset.dx[i], dataset.dy - dataset.dy[i])
    return _combine(d_o, d_d, spec)


def count_within(
    dataset: FlowDataset, i: int, r: float, spec: DistanceSpec = MANHATTAN_MAX
) -> int:
    """Number of flows ``j != i`` with flow distance to ``i`` at most ``r``.

    The comparison is a sharp ``<=`` in full double precision; duplicate
    flows sit at distance zero and are counted.
    """
    if not (r >= 0.0):
        raise InvalidParameterError(f"radius must be non-negative, got {r}")
    row = distances_from(dataset, i, spec)
    # the self-distance is exactly 0.0, so it always passes the test
    return int(np.count_nonzero(row <= r)) - 1


def sphere_volume(radius: float, spec: DistanceSpec = MANHATTAN_MAX) -> float:
    """Volume of a flow-space ball of the given radius: ``4 * radius**4``.

    The closed form holds only for the taxicab point metric with the max
    combinator, where the ball is the product of two taxicab disks of area
    ``2 * radius**2`` each.
    """
    if spec.point_metric != "manhattan" or spec.combinator != "max":
        raise UnsupportedMetricError(
            "flow-sphere volume has a closed form only for the "
            "manhattan/max distance"
        )
    if not (radius >= 0.0):
        raise InvalidParameterError(f"radius must be non-negative, got {radius}")
    return 4.0 * radius**4
