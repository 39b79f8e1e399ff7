"""Product partitions of domain x mark space, empirical and reference
measures on them, relative entropy, coarsening, and sup deviation.

The mark axis is cut into ``n_m`` intervals covering (0, t_mark] plus one
unbounded tail. By default the cut points are exponential quantiles so all
``n_m + 1`` mark bins carry equal reference probability, which keeps the
reference measure uniform and the relative entropy well conditioned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import PartitionMismatchError
from .geometry import Domain, SpatialGrid
from .pointprocess import ExponentialMarks, MarkedConfiguration
from .sinr_graph import SinrGraph


@dataclass(frozen=True)
class ProductPartition:
    """Spatial grid times mark intervals; bin b = cell * n_mark_bins + interval."""

    grid: SpatialGrid
    mark_edges: np.ndarray  # increasing, starts at 0, ends at +inf
    mark_law: ExponentialMarks

    def __post_init__(self):
        edges = np.asarray(self.mark_edges, dtype=float)
        if edges[0] != 0.0 or not np.isinf(edges[-1]) or np.any(np.diff(edges) <= 0):
            raise ValueError("mark edges must increase from 0 to +inf")
        edges.setflags(write=False)
        object.__setattr__(self, "mark_edges", edges)

    @classmethod
    def build(
        cls,
        domain: Domain,
        mark_law: ExponentialMarks,
        n_spatial: int,
        n_mark: int,
        t_mark: float | None = None,
    ) -> "ProductPartition":
        """n_spatial grid cells x (n_mark intervals on (0, t_mark] + tail).

        With ``t_mark`` omitted the cut points are the j/(n_mark+1)
        exponential quantiles (all mark bins equally likely); an explicit
        ``t_mark`` is split into n_mark equal-conditional-probability
        intervals.
        """
        if n_mark < 1:
            raise ValueError("n_mark must be at least 1")
        grid = domain.spatial_grid(n_spatial)
        if t_mark is None:
            probs = np.arange(1, n_mark + 1) / (n_mark + 1)
        else:
            if t_mark <= 0:
                raise ValueError("t_mark must be positive")
            p_t = mark_law.cdf(t_mark)
            probs = p_t * np.arange(1, n_mark + 1) / n_mark
        inner = np.array([mark_law.quantile(p) for p in probs])
        edges = np.concatenate(([0.0], inner, [np.inf]))
        return cls(grid=grid, mark_edges=edges, mark_law=mark_law)

    @property
    def n_mark_bins(self) -> int:
        return len(self.mark_edges) - 1

    @property
    def n_bins(self) -> int:
        return self.grid.n_cells * self.n_mark_bins

    def locate(self, positions: np.ndarray, marks: np.ndarray) -> np.ndarray:
        cells = self.grid.locate(positions)
        intervals = np.searchsorted(self.mark_edges, marks, side="left") - 1
        intervals = np.clip(intervals, 0, self.n_mark_bins - 1)
        return cells * self.n_mark_bins + intervals

    def bin_labels(self) -> list[tuple[int, int]]:
        return [
            (cell, m)
            for cell in range(self.grid.n_cells)
            for m in range(self.n_mark_bins)
        ]

    def representatives(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-bin representative (position, mark) used for kernel
        evaluation: spatial cell center and conditional mark mean."""
        mark_reps = np.array(
            [
                self.mark_law.interval_mean(self.mark_edges[k], self.mark_edges[k + 1])
                for k in range(self.n_mark_bins)
            ]
        )
        pos = np.repeat(self.grid.centers, self.n_mark_bins, axis=0)
        marks = np.tile(mark_reps, self.grid.n_cells)
        return pos, marks

    def __eq__(self, other):
        return (
            isinstance(other, ProductPartition)
            and self.grid == other.grid
            and np.array_equal(self.mark_edges, other.mark_edges)
            and self.mark_law == other.mark_law
        )

    def __hash__(self):
        return hash((self.grid, tuple(self.mark_edges), self.mark_law))


def _check_same_partition(a, b):
    if a.partition != b.partition:
        raise PartitionMismatchError("measures live on different partitions")


@dataclass(frozen=True)
class BinnedMeasure:
    partition: object
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @property
    def total(self) -> float:
        return float(np.sum(self.masses))


@dataclass(frozen=True)
class BinnedPairMeasure:
    partition: object
    masses: np.ndarray  # (n, n), symmetric

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("pair masses must be a square matrix")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        if not np.array_equal(m, m.T):
            raise ValueError("pair masses must be symmetric")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @property
    def total(self) -> float:
        return float(np.sum(self.masses))


# ---------------------------------------------------------------------------
# empirical and reference measures


def empirical_mark_measure(
    config: MarkedConfiguration, partition: ProductPartition
) -> BinnedMeasure:
    """Point/mark histogram scaled by 1/lambda; total mass n / lambda."""
    masses = np.zeros(partition.n_bins)
    if config.n_points:
        bins = partition.locate(config.positions, config.marks)
        masses = np.bincount(bins, minlength=partition.n_bins).astype(float)
    return BinnedMeasure(partition, masses / config.lam)


def empirical_pair_measure(
    graph: SinrGraph, partition: ProductPartition
) -> BinnedPairMeasure:
    """Symmetric edge-endpoint histogram scaled by 1/lambda^2.

    Each edge contributes both orders, so the total mass is
    2 |E| / lambda^2.
    """
    config = graph.config
    n_bins = partition.n_bins
    masses = np.zeros((n_bins, n_bins))
    if graph.n_edges:
        bins = partition.locate(config.positions, config.marks)
        bi = bins[graph.edges[:, 0]]
        bj = bins[graph.edges[:, 1]]
        flat = np.bincount(bi * n_bins + bj, minlength=n_bins * n_bins).astype(float)
        flat += np.bincount(bj * n_bins + bi, minlength=n_bins * n_bins)
        masses = flat.reshape(n_bins, n_bins)
    return BinnedPairMeasure(partition, masses / config.lam ** 2)


def diagonal_empirical_measure(
    config: MarkedConfiguration, partition: ProductPartition
) -> BinnedPairMeasure:
    """Diagonal companion of the pair measure: (1/lambda^2) sum of
    delta_(point, point). Carries the self-pair bookkeeping of the
    likelihood expansion."""
    n_bins = partition.n_bins
    masses = np.zeros((n_bins, n_bins))
    if config.n_points:
        bins = partition.locate(config.positions, config.marks)
        counts = np.bincount(bins, minlength=n_bins).astype(float)
        masses[np.arange(n_bins), np.arange(n_bins)] = counts
    return BinnedPairMeasure(partition, masses / config.lam ** 2)


def reference_measure(partition: ProductPartition) -> BinnedMeasure:
    """Binned product of normalized volume and the mark law; total mass 1."""
    volumes = partition.grid.volumes / np.sum(partition.grid.volumes)
    mark_probs = np.array(
        [
            partition.mark_law.interval_prob(
                partition.mark_edges[k], partition.mark_edges[k + 1]
            )
            for k in range(partition.n_mark_bins)
        ]
    )
    masses = np.outer(volumes, mark_probs).ravel()
    return BinnedMeasure(partition, masses)


# ---------------------------------------------------------------------------
# functionals


def relative_entropy(omega: BinnedMeasure, rho: BinnedMeasure) -> float:
    """Sum of omega * log(omega / rho) with 0 log 0 = 0; +inf when omega
    puts mass where rho has none."""
    _check_same_partition(omega, rho)
    w = omega.masses
    r = rho.masses
    pos = w > 0.0
    if np.any(r[pos] == 0.0):
        return np.inf
    return float(np.sum(w[pos] * np.log(w[pos] / r[pos])))


def coarsen(measure: BinnedMeasure, groups: list[list[int]]) -> BinnedMeasure:
    """Push the measure onto a coarser partition; groups must partition the
    bin index set. Total mass is preserved exactly up to float reordering."""
    n = len(measure.masses)
    seen = np.zeros(n, dtype=bool)
    for g in groups:
        for idx in g:
            if not 0 <= idx < n or seen[idx]:
                raise ValueError("groups must partition the bin index set")
            seen[idx] = True
    if not seen.all():
        raise ValueError("groups must cover every bin")
    masses = np.array([float(np.sum(measure.masses[list(g)])) for g in groups])
    token = ("coarse", measure.partition, tuple(tuple(g) for g in groups))
    return BinnedMeasure(token, masses)


def sup_deviation(a, b) -> float:
    """Max over bins of the absolute mass difference."""
    _check_same_partition(a, b)
    if a.masses.shape != b.masses.shape:
        raise PartitionMismatchError("measures have different bin counts")
    return float(np.max(np.abs(a.masses - b.masses))) if a.masses.size else 0.0


def tensor_product(omega: BinnedMeasure) -> BinnedPairMeasure:
    return BinnedPairMeasure(omega.partition, np.outer(omega.masses, omega.masses))


# ---------------------------------------------------------------------------
# CSV round trip


def save_measure_csv(measure: BinnedMeasure, path) -> None:
    part = measure.partition
    labels = (
        part.bin_labels()
        if isinstance(part, ProductPartition)
        else [(b, 0) for b in range(len(measure.masses))]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_id", "spatial_cell", "mark_interval", "mass"])
        for b, (cell, interval) in enumerate(labels):
            writer.writerow([b, cell, interval, repr(float(measure.masses[b]))])


def load_measure_csv(path, partition) -> BinnedMeasure:
    masses = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["bin_id", "spatial_cell", "mark_interval", "mass"]:
            raise ValueError("unexpected measure CSV header")
        for row in reader:
            masses.append(float(row[3]))
    expected = partition.n_bins if isinstance(partition, ProductPartition) else len(masses)
    if len(masses) != expected:
        raise ValueError(
            f"measure file has {len(masses)} bins, partition has {expected}"
        )
    return BinnedMeasure(partition, np.asarray(masses))


def save_pair_measure_csv(measure: BinnedPairMeasure, path) -> None:
    n = measure.masses.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_i", "bin_j", "mass"])
        for i in range(n):
            for j in range(i, n):
                writer.writerow([i, j, repr(float(measure.masses[i, j]))])


def load_pair_measure_csv(path, partition) -> BinnedPairMeasure:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["bin_i", "bin_j", "mass"]:
            raise ValueError("unexpected pair-measure CSV header")
        for row in reader:
            entries.append((int(row[0]), int(row[1]), float(row[2])))
    n = max(max(i, j) for i, j, _ in entries) + 1 if entries else 0
    if isinstance(partition, ProductPartition):
        n = max(n, partition.n_bins)
    masses = np.zeros((n, n))
    for i, j, v in entries:
        masses[i, j] = v
        masses[j, i] = v
    return BinnedPairMeasure(partition, masses)
