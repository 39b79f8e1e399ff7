"""Device domains, distances, power-law path loss, and the singular
integral of ||z||^-alpha over the domain.

Domains are origin-centered axis-aligned boxes (any dimension) or
origin-centered disks (dimension 2). The position reference measure used
throughout the package is Lebesgue measure normalized to total mass one on
the domain; ``volume`` is the unnormalized Lebesgue volume, which is what
the singular integral is taken against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, SingularityError
from .quadrature import (
    geometric_edges,
    integrate_refined,
    panel_rule,
    tensor_panel_rule,
)

# panels graded toward the origin; the innermost cell is closed in polar form
_RADIAL_PANELS = 56
_RADIAL_FLOOR_SCALE = 2.0 ** -54


@dataclass(frozen=True)
class Box:
    """Axis-aligned cube [-side/2, side/2]^dim centered at the origin."""

    dim: int
    side: float

    def __post_init__(self):
        if self.dim < 1 or int(self.dim) != self.dim:
            raise ValueError("dim must be a positive integer")
        if self.side <= 0:
            raise ValueError("side must be positive")

    @property
    def volume(self) -> float:
        return self.side ** self.dim

    @property
    def shape(self) -> str:
        return "box"

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all(np.abs(pts) <= self.side / 2 + 1e-12, axis=1)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(-self.side / 2, self.side / 2, size=(n, self.dim))

    def spatial_grid(self, n_cells: int) -> "SpatialGrid":
        per_axis = round(n_cells ** (1.0 / self.dim))
        if per_axis ** self.dim != n_cells:
            raise ValueError(
                f"n_cells={n_cells} is not a perfect {self.dim}-th power, "
                "required for a regular box grid"
            )
        return _BoxGrid(self, per_axis)


@dataclass(frozen=True)
class Disk:
    """Disk of given radius centered at the origin (dimension 2 only)."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return 2

    @property
    def volume(self) -> float:
        return np.pi * self.radius ** 2

    @property
    def shape(self) -> str:
        return "disk"

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.einsum("ij,ij->i", pts, pts) <= self.radius ** 2 * (1 + 1e-12)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # radius via sqrt of a uniform, angle uniform
        r = self.radius * np.sqrt(rng.uniform(size=n))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.column_stack((r * np.cos(theta), r * np.sin(theta)))

    def spatial_grid(self, n_cells: int) -> "SpatialGrid":
        per_axis = round(np.sqrt(n_cells))
        if per_axis * per_axis != n_cells:
            raise ValueError(
                f"n_cells={n_cells} is not a perfect square, required for a "
                "regular polar grid on a disk"
            )
        return _PolarGrid(self, per_axis, per_axis)


Domain = Box | Disk


def unit_area_disk() -> Disk:
    return Disk(radius=1.0 / np.sqrt(np.pi))


def distance(p, q) -> float:
    """Euclidean distance; raises on dimension mismatch."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return float(np.sqrt(np.sum((p - q) ** 2)))


def path_loss(r, alpha: float):
    """Power-law attenuation r^-alpha; rejects r = 0.

    Accepts scalars or arrays. Coincident points must be handled by the
    caller; a zero distance is a modeling singularity, not a number.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise SingularityError("path loss is undefined at distance 0")
    out = r_arr ** (-alpha)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# singular integral of ||z||^-alpha


def q_alpha(domain: Domain, alpha: float, tol: float = 1e-7) -> float:
    """Integral of ||z||^-alpha over the domain (unnormalized Lebesgue).

    The radial direction is integrated in polar form, which turns the origin
    singularity into an integrable endpoint; panels graded toward the origin
    are refined in Gauss order until successive estimates agree to ``tol``.
    Requires alpha < dim (the origin lies inside every supported domain).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if alpha >= domain.dim:
        raise DivergenceError(
            f"integral of ||z||^-alpha diverges for alpha={alpha} >= dim={domain.dim}"
        )
    if isinstance(domain, Disk):
        return _q_alpha_radial(domain.radius, 2, alpha, 2.0 * np.pi, tol)
    if domain.dim == 1:
        return _q_alpha_radial(domain.side / 2.0, 1, alpha, 2.0, tol)
    value, _ = integrate_refined(
        lambda order: _rect_power_integral(
            np.full(domain.dim, -domain.side / 2),
            np.full(domain.dim, domain.side / 2),
            alpha,
            order,
        ),
        tol=tol,
    )
    return value


def _q_alpha_radial(rmax: float, dim: int, alpha: float, surface: float, tol: float) -> float:
    """Radial reduction surface * int_0^rmax r^(dim-1-alpha) dr.

    The innermost cell [0, floor] is taken in closed polar form; the rest is
    integrated on geometrically graded panels.
    """
    floor = rmax * _RADIAL_FLOOR_SCALE
    core = surface * floor ** (dim - alpha) / (dim - alpha)
    edges = geometric_edges(0.0, rmax, _RADIAL_PANELS, floor)[1:]

    def value_fn(order: int) -> float:
        r, w = panel_rule(edges, order)
        return core + surface * float(np.sum(w * r ** (dim - 1 - alpha)))

    value, _ = integrate_refined(value_fn, tol=tol)
    return value


def rect_power_integral(lo, hi, alpha: float, tol: float = 1e-8) -> float:
    """Integral of ||z||^-alpha over an axis-aligned rectangle [lo, hi].

    Works with the origin inside, outside, or on the boundary of the
    rectangle (alpha < dim when the origin is inside or on the boundary).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ValueError("lo and hi must be 1-D arrays of equal length")
    if np.any(hi <= lo):
        raise ValueError("rectangle must have positive extent on every axis")
    dim = lo.size
    inside = np.all(lo <= 0) and np.all(hi >= 0)
    if inside and alpha >= dim:
        raise DivergenceError(
            f"integral of ||z||^-alpha diverges for alpha={alpha} >= dim={dim}"
        )
    value, _ = integrate_refined(
        lambda order: _rect_power_integral(lo, hi, alpha, order), tol=tol
    )
    return value


def _rect_power_integral(lo: np.ndarray, hi: np.ndarray, alpha: float, order: int) -> float:
    # divergence identity: div(z ||z||^-alpha) = (dim - alpha) ||z||^-alpha,
    # so the volume integral equals the boundary flux / (dim - alpha); the
    # flux integrand is smooth on every face not containing the origin, and
    # vanishes identically on faces through the origin.
    dim = lo.size
    total = 0.0
    for axis in range(dim):
        for coord, sign in ((hi[axis], 1.0), (lo[axis], -1.0)):
            if coord == 0.0:
                continue
            bounds = [(lo[k], hi[k]) for k in range(dim) if k != axis]
            pts, w = tensor_panel_rule(bounds, panels_per_axis=8, order=order)
            z = np.empty((pts.shape[0], dim))
            cols = [k for k in range(dim) if k != axis]
            z[:, cols] = pts
            z[:, axis] = coord
            norms = np.sqrt(np.einsum("ij,ij->i", z, z))
            total += sign * coord * float(np.sum(w * norms ** (-alpha)))
    return total / (dim - alpha)


# ---------------------------------------------------------------------------
# spatial grids (used by the product partitions)


class SpatialGrid:
    """Disjoint cells covering a domain, with exact volumes and
    representative points."""

    n_cells: int
    volumes: np.ndarray
    centers: np.ndarray

    def locate(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def refine(self, factor: int) -> "SpatialGrid":
        raise NotImplementedError

    def parent_of(self) -> np.ndarray:
        """Map from this grid's cells to the parent cells (refined grids)."""
        raise NotImplementedError


class _BoxGrid(SpatialGrid):
    def __init__(self, box: Box, per_axis: int):
        self.domain = box
        self.per_axis = per_axis
        self.n_cells = per_axis ** box.dim
        width = box.side / per_axis
        self.volumes = np.full(self.n_cells, width ** box.dim)
        axes = -box.side / 2 + width * (np.arange(per_axis) + 0.5)
        mesh = np.meshgrid(*([axes] * box.dim), indexing="ij")
        self.centers = np.stack([m.ravel() for m in mesh], axis=-1)

    def locate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        width = self.domain.side / self.per_axis
        idx = np.floor((pts + self.domain.side / 2) / width).astype(int)
        idx = np.clip(idx, 0, self.per_axis - 1)
        flat = np.zeros(len(pts), dtype=int)
        for k in range(self.domain.dim):
            flat = flat * self.per_axis + idx[:, k]
        return flat

    def refine(self, factor: int) -> "_BoxGrid":
        return _BoxGrid(self.domain, self.per_axis * factor)

    def __eq__(self, other):
        return (
            isinstance(other, _BoxGrid)
            and other.domain == self.domain
            and other.per_axis == self.per_axis
        )

    def __hash__(self):
        return hash(("box-grid", self.domain, self.per_axis))


class _PolarGrid(SpatialGrid):
    """Equal-area polar grid on a disk: n_r radial rings x n_t sectors."""

    def __init__(self, disk: Disk, n_r: int, n_t: int):
        self.domain = disk
        self.n_r = n_r
        self.n_t = n_t
        self.n_cells = n_r * n_t
        self.volumes = np.full(self.n_cells, disk.volume / self.n_cells)
        # ring edges at equal-area radii
        self.r_edges = disk.radius * np.sqrt(np.arange(n_r + 1) / n_r)
        r_mid = np.sqrt(0.5 * (self.r_edges[:-1] ** 2 + self.r_edges[1:] ** 2))
        t_mid = 2 * np.pi * (np.arange(n_t) + 0.5) / n_t
        rr, tt = np.meshgrid(r_mid, t_mid, indexing="ij")
        self.centers = np.stack(
            [(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=-1
        )

    def locate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        r = np.sqrt(np.einsum("ij,ij->i", pts, pts))
        theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
        ring = np.clip(
            np.floor(self.n_r * (r / self.domain.radius) ** 2).astype(int), 0, self.n_r - 1
        )
        sector = np.clip(
            np.floor(self.n_t * theta / (2 * np.pi)).astype(int), 0, self.n_t - 1
        )
        return ring * self.n_t + sector

    def refine(self, factor: int) -> "_PolarGrid":
        return _PolarGrid(self.domain, self.n_r * factor, self.n_t * factor)

    def __eq__(self, other):
        return (
            isinstance(other, _PolarGrid)
            and other.domain == self.domain
            and (other.n_r, other.n_t) == (self.n_r, self.n_t)
        )

    def __hash__(self):
        return hash(("polar-grid", self.domain, self.n_r, self.n_t))
