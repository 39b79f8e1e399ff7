"""Panel-based Gauss-Legendre quadrature helpers.

All singular integrals in this package reduce to smooth 1-D or 2-D
integrals after a polar / radial transformation; these helpers supply the
panel layouts and the order-refinement loop used by those reductions.
"""

from __future__ import annotations

import functools

import numpy as np


@functools.lru_cache(maxsize=None)
def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule over the panels defined by ``edges``.

    Returns flat arrays of nodes and weights covering [edges[0], edges[-1]].
    """
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_rule(order)
    lo = edges[:-1]
    hi = edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def uniform_edges(a: float, b: float, n_panels: int) -> np.ndarray:
    return np.linspace(a, b, n_panels + 1)


def geometric_edges(a: float, b: float, n_panels: int, floor: float) -> np.ndarray:
    """Panel edges on [a, b] graded geometrically toward ``a``.

    The panel closest to ``a`` has width ``floor``; widths grow by a fixed
    ratio toward ``b``. Used to resolve endpoint singularities / boundary
    layers at ``a``.
    """
    if floor <= 0 or floor >= b - a:
        raise ValueError("floor must lie in (0, b - a)")
    # edges at a + floor * r^k with r chosen so the last edge lands on b
    ratio = (float(b - a) / floor) ** (1.0 / n_panels)
    offsets = floor * ratio ** np.arange(n_panels)
    edges = np.concatenate(([a], a + offsets))
    edges[-1] = b
    return edges


def integrate_refined(
    value_fn,
    tol: float = 1e-7,
    orders: tuple[int, ...] = (8, 12, 16, 24, 32, 48),
) -> tuple[float, float]:
    """Evaluate ``value_fn(order)`` at increasing Gauss orders until two
    successive estimates agree to relative tolerance ``tol``.

    Returns (value, estimated relative error). Raises ``RuntimeError`` if the
    sequence does not settle.
    """
    prev = value_fn(orders[0])
    for order in orders[1:]:
        cur = value_fn(order)
        scale = max(abs(cur), abs(prev), 1e-300)
        rel = abs(cur - prev) / scale
        if rel <= tol:
            return cur, rel
        prev = cur
    raise RuntimeError(f"quadrature did not converge to rel tol {tol:g}")


def tensor_panel_rule(
    bounds: list[tuple[float, float]], panels_per_axis: int, order: int
) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product composite Gauss rule over a box.

    Returns nodes of shape (npts, ndim) and flat weights. For ``bounds`` of
    length zero returns a single node (the empty product) with weight 1.
    """
    if not bounds:
        return np.zeros((1, 0)), np.ones(1)
    axes = []
    wls = []
    for lo, hi in bounds:
        n, w = panel_rule(uniform_edges(lo, hi, panels_per_axis), order)
        axes.append(n)
        wls.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = wls[0]
    for w in wls[1:]:
        weights = np.multiply.outer(weights, w)
    return nodes, weights.ravel()
