"""Finite-difference stencils on the uniform velocity lattice.

Interior points use centered differences; the truncation boundary is
closed with one-sided stencils of matching order.  Gradients act on the
trailing (velocity) axes of sample arrays, so fields batched over spatial
nodes are handled transparently.
"""

from __future__ import annotations

import numpy as np


def gradient_axis(f: np.ndarray, axis: int, h: float,
                  order: int = 2) -> np.ndarray:
    """d/dv along one axis; centered interior, one-sided at the boundary."""
    f = np.moveaxis(f, axis, 0)
    g = np.empty_like(f)
    if order == 2:
        g[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
        g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
        g[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    elif order == 4:
        g[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
        for i in (0, 1):
            g[i] = (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2]
                    + 16.0 * f[i + 3] - 3.0 * f[i + 4]) / (12.0 * h)
            g[-1 - i] = (25.0 * f[-1 - i] - 48.0 * f[-2 - i]
                         + 36.0 * f[-3 - i] - 16.0 * f[-4 - i]
                         + 3.0 * f[-5 - i]) / (12.0 * h)
    else:
        raise ValueError(f"unsupported stencil order {order}")
    return np.moveaxis(g, 0, axis)


def velocity_gradient(f: np.ndarray, n_vel_axes: int, h: float,
                      order: int = 2) -> list:
    """Gradient along every velocity axis (the trailing n_vel_axes axes)."""
    nd = f.ndim
    return [gradient_axis(f, nd - n_vel_axes + k, h, order)
            for k in range(n_vel_axes)]


def velocity_divergence(components: list, n_vel_axes: int, h: float,
                        order: int = 2) -> np.ndarray:
    """Divergence of a velocity vector field given per-axis components."""
    nd = components[0].ndim
    out = np.zeros_like(components[0])
    for k, comp in enumerate(components):
        out += gradient_axis(comp, nd - n_vel_axes + k, h, order)
    return out
