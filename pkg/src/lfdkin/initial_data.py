"""Regularized initial data and Gaussian-envelope bookkeeping.

The regularization at index n mixes a floor Gaussian into the mollified,
cut-off datum:

    f₀ⁿ = [ (1/n) e^(-(|x|²+|v|²)) + (f₀ * χⁿ) φⁿ ] / (1 + 2/n)

with χⁿ a phase-space mollifier of width 1/n (discretely: kernel samples
renormalized to unit lattice mass; it degenerates to the identity once
1/n falls below the grid spacing) and φⁿ a smooth radial plateau, 1 inside
radius n/2 and 0 beyond n.  The output is strictly inside (0, 1) with the
explicit floor f₀ⁿ ≥ e^(-(|x|²+|v|²))/(n+2).

Envelope checks measure the two-sided bound

    L = C₁ e^(-α(|x|²+|v|²)) ≤ f ≤ C₂ e^(-α..)/(1 + C₂ e^(-α..)) = U

whose constants are existential; fit_envelope finds least-squares
witnesses from the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import DensityField, FieldError, phase_radius_squared
from .kernel import bump
from .mean_field import lattice_convolve


@dataclass(frozen=True)
class EnvelopeSpec:
    """Decay rate and two-sided constants of the Gaussian envelope."""

    alpha: float
    c_lower: float
    c_upper: float

    def __post_init__(self):
        if self.alpha <= 0 or self.c_lower <= 0 or self.c_upper <= 0:
            raise FieldError("envelope constants must be positive")

    def lower(self, r2: np.ndarray) -> np.ndarray:
        return self.c_lower * np.exp(-self.alpha * r2)

    def upper(self, r2: np.ndarray) -> np.ndarray:
        e = self.c_upper * np.exp(-self.alpha * r2)
        return e / (1.0 + e)

    def consistency_report(self, r2: np.ndarray) -> dict:
        """Check 0 < L ≤ U < 1 numerically on the given radii."""
        lo, up = self.lower(r2), self.upper(r2)
        return {
            "ordered_fraction": float(np.mean(lo <= up)),
            "max_lower": float(lo.max()),
            "max_upper": float(up.max()),
            "upper_below_one": bool(up.max() < 1.0),
        }


def _phase_mollifier_samples(grid, n: int) -> np.ndarray | None:
    """χⁿ sampled on the phase displacement lattice, unit lattice mass.

    Returns None when the support 1/n does not reach past the first
    neighbor on any axis (the discrete mollification is the identity).
    """
    axes = []
    if not grid.homogeneous:
        dx = grid.spatial.spacing
        m = grid.spatial.points_per_axis
        axes += [dx * np.arange(-(m - 1), m)] * grid.spatial.dim
    h = grid.velocity.spacing
    m = grid.velocity.points_per_axis
    axes += [h * np.arange(-(m - 1), m)] * grid.velocity.dim
    width = 1.0 / n
    if all(width < ax[len(ax) // 2 + 1] for ax in axes):
        return None
    coords = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(sum(c * c for c in coords))
    k = bump(r * n)
    total = k.sum()
    if total == 0.0:
        return None
    return k / total


def regularize_initial_datum(f0: DensityField, n: int) -> DensityField:
    """Mix the floor Gaussian into the mollified, cut-off datum."""
    if n < 1:
        raise FieldError(f"regularization index must be >= 1, got {n}")
    if f0.pauli_min < 0.0 or f0.pauli_max > 1.0:
        raise FieldError("initial datum violates the Pauli bound [0, 1]")
    grid = f0.grid
    r2 = phase_radius_squared(grid)
    floor = np.exp(-r2)

    chi = _phase_mollifier_samples(grid, n)
    if chi is None:
        smooth = f0.samples.copy()
    else:
        ndim = f0.samples.ndim
        # unit-mass lattice kernel: plain sum, no h^N weight
        smooth = lattice_convolve(chi, f0.samples, 1.0, ndim, method="fft")
        smooth = np.clip(smooth, 0.0, 1.0)

    r = np.sqrt(r2)
    plateau = np.clip((float(n) - r) / (0.5 * n), 0.0, 1.0)
    plateau = plateau * plateau * (3.0 - 2.0 * plateau)  # smoothstep, 1 inside n/2

    samples = (floor / n + smooth * plateau) / (1.0 + 2.0 / n)
    return DensityField(grid=grid, samples=samples, time=f0.time)


def envelope_check(f: DensityField, env: EnvelopeSpec) -> dict:
    """Count nodes breaking L ≤ f ≤ U; pure measurement, no mutation."""
    r2 = phase_radius_squared(f.grid)
    lo = env.lower(r2)
    up = env.upper(r2)
    below = f.samples < lo
    above = f.samples > up
    margins = np.minimum(f.samples - lo, up - f.samples)
    return {
        "lower_violations": int(below.sum()),
        "upper_violations": int(above.sum()),
        "worst_margin": float(margins.min()),
    }


def fit_envelope(f: DensityField, inflation: float = 1.05) -> EnvelopeSpec:
    """Least-squares Gaussian-envelope witnesses for a positive field.

    log f is regressed against -α(|x|²+|v|²) for (α, C₁); with that α
    fixed, log(f/(1-f)) + α r² gives the intercept log C₂.  Nodes at
    exactly 0 or 1 are excluded.  The returned constants carry the margin
    inflation so envelope_check passes on the fitted input.
    """
    r2 = phase_radius_squared(f.grid).ravel()
    vals = f.samples.ravel()
    ok = (vals > 0.0) & (vals < 1.0)
    n_excluded = int((~ok).sum())
    if ok.sum() < 8:
        raise FieldError("too few strictly interior nodes to fit an envelope")
    r2f, vf = r2[ok], vals[ok]
    if float(np.ptp(r2f)) == 0.0:
        raise FieldError("degenerate fit: zero-variance radius regressor")
    logf = np.log(vf)
    slope, intercept = np.polyfit(r2f, logf, 1)
    if slope >= 0.0:
        raise FieldError("degenerate fit: field does not decay with radius")
    alpha = -slope
    c1 = np.exp(intercept)
    logit = np.log(vf) - np.log1p(-vf)
    c2 = np.exp(float(np.mean(logit + alpha * r2f)))

    # exact bounds the data demands at this alpha
    lo_need = float(np.min(vf * np.exp(alpha * r2f)))
    up_need = float(np.max(np.exp(logit + alpha * r2f)))
    # keep each regression constant when it already witnesses its side
    # (up to roundoff); otherwise inflate the exact bound by the margin
    if c1 <= lo_need * (1.0 + 1e-9):
        c1_final = c1 * (1.0 - 1e-9)
    else:
        c1_final = lo_need / inflation
    if c2 >= up_need * (1.0 - 1e-9):
        c2_final = c2 * (1.0 + 1e-9)
    else:
        c2_final = up_need * inflation
    return EnvelopeSpec(alpha=alpha, c_lower=c1_final, c_upper=c2_final)


def count_excluded_nodes(f: DensityField) -> int:
    """Nodes at exactly 0 or 1, which fit_envelope leaves out."""
    return int(((f.samples <= 0.0) | (f.samples >= 1.0)).sum())
