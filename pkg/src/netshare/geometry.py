"""Planar stochastic-geometry primitives.

Nearest-BS distance law, the exclusion area A(r, x, theta) of a second
user's "no closer BS" disk, and the mean Voronoi-load integral h(r).

Geometry convention: the serving BS sits at the origin and the typical user
at (0, -r).  A second point at polar (x, theta) is served by the same BS iff
the disk of radius x around it holds no other BS.  The part of that disk
already known to be empty (it overlaps the radius-r disk around the typical
user) does not count, which leaves the exclusion area A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import integrate

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-12
    max_subdivisions: int = 200
    truncation_multiplier: float = 6.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.truncation_multiplier < 3:
            raise ValueError("truncation_multiplier must be >= 3")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def nearest_bs_pdf(r: ArrayLike, lam_tot: float) -> ArrayLike:
    """Density of the distance from a typical point to the nearest point of a PPP."""
    if not lam_tot > 0:
        raise ValueError("lam_tot must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be >= 0")
    out = np.exp(-lam_tot * np.pi * r * r) * lam_tot * 2.0 * np.pi * r
    return out if out.ndim else float(out)


def lens_area(r1: ArrayLike, r2: ArrayLike, d: ArrayLike) -> ArrayLike:
    """Intersection area of two disks with radii r1, r2 and centre distance d.

    Containment (``d <= |r1 - r2|``) and disjointness (``d >= r1 + r2``) are
    handled explicitly; the general-position formula is only evaluated in
    between, with cosine arguments clipped to [-1, 1].
    """
    r1, r2, d = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r1, r2, d)))
    out = np.zeros(r1.shape)
    inside = d <= np.abs(r1 - r2)
    general = ~inside & (d < r1 + r2)
    small = np.minimum(r1, r2)
    out[inside] = np.pi * small[inside] ** 2

    # work in units of the largest length so squares neither under- nor overflow
    scale = np.maximum(np.maximum(r1[general], r2[general]), d[general])
    a, b, dd = r1[general] / scale, r2[general] / scale, d[general] / scale
    c1 = np.clip((dd * dd + a * a - b * b) / (2 * dd * a), -1.0, 1.0)
    c2 = np.clip((dd * dd + b * b - a * a) / (2 * dd * b), -1.0, 1.0)
    kite = (-dd + a + b) * (dd + a - b) * (dd - a + b) * (dd + a + b)
    out[general] = scale * scale * (
        a * a * np.arccos(c1) + b * b * np.arccos(c2) - 0.5 * np.sqrt(np.maximum(kite, 0.0))
    )
    out = np.clip(out, 0.0, np.pi * small**2)
    return out if out.ndim else float(out)


def user_distance(r: ArrayLike, x: ArrayLike, theta: ArrayLike) -> ArrayLike:
    """Distance between polar point (x, theta) and the typical user at (0, -r)."""
    r, x, theta = (np.asarray(a, dtype=float) for a in (r, x, theta))
    d2 = x * x + r * r + 2.0 * x * r * np.sin(theta)
    return np.sqrt(np.maximum(d2, 0.0))


def exclusion_area(r: ArrayLike, x: ArrayLike, theta: ArrayLike) -> ArrayLike:
    """Area of the radius-x disk around (x, theta) outside the radius-r disk around (0, -r).

    Clamped to ``[0, pi x^2]``.
    """
    r, x, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, x, theta)))
    if np.isnan(r).any() or np.isnan(x).any() or np.isnan(theta).any():
        raise ValueError("exclusion_area inputs must not be NaN")
    if (r < 0).any() or (x < 0).any():
        raise ValueError("r and x must be >= 0")
    d = user_distance(r, x, theta)
    full = np.pi * x * x
    out = np.clip(full - lens_area(r, x, d), 0.0, full)
    return out if out.ndim else float(out)


def truncation_radius(r: float, lam_tot: float, q: QuadratureSpec) -> float:
    """Outer x-limit: beyond it ``lam * A >= m^2 pi`` so the tail is below ``exp(-m^2 pi) / lam``."""
    return math.sqrt(q.truncation_multiplier**2 / lam_tot + r * r)


def mean_cell_area_weight(r: float, lam_tot: float, q: QuadratureSpec = QuadratureSpec()) -> float:
    """h(r): mean area served by a BS whose user sits at distance r.

    Nested adaptive quadrature, theta inner.  The integrand is even about
    theta = pi/2 (mirror across the user-BS axis), so theta is integrated over
    [-pi/2, pi/2] and doubled.
    """
    if not lam_tot > 0:
        raise ValueError("lam_tot must be positive")
    if r < 0:
        raise ValueError("r must be >= 0")
    x_max = truncation_radius(r, lam_tot, q)
    # inner tolerance tighter than the outer one so errors do not stack up
    inner_rel = q.rel_tol * 1e-2

    def inner(x: float) -> float:
        if x == 0.0:
            return 0.0
        val, err = integrate.quad(
            lambda t: math.exp(-lam_tot * exclusion_area(r, x, t)),
            -math.pi / 2,
            math.pi / 2,
            epsabs=q.abs_tol,
            epsrel=inner_rel,
            limit=q.max_subdivisions,
        )
        return 2.0 * val * x

    points = [r] if 0.0 < r < x_max else None
    with np.errstate(all="ignore"):
        val, err = integrate.quad(
            inner,
            0.0,
            x_max,
            epsabs=q.abs_tol / lam_tot,
            epsrel=q.rel_tol,
            limit=q.max_subdivisions,
            points=points,
            full_output=1,
        )[:2]
    if err > max(q.rel_tol * abs(val), q.abs_tol / lam_tot) * 10:
        raise QuadratureError(f"h({r}) did not converge: estimate {val}, error {err}")
    return float(val)


def _gauss_panels(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w
    return nodes.ravel(), weights.ravel()


def unit_cell_area_weight(rho: ArrayLike, theta_order: int = 48, x_panel: float = 0.5,
                          x_order: int = 16, truncation_multiplier: float = 6.0) -> np.ndarray:
    """h(rho) at unit intensity via tensor Gauss-Legendre, vectorised over rho.

    Scaling gives ``h(r; lam) = h(r sqrt(lam); 1) / lam``.  Accuracy is checked
    against :func:`mean_cell_area_weight` in the test-suite.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    th, th_w = _gauss_panels(np.array([-np.pi / 2, 0.0, np.pi / 2]), theta_order)
    out = np.empty(rho.shape)
    for k, rk in enumerate(rho):
        x_max = math.sqrt(truncation_multiplier**2 + rk * rk)
        edges = [0.0]
        if rk > 0:
            n = max(1, math.ceil(rk / x_panel))
            edges.extend(np.linspace(0.0, rk, n + 1)[1:])
        n = max(1, math.ceil((x_max - edges[-1]) / x_panel))
        edges.extend(np.linspace(edges[-1], x_max, n + 1)[1:])
        xs, xw = _gauss_panels(np.asarray(edges), x_order)
        A = exclusion_area(rk, xs[:, None], th[None, :])
        inner = np.exp(-A) @ th_w
        out[k] = 2.0 * np.dot(inner * xs, xw)
    return out


@dataclass(frozen=True)
class RadialRule:
    """Quadrature rule for ``int_0^inf h(r) f_R(r) g(r) dr`` in the scaled variable rho = r sqrt(lam).

    ``weight[k]`` already folds in h(rho_k; 1), the nearest-BS density at unit
    intensity and the Gauss weight, so for total intensity ``lam``::

        int h(r; lam) f_R(r; lam) g(r) dr = (1 / lam) * sum_k weight[k] g(rho[k] / sqrt(lam))
    """

    rho: np.ndarray
    weight: np.ndarray

    def integrate(self, lam_tot: float, g) -> float:
        r = self.rho / math.sqrt(lam_tot)
        return float(np.dot(self.weight, g(r))) / lam_tot


@lru_cache(maxsize=8)
def radial_rule(truncation_multiplier: float = 6.0, order: int = 16) -> RadialRule:
    """Shared r-grid for the delay integral; depends only on the truncation."""
    rho_max = truncation_multiplier
    # mass of the nearest-BS law sits below rho ~ 1.5; finer panels there
    edges = np.unique(np.concatenate([
        np.geomspace(1e-4, 0.05, 5),
        np.linspace(0.05, 2.0, 14),
        np.linspace(2.0, rho_max, 5),
    ]))
    edges = np.concatenate([[0.0], edges])
    rho, w = _gauss_panels(edges, order)
    h1 = unit_cell_area_weight(rho, truncation_multiplier=truncation_multiplier)
    pdf1 = np.exp(-np.pi * rho * rho) * 2.0 * np.pi * rho
    rho.setflags(write=False)
    weight = h1 * pdf1 * w
    weight.setflags(write=False)
    return RadialRule(rho=rho, weight=weight)


def sample_ppp(lam: float, window: tuple[float, float, float, float],
               rng: Union[int, np.random.Generator, None] = None) -> np.ndarray:
    """Homogeneous PPP on the rectangle ``(xmin, ymin, xmax, ymax)``; returns an (n, 2) array."""
    if lam < 0:
        raise ValueError("intensity must be >= 0")
    xmin, ymin, xmax, ymax = window
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("degenerate window")
    rng = np.random.default_rng(rng)
    n = rng.poisson(lam * (xmax - xmin) * (ymax - ymin))
    pts = rng.random((n, 2))
    pts[:, 0] = xmin + pts[:, 0] * (xmax - xmin)
    pts[:, 1] = ymin + pts[:, 1] * (ymax - ymin)
    return pts
