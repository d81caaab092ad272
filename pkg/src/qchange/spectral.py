"""Distinguishability geometry of a pair of unitaries.

The single-shot distinguishability of two unitary channels is governed by
the eigenvalues of U0†U1 viewed as points on the unit circle: the distance
from the origin to their convex polygon gives the minimal achievable
overlap, and the closest polygon side provides the two eigenvalues whose
half-chord length is the gap parameter used throughout.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .linalg import LinalgError, eig_normal, is_unitary

COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class EigenPolygon:
    """Convex polygon of eigenvalues of U0†U1 in the complex plane."""

    vertices: tuple[complex, ...]
    hull: tuple[int, ...]
    closest_side: tuple[int, int]
    origin_distance: float
    contains_origin: bool


@dataclass(frozen=True)
class SpectralGap:
    """Closest-side eigenvalue pair of one evolution step (or one segment).

    lambda0/lambda1 are the chord endpoints ordered so that
    0 <= arg(lambda1/lambda0) <= pi, gamma is half the chord length,
    zeta = (1-gamma)/(1+gamma) and omega is the square root of
    lambda0*lambda1 on the arc midpoint between them (the branch for which
    lambda0 + lambda1 = 2*sqrt(1-gamma^2)*omega).
    """

    lambda0: complex
    lambda1: complex
    vec0: np.ndarray = field(repr=False)
    vec1: np.ndarray = field(repr=False)
    gamma: float
    zeta: float
    omega: complex
    degenerate: bool = False

    @property
    def arg_ratio(self) -> float:
        if self.degenerate and self.gamma == 1.0:
            # origin containment: treat as a full half-turn
            return float(np.pi)
        a = cmath.phase(self.lambda1 / self.lambda0)
        return a if a >= 0 else a + 2 * np.pi


def _cross(o: complex, a: complex, b: complex) -> float:
    return (a.real - o.real) * (b.imag - o.imag) - (a.imag - o.imag) * (b.real - o.real)


def _convex_hull(points: list[complex]) -> list[int]:
    """Monotone-chain hull; returns indices into `points` in ccw order."""
    order = sorted(range(len(points)), key=lambda i: (points[i].real, points[i].imag))
    # drop near-duplicates so the chain cannot stall on repeated vertices
    dedup: list[int] = []
    for i in order:
        if not dedup or abs(points[i] - points[dedup[-1]]) > COLLINEAR_TOL:
            dedup.append(i)
    if len(dedup) <= 2:
        return dedup
    lower: list[int] = []
    for i in dedup:
        while len(lower) >= 2 and _cross(
            points[lower[-2]], points[lower[-1]], points[i]
        ) <= COLLINEAR_TOL:
            lower.pop()
        lower.append(i)
    upper: list[int] = []
    for i in reversed(dedup):
        while len(upper) >= 2 and _cross(
            points[upper[-2]], points[upper[-1]], points[i]
        ) <= COLLINEAR_TOL:
            upper.pop()
        upper.append(i)
    return lower[:-1] + upper[:-1]


def _segment_distance(a: complex, b: complex) -> float:
    """Distance from the origin to the segment [a, b]."""
    d = b - a
    dd = abs(d) ** 2
    if dd <= COLLINEAR_TOL**2:
        return abs(a)
    t = -((a.real * d.real) + (a.imag * d.imag)) / dd
    t = min(1.0, max(0.0, t))
    return abs(a + t * d)


def eigen_polygon(u0, u1) -> EigenPolygon:
    """Polygon of eigenvalues of U0†U1, with origin distance and closest side."""
    u0 = np.asarray(u0, dtype=complex)
    u1 = np.asarray(u1, dtype=complex)
    if u0.shape != u1.shape:
        raise LinalgError(f"dimension mismatch: {u0.shape} vs {u1.shape}")
    for u in (u0, u1):
        if not is_unitary(u, tol=1e-9):
            raise LinalgError("eigen_polygon requires unitary inputs")
    vals, _ = eig_normal(u0.conj().T @ u1)
    return polygon_of_eigenvalues(vals)


def polygon_of_eigenvalues(vals) -> EigenPolygon:
    pts = [complex(z) for z in vals]
    hull = _convex_hull(pts)
    if len(hull) == 1:
        i = hull[0]
        return EigenPolygon(tuple(pts), tuple(hull), (i, i), abs(pts[i]), False)
    if len(hull) == 2:
        i, j = hull
        d = _segment_distance(pts[i], pts[j])
        inside = d <= 1e-12
        return EigenPolygon(tuple(pts), tuple(hull), _order_side(pts, i, j), d, inside)
    inside = all(
        _cross(pts[hull[k]], pts[hull[(k + 1) % len(hull)]], 0j) >= -COLLINEAR_TOL
        for k in range(len(hull))
    )
    best = None
    for k in range(len(hull)):
        i, j = hull[k], hull[(k + 1) % len(hull)]
        d = _segment_distance(pts[i], pts[j])
        mid_arg = cmath.phase((pts[i] + pts[j]) / 2)
        key = (d, mid_arg)
        if best is None or key < best[0]:
            best = (key, (i, j))
    dist = 0.0 if inside else best[0][0]
    return EigenPolygon(tuple(pts), tuple(hull), _order_side(pts, *best[1]), dist, inside)


def _order_side(pts: list[complex], i: int, j: int) -> tuple[int, int]:
    """Order a side's endpoints so that 0 <= arg(p[j]/p[i]) <= pi."""
    a = cmath.phase(pts[j] / pts[i]) if abs(pts[i]) > 0 else 0.0
    if 0 <= a <= np.pi:
        return (i, j)
    return (j, i)


def _nearest_chord(pts: list[complex]) -> tuple[int, int]:
    """Eigenvalue pair whose chord passes nearest the origin."""
    best = None
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d = _segment_distance(pts[i], pts[j])
            if best is None or d < best[0]:
                best = (d, (i, j))
    return best[1]


def _midpoint_root(lam0: complex, lam1: complex) -> complex:
    a = cmath.phase(lam1 / lam0)
    if a < 0:
        a += 2 * np.pi
    return lam0 * cmath.exp(0.5j * a)


def gap_single(u0, u1) -> SpectralGap:
    """Gap parameter and eigen-pair data for a single evolution step."""
    u0 = np.asarray(u0, dtype=complex)
    u1 = np.asarray(u1, dtype=complex)
    if u0.shape != u1.shape:
        raise LinalgError(f"dimension mismatch: {u0.shape} vs {u1.shape}")
    vals, vecs = eig_normal(u0.conj().T @ u1, tol=1e-8)
    poly = polygon_of_eigenvalues(vals)
    pts = list(poly.vertices)
    degenerate = poly.contains_origin
    if degenerate and len(pts) > 1:
        i, j = _order_side(pts, *_nearest_chord(pts))
    else:
        i, j = poly.closest_side
    lam0, lam1 = pts[i], pts[j]
    vec0 = vecs[:, i]
    if i == j:
        # point polygon: pick a second vector inside the (near-)degenerate
        # eigenspace when one exists, so that vec0 and vec1 stay orthogonal
        others = [k for k in range(len(pts)) if k != i and abs(pts[k] - pts[i]) < 1e-8]
        vec1 = vecs[:, others[0]] if others else vec0
    else:
        vec1 = vecs[:, j]
    if degenerate:
        gamma = 1.0
    else:
        gamma = min(1.0, abs(lam1 - lam0) / 2)
    zeta = (1 - gamma) / (1 + gamma)
    return SpectralGap(
        lambda0=lam0,
        lambda1=lam1,
        vec0=vec0,
        vec1=vec1,
        gamma=gamma,
        zeta=zeta,
        omega=_midpoint_root(lam0, lam1),
        degenerate=degenerate,
    )


def combine_steps(steps: list[SpectralGap]) -> SpectralGap:
    """Aggregate the per-step gaps of one segment into a segment-level gap.

    The segment eigenvalue pair is the product over steps; the segment is
    perfectly distinguishable (gamma = 1) when any step polygon contains the
    origin or when the accumulated chord angle reaches pi.  The eigenvectors
    kept are the first step's, which is where the segment's input support
    lives.
    """
    if not steps:
        raise LinalgError("combine_steps requires at least one step")
    lam0 = np.prod([s.lambda0 for s in steps])
    lam1 = np.prod([s.lambda1 for s in steps])
    total_arg = sum(s.arg_ratio for s in steps)
    degenerate = any(s.degenerate for s in steps)
    if degenerate or total_arg >= np.pi:
        gamma = 1.0
        degenerate = degenerate or total_arg > np.pi
    else:
        gamma = float(np.sin(total_arg / 2))
    zeta = (1 - gamma) / (1 + gamma)
    omega = complex(lam0 * cmath.exp(0.5j * min(total_arg, np.pi)))
    return SpectralGap(
        lambda0=complex(lam0),
        lambda1=complex(lam1),
        vec0=steps[0].vec0,
        vec1=steps[0].vec1,
        gamma=gamma,
        zeta=zeta,
        omega=omega,
        degenerate=degenerate,
    )


def gap_segment(steps: list[SpectralGap]) -> float:
    """Segment gap parameter (1 under either perfect-distinguishability rule)."""
    return combine_steps(steps).gamma
