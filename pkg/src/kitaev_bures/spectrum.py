"""Quasiparticle spectrum of the Kitaev honeycomb model (vortex-free sector).

Everything here is a pure function of the couplings (jx, jy, jz) and a
momentum p = (px, py) in the Brillouin zone [-pi, pi)^2.  The basic fields
are

    epsilon(p) = 2 (jx cos px + jy cos py + jz)
    delta(p)   = 2 (jx sin px + jy sin py)
    lam(p)     = sqrt(epsilon^2 + delta^2)        quasiparticle energy
    theta(p)   = arg(epsilon + i delta)           mode rotation angle

plus the coupling responses that feed the thermal metric integrands,

    omega_a = 2 (cos(p_a) epsilon + sin(p_a) delta)   for a = x, y
    omega_z = 2 epsilon
    theta_x = 4 (jz sin px + jy sin(px - py))
    theta_y = 4 (jz sin py - jx sin(px - py))
    theta_z = -2 delta

These satisfy omega_a = lam * d(lam)/dJ_a and theta_a = lam^2 * d(theta)/dJ_a
for all three couplings (omega_z = 2 epsilon is the z-row of the same
identity), which the test suite checks by finite differences.

The phase diagram splits into a gapless region where all three triangle
inequalities |J_a| <= |J_b| + |J_c| hold strictly, three gapped regions
(one per dominant coupling), and the critical boundary between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

__all__ = [
    "Couplings",
    "Momentum",
    "SpectralPoint",
    "SpectralArrays",
    "PhaseRegion",
    "wrap_angle",
    "spectral_arrays",
    "spectral_point",
    "classify_phase",
    "fermion_gap",
    "dirac_points",
]


def wrap_angle(x):
    """Wrap an angle (scalar or array) into [-pi, pi)."""
    return (np.asarray(x, dtype=float) + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Couplings:
    """Bond coupling strengths of the three link types.

    Any finite real values are admitted; phase classification uses absolute
    values, so sign flips relabel nothing.
    """

    jx: float
    jy: float
    jz: float

    def __post_init__(self):
        for name in ("jx", "jy", "jz"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"coupling {name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.jx, self.jy, self.jz])

    def abs_max(self) -> float:
        return max(abs(self.jx), abs(self.jy), abs(self.jz))

    def swapped_xy(self) -> "Couplings":
        return Couplings(self.jy, self.jx, self.jz)


@dataclass(frozen=True)
class Momentum:
    """A Brillouin-zone momentum; construction wraps into [-pi, pi)."""

    px: float
    py: float

    def __post_init__(self):
        object.__setattr__(self, "px", float(wrap_angle(self.px)))
        object.__setattr__(self, "py", float(wrap_angle(self.py)))


class PhaseRegion(Enum):
    """Region of the coupling phase diagram."""

    GAPLESS_B = "gapless-B"
    GAPPED_AX = "gapped-Ax"
    GAPPED_AY = "gapped-Ay"
    GAPPED_AZ = "gapped-Az"
    CRITICAL_BOUNDARY = "critical"

    @property
    def is_gapped(self) -> bool:
        return self in (PhaseRegion.GAPPED_AX, PhaseRegion.GAPPED_AY, PhaseRegion.GAPPED_AZ)


class SpectralArrays(NamedTuple):
    """Vectorized spectral fields on a batch of momenta (see module docstring)."""

    epsilon: np.ndarray
    delta: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    omega_x: np.ndarray
    omega_y: np.ndarray
    omega_z: np.ndarray
    theta_x: np.ndarray
    theta_y: np.ndarray
    theta_z: np.ndarray


@dataclass(frozen=True)
class SpectralPoint:
    """All momentum-local quantities at a single (p, J) point.

    ``lam`` is the quasiparticle energy (lam^2 = epsilon^2 + delta^2) and
    ``theta`` = arg(epsilon + i delta) in (-pi, pi].  At an exact zero of the
    dispersion theta is undefined; we return 0 there by convention (the
    thermal integrands never evaluate at dispersion zeros, and odd L momentum
    grids avoid them in the gapless interior).
    """

    epsilon: float
    delta: float
    lam: float
    theta: float
    omega_x: float
    omega_y: float
    theta_x: float
    theta_y: float
    theta_z: float

    @property
    def omega_z(self) -> float:
        """z-row of omega_a = lam * d(lam)/dJ_a, which reduces to 2 epsilon."""
        return 2.0 * self.epsilon


def spectral_arrays(px, py, couplings: Couplings) -> SpectralArrays:
    """Evaluate all spectral fields on arrays of momenta (broadcasting)."""
    jx, jy, jz = couplings.jx, couplings.jy, couplings.jz
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    cx, sx = np.cos(px), np.sin(px)
    cy, sy = np.cos(py), np.sin(py)
    epsilon = 2.0 * (jx * cx + jy * cy + jz)
    delta = 2.0 * (jx * sx + jy * sy)
    lam = np.hypot(epsilon, delta)
    theta = np.arctan2(delta, epsilon)
    # arctan2 may return exactly -pi; fold onto (-pi, pi]
    theta = np.where(theta <= -math.pi, theta + TWO_PI, theta)
    sxy = sx * cy - cx * sy  # sin(px - py)
    omega_x = 2.0 * (cx * epsilon + sx * delta)
    omega_y = 2.0 * (cy * epsilon + sy * delta)
    omega_z = 2.0 * epsilon
    theta_x = 4.0 * (jz * sx + jy * sxy)
    theta_y = 4.0 * (jz * sy - jx * sxy)
    theta_z = -2.0 * delta
    return SpectralArrays(
        epsilon, delta, lam, theta, omega_x, omega_y, omega_z, theta_x, theta_y, theta_z
    )


def spectral_point(p: Momentum, couplings: Couplings) -> SpectralPoint:
    """Evaluate the spectral fields at a single momentum."""
    f = spectral_arrays(p.px, p.py, couplings)
    return SpectralPoint(
        epsilon=float(f.epsilon),
        delta=float(f.delta),
        lam=float(f.lam),
        theta=float(f.theta),
        omega_x=float(f.omega_x),
        omega_y=float(f.omega_y),
        theta_x=float(f.theta_x),
        theta_y=float(f.theta_y),
        theta_z=float(f.theta_z),
    )


def _default_tol(couplings: Couplings, tol: float | None) -> float:
    if tol is None:
        return 1e-9 * couplings.abs_max()
    if tol < 0:
        raise ValueError(f"tolerance must be non-negative, got {tol}")
    return float(tol)


def classify_phase(couplings: Couplings, tol: float | None = None) -> PhaseRegion:
    """Classify the coupling point into gapless, gapped, or boundary.

    The gapless region is where all of |jz| <= |jx|+|jy|, |jy| <= |jz|+|jx|,
    |jx| <= |jy|+|jz| hold with margin > tol; equality within tol is the
    critical boundary; a violated inequality names the gapped region.  The
    default tolerance is 1e-9 * max|J| so that floating-point trajectories
    along the boundary classify stably.
    """
    tol = _default_tol(couplings, tol)
    ax, ay, az = abs(couplings.jx), abs(couplings.jy), abs(couplings.jz)
    margins = {
        PhaseRegion.GAPPED_AX: ay + az - ax,
        PhaseRegion.GAPPED_AY: az + ax - ay,
        PhaseRegion.GAPPED_AZ: ax + ay - az,
    }
    worst = min(margins.values())
    if worst > tol:
        return PhaseRegion.GAPLESS_B
    if worst >= -tol:
        return PhaseRegion.CRITICAL_BOUNDARY
    for region, margin in margins.items():
        if margin == worst:
            return region
    raise AssertionError("unreachable")


def fermion_gap(couplings: Couplings, tol: float | None = None) -> float:
    """Minimum quasiparticle energy in a gapped phase.

    Returns 2(|J_dominant| - |J_other| - |J_other'|); zero on the boundary.
    Raises ValueError in the gapless interior, where no gap exists.
    """
    region = classify_phase(couplings, tol)
    if region is PhaseRegion.GAPLESS_B:
        raise ValueError("fermion gap undefined in the gapless phase")
    if region is PhaseRegion.CRITICAL_BOUNDARY:
        return 0.0
    ax, ay, az = abs(couplings.jx), abs(couplings.jy), abs(couplings.jz)
    if region is PhaseRegion.GAPPED_AZ:
        return 2.0 * (az - ax - ay)
    if region is PhaseRegion.GAPPED_AY:
        return 2.0 * (ay - az - ax)
    return 2.0 * (ax - ay - az)


def dirac_points(
    couplings: Couplings,
    lambda_tol: float = 1e-10,
    tol: float | None = None,
) -> list[Momentum]:
    """Zeros of the quasiparticle dispersion.

    In the gapless phase this returns the two solutions of
    cos(px) = (jy^2 - jx^2 - jz^2) / (2 jx jz) and the analogous py equation,
    with the +- branches paired by explicit verification lam(p) < lambda_tol
    (robust for all coupling signs).  Gapped couplings return an empty list.
    On the critical boundary the pair merges and the single gap-closing
    momentum is returned once.
    """
    region = classify_phase(couplings, tol)
    if region.is_gapped:
        return []
    jx, jy, jz = couplings.jx, couplings.jy, couplings.jz
    den_x = 2.0 * jx * jz
    den_y = 2.0 * jy * jz
    if abs(den_x) < 1e-300 or abs(den_y) < 1e-300:
        # degenerate boundary (a coupling vanishes): zeros form lines, not
        # isolated points, and no point list is meaningful
        return []
    arg_x = (jx * jx + jz * jz - jy * jy) / den_x
    arg_y = (jy * jy + jz * jz - jx * jx) / den_y
    if abs(arg_x) > 1.0 + 1e-9 or abs(arg_y) > 1.0 + 1e-9:
        return []
    ux = math.acos(min(1.0, max(-1.0, arg_x)))
    uy = math.acos(min(1.0, max(-1.0, arg_y)))
    scale = max(1.0, 2.0 * (abs(jx) + abs(jy) + abs(jz)))
    found: list[Momentum] = []
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            cand = Momentum(math.pi + sx * ux, math.pi + sy * uy)
            if spectral_point(cand, couplings).lam >= lambda_tol * scale:
                continue
            if any(
                abs(wrap_angle(cand.px - q.px)) < 1e-8
                and abs(wrap_angle(cand.py - q.py)) < 1e-8
                for q in found
            ):
                continue
            found.append(cand)
    return found
