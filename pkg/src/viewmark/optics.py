"""Snell's-law mapping between camera viewing angles and layer pixel offsets.

A ray entering the wafer at angle theta refracts to the internal angle beta
with n0*sin(theta) = n1*sin(beta) and crosses the thickness d with a lateral
displacement x = d*tan(beta). All public angles are degrees; micrometers for
lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .geometry import ViewSpec

__all__ = [
    "GlassSpec",
    "offset_for_angle",
    "angle_for_offset",
    "annotate_view_angles",
]


@dataclass(frozen=True)
class GlassSpec:
    """Wafer parameters: thickness and refractive indices.

    pixel_pitch_um (printed pixel size) has no default; it is fabrication
    dependent and required only to convert pixel shifts to physical angles.
    """

    thickness_um: float = 510.0
    n0: float = 1.0
    n1: float = 1.46
    pixel_pitch_um: float | None = None

    def __post_init__(self):
        if self.thickness_um <= 0:
            raise ValueError(f"thickness must be positive, got {self.thickness_um}")
        if not (self.n1 > self.n0 >= 1.0):
            raise ValueError(
                f"need n1 > n0 >= 1, got n0={self.n0}, n1={self.n1}"
            )
        if self.pixel_pitch_um is not None and self.pixel_pitch_um <= 0:
            raise ValueError(
                f"pixel_pitch_um must be positive, got {self.pixel_pitch_um}"
            )

    @property
    def max_offset_um(self) -> float:
        """Lateral offset as the internal ray approaches the critical angle."""
        return self.thickness_um * math.tan(math.asin(self.n0 / self.n1))


def offset_for_angle(glass: GlassSpec, theta_deg: float) -> float:
    """Lateral pixel-plane offset (um) for a viewing angle (degrees).

    Odd and strictly increasing in theta on (-90, 90).
    """
    if not abs(theta_deg) < 90.0:
        raise ValueError(f"viewing angle must satisfy |theta| < 90, got {theta_deg}")
    beta = math.asin(glass.n0 * math.sin(math.radians(theta_deg)) / glass.n1)
    return glass.thickness_um * math.tan(beta)


def angle_for_offset(glass: GlassSpec, x_um: float) -> float:
    """Viewing angle (degrees) producing a lateral offset (um); inverse mapping."""
    limit = glass.max_offset_um
    if not abs(x_um) < limit:
        raise ValueError(
            f"offset {x_um} um is at or beyond the attainable maximum "
            f"{limit:.6f} um (internal ray at the critical angle)"
        )
    beta = math.atan(x_um / glass.thickness_um)
    return math.degrees(math.asin(glass.n1 * math.sin(beta) / glass.n0))


def annotate_view_angles(glass: GlassSpec, view: ViewSpec) -> ViewSpec:
    """Attach per-view physical angle pairs (theta_u, theta_v) in degrees.

    Each offset axis is converted independently through the 1-D mapping;
    requires the glass pixel pitch.
    """
    if glass.pixel_pitch_um is None:
        raise ValueError(
            "glass.pixel_pitch_um is required to convert pixel offsets to angles"
        )
    pitch = glass.pixel_pitch_um
    angles = tuple(
        (
            angle_for_offset(glass, u * pitch),
            angle_for_offset(glass, v * pitch),
        )
        for u, v in view.offsets
    )
    return replace(view, angles=angles)
