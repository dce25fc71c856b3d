"""Array, motion and travel-distance geometry.

All positions are expressed in a global Cartesian frame in meters. Angles
follow the usual azimuth/elevation convention: azimuth is measured in the
xy plane from the x axis, elevation is measured from the xy plane.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def wrap_angle(angle):
    """Wrap an angle (or array of angles) to the interval (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def unit_vector(azimuth, elevation) -> np.ndarray:
    """Unit vector(s) pointing at ``(azimuth, elevation)``.

    Broadcasts over array inputs; the Cartesian components are stacked on the
    last axis.
    """
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack(
        np.broadcast_arrays(ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)),
        axis=-1,
    )


class WavefrontMode(enum.Enum):
    """Travel-distance model used when synthesizing a channel.

    ``EXACT`` evaluates vector norms. The remaining modes are truncations of
    the second-order expansion of the element-to-scatterer distance:

    * ``FULL_APPROX``: plane-wave terms, spherical-wavefront term and
      time non-stationary term, with the per-element motion angle.
    * ``NONWSS_PWF``: small-array limit; motion angle taken at the first
      element and the spherical-wavefront term dropped.
    * ``WSS_SWF``: slow-motion limit; the time non-stationary term dropped.
    * ``WSS_PWF``: only the linear (plane wave, constant Doppler) terms.
    """

    EXACT = "exact"
    FULL_APPROX = "full_approx"
    NONWSS_PWF = "nonwss_pwf"
    WSS_SWF = "wss_swf"
    WSS_PWF = "wss_pwf"

    @classmethod
    def parse(cls, value) -> "WavefrontMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            try:
                return cls[str(value).upper()]
            except KeyError:
                raise ValueError(
                    f"unknown wavefront mode {value!r}; expected one of "
                    f"{[m.value for m in cls]}"
                ) from None


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array.

    Element ``p`` (1-based) sits at ``reference_position + (p - 1) * spacing``
    along the unit vector defined by the tilt angles.
    """

    element_count: int = 1
    spacing: float = 0.0
    tilt_azimuth: float = 0.0
    tilt_elevation: float = 0.0
    reference_position: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if int(self.element_count) != self.element_count or self.element_count < 1:
            raise ValueError(f"element_count must be an integer >= 1, got {self.element_count}")
        if self.element_count > 1 and not self.spacing > 0:
            raise ValueError(f"spacing must be > 0 for multi-element arrays, got {self.spacing}")
        if not -np.pi / 2 <= self.tilt_elevation <= np.pi / 2:
            raise ValueError("tilt_elevation must lie in [-pi/2, pi/2]")
        ref = tuple(float(x) for x in self.reference_position)
        if len(ref) != 3:
            raise ValueError("reference_position must be a 3-vector")
        object.__setattr__(self, "element_count", int(self.element_count))
        object.__setattr__(self, "reference_position", ref)
        object.__setattr__(self, "tilt_azimuth", wrap_angle(self.tilt_azimuth))

    @property
    def axis(self) -> np.ndarray:
        """Unit vector along the array."""
        return unit_vector(self.tilt_azimuth, self.tilt_elevation)

    @property
    def offsets(self) -> np.ndarray:
        """Distances ``delta_p`` of every element from element 1, shape ``(M,)``."""
        return np.arange(self.element_count, dtype=float) * self.spacing

    @property
    def aperture(self) -> float:
        return (self.element_count - 1) * self.spacing

    def positions(self) -> np.ndarray:
        """Positions of all elements, shape ``(M, 3)``."""
        return np.asarray(self.reference_position) + self.offsets[:, None] * self.axis


def element_position(array: ArrayGeometry, p: int) -> np.ndarray:
    """Position of the 1-based element ``p`` of ``array``."""
    if not 1 <= p <= array.element_count:
        raise IndexError(f"element index {p} outside 1..{array.element_count}")
    return np.asarray(array.reference_position) + (p - 1) * array.spacing * array.axis


@dataclass(frozen=True)
class MotionProfile:
    """Piecewise-constant motion (speed and heading) sampled at ``times``.

    Segment ``i`` holds on ``[times[i], times[i+1])``; the last one extends to
    ``end_time``.
    """

    times: tuple = (0.0,)
    speeds: tuple = (0.0,)
    azimuths: tuple = (0.0,)
    elevations: tuple = (0.0,)
    end_time: float = math.inf

    def __post_init__(self):
        arrays = [tuple(float(x) for x in np.atleast_1d(getattr(self, name)))
                  for name in ("times", "speeds", "azimuths", "elevations")]
        n = len(arrays[0])
        if n == 0 or any(len(a) != n for a in arrays):
            raise ValueError("motion profile fields must be non-empty and of equal length")
        times, speeds, azimuths, elevations = arrays
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("motion profile times must be strictly increasing")
        if any(s < 0 for s in speeds):
            raise ValueError("motion profile speeds must be >= 0")
        if self.end_time <= times[-1]:
            raise ValueError("end_time must exceed the last segment start")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "speeds", speeds)
        object.__setattr__(self, "azimuths", tuple(wrap_angle(a) for a in azimuths))
        object.__setattr__(self, "elevations", elevations)
        object.__setattr__(self, "end_time", float(self.end_time))

    @classmethod
    def constant(cls, speed: float = 0.0, azimuth: float = 0.0, elevation: float = 0.0,
                 start: float = 0.0) -> "MotionProfile":
        return cls((start,), (speed,), (azimuth,), (elevation,))

    @classmethod
    def from_samples(cls, samples: Sequence[Sequence[float]], end_time: float = math.inf):
        """Build from ``(time, speed, azimuth, elevation)`` rows."""
        rows = np.asarray(samples, dtype=float).reshape(-1, 4)
        return cls(tuple(rows[:, 0]), tuple(rows[:, 1]), tuple(rows[:, 2]),
                   tuple(rows[:, 3]), end_time)

    @property
    def is_static(self) -> bool:
        return all(s == 0 for s in self.speeds)

    @property
    def is_constant(self) -> bool:
        return len(self.times) == 1

    def _segment_velocities(self) -> np.ndarray:
        return np.asarray(self.speeds)[:, None] * unit_vector(self.azimuths, self.elevations)

    def velocity(self, t: float) -> np.ndarray:
        """Velocity vector at time ``t``."""
        if t < self.times[0] or t > self.end_time:
            raise ValueError(f"time {t} outside motion profile domain")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self._segment_velocities()[i]

    def displacement(self, t0: float, t1) -> np.ndarray:
        """Displacement between ``t0`` and ``t1`` (scalar or array)."""
        return displacement(self, t0, t1)


def displacement(motion: MotionProfile, t0: float, t1) -> np.ndarray:
    """Integral of the velocity over ``[t0, t1]``.

    ``t1`` may be an array; the result then has shape ``t1.shape + (3,)``.
    """
    t1 = np.asarray(t1, dtype=float)
    if np.any(t1 < t0):
        raise ValueError("displacement requires t0 <= t1")
    lo, hi = motion.times[0], motion.end_time
    if t0 < lo or np.any(t1 > hi):
        raise ValueError(f"interval [{t0}, {np.max(t1)}] outside motion profile domain [{lo}, {hi}]")
    vel = motion._segment_velocities()
    starts = np.asarray(motion.times)
    ends = np.append(starts[1:], hi)
    # Overlap of each segment with [t0, t1].
    overlap = (np.minimum(ends, t1[..., None]) - np.maximum(starts, t0)).clip(min=0.0)
    return overlap @ vel


def exact_travel_distance(a, b) -> np.ndarray:
    """Euclidean distance between points ``a`` and ``b`` (broadcasting)."""
    diff = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    out = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RayGeometry:
    """Distance and direction from the first array element to a scatterer."""

    distance: float
    azimuth: float
    elevation: float = 0.0

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("ray distance must be positive")
        if not -np.pi / 2 <= self.elevation <= np.pi / 2:
            raise ValueError("ray elevation must lie in [-pi/2, pi/2]")
        object.__setattr__(self, "azimuth", wrap_angle(self.azimuth))

    @classmethod
    def from_vector(cls, vec) -> "RayGeometry":
        x, y, z = (float(c) for c in vec)
        d = math.sqrt(x * x + y * y + z * z)
        return cls(d, math.atan2(y, x), math.asin(max(-1.0, min(1.0, z / d))))

    def vector(self) -> np.ndarray:
        return self.distance * unit_vector(self.azimuth, self.elevation)


def cos_vartheta(ray_azimuth, ray_elevation, array: ArrayGeometry):
    """Cosine of the angle between a ray leaving element 1 and the array axis."""
    c = (np.cos(ray_elevation) * np.cos(array.tilt_elevation)
         * np.cos(array.tilt_azimuth - np.asarray(ray_azimuth))
         + np.sin(ray_elevation) * np.sin(array.tilt_elevation))
    return np.clip(c, -1.0, 1.0)


def cos_omega_p(distance, ray_azimuth, ray_elevation, array: ArrayGeometry, delta_p,
                heading, heading_elevation=0.0):
    """Cosine of the angle between the relative motion and the ray seen from element p.

    For horizontal motion (``heading_elevation == 0``) this is the usual
    closed form; the elevation term extends it to 3D motion through the same
    dot product.
    """
    distance = np.asarray(distance, dtype=float)
    delta_p = np.asarray(delta_p, dtype=float)
    cth = cos_vartheta(ray_azimuth, ray_elevation, array)
    ce_m, se_m = np.cos(heading_elevation), np.sin(heading_elevation)
    num = (distance * (np.cos(ray_elevation) * np.cos(heading - np.asarray(ray_azimuth)) * ce_m
                       + np.sin(ray_elevation) * se_m)
           - delta_p * (np.cos(array.tilt_elevation) * np.cos(heading - array.tilt_azimuth) * ce_m
                        + np.sin(array.tilt_elevation) * se_m))
    den2 = distance ** 2 - 2.0 * distance * delta_p * cth + delta_p ** 2
    if np.any(den2 <= 0):
        raise ZeroDivisionError("antenna element coincides with the scatterer")
    return np.clip(num / np.sqrt(den2), -1.0, 1.0)


def approx_distance_terms(distance, cth, cw_p, cw_1, delta_p, travel, mode: WavefrontMode):
    """Evaluate a truncation of the travel-distance expansion.

    ``cth`` is cos(vartheta), ``cw_p`` the per-element motion cosine and
    ``cw_1`` its small-array limit; ``travel`` is the relative displacement
    magnitude (``v * t`` for constant motion). Broadcasts over all inputs.
    """
    mode = WavefrontMode.parse(mode)
    if mode is WavefrontMode.EXACT:
        raise ValueError("EXACT mode is evaluated from vectors, not from the expansion")
    cw = cw_p if mode in (WavefrontMode.FULL_APPROX, WavefrontMode.WSS_SWF) else cw_1
    out = distance - cw * travel - cth * delta_p
    if mode in (WavefrontMode.FULL_APPROX, WavefrontMode.WSS_SWF):
        out = out + (1.0 - cth ** 2) * delta_p ** 2 / (2.0 * distance)
    if mode in (WavefrontMode.FULL_APPROX, WavefrontMode.NONWSS_PWF):
        den = distance - cth * delta_p
        if np.any(den <= 0):
            raise ValueError("non-WSS term denominator is not positive; approximation invalid here")
        out = out + (1.0 - cw ** 2) * travel ** 2 / (2.0 * den)
    return out


def approx_travel_distance(ray: RayGeometry, delta_p: float, relative_speed: float, t: float,
                           array: ArrayGeometry, relative_heading: float,
                           mode: WavefrontMode = WavefrontMode.FULL_APPROX) -> float:
    """Approximate distance from element ``p`` to a scatterer at time ``t``.

    Assumes the element moves relative to the scatterer with constant
    horizontal speed ``relative_speed`` along azimuth ``relative_heading``.
    """
    cth = cos_vartheta(ray.azimuth, ray.elevation, array)
    cw_p = cos_omega_p(ray.distance, ray.azimuth, ray.elevation, array, delta_p, relative_heading)
    cw_1 = cos_omega_p(ray.distance, ray.azimuth, ray.elevation, array, 0.0, relative_heading)
    return float(approx_distance_terms(ray.distance, cth, cw_p, cw_1, delta_p,
                                       relative_speed * t, mode))


def travel_distances(ray_vectors, array: ArrayGeometry, rel_disp, mode: WavefrontMode):
    """Distances from every element to every scatterer over a time grid.

    Parameters
    ----------
    ray_vectors : ndarray, shape (R, 3)
        Vectors from element 1 to each scatterer at the reference time.
    array : ArrayGeometry
    rel_disp : ndarray, shape (T, 3)
        Displacement of the array relative to the scatterers since the
        reference time (array motion minus scatterer motion).
    mode : WavefrontMode

    Returns
    -------
    ndarray, shape (T, R, M)
    """
    mode = WavefrontMode.parse(mode)
    ray_vectors = np.atleast_2d(np.asarray(ray_vectors, dtype=float))
    rel_disp = np.atleast_2d(np.asarray(rel_disp, dtype=float))
    offsets = array.offsets
    axis = array.axis
    if mode is WavefrontMode.EXACT:
        # r[t, ray, p] = d - l_p - s(t)
        r = (ray_vectors[None, :, None, :] - offsets[None, None, :, None] * axis
             - rel_disp[:, None, None, :])
        return np.sqrt(np.einsum("trpk,trpk->trp", r, r))

    dist = np.linalg.norm(ray_vectors, axis=1)                  # (R,)
    u = ray_vectors / dist[:, None]
    cth = np.clip(u @ axis, -1.0, 1.0)                          # (R,)
    travel = np.linalg.norm(rel_disp, axis=1)                   # (T,)
    heading = np.divide(rel_disp, travel[:, None], out=np.zeros_like(rel_disp),
                        where=travel[:, None] > 0)
    # Element-to-scatterer vectors at the reference time, (R, M, 3).
    w = ray_vectors[:, None, :] - offsets[None, :, None] * axis
    wn = np.linalg.norm(w, axis=2)
    if np.any(wn <= 0):
        raise ZeroDivisionError("antenna element coincides with a scatterer")
    cw_p = np.clip(np.einsum("tk,rmk->trm", heading, w) / wn[None], -1.0, 1.0)
    cw_1 = np.clip(heading @ u.T, -1.0, 1.0)[:, :, None]
    return approx_distance_terms(dist[None, :, None], cth[None, :, None], cw_p, cw_1,
                                 offsets[None, None, :], travel[:, None, None], mode)


def los_distance(D: float, tx_array: ArrayGeometry, rx_array: ArrayGeometry, p: int, q: int,
                 tx_motion: MotionProfile, rx_motion: MotionProfile, t: float) -> float:
    """Distance between Tx element ``p`` and Rx element ``q`` at time ``t``.

    The Tx first element starts at the origin and the Rx first element at
    ``(D, 0, 0)``; only the array offsets and motion enter, the arrays'
    ``reference_position`` is ignored. Constant horizontal motion uses the
    closed form; otherwise the vector norm with piecewise-constant
    displacement is used.
    """
    dp = (p - 1) * tx_array.spacing
    dq = (q - 1) * rx_array.spacing
    horizontal = all(e == 0 for e in tx_motion.elevations + rx_motion.elevations)
    if tx_motion.is_constant and rx_motion.is_constant and horizontal:
        vt, at_ = tx_motion.speeds[0], tx_motion.azimuths[0]
        vr, ar = rx_motion.speeds[0], rx_motion.azimuths[0]
        bta, bte = tx_array.tilt_azimuth, tx_array.tilt_elevation
        bra, bre = rx_array.tilt_azimuth, rx_array.tilt_elevation
        x = (D + math.cos(ar) * vr * t - math.cos(at_) * vt * t
             - math.cos(bta) * math.cos(bte) * dp + math.cos(bra) * math.cos(bre) * dq)
        y = (math.sin(ar) * vr * t - math.sin(at_) * vt * t
             - math.cos(bte) * math.sin(bta) * dp + math.cos(bre) * math.sin(bra) * dq)
        z = math.sin(bte) * dp - math.sin(bre) * dq
        return math.sqrt(x * x + y * y + z * z)
    vec = (np.array([D, 0.0, 0.0]) + dq * rx_array.axis - dp * tx_array.axis
           + displacement(rx_motion, 0.0, t) - displacement(tx_motion, 0.0, t))
    return float(np.linalg.norm(vec))
