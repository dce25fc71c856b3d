"""Ellipsoid Gaussian scatterer distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import SPEED_OF_LIGHT, unit_vector


@dataclass(frozen=True)
class ClusterShape:
    """Spreads (meters) and mean spherical position of a cluster.

    ``sigma_ds`` acts along the line of sight to the cluster centre,
    ``sigma_as`` horizontally across it and ``sigma_es`` vertically.
    """

    sigma_ds: float
    sigma_as: float
    sigma_es: float
    mean_distance: float
    mean_elevation: float = 0.0
    mean_azimuth: float = 0.0

    def __post_init__(self):
        if min(self.sigma_ds, self.sigma_as, self.sigma_es) <= 0:
            raise ValueError("cluster spreads must be positive")
        if not self.mean_distance > 0:
            raise ValueError("mean_distance must be positive")

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_ds, self.sigma_as, self.sigma_es])

    @property
    def centre(self) -> np.ndarray:
        return self.mean_distance * unit_vector(self.mean_azimuth, self.mean_elevation)


@dataclass
class ScattererSet:
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.shape[0] < 1 or self.positions.shape[1] != 3:
            raise ValueError("a scatterer set needs at least one 3D position")

    @property
    def count(self) -> int:
        return self.positions.shape[0]


def rotation_matrix(mean_azimuth: float, mean_elevation: float) -> np.ndarray:
    """Azimuth rotation times elevation rotation."""
    ca, sa = math.cos(mean_azimuth), math.sin(mean_azimuth)
    ce, se = math.cos(mean_elevation), math.sin(mean_elevation)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[ce, 0.0, -se], [0.0, 1.0, 0.0], [se, 0.0, ce]])
    return rz @ ry


def pdf_local(x, y, z, shape: ClusterShape):
    """Anisotropic Gaussian density of scatterers in the cluster frame (1/m^3)."""
    sd, sa, se = shape.sigma_ds, shape.sigma_as, shape.sigma_es
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    expo = -0.5 * ((x / sd) ** 2 + (y / sa) ** 2 + (z / se) ** 2)
    return np.exp(expo) / ((2.0 * np.pi) ** 1.5 * sd * sa * se)


def place_cluster(shape: ClusterShape, local_point) -> np.ndarray:
    """Map cluster-frame coordinates to positions around the cluster centre.

    The local x axis is shifted by the mean distance and rotated onto the
    mean direction, so the local origin lands on ``shape.centre``. Accepts
    a single point or an ``(N, 3)`` array.
    """
    pts = np.asarray(local_point, dtype=float)
    shifted = pts + np.array([shape.mean_distance, 0.0, 0.0])
    return shifted @ rotation_matrix(shape.mean_azimuth, shape.mean_elevation).T


def to_local(shape: ClusterShape, points) -> np.ndarray:
    """Inverse of :func:`place_cluster`."""
    pts = np.asarray(points, dtype=float)
    return pts @ rotation_matrix(shape.mean_azimuth, shape.mean_elevation) - np.array(
        [shape.mean_distance, 0.0, 0.0])


def sample_scatterers(shape: ClusterShape, count: int, rng: np.random.Generator) -> ScattererSet:
    if count < 1:
        raise ValueError("count must be >= 1")
    local = rng.standard_normal((count, 3)) * shape.sigmas
    return ScattererSet(place_cluster(shape, local))


def sample_mean_distance(mean: float, std: float, rng: np.random.Generator) -> float:
    """Draw a positive cluster distance from N(mean, std), redrawing non-positive values."""
    if std == 0:
        if mean <= 0:
            raise ValueError("mean distance must be positive")
        return float(mean)
    for _ in range(10_000):
        d = mean + std * rng.standard_normal()
        if d > 0:
            return float(d)
    raise ValueError(f"could not draw a positive distance from N({mean}, {std})")


def local_from_spherical(d, phi_e, phi_a, shape: ClusterShape):
    """Cluster-frame coordinates of the point at distance ``d`` and angles (phi_e, phi_a)."""
    d, phi_e, phi_a = (np.asarray(v, dtype=float) for v in (d, phi_e, phi_a))
    me, ma = shape.mean_elevation, shape.mean_azimuth
    ce, se = np.cos(phi_e), np.sin(phi_e)
    cda = np.cos(phi_a - ma)
    x = d * (ce * math.cos(me) * cda + se * math.sin(me)) - shape.mean_distance
    y = d * ce * np.sin(phi_a - ma)
    z = d * (se * math.cos(me) - cda * ce * math.sin(me))
    return x, y, z


def pdf_angle_distance(d, phi_e, phi_a, shape: ClusterShape):
    """Joint density of scatterer distance, elevation and azimuth (1/(m rad^2))."""
    x, y, z = local_from_spherical(d, phi_e, phi_a, shape)
    jac = np.asarray(d, dtype=float) ** 2 * np.cos(phi_e)
    return np.abs(jac) * pdf_local(x, y, z, shape)


def single_bounce_distance(tau, phi_e, phi_a, D: float, c: float = SPEED_OF_LIGHT):
    """Distance from terminal X to a single-bounce scatterer with total delay ``tau``.

    Angles are measured in the frame of terminal X whose x axis points at
    the other terminal, a distance ``D`` away.
    """
    s = np.asarray(tau, dtype=float) * c
    cc = np.cos(phi_e) * np.cos(phi_a)
    return (s ** 2 - D ** 2) / (2.0 * s - 2.0 * D * cc)


def single_bounce_jacobian(tau, phi_e, phi_a, D: float, c: float = SPEED_OF_LIGHT):
    """Derivative of :func:`single_bounce_distance` with respect to delay."""
    s = np.asarray(tau, dtype=float) * c
    cc = np.cos(phi_e) * np.cos(phi_a)
    return c * (D ** 2 + s ** 2 - 2.0 * D * s * cc) / (2.0 * (s - D * cc) ** 2)


def pdf_delay_angle(tau, phi_e, phi_a, shape: ClusterShape, D: float,
                    c: float = SPEED_OF_LIGHT):
    """Joint density of single-bounce delay and angles (1/(s rad^2))."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau * c <= D):
        raise ValueError("delay must exceed the direct-path delay D/c")
    d = single_bounce_distance(tau, phi_e, phi_a, D, c)
    jac = single_bounce_jacobian(tau, phi_e, phi_a, D, c)
    return np.abs(jac) * pdf_angle_distance(d, phi_e, phi_a, shape)


def _spherical(vec, scale: float = 1.0):
    vec = np.asarray(vec, dtype=float)
    d = np.linalg.norm(vec, axis=-1)
    # Round-off leaves ~1e-14 of a cancelled coordinate; treat that as coincident.
    if np.any(d <= 1e-12 * scale):
        raise ValueError("degenerate geometry: scatterer coincides with the terminal")
    return d, np.arcsin(np.clip(vec[..., 2] / d, -1, 1)), np.arctan2(vec[..., 1], vec[..., 0])


def tx_params_from_rx(d_r, phi_r_e, phi_r_a, D: float):
    """Tx-side distance and angles of a scatterer known from the Rx side.

    Tx sits at the origin and Rx at ``(D, 0, 0)``; all angles are in that
    global frame. Returns ``(d_t, phi_t_e, phi_t_a)``.
    """
    pos = np.array([D, 0.0, 0.0]) + np.asarray(d_r, dtype=float)[..., None] * unit_vector(
        phi_r_a, phi_r_e)
    d, e, a = _spherical(pos, max(D, float(np.max(d_r))))
    if np.ndim(d) == 0:
        return float(d), float(e), float(a)
    return d, e, a


def rx_params_from_tx(d_t, phi_t_e, phi_t_a, D: float):
    """Inverse of :func:`tx_params_from_rx`."""
    pos = np.asarray(d_t, dtype=float)[..., None] * unit_vector(phi_t_a, phi_t_e) - np.array(
        [D, 0.0, 0.0])
    d, e, a = _spherical(pos, max(D, float(np.max(d_t))))
    if np.ndim(d) == 0:
        return float(d), float(e), float(a)
    return d, e, a
