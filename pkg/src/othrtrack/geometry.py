"""Coordinate registration between ground and slant radar coordinates.

Ground frame convention: the receiver sits at the origin with the array
boresight along +X, and the transmitter sits at (0, d) on the baseline.
A target at ground range ``rho`` and bearing ``b`` (both measured at the
receiver) is at (rho*cos(b), rho*sin(b)).

Each signal leg is reflected once by an ionospheric mirror layer.  The
half-path lengths are

    r1 = sqrt((rho/2)^2 + h_r^2)                                  (receive leg)
    r2 = sqrt((rho/2)^2 - d*rho*sin(b)/2 + (d/2)^2 + h_t^2)       (transmit leg)

and the slant measurement vector is

    r_g = r1 + r2
    r_r = (rho_dot/4) * (rho/r1 + (rho - d*sin(b))/r2)
    a_z = asin(rho*sin(b) / (2*r1))

Units throughout: km, km/s, rad, rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

import numpy as np

from .errors import CoverageError, GeometryError


class PropagationMode(IntEnum):
    """One-hop propagation mode: which layer reflects each leg."""

    EE = 1
    EF = 2
    FE = 3
    FF = 4

    @property
    def layer_t(self) -> str:
        """Layer reflecting the transmit leg (first letter of the name)."""
        return self.name[0]

    @property
    def layer_r(self) -> str:
        """Layer reflecting the receive leg (second letter of the name)."""
        return self.name[1]


MODES = (PropagationMode.EE, PropagationMode.EF, PropagationMode.FE, PropagationMode.FF)


@dataclass(frozen=True)
class TargetState:
    """Ground-coordinate kinematics of one target.

    Attributes:
        rho: ground range, km (> 0)
        rho_dot: ground range rate, km/s
        b: bearing from boresight, rad
        b_dot: bearing rate, rad/s
    """

    rho: float
    rho_dot: float
    b: float
    b_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.rho_dot, self.b, self.b_dot])

    @classmethod
    def from_array(cls, x) -> "TargetState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass(frozen=True)
class RadarMeasurement:
    """Slant-coordinate radar return: slant range (km), slant range rate (km/s), azimuth (rad)."""

    r_g: float
    r_r: float
    a_z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r_g, self.r_r, self.a_z])

    @classmethod
    def from_array(cls, y) -> "RadarMeasurement":
        return cls(float(y[0]), float(y[1]), float(y[2]))


@dataclass(frozen=True)
class IonosphereGrid:
    """Regular lattice of ionospheric subregions in ground coordinates.

    Cells are ``cell_km`` squares; ``x0``/``y0`` is the lower corner of cell 1.
    Subregion indices are 1-based and row-major in Y:
    ``index = iy * nx + ix + 1``.
    """

    x0: float
    y0: float
    cell_km: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx <= 0 or self.ny <= 0:
            raise ValueError("grid cell counts must be positive")
        if self.cell_km <= 0:
            raise ValueError("grid cell size must be positive")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def _axis_index(self, u: float, count: int) -> int:
        # Points exactly on a cell boundary belong to the lower-index cell,
        # so the lower grid edge itself is out of coverage.
        k = math.ceil(u / self.cell_km) - 1
        if k < 0 or k >= count:
            raise CoverageError(f"reflection point outside grid extent (offset {u:.3f} km)")
        return k

    def cell_index(self, x: float, y: float) -> int:
        """1-based subregion index of the cell containing ground point (x, y)."""
        ix = self._axis_index(x - self.x0, self.nx)
        iy = self._axis_index(y - self.y0, self.ny)
        return iy * self.nx + ix + 1


@dataclass(frozen=True)
class RadarGeometry:
    """Station geometry and ionosphere grid.

    Attributes:
        d: transmitter-to-receiver baseline distance, km (>= 0)
        grid: ionospheric subregion lattice shared by both layers
    """

    d: float
    grid: IonosphereGrid

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("baseline distance must be nonnegative")


def _state_array(state) -> np.ndarray:
    if isinstance(state, TargetState):
        return state.as_array()
    return np.asarray(state, dtype=float)


def _legs(rho, b, h_t, h_r, d):
    r1 = np.sqrt((rho / 2.0) ** 2 + h_r**2)
    r2 = np.sqrt((rho / 2.0) ** 2 - d * rho * np.sin(b) / 2.0 + (d / 2.0) ** 2 + h_t**2)
    return r1, r2


def slant_vector(state, h_t: float, h_r: float, geom: RadarGeometry) -> np.ndarray:
    """Measurement function u(x, h_t, h_r) as a length-3 array.

    Broadcasts over leading axes of ``state`` (shape (..., 4)).
    """
    x = _state_array(state)
    rho, rho_dot, b = x[..., 0], x[..., 1], x[..., 2]
    r1, r2 = _legs(rho, b, h_t, h_r, geom.d)
    s = rho * np.sin(b) / (2.0 * r1)
    if np.any(np.abs(s) > 1.0):
        raise GeometryError("azimuth arcsine argument outside [-1, 1]")
    r_g = r1 + r2
    r_r = (rho_dot / 4.0) * (rho / r1 + (rho - geom.d * np.sin(b)) / r2)
    a_z = np.arcsin(s)
    return np.stack([r_g, r_r, a_z], axis=-1)


def slant_transform(state, h_t: float, h_r: float, geom: RadarGeometry) -> RadarMeasurement:
    """Ground-to-slant transform for a single state; see module docstring."""
    return RadarMeasurement.from_array(slant_vector(state, h_t, h_r, geom))


def jacobian_state(state, h_t: float, h_r: float, geom: RadarGeometry) -> np.ndarray:
    """3x4 Jacobian of the measurement function w.r.t. (rho, rho_dot, b, b_dot)."""
    x = _state_array(state)
    rho, rho_dot, b = float(x[0]), float(x[1]), float(x[2])
    d = geom.d
    sb, cb = math.sin(b), math.cos(b)
    r1, r2 = _legs(rho, b, h_t, h_r, d)
    r1, r2 = float(r1), float(r2)
    a = rho - d * sb

    dr1_drho = rho / (4.0 * r1)
    dr2_drho = a / (4.0 * r2)
    dr2_db = -d * rho * cb / (4.0 * r2)

    J = np.zeros((3, 4))
    # slant range
    J[0, 0] = dr1_drho + dr2_drho
    J[0, 2] = dr2_db
    # slant range rate: r_r = (rho_dot/4) * (rho/r1 + a/r2)
    t1, t2 = rho / r1, a / r2
    dt1_drho = 1.0 / r1 - rho * dr1_drho / r1**2
    dt2_drho = 1.0 / r2 - a * dr2_drho / r2**2
    dt2_db = -d * cb / r2 - a * dr2_db / r2**2
    J[1, 0] = rho_dot / 4.0 * (dt1_drho + dt2_drho)
    J[1, 1] = (t1 + t2) / 4.0
    J[1, 2] = rho_dot / 4.0 * dt2_db
    # azimuth: a_z = asin(s), s = rho*sin(b)/(2*r1)
    s = rho * sb / (2.0 * r1)
    if abs(s) >= 1.0:
        raise GeometryError("azimuth arcsine argument outside (-1, 1)")
    dasin = 1.0 / math.sqrt(1.0 - s * s)
    ds_drho = sb / (2.0 * r1) - rho * sb * dr1_drho / (2.0 * r1**2)
    ds_db = rho * cb / (2.0 * r1)
    J[2, 0] = dasin * ds_drho
    J[2, 2] = dasin * ds_db
    return J


def jacobian_heights(
    state, h_t: float, h_r: float, geom: RadarGeometry
) -> Tuple[np.ndarray, np.ndarray]:
    """Partials of the measurement function w.r.t. the two reflection heights.

    Returns (du/dh_t, du/dh_r), each a length-3 array.  The azimuth depends
    only on the receive leg, so du3/dh_t is identically zero.
    """
    x = _state_array(state)
    rho, rho_dot, b = float(x[0]), float(x[1]), float(x[2])
    d = geom.d
    sb = math.sin(b)
    r1, r2 = _legs(rho, b, h_t, h_r, d)
    r1, r2 = float(r1), float(r2)
    a = rho - d * sb

    dr1_dhr = h_r / r1
    dr2_dht = h_t / r2

    u_t = np.zeros(3)
    u_t[0] = dr2_dht
    u_t[1] = -rho_dot / 4.0 * a * h_t / r2**3

    s = rho * sb / (2.0 * r1)
    if abs(s) >= 1.0:
        raise GeometryError("azimuth arcsine argument outside (-1, 1)")
    dasin = 1.0 / math.sqrt(1.0 - s * s)

    u_r = np.zeros(3)
    u_r[0] = dr1_dhr
    u_r[1] = -rho_dot / 4.0 * rho * h_r / r1**3
    u_r[2] = dasin * (-rho * sb * dr1_dhr / (2.0 * r1**2))
    return u_t, u_r


def reflection_points(state, geom: RadarGeometry) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """Ground coordinates of the transmit-leg and receive-leg reflection points.

    Mirror reflection puts each point at the midpoint of the corresponding
    ground segment: transmitter (0, d) -> target for the transmit leg,
    target -> receiver (0, 0) for the receive leg.  Heights do not enter.
    """
    x = _state_array(state)
    rho, b = float(x[0]), float(x[2])
    tx, ty = rho * math.cos(b), rho * math.sin(b)
    p_t = (tx / 2.0, (ty + geom.d) / 2.0)
    p_r = (tx / 2.0, ty / 2.0)
    return p_t, p_r


def reflection_subregions(state, mode: PropagationMode, geom: RadarGeometry) -> Tuple[int, int]:
    """Subregion indices (i_t, i_r) used by a target.

    The midpoint rule is independent of the propagation mode and of the
    layer heights; the mode argument is kept because it selects which
    layer's field each index refers to (see ``PropagationMode.layer_t``).
    Pure function of the target position: velocities are ignored.
    """
    del mode
    p_t, p_r = reflection_points(state, geom)
    i_t = geom.grid.cell_index(*p_t)
    i_r = geom.grid.cell_index(*p_r)
    return i_t, i_r


class MeasurementModel:
    """Interface between the estimators and a measurement geometry.

    The production model wraps the slant transform; tests substitute exact
    linear stubs to validate the filter and the height inference against
    closed-form Gaussian results.
    """

    def u(self, x, h_t: float, h_r: float) -> np.ndarray:
        raise NotImplementedError

    def jac_state(self, x, h_t: float, h_r: float) -> np.ndarray:
        raise NotImplementedError

    def jac_heights(self, x, h_t: float, h_r: float) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def subregions(self, x) -> Tuple[int, int]:
        raise NotImplementedError


class SlantModel(MeasurementModel):
    """Measurement model backed by the slant coordinate registration."""

    def __init__(self, geom: RadarGeometry):
        self.geom = geom

    def u(self, x, h_t, h_r):
        return slant_vector(x, h_t, h_r, self.geom)

    def jac_state(self, x, h_t, h_r):
        return jacobian_state(x, h_t, h_r, self.geom)

    def jac_heights(self, x, h_t, h_r):
        return jacobian_heights(x, h_t, h_r, self.geom)

    def subregions(self, x):
        return reflection_subregions(x, PropagationMode.EE, self.geom)


def as_model(geom_or_model) -> MeasurementModel:
    """Coerce a RadarGeometry into its slant model; pass models through."""
    if isinstance(geom_or_model, MeasurementModel):
        return geom_or_model
    if isinstance(geom_or_model, RadarGeometry):
        return SlantModel(geom_or_model)
    raise TypeError(f"expected RadarGeometry or MeasurementModel, got {type(geom_or_model)!r}")
