"""Ionosonde sounding models and their canonical-form height updates.

A sounding measures the round-trip time delay of a pulse reflected by one
layer above one subregion.  Vertical incidence gives g(h) = 2h/c exactly;
oblique incidence over a flat earth gives g(h) = 2*sqrt(h^2 + (dbar/2)^2)/c
for a transmitter-receiver separation dbar.  Delays are in seconds, heights
in km.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

LIGHT_SPEED_KM_S = 299792.458


@dataclass(frozen=True)
class IonosondeSite:
    """One sounding channel: a site observing one layer's height at one subregion.

    Attributes:
        kind: "vertical" or "oblique"
        layer: "E" or "F"
        subregion: 1-based lattice index of the observed cell
        noise_var: delay noise variance, s^2 (> 0)
        dbar: transmitter-receiver ground separation, km (oblique only)
    """

    kind: str
    layer: str
    subregion: int
    noise_var: float
    dbar: float = 0.0

    def __post_init__(self):
        if self.kind not in ("vertical", "oblique"):
            raise ValueError(f"unknown ionosonde kind {self.kind!r}")
        if self.layer not in ("E", "F"):
            raise ValueError(f"unknown layer {self.layer!r}")
        if self.noise_var <= 0:
            raise ValueError("noise variance must be positive")

    def delay(self, h: float) -> float:
        if self.kind == "vertical":
            return g_vertical(h)
        return g_oblique(h, self.dbar)

    def delay_slope(self, h: float) -> float:
        """dg/dh at height h."""
        if self.kind == "vertical":
            return 2.0 / LIGHT_SPEED_KM_S
        return 2.0 * h / (LIGHT_SPEED_KM_S * math.hypot(h, self.dbar / 2.0))


@dataclass(frozen=True)
class IonosondeMeasurement:
    """One observed delay from one site at one scan."""

    site: IonosondeSite
    z: float
    scan: int


def g_vertical(h: float) -> float:
    """Round-trip delay of a vertical sounding, s."""
    return 2.0 * h / LIGHT_SPEED_KM_S


def g_oblique(h: float, dbar: float) -> float:
    """Round-trip delay of an oblique sounding with ground separation dbar, s."""
    return 2.0 * math.hypot(h, dbar / 2.0) / LIGHT_SPEED_KM_S


def height_noise_to_delay_var(std_km: float) -> float:
    """Delay variance equivalent to a vertical height error of ``std_km``."""
    return g_vertical(std_km) ** 2


def simulate_soundings(
    truth_e: np.ndarray,
    truth_f: np.ndarray,
    sites: Sequence[IonosondeSite],
    rng,
    scan: int = 0,
) -> List[IonosondeMeasurement]:
    """Generate one scan of soundings from the true per-layer height vectors.

    ``truth_e``/``truth_f`` index heights by 0-based node; each site reads
    its subregion's true height and adds N(0, noise_var) delay noise.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    out = []
    for site in sites:
        truth = truth_e if site.layer == "E" else truth_f
        h = float(truth[site.subregion - 1])
        z = site.delay(h) + math.sqrt(site.noise_var) * rng.standard_normal()
        out.append(IonosondeMeasurement(site=site, z=z, scan=scan))
    return out


def canonical_update_iono(z: float, site: IonosondeSite, h0: float) -> Tuple[float, float]:
    """Canonical-form increments (dQ, deta) from one sounding.

    The delay model is linearized at ``h0``; for vertical sites the
    linearization is exact, so the increments do not depend on h0.  The
    precision increment is always nonnegative.
    """
    gp = site.delay_slope(h0)
    g0 = site.delay(h0)
    dq = gp * gp / site.noise_var
    deta = gp * (gp * h0 - g0 + z) / site.noise_var
    return dq, deta
