"""Ground-truth scenario generation.

One simulated run produces, per scan: the true target states (constant
velocity plus process noise), freshly sampled layer height fields (no
temporal correlation), the multipath radar returns of each detected
(target, mode) pair, uniform Poisson clutter over the measurement-space
box, and ionosonde soundings.  Every radar measurement carries an origin
label so association decisions can be scored against truth.

All randomness flows through named child streams of one seed, so identical
(config, seed) pairs reproduce identical truth bit for bit.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import gmrf
from .config import Config, GmrfLayerConfig, ScenarioConfig
from .errors import CoverageError
from .estimation import ConstantVelocityModel, mode_heights, process_noise
from .geometry import MODES, IonosphereGrid, reflection_subregions, slant_vector
from .gmrf import GmrfField, JointField
from .iono import IonosondeMeasurement, simulate_soundings

CLUTTER_LABEL = -1

_STREAMS = ("targets", "fields", "detections", "clutter", "ionosondes")


@dataclass
class RadarScan:
    """Radar returns of one scan with per-measurement origin labels.

    ``origin_target[m]`` is the target index or CLUTTER_LABEL;
    ``origin_mode[m]`` is the 0-based mode index (CLUTTER_LABEL for clutter).
    """

    measurements: np.ndarray
    origin_target: np.ndarray
    origin_mode: np.ndarray


@dataclass
class GroundTruth:
    """Complete truth record of one simulated run.

    ``states[l, k]`` is target l at scan k (k = 0 is the initial state;
    measurements exist for scans 1..num_scans).  ``subregions[l, k - 1]``
    and ``used_heights[l, k - 1]`` hold the true reflection cells and the
    true used-height vector [hE_it, hE_ir, hF_it, hF_ir] at scan k; entries
    are negative / NaN where the target left grid coverage.
    """

    states: np.ndarray
    fields_e: np.ndarray
    fields_f: np.ndarray
    scans: List[RadarScan]
    soundings: List[List[IonosondeMeasurement]]
    subregions: np.ndarray
    used_heights: np.ndarray
    measurement_box: np.ndarray
    skipped_detections: int

    @property
    def num_scans(self) -> int:
        return len(self.scans)

    @property
    def num_targets(self) -> int:
        return self.states.shape[0]


def seed_streams(seed) -> dict:
    """Named, independent generators derived from one seed."""
    entropy = seed if isinstance(seed, (list, tuple)) else [int(seed)]
    root = np.random.SeedSequence(list(entropy))
    children = root.spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


def build_layer_field(cfg: GmrfLayerConfig, grid: IonosphereGrid) -> GmrfField:
    """Lattice prior of one layer; optionally rescaled to the quoted amplitude."""
    if cfg.correlation_mass is not None:
        field = gmrf.build_smoothness_precision(
            (grid.ny, grid.nx),
            abs(cfg.precision_off_diagonal),
            cfg.correlation_mass,
            cfg.mean_km,
        )
    else:
        field = gmrf.build_precision(
            (grid.ny, grid.nx), cfg.precision_diagonal, cfg.precision_off_diagonal, cfg.mean_km
        )
    if cfg.target_std_km is not None:
        field = gmrf.scale_to_marginal_std(field, cfg.target_std_km)
    return field


def build_joint_field(scenario: ScenarioConfig) -> JointField:
    grid = scenario.grid
    return gmrf.combine(
        build_layer_field(scenario.gmrf_e, grid), build_layer_field(scenario.gmrf_f, grid)
    )


def measurement_space_box(scenario: ScenarioConfig) -> np.ndarray:
    """Axis-aligned slant-space box containing all target returns.

    Slant range and azimuth bounds are the images of the surveillance-region
    corners under every combination of prior-mean layer heights; the range
    rate interval is configured directly.  Shape (3, 2): rows are
    (r_g, r_r, a_z), columns (lo, hi).
    """
    geom = scenario.geometry
    heights = (scenario.gmrf_e.mean_km, scenario.gmrf_f.mean_km)
    rg, az = [], []
    b_lo, b_hi = scenario.surveillance_azimuth_rad
    for rho, b, h_t, h_r in itertools.product(
        scenario.surveillance_range_km, (b_lo, b_hi), heights, heights
    ):
        y = slant_vector(np.array([rho, 0.0, b, 0.0]), h_t, h_r, geom)
        rg.append(y[0])
        az.append(y[2])
    rr_lo, rr_hi = scenario.clutter_range_rate_km_s
    return np.array([[min(rg), max(rg)], [rr_lo, rr_hi], [min(az), max(az)]])


def measurement_space_volume(scenario: ScenarioConfig) -> float:
    box = measurement_space_box(scenario)
    return float(np.prod(box[:, 1] - box[:, 0]))


def generate_targets(scenario: ScenarioConfig, rng) -> np.ndarray:
    """True state sequences, shape (L, num_scans + 1, 4)."""
    model = ConstantVelocityModel(scenario.sampling_period_s)
    stds = np.asarray(scenario.process_noise_std)
    L = len(scenario.targets)
    K = scenario.num_scans
    states = np.zeros((L, K + 1, 4))
    for l, tgt in enumerate(scenario.targets):
        states[l, 0] = tgt.as_array()
    noise = rng.standard_normal((K, L, 4)) * stds
    for k in range(K):
        for l in range(L):
            states[l, k + 1] = model(states[l, k]) + noise[k, l]
    return states


def sample_fields(scenario: ScenarioConfig, rng) -> Tuple[np.ndarray, np.ndarray]:
    """Per-scan independent layer height fields, shapes (num_scans, n_cells).

    With ``field_mode: prior_mean`` the fields are pinned at the prior mean
    (useful for noise-free consistency checks).
    """
    grid = scenario.grid
    e = build_layer_field(scenario.gmrf_e, grid)
    f = build_layer_field(scenario.gmrf_f, grid)
    K = scenario.num_scans
    if scenario.field_mode == "prior_mean":
        return np.tile(e.mu, (K, 1)), np.tile(f.mu, (K, 1))
    he = gmrf.sample_many(e, K, rng)
    hf = gmrf.sample_many(f, K, rng)
    return he, hf


def true_used_heights(
    states_k: np.ndarray, fields_e_k: np.ndarray, fields_f_k: np.ndarray, geom
) -> Tuple[np.ndarray, np.ndarray]:
    """True (i_t, i_r) and used-height vectors for all targets at one scan."""
    L = states_k.shape[0]
    subregions = np.full((L, 2), -1, dtype=int)
    heights = np.full((L, 4), np.nan)
    for l in range(L):
        try:
            i_t, i_r = reflection_subregions(states_k[l], MODES[0], geom)
        except CoverageError:
            continue
        subregions[l] = (i_t, i_r)
        heights[l] = (
            fields_e_k[i_t - 1],
            fields_e_k[i_r - 1],
            fields_f_k[i_t - 1],
            fields_f_k[i_r - 1],
        )
    return subregions, heights


def generate_radar(
    scenario: ScenarioConfig,
    states: np.ndarray,
    fields_e: np.ndarray,
    fields_f: np.ndarray,
    rng_detections,
    rng_clutter,
) -> Tuple[List[RadarScan], np.ndarray, np.ndarray, int]:
    """Radar scans with origin labels, plus the true subregions and heights.

    Each (target, mode) pair is detected independently with the configured
    probability; detections whose reflection geometry leaves the grid are
    skipped and counted.  Clutter counts are Poisson with the configured
    expected value, positions uniform over the measurement-space box.
    """
    geom = scenario.geometry
    noise_std = np.asarray(scenario.measurement_noise_std)
    box = measurement_space_box(scenario)
    L = states.shape[0]
    K = scenario.num_scans
    p_d = scenario.detection_probability

    scans: List[RadarScan] = []
    subregions = np.full((L, K, 2), -1, dtype=int)
    used_heights = np.full((L, K, 4), np.nan)
    skipped = 0
    for k in range(K):
        sub_k, hgt_k = true_used_heights(states[:, k + 1], fields_e[k], fields_f[k], geom)
        subregions[:, k] = sub_k
        used_heights[:, k] = hgt_k
        ys, tgt_lbl, mode_lbl = [], [], []
        for l in range(L):
            for g in range(4):
                detected = rng_detections.random() < p_d
                if not detected:
                    continue
                if sub_k[l, 0] < 0:
                    skipped += 1
                    continue
                h_t, h_r = mode_heights(hgt_k[l], g)
                y = slant_vector(states[l, k + 1], h_t, h_r, geom)
                ys.append(y + rng_detections.standard_normal(3) * noise_std)
                tgt_lbl.append(l)
                mode_lbl.append(g)
        n_c = rng_clutter.poisson(scenario.expected_clutter_per_scan)
        if n_c:
            u = rng_clutter.random((n_c, 3))
            pos = box[:, 0] + u * (box[:, 1] - box[:, 0])
            ys.extend(pos)
            tgt_lbl.extend([CLUTTER_LABEL] * n_c)
            mode_lbl.extend([CLUTTER_LABEL] * n_c)
        meas = np.array(ys).reshape(-1, 3)
        scans.append(
            RadarScan(
                measurements=meas,
                origin_target=np.array(tgt_lbl, dtype=int),
                origin_mode=np.array(mode_lbl, dtype=int),
            )
        )
    return scans, subregions, used_heights, skipped


def generate_ionosondes(
    scenario: ScenarioConfig, fields_e: np.ndarray, fields_f: np.ndarray, rng
) -> List[List[IonosondeMeasurement]]:
    """Per-scan soundings from every configured site/layer channel."""
    sites = scenario.ionosonde_sites()
    return [
        simulate_soundings(fields_e[k], fields_f[k], sites, rng, scan=k + 1)
        for k in range(scenario.num_scans)
    ]


def simulate(config: Config, seed) -> GroundTruth:
    """Generate one complete ground-truth run."""
    scenario = config.scenario
    rngs = seed_streams(seed)
    states = generate_targets(scenario, rngs["targets"])
    fields_e, fields_f = sample_fields(scenario, rngs["fields"])
    scans, subregions, used_heights, skipped = generate_radar(
        scenario, states, fields_e, fields_f, rngs["detections"], rngs["clutter"]
    )
    soundings = generate_ionosondes(scenario, fields_e, fields_f, rngs["ionosondes"])
    return GroundTruth(
        states=states,
        fields_e=fields_e,
        fields_f=fields_f,
        scans=scans,
        soundings=soundings,
        subregions=subregions,
        used_heights=used_heights,
        measurement_box=measurement_space_box(scenario),
        skipped_detections=skipped,
    )


def truth_to_dict(truth: GroundTruth) -> dict:
    """JSON-serializable form of a ground-truth bundle."""
    return {
        "states": truth.states.tolist(),
        "fields_e": truth.fields_e.tolist(),
        "fields_f": truth.fields_f.tolist(),
        "scans": [
            {
                "measurements": s.measurements.tolist(),
                "origin_target": s.origin_target.tolist(),
                "origin_mode": s.origin_mode.tolist(),
            }
            for s in truth.scans
        ],
        "soundings": [
            [
                {
                    "kind": m.site.kind,
                    "layer": m.site.layer,
                    "subregion": m.site.subregion,
                    "noise_var": m.site.noise_var,
                    "dbar": m.site.dbar,
                    "z": m.z,
                    "scan": m.scan,
                }
                for m in per_scan
            ]
            for per_scan in truth.soundings
        ],
        "subregions": truth.subregions.tolist(),
        "used_heights": truth.used_heights.tolist(),
        "measurement_box": truth.measurement_box.tolist(),
        "skipped_detections": truth.skipped_detections,
    }


def truth_from_dict(data: dict) -> GroundTruth:
    from .iono import IonosondeSite

    scans = [
        RadarScan(
            measurements=np.array(s["measurements"], dtype=float).reshape(-1, 3),
            origin_target=np.array(s["origin_target"], dtype=int),
            origin_mode=np.array(s["origin_mode"], dtype=int),
        )
        for s in data["scans"]
    ]
    soundings = [
        [
            IonosondeMeasurement(
                site=IonosondeSite(
                    kind=m["kind"],
                    layer=m["layer"],
                    subregion=m["subregion"],
                    noise_var=m["noise_var"],
                    dbar=m["dbar"],
                ),
                z=m["z"],
                scan=m["scan"],
            )
            for m in per_scan
        ]
        for per_scan in data["soundings"]
    ]
    return GroundTruth(
        states=np.array(data["states"], dtype=float),
        fields_e=np.array(data["fields_e"], dtype=float),
        fields_f=np.array(data["fields_f"], dtype=float),
        scans=scans,
        soundings=soundings,
        subregions=np.array(data["subregions"], dtype=int),
        used_heights=np.array(data["used_heights"], dtype=float),
        measurement_box=np.array(data["measurement_box"], dtype=float),
        skipped_detections=int(data["skipped_detections"]),
    )


def save_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth_to_dict(truth), fh)


def load_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        return truth_from_dict(json.load(fh))
