"""Multitarget multidetection data association.

Measurements are gated per (propagation mode, target) with an elliptical
Mahalanobis gate.  A target's association instance assigns at most one
gated measurement to each mode (modes pairwise distinct); an association
event combines one instance per target such that no measurement is used
twice anywhere.  Event posterior weights follow from a detection/clutter
prior times the Gaussian measurement likelihood of the assigned returns.

Two evaluation paths are provided:

* ``enumerate_events`` + ``event_prior`` + ``posterior_weights`` materialize
  the full joint event space (reference path, also checked against
  ``brute_force_events``);
* ``associate`` factorizes the event space over clusters of targets coupled
  by shared gated measurements and computes the per-(target, mode)
  association masses exactly without materializing the joint space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.stats import chi2

from .errors import EventCapError, NotPositiveDefiniteError
from .geometry import MODES, as_model

N_MODES = 4
DEFAULT_EVENT_CAP = 100_000

# assignment of one measurement to one (mode, target) slot
Assignment = Tuple[int, int]  # (mode index 0..3, measurement index)
Instance = Tuple[Assignment, ...]


@dataclass(frozen=True)
class ClutterModel:
    """Uniform Poisson clutter over the measurement space.

    Attributes:
        density: expected clutter per unit measurement volume
        volume: total measurement-space volume (km * km/s * rad)
        cardinality: which Poisson mean the event-prior cardinality terms
            use for a gated count -- "global" (density * volume, i.e. the
            clutter model's own pmf) or "gate" (density * gate volume).
    """

    density: float
    volume: float
    cardinality: str = "global"

    def __post_init__(self):
        if self.density < 0 or self.volume <= 0:
            raise ValueError("clutter density must be >= 0 and volume > 0")
        if self.cardinality not in ("global", "gate"):
            raise ValueError("cardinality must be 'global' or 'gate'")

    @classmethod
    def from_expected_count(
        cls, count: float, volume: float, cardinality: str = "global"
    ) -> "ClutterModel":
        return cls(density=count / volume, volume=volume, cardinality=cardinality)

    @property
    def expected_count(self) -> float:
        return self.density * self.volume

    def poisson_mean(self, gate_volume: float) -> float:
        if self.cardinality == "gate":
            return self.density * gate_volume
        return self.expected_count


@dataclass
class GateResult:
    """Outcome of elliptical gating for all (target, mode) pairs.

    ``gated[l][g]`` holds the indices (into ``measurements``) that fall in
    the gate of target l through mode g; ``volumes[l, g]`` is the gate
    ellipsoid volume used for the Poisson cardinality terms.  Modes with no
    prediction (e.g. out of coverage) are marked invalid and gate nothing.
    """

    measurements: np.ndarray
    gated: List[List[np.ndarray]]
    threshold: float
    gate_probability: float
    volumes: np.ndarray
    valid: np.ndarray

    @property
    def n_targets(self) -> int:
        return len(self.gated)

    @property
    def n_measurements(self) -> int:
        return self.measurements.shape[0]


@dataclass
class AssociationEvent:
    """One joint assignment: an instance per target, with its weights."""

    assignments: Tuple[Instance, ...]
    log_prior: float = 0.0
    prior: float = 0.0
    log_likelihood: float = 0.0
    omega: float = 0.0

    def measurement_of(self, target: int, mode: int) -> Optional[int]:
        for g, m in self.assignments[target]:
            if g == mode:
                return m
        return None


def gate_threshold(gate_probability: float, dof: int = 3) -> float:
    """Chi-square quantile realizing the requested gate probability."""
    return float(chi2.ppf(gate_probability, dof))


def ellipsoid_volume(threshold: float, S: np.ndarray) -> float:
    """Volume of {y : (y-c)^T S^-1 (y-c) <= threshold} for 3-dim y."""
    det = scipy.linalg.det(S)
    return 4.0 / 3.0 * math.pi * threshold**1.5 * math.sqrt(det)


def gate(
    predictions: np.ndarray,
    innovation_covs: np.ndarray,
    measurements: np.ndarray,
    gate_probability: float,
    valid: Optional[np.ndarray] = None,
) -> GateResult:
    """Select the gated measurement set of every (target, mode) pair.

    Args:
        predictions: (L, 4, 3) predicted measurements
        innovation_covs: (L, 4, 3, 3) symmetric PD innovation covariances
        measurements: (N, 3) received measurements
        gate_probability: probability mass the gate should capture
        valid: optional (L, 4) mask of modes that produced a prediction
    """
    predictions = np.asarray(predictions, dtype=float)
    innovation_covs = np.asarray(innovation_covs, dtype=float)
    measurements = np.asarray(measurements, dtype=float).reshape(-1, 3)
    L = predictions.shape[0]
    if valid is None:
        valid = np.ones((L, N_MODES), dtype=bool)
    thr = gate_threshold(gate_probability)

    gated: List[List[np.ndarray]] = []
    volumes = np.zeros((L, N_MODES))
    empty = np.empty(0, dtype=int)
    for l in range(L):
        rows = []
        for g in range(N_MODES):
            if not valid[l, g]:
                rows.append(empty)
                continue
            S = innovation_covs[l, g]
            try:
                cho = scipy.linalg.cho_factor(S, lower=True)
            except scipy.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError(
                    f"innovation covariance of target {l} mode {g} is not PD"
                ) from exc
            if measurements.size:
                resid = measurements - predictions[l, g]
                d2 = np.einsum("ni,ni->n", resid, scipy.linalg.cho_solve(cho, resid.T).T)
                rows.append(np.flatnonzero(d2 <= thr))
            else:
                rows.append(empty)
            volumes[l, g] = ellipsoid_volume(thr, S)
        gated.append(rows)
    return GateResult(
        measurements=measurements,
        gated=gated,
        threshold=thr,
        gate_probability=gate_probability,
        volumes=volumes,
        valid=valid.astype(bool),
    )


def phi_max(gate_result: GateResult, target: int) -> int:
    """Number of modes whose gate holds at least one measurement."""
    return sum(1 for g in range(N_MODES) if len(gate_result.gated[target][g]) > 0)


def target_instances(gate_result: GateResult, target: int) -> List[Instance]:
    """All association instances of one target, empty instance included.

    Instances are canonical tuples of (mode, measurement) with strictly
    increasing modes and pairwise-distinct measurements.
    """
    instances: List[Instance] = [()]
    for g in range(N_MODES):
        idxs = gate_result.gated[target][g]
        if len(idxs) == 0:
            continue
        for inst in list(instances):
            used = {m for _, m in inst}
            for m in idxs:
                if int(m) not in used:
                    instances.append(inst + ((g, int(m)),))
    return instances


def enumerate_events(
    gate_result: GateResult, cap: int = DEFAULT_EVENT_CAP
) -> List[AssociationEvent]:
    """Materialize the full joint event space.

    Raises EventCapError once more than ``cap`` events exist; the all-empty
    event is always present.
    """
    L = gate_result.n_targets
    per_target = [target_instances(gate_result, l) for l in range(L)]
    events: List[AssociationEvent] = []

    def recurse(l: int, chosen: List[Instance], used: set):
        if l == L:
            if len(events) >= cap:
                raise EventCapError(f"association event count exceeds cap {cap}")
            events.append(AssociationEvent(assignments=tuple(chosen)))
            return
        for inst in per_target[l]:
            ms = [m for _, m in inst]
            if used.isdisjoint(ms):
                chosen.append(inst)
                recurse(l + 1, chosen, used | set(ms))
                chosen.pop()

    recurse(0, [], set())
    return events


def _log_poisson(n: int, mean: float) -> float:
    if mean <= 0.0:
        return 0.0 if n == 0 else -math.inf
    return n * math.log(mean) - mean - math.lgamma(n + 1)


def _instance_log_prior(
    gate_result: GateResult,
    target: int,
    inst: Instance,
    p_d: np.ndarray,
    clutter: ClutterModel,
) -> float:
    """Unnormalized log prior contribution of one target's instance.

    Assigned modes contribute p_d * p_g * Pois(|gate| - 1); the remaining
    modes contribute (1 - p_d * p_g) * Pois(|gate|), with Poisson mean
    equal to the expected clutter count inside that mode's gate.
    """
    p_g = gate_result.gate_probability
    assigned = {g for g, _ in inst}
    total = 0.0
    for g in range(N_MODES):
        n_g = len(gate_result.gated[target][g])
        mean = clutter.poisson_mean(gate_result.volumes[target, g])
        if g in assigned:
            total += math.log(p_d[g] * p_g) + _log_poisson(n_g - 1, mean)
        else:
            total += math.log1p(-p_d[g] * p_g) + _log_poisson(n_g, mean)
    return total


def event_prior(
    events: Sequence[AssociationEvent],
    gate_result: GateResult,
    p_d,
    clutter: ClutterModel,
) -> np.ndarray:
    """Fill normalized priors on the events; returns the prior vector."""
    p_d = np.broadcast_to(np.asarray(p_d, dtype=float), (N_MODES,))
    logs = np.array(
        [
            sum(
                _instance_log_prior(gate_result, l, inst, p_d, clutter)
                for l, inst in enumerate(ev.assignments)
            )
            for ev in events
        ]
    )
    priors = _normalize_log_weights(logs)
    for ev, lp, p in zip(events, logs, priors):
        ev.log_prior = float(lp)
        ev.prior = float(p)
    return priors


def gaussian_log_density(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    resid = np.asarray(y) - np.asarray(mean)
    cho = scipy.linalg.cho_factor(cov, lower=True)
    maha = float(resid @ scipy.linalg.cho_solve(cho, resid))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return -0.5 * (len(resid) * math.log(2.0 * math.pi) + logdet + maha)


def _mode_heights(beta: np.ndarray, mode_idx: int) -> Tuple[float, float]:
    """(h_t, h_r) for a mode from the used-height vector [hE_it, hE_ir, hF_it, hF_ir]."""
    mode = MODES[mode_idx]
    h_t = beta[0] if mode.layer_t == "E" else beta[2]
    h_r = beta[1] if mode.layer_r == "E" else beta[3]
    return float(h_t), float(h_r)


def event_log_likelihood(
    event: AssociationEvent,
    states: Sequence,
    used_vihs: Sequence[np.ndarray],
    measurements: np.ndarray,
    noise_covs: Sequence[np.ndarray],
    geom,
) -> float:
    """Log measurement likelihood of one event.

    Product over assigned pairs of N(y; u_mode(x_l, beta_l), R_mode); the
    empty event has likelihood one.  ``used_vihs[l]`` is the 4-vector
    [hE_it, hE_ir, hF_it, hF_ir] of target l.
    """
    model = as_model(geom)
    total = 0.0
    for l, inst in enumerate(event.assignments):
        for g, m in inst:
            h_t, h_r = _mode_heights(np.asarray(used_vihs[l], dtype=float), g)
            pred = model.u(states[l], h_t, h_r)
            total += gaussian_log_density(measurements[m], pred, noise_covs[g])
    return total


def event_likelihood(event, states, used_vihs, measurements, noise_covs, geom) -> float:
    """Measurement likelihood density of one event (see event_log_likelihood)."""
    return math.exp(
        event_log_likelihood(event, states, used_vihs, measurements, noise_covs, geom)
    )


def _normalize_log_weights(logs: np.ndarray) -> np.ndarray:
    """exp-normalize log weights; all `-inf` yields a uniform distribution."""
    logs = np.asarray(logs, dtype=float)
    m = np.max(logs) if logs.size else 0.0
    if not np.isfinite(m):
        return np.full(logs.shape, 1.0 / max(len(logs), 1))
    w = np.exp(logs - m)
    return w / w.sum()


def posterior_weights(events: Sequence[AssociationEvent]) -> np.ndarray:
    """Normalize prior x likelihood into posterior event weights.

    Requires ``log_prior`` and ``log_likelihood`` to be filled.  If every
    likelihood underflows to zero the weights fall back to the priors.
    """
    log_post = np.array([ev.log_prior + ev.log_likelihood for ev in events])
    if not np.any(np.isfinite(log_post)):
        log_post = np.array([ev.log_prior for ev in events])
    omegas = _normalize_log_weights(log_post)
    for ev, w in zip(events, omegas):
        ev.omega = float(w)
    return omegas


def brute_force_events(
    gate_result: GateResult, cap: int = DEFAULT_EVENT_CAP
) -> List[Tuple[Instance, ...]]:
    """Reference enumeration: filter the full (target, mode) option cross-product.

    Every (target, mode) slot independently picks one gated measurement or
    nothing; combinations reusing a measurement are discarded.  Returns
    canonical assignment tuples for set comparison against
    ``enumerate_events``.
    """
    L = gate_result.n_targets
    slots = []
    for l in range(L):
        for g in range(N_MODES):
            slots.append([None] + [int(m) for m in gate_result.gated[l][g]])
    out = []
    for combo in itertools.product(*slots):
        picked = [m for m in combo if m is not None]
        if len(picked) != len(set(picked)):
            continue
        assignments = []
        for l in range(L):
            inst = tuple(
                (g, combo[l * N_MODES + g])
                for g in range(N_MODES)
                if combo[l * N_MODES + g] is not None
            )
            assignments.append(inst)
        if len(out) >= cap:
            raise EventCapError(f"association event count exceeds cap {cap}")
        out.append(tuple(assignments))
    return out


def target_clusters(gate_result: GateResult) -> List[List[int]]:
    """Partition targets into clusters coupled by shared gated measurements."""
    L = gate_result.n_targets
    parent = list(range(L))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owner = {}
    for l in range(L):
        for g in range(N_MODES):
            for m in gate_result.gated[l][g]:
                m = int(m)
                if m in owner:
                    ra, rb = find(owner[m]), find(l)
                    if ra != rb:
                        parent[rb] = ra
                else:
                    owner[m] = l
    clusters = {}
    for l in range(L):
        clusters.setdefault(find(l), []).append(l)
    return [sorted(v) for _, v in sorted(clusters.items())]


@dataclass
class AssociationSummary:
    """Exact per-(target, mode) association statistics of one scan.

    ``weight[l, g]`` is the total posterior mass of events assigning some
    measurement to target l via mode g, and ``mean_measurement[l, g]`` the
    mass-weighted mean of those measurements (undefined where weight is 0).
    """

    weight: np.ndarray
    mean_measurement: np.ndarray
    n_events: int
    joint_event_count: float
    max_cluster_size: int
    cluster_sizes: List[int] = field(default_factory=list)


def associate(
    gate_result: GateResult,
    p_d,
    clutter: ClutterModel,
    log_lik: Sequence[Sequence[np.ndarray]],
    cap: int = DEFAULT_EVENT_CAP,
) -> AssociationSummary:
    """Exact E-step via cluster factorization.

    ``log_lik[l][g]`` holds log-likelihood values aligned with
    ``gate_result.gated[l][g]``.  Targets that share no gated measurement
    factor into independent clusters; the posterior over the joint event
    space is the product of the per-cluster posteriors, so the marginal
    association masses computed here equal the full-enumeration values.
    The cap bounds the number of materialized events per cluster.
    """
    p_d = np.broadcast_to(np.asarray(p_d, dtype=float), (N_MODES,))
    L = gate_result.n_targets
    weight = np.zeros((L, N_MODES))
    ymean = np.zeros((L, N_MODES, 3))
    clusters = target_clusters(gate_result)
    total_events = 0
    joint_count = 1.0

    lik_lookup = [
        {int(m): float(v) for m, v in zip(gate_result.gated[l][g], log_lik[l][g])}
        for l in range(L)
        for g in range(N_MODES)
    ]

    for cluster in clusters:
        insts, scores = [], []
        for l in cluster:
            t_insts = target_instances(gate_result, l)
            t_scores = []
            for inst in t_insts:
                s = _instance_log_prior(gate_result, l, inst, p_d, clutter)
                s += sum(lik_lookup[l * N_MODES + g][m] for g, m in inst)
                t_scores.append(s)
            insts.append(t_insts)
            scores.append(t_scores)

        events: List[Tuple[int, ...]] = []
        event_scores: List[float] = []

        def recurse(i: int, chosen: List[int], used: set, acc: float):
            if i == len(cluster):
                if len(events) >= cap:
                    raise EventCapError(f"association event count exceeds cap {cap}")
                events.append(tuple(chosen))
                event_scores.append(acc)
                return
            for k, inst in enumerate(insts[i]):
                ms = [m for _, m in inst]
                if used.isdisjoint(ms):
                    chosen.append(k)
                    recurse(i + 1, chosen, used | set(ms), acc + scores[i][k])
                    chosen.pop()

        recurse(0, [], set(), 0.0)
        score_arr = np.array(event_scores)
        if not np.any(np.isfinite(score_arr)):
            # all likelihoods underflowed: fall back to the prior alone
            score_arr = np.array(
                [
                    sum(
                        _instance_log_prior(gate_result, cluster[i], insts[i][k], p_d, clutter)
                        for i, k in enumerate(ev)
                    )
                    for ev in events
                ]
            )
        omega = _normalize_log_weights(score_arr)

        for ev, w in zip(events, omega):
            for i, k in enumerate(ev):
                l = cluster[i]
                for g, m in insts[i][k]:
                    weight[l, g] += w
                    ymean[l, g] += w * gate_result.measurements[m]
        total_events += len(events)
        joint_count *= len(events)

    nz = weight > 0
    ymean[nz] /= weight[nz][:, None]
    return AssociationSummary(
        weight=weight,
        mean_measurement=ymean,
        n_events=total_events,
        joint_event_count=joint_count,
        max_cluster_size=max((len(c) for c in clusters), default=0),
        cluster_sizes=[len(c) for c in clusters],
    )
