"""Independent verifiers for the numerically delicate components.

Each check pits a production path against a reference computed by a
different route: analytic Jacobians vs central finite differences, belief
propagation vs dense factorization, constructive event enumeration vs
cross-product filtering, and the unscented smoother vs the closed-form
linear smoother.  The CLI exposes them under the ``oracle`` subcommand.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import scipy.linalg

from . import association, estimation, gmrf, vih
from .config import ScenarioConfig
from .errors import CoverageError
from .estimation import FilterState
from .geometry import RadarGeometry, jacobian_heights, jacobian_state, slant_vector


def fd_jacobian_state(state, h_t, h_r, geom, step_scale: float = 1e-4) -> np.ndarray:
    """Central finite differences of the slant transform in the state."""
    x = np.asarray(state, dtype=float)
    J = np.zeros((3, 4))
    for k in range(4):
        h = step_scale * max(abs(x[k]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        J[:, k] = (slant_vector(xp, h_t, h_r, geom) - slant_vector(xm, h_t, h_r, geom)) / (2 * h)
    return J


def fd_jacobian_heights(state, h_t, h_r, geom, step_scale: float = 1e-4):
    """Central finite differences of the slant transform in the two heights."""
    x = np.asarray(state, dtype=float)
    dt = step_scale * max(abs(h_t), 1.0)
    dr = step_scale * max(abs(h_r), 1.0)
    u_t = (slant_vector(x, h_t + dt, h_r, geom) - slant_vector(x, h_t - dt, h_r, geom)) / (2 * dt)
    u_r = (slant_vector(x, h_t, h_r + dr, geom) - slant_vector(x, h_t, h_r - dr, geom)) / (2 * dr)
    return u_t, u_r


def random_states(n: int, rng, scenario: ScenarioConfig = ScenarioConfig()) -> np.ndarray:
    """States uniform over the surveillance region with benchmark-scale rates."""
    lo_r, hi_r = scenario.surveillance_range_km
    lo_b, hi_b = scenario.surveillance_azimuth_rad
    out = np.zeros((n, 4))
    out[:, 0] = rng.uniform(lo_r, hi_r, n)
    out[:, 1] = rng.uniform(-0.2, 0.2, n)
    out[:, 2] = rng.uniform(lo_b, hi_b, n)
    out[:, 3] = rng.uniform(-2e-4, 2e-4, n)
    return out


def check_derivatives(seed: int = 0, n: int = 1000, rel_tol: float = 1e-4) -> Dict[str, float]:
    """Compare analytic Jacobians against finite differences on random states.

    Relative error is measured against the largest entry of the analytic
    matrix, which keeps the structurally-zero entries from dominating.
    """
    rng = np.random.default_rng(seed)
    scenario = ScenarioConfig()
    geom = scenario.geometry
    states = random_states(n, rng, scenario)
    heights = rng.uniform(90.0, 260.0, (n, 2))
    worst_state, worst_heights = 0.0, 0.0
    for x, (h_t, h_r) in zip(states, heights):
        Ja = jacobian_state(x, h_t, h_r, geom)
        Jf = fd_jacobian_state(x, h_t, h_r, geom)
        scale = np.max(np.abs(Ja))
        worst_state = max(worst_state, float(np.max(np.abs(Ja - Jf)) / scale))
        ut_a, ur_a = jacobian_heights(x, h_t, h_r, geom)
        ut_f, ur_f = fd_jacobian_heights(x, h_t, h_r, geom)
        scale_h = max(np.max(np.abs(ut_a)), np.max(np.abs(ur_a)))
        err = max(np.max(np.abs(ut_a - ut_f)), np.max(np.abs(ur_a - ur_f)))
        worst_heights = max(worst_heights, float(err / scale_h))
    return {
        "max_rel_err_state": worst_state,
        "max_rel_err_heights": worst_heights,
        "passed": float(worst_state < rel_tol and worst_heights < rel_tol),
    }


def linear_rts_smoother(states: List[FilterState], F: np.ndarray, B: np.ndarray):
    """Closed-form Rauch-Tung-Striebel smoother for linear dynamics."""
    n = len(states)
    out = [s.copy() for s in states]
    for t in range(n - 2, -1, -1):
        P_pred = F @ states[t].P @ F.T + B
        D = states[t].P @ F.T @ scipy.linalg.inv(P_pred)
        out[t].x = states[t].x + D @ (out[t + 1].x - F @ states[t].x)
        out[t].P = states[t].P + D @ (out[t + 1].P - P_pred) @ D.T
    return out


def check_smoother(seed: int = 0, n_steps: int = 12, tol: float = 1e-8) -> Dict[str, float]:
    """Unscented smoother vs the closed-form linear smoother on random filtered data."""
    rng = np.random.default_rng(seed)
    model = estimation.ConstantVelocityModel(dt=1.0)
    B = estimation.process_noise([0.3, 0.1, 0.3, 0.1])
    filtered = []
    for _ in range(n_steps):
        x = rng.normal(0.0, 3.0, 4)
        A = rng.normal(0.0, 1.0, (4, 4))
        filtered.append(FilterState(x, A @ A.T + 0.5 * np.eye(4)))
    ref = linear_rts_smoother(filtered, model.F, B)
    got = estimation.urts_smooth(filtered, model, B)
    err_x = max(
        float(np.max(np.abs(g.x - r.x) / np.maximum(np.abs(r.x), 1.0)))
        for g, r in zip(got, ref)
    )
    err_p = max(
        float(np.max(np.abs(g.P - r.P)) / max(np.max(np.abs(r.P)), 1e-30))
        for g, r in zip(got, ref)
    )
    single = estimation.urts_smooth(filtered[:1], model, B)
    exact_single = np.array_equal(single[0].x, filtered[0].x) and np.array_equal(
        single[0].P, filtered[0].P
    )
    return {
        "max_rel_err_states": err_x,
        "max_rel_err_covs": err_p,
        "window_one_exact": float(exact_single),
        "passed": float(err_x < tol and err_p < tol and exact_single),
    }


def _random_canonical_updates(joint, geom, rng, n_iono: int = 6, n_radar: int = 8):
    """A mix of sounding-style and radar-style increments for stress tests."""
    from .iono import IonosondeMeasurement, IonosondeSite, height_noise_to_delay_var

    updates = vih.CanonicalUpdates()
    n_cells = joint.e.n
    for _ in range(n_iono):
        layer = "E" if rng.random() < 0.5 else "F"
        site = IonosondeSite(
            kind="vertical",
            layer=layer,
            subregion=int(rng.integers(1, n_cells + 1)),
            noise_var=height_noise_to_delay_var(rng.uniform(5.0, 15.0)),
        )
        h_true = rng.uniform(90.0, 260.0)
        meas = IonosondeMeasurement(site=site, z=site.delay(h_true), scan=0)
        updates.extend(vih.canonical_updates_iono([meas], joint))
    R = np.diag([25.0, 1e-6, 9e-6])
    for _ in range(n_radar):
        mode = int(rng.integers(0, 4))
        x = np.array(
            [rng.uniform(1000, 1300), rng.normal(0, 0.15), rng.uniform(0.075, 0.12), 0.0]
        )
        h0_t = 110.0 if mode in (0, 1) else 220.0
        h0_r = 110.0 if mode in (0, 2) else 220.0
        y = slant_vector(x, h0_t + rng.normal(0, 8), h0_r + rng.normal(0, 8), geom)
        w = rng.uniform(0.3, 1.0)
        try:
            updates.extend(
                vih.canonical_update_radar(y, R / w, x, mode, h0_t, h0_r, geom, joint)
            )
        except CoverageError:
            continue
    return updates


def check_lgbp(seed: int = 0, tol_mean: float = 1e-6, tol_tree: float = 1e-12) -> Dict[str, float]:
    """Belief propagation vs dense marginals on the benchmark lattice and a tree.

    On the loopy lattice only the means are compared (variances are known
    to be approximate); on a spanning tree both means and variances must
    agree to machine-level accuracy.
    """
    rng = np.random.default_rng(seed)
    scenario = ScenarioConfig()
    # baseline offset so transmit and receive legs hit distinct cells
    geom = RadarGeometry(d=100.0, grid=scenario.grid)
    from .sim import build_layer_field

    e = build_layer_field(scenario.gmrf_e, scenario.grid)
    f = build_layer_field(scenario.gmrf_f, scenario.grid)
    joint = gmrf.combine(e, f)
    updates = _random_canonical_updates(joint, geom, rng)
    Q, eta = vih.assemble_posterior(joint, updates, validate=True)
    res = vih.lgbp(Q, eta, max_iter=5000, tol=1e-12)
    mean_ref, _ = gmrf.dense_marginals(Q, eta)
    scale = np.max(np.abs(mean_ref))
    err_mean = float(np.max(np.abs(res.mean - mean_ref)) / scale)

    # spanning tree: serpentine chain through the E lattice
    rows, cols = e.shape
    order = []
    for r in range(rows):
        line = list(range(r * cols, (r + 1) * cols))
        order.extend(line if r % 2 == 0 else line[::-1])
    n = rows * cols
    diag_v = np.full(n, scenario.gmrf_e.precision_diagonal)
    i = np.array(order[:-1])
    j = np.array(order[1:])
    Qt = np.zeros((n, n))
    Qt[np.arange(n), np.arange(n)] = diag_v
    Qt[i, j] = Qt[j, i] = scenario.gmrf_e.precision_off_diagonal
    eta_t = rng.normal(0.0, 0.05, n)
    res_t = vih.lgbp(Qt, eta_t, max_iter=5000, tol=0.0)
    mean_t, var_t = gmrf.dense_marginals(Qt, eta_t)
    err_tree_mean = float(np.max(np.abs(res_t.mean - mean_t)))
    err_tree_var = float(np.max(np.abs(res_t.variance - var_t)))
    return {
        "lattice_converged": float(res.converged),
        "lattice_mean_rel_err": err_mean,
        "tree_mean_err": err_tree_mean,
        "tree_var_err": err_tree_var,
        "passed": float(
            res.converged
            and err_mean < tol_mean
            and err_tree_mean < tol_tree
            and err_tree_var < tol_tree
        ),
    }


def random_micro_gate(rng, max_targets: int = 3, max_measurements: int = 6):
    """A small synthetic gating problem for enumeration equivalence checks."""
    L = int(rng.integers(1, max_targets + 1))
    N = int(rng.integers(0, max_measurements + 1))
    measurements = rng.uniform(-5.0, 5.0, (N, 3))
    preds = rng.uniform(-5.0, 5.0, (L, 4, 3))
    covs = np.tile(np.eye(3) * rng.uniform(1.0, 16.0), (L, 4, 1, 1))
    return association.gate(preds, covs, measurements, gate_probability=0.9)


def check_association(seed: int = 0, n_scenarios: int = 200) -> Dict[str, float]:
    """Constructive enumeration vs brute-force cross-product filtering.

    Also verifies that priors and posteriors are normalized and that the
    cluster-factorized association masses match full enumeration.
    """
    rng = np.random.default_rng(seed)
    clutter = association.ClutterModel(density=0.05, volume=1000.0)
    worst_prior, worst_omega, worst_mass = 0.0, 0.0, 0.0
    all_equal = True
    for _ in range(n_scenarios):
        g = random_micro_gate(rng)
        events = association.enumerate_events(g)
        brute = association.brute_force_events(g)
        all_equal = all_equal and set(e.assignments for e in events) == set(brute)

        p_d = 0.7
        priors = association.event_prior(events, g, p_d, clutter)
        worst_prior = max(worst_prior, abs(float(priors.sum()) - 1.0))
        # random scores stand in for measurement likelihoods
        log_lik = [
            [rng.normal(0.0, 1.0, len(g.gated[l][m])) for m in range(4)]
            for l in range(g.n_targets)
        ]
        for ev in events:
            ev.log_likelihood = sum(
                float(log_lik[l][gm][list(g.gated[l][gm]).index(m)])
                for l, inst in enumerate(ev.assignments)
                for gm, m in inst
            )
        omegas = association.posterior_weights(events)
        worst_omega = max(worst_omega, abs(float(omegas.sum()) - 1.0))

        summary = association.associate(g, p_d, clutter, log_lik)
        ref_w = np.zeros((g.n_targets, 4))
        for ev in events:
            for l, inst in enumerate(ev.assignments):
                for gm, _ in inst:
                    ref_w[l, gm] += ev.omega
        worst_mass = max(worst_mass, float(np.max(np.abs(summary.weight - ref_w))))
    return {
        "sets_equal": float(all_equal),
        "max_prior_sum_err": worst_prior,
        "max_omega_sum_err": worst_omega,
        "max_mass_err": worst_mass,
        "passed": float(
            all_equal and worst_prior < 1e-12 and worst_omega < 1e-12 and worst_mass < 1e-10
        ),
    }


def run_all(seed: int = 0) -> Dict[str, Dict[str, float]]:
    return {
        "derivatives": check_derivatives(seed),
        "smoother": check_smoother(seed),
        "lgbp": check_lgbp(seed),
        "association": check_association(seed),
    }
