"""Height-field inference from radar and ionosonde measurements.

Both measurement families enter the joint layer field in canonical form:
each linearized measurement adds increments to the precision diagonal, the
potential vector, and (for radar, which couples the two reflection
subregions of a path) one off-diagonal precision entry.  Marginal means
and variances of the updated field are computed by loopy Gaussian belief
propagation with a synchronous flooding schedule; ``gmrf.dense_marginals``
serves as the exact oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import LgbpError, NotPositiveDefiniteError
from .geometry import MODES, as_model
from .gmrf import JointField
from .iono import IonosondeMeasurement, canonical_update_iono


@dataclass(frozen=True)
class UsedVihs:
    """The four reflection heights a target uses at one scan.

    Ordered [h_E(i_t), h_E(i_r), h_F(i_t), h_F(i_r)]; ``variances`` carries
    the matching marginal variances when produced by inference.
    """

    i_t: int
    i_r: int
    heights: np.ndarray
    variances: Optional[np.ndarray] = None

    LAYERS = ("E", "E", "F", "F")

    def subregions(self) -> Tuple[int, int, int, int]:
        return (self.i_t, self.i_r, self.i_t, self.i_r)


@dataclass
class CanonicalUpdates:
    """Accumulated canonical-form increments on the joint field.

    ``nodes`` holds (joint index, dQ, deta) triples; ``edges`` holds
    (i, j, dQ_ij) with i != j, stored once per undirected pair.
    """

    nodes: List[Tuple[int, float, float]] = field(default_factory=list)
    edges: List[Tuple[int, int, float]] = field(default_factory=list)

    def add_node(self, i: int, dq: float, deta: float) -> None:
        self.nodes.append((i, dq, deta))

    def add_edge(self, i: int, j: int, dq: float) -> None:
        if i == j:
            raise ValueError("edge increments require distinct nodes")
        self.edges.append((i, j, dq))

    def extend(self, other: "CanonicalUpdates") -> None:
        self.nodes.extend(other.nodes)
        self.edges.extend(other.edges)


def canonical_update_radar(
    y_eq: np.ndarray,
    cov_eq: np.ndarray,
    x: np.ndarray,
    mode_idx: int,
    h0_t: float,
    h0_r: float,
    geom,
    joint: JointField,
    subregions: Optional[Tuple[int, int]] = None,
) -> CanonicalUpdates:
    """Increments contributed by one equivalent radar measurement.

    The measurement function is linearized in the two path heights around
    (h0_t, h0_r) at the state ``x``.  The quadratic form couples the
    transmit and receive nodes; when both legs reflect in the same joint
    node the cross term folds into that node's diagonal (coefficient 2,
    from expanding the quadratic with h_t = h_r).  ``geom`` may be a
    RadarGeometry or any MeasurementModel.
    """
    model = as_model(geom)
    mode = MODES[mode_idx]
    if subregions is None:
        subregions = model.subregions(x)
    i_t, i_r = subregions
    node_t = joint.node_index(mode.layer_t, i_t)
    node_r = joint.node_index(mode.layer_r, i_r)

    u0 = model.u(x, h0_t, h0_r)
    u_t, u_r = model.jac_heights(x, h0_t, h0_r)
    cho = scipy.linalg.cho_factor(np.asarray(cov_eq, dtype=float), lower=True)
    w_t = scipy.linalg.cho_solve(cho, u_t)
    w_r = scipy.linalg.cho_solve(cho, u_r)
    resid = h0_t * u_t + h0_r * u_r + np.asarray(y_eq, dtype=float) - u0

    dq_t = float(u_t @ w_t)
    dq_r = float(u_r @ w_r)
    dq_tr = float(u_t @ w_r)
    deta_t = float(w_t @ resid)
    deta_r = float(w_r @ resid)

    updates = CanonicalUpdates()
    if node_t == node_r:
        updates.add_node(node_t, dq_t + dq_r + 2.0 * dq_tr, deta_t + deta_r)
    else:
        updates.add_node(node_t, dq_t, deta_t)
        updates.add_node(node_r, dq_r, deta_r)
        updates.add_edge(node_t, node_r, dq_tr)
    return updates


def canonical_updates_iono(
    measurements: Sequence[IonosondeMeasurement], joint: JointField
) -> CanonicalUpdates:
    """Node increments from a scan of ionosonde soundings.

    Each sounding is linearized at the prior mean of its node (exact for
    vertical sites).
    """
    updates = CanonicalUpdates()
    for meas in measurements:
        node = joint.node_index(meas.site.layer, meas.site.subregion)
        dq, deta = canonical_update_iono(meas.z, meas.site, float(joint.mu[node]))
        updates.add_node(node, dq, deta)
    return updates


def assemble_posterior(
    joint: JointField, updates: CanonicalUpdates, validate: bool = False
) -> Tuple[scipy.sparse.csr_matrix, np.ndarray]:
    """Apply canonical increments to the joint prior.

    Returns the updated (Q, eta).  New off-diagonal entries appear only
    between node pairs coupled by radar terms.  With ``validate=True`` the
    result is checked for positive definiteness by dense factorization
    (the increments are sums of PSD rank-one terms, so failures indicate
    numerical trouble rather than model error).
    """
    n = joint.n
    eta = joint.eta.copy()
    rows, cols, vals = [], [], []
    for i, dq, deta in updates.nodes:
        rows.append(i)
        cols.append(i)
        vals.append(dq)
        eta[i] += deta
    for i, j, dq in updates.edges:
        rows.extend((i, j))
        cols.extend((j, i))
        vals.extend((dq, dq))
    delta = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    Q = (joint.Q + delta).tocsr()
    if validate:
        try:
            scipy.linalg.cholesky(Q.toarray(), lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("updated precision matrix lost definiteness") from exc
    return Q, eta


@dataclass
class LgbpMessages:
    """Directed-edge message state: Delta-Q and Delta-eta per edge."""

    src: np.ndarray
    dst: np.ndarray
    q: np.ndarray
    eta: np.ndarray


@dataclass
class LgbpResult:
    """Marginals and convergence state of a belief-propagation run."""

    mean: np.ndarray
    variance: np.ndarray
    converged: bool
    iterations: int
    max_delta: float
    messages: Optional[LgbpMessages] = None


def _warm_start_messages(src, dst, warm: LgbpMessages):
    """Map previous messages onto a (possibly different) edge set."""
    if (
        len(warm.src) == len(src)
        and np.array_equal(warm.src, src)
        and np.array_equal(warm.dst, dst)
    ):
        return warm.q.copy(), warm.eta.copy()
    lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(warm.src, warm.dst))}
    q = np.zeros(len(src))
    e = np.zeros(len(src))
    for k, (a, b) in enumerate(zip(src, dst)):
        j = lookup.get((int(a), int(b)))
        if j is not None:
            q[k] = warm.q[j]
            e[k] = warm.eta[j]
    return q, e


def lgbp(
    Q,
    eta: np.ndarray,
    max_iter: int = 200,
    tol: float = 1e-8,
    damping: float = 0.0,
    warm_start: Optional[LgbpMessages] = None,
) -> LgbpResult:
    """Loopy Gaussian belief propagation with a synchronous flooding schedule.

    All directed-edge messages are recomputed each iteration from the
    previous iteration's snapshot, starting from zero messages (or from
    ``warm_start`` when resuming across outer-loop iterations).
    Convergence is declared when the largest absolute message change drops
    below ``tol``; a non-converged run returns the last iterate flagged
    rather than raising.  A non-positive partial precision (divergence) or
    marginal precision raises LgbpError.  On cycle-free graphs the result
    is exact once messages settle.
    """
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must be in [0, 1)")
    Qc = scipy.sparse.coo_matrix(Q)
    n = Qc.shape[0]
    eta = np.asarray(eta, dtype=float)
    diag = np.zeros(n)
    mask_diag = Qc.row == Qc.col
    np.add.at(diag, Qc.row[mask_diag], Qc.data[mask_diag])

    upper = (~mask_diag) & (Qc.row < Qc.col) & (Qc.data != 0.0)
    ui, uj, uw = Qc.row[upper], Qc.col[upper], Qc.data[upper]
    src = np.concatenate([ui, uj])
    dst = np.concatenate([uj, ui])
    w = np.concatenate([uw, uw])
    n_dir = len(src)
    if n_dir == 0:
        qhat = diag
        if np.any(qhat <= 0):
            raise LgbpError("non-positive marginal precision")
        return LgbpResult(eta / qhat, 1.0 / qhat, True, 0, 0.0)
    rev = np.concatenate([np.arange(n_dir // 2, n_dir), np.arange(0, n_dir // 2)])

    if warm_start is not None:
        msg_q, msg_e = _warm_start_messages(src, dst, warm_start)
    else:
        msg_q = np.zeros(n_dir)
        msg_e = np.zeros(n_dir)
    converged = False
    it = 0
    delta = np.inf
    for it in range(1, max_iter + 1):
        sum_q = np.bincount(dst, weights=msg_q, minlength=n)
        sum_e = np.bincount(dst, weights=msg_e, minlength=n)
        denom = diag[src] + sum_q[src] - msg_q[rev]
        if np.any(denom <= 0.0):
            raise LgbpError("non-positive partial precision in message update")
        new_q = -(w * w) / denom
        new_e = -w * (eta[src] + sum_e[src] - msg_e[rev]) / denom
        if damping > 0.0:
            new_q = (1.0 - damping) * new_q + damping * msg_q
            new_e = (1.0 - damping) * new_e + damping * msg_e
        delta = max(np.max(np.abs(new_q - msg_q)), np.max(np.abs(new_e - msg_e)))
        msg_q, msg_e = new_q, new_e
        if delta < tol:
            converged = True
            break

    qhat = diag + np.bincount(dst, weights=msg_q, minlength=n)
    ehat = eta + np.bincount(dst, weights=msg_e, minlength=n)
    if np.any(qhat <= 0.0):
        raise LgbpError("non-positive marginal precision")
    return LgbpResult(
        mean=ehat / qhat,
        variance=1.0 / qhat,
        converged=converged,
        iterations=it,
        max_delta=float(delta),
        messages=LgbpMessages(src=src, dst=dst, q=msg_q, eta=msg_e),
    )


def extract_used_vihs(
    mean: np.ndarray,
    variance: np.ndarray,
    subregions: Tuple[int, int],
    joint: JointField,
) -> UsedVihs:
    """Project field marginals onto one target's used-height vector."""
    i_t, i_r = subregions
    idx = [
        joint.node_index("E", i_t),
        joint.node_index("E", i_r),
        joint.node_index("F", i_t),
        joint.node_index("F", i_r),
    ]
    return UsedVihs(
        i_t=i_t,
        i_r=i_r,
        heights=np.asarray(mean, dtype=float)[idx].copy(),
        variances=np.asarray(variance, dtype=float)[idx].copy(),
    )


def prior_used_vihs(joint: JointField, subregions: Tuple[int, int]) -> UsedVihs:
    """Used-height vector pinned at the field prior means."""
    prior_var = np.zeros(joint.n)
    return extract_used_vihs(joint.mu, prior_var, subregions, joint)
