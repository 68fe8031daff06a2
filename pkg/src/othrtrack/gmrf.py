"""Canonical-form lattice Gaussian fields for the layer height maps.

A field over an ``rows x cols`` lattice is kept in canonical (information)
form: sparse precision matrix Q (km^-2) and potential vector eta = Q @ mu
(km^-1).  The lattice uses first-order (4-neighbour) connectivity with no
wraparound; boundary nodes simply have fewer neighbours, which inflates
their marginal variance slightly relative to interior nodes.

Node indices are 0-based internally; the 1-based subregion indices used by
the geometry module map to node ``subregion - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import NotPositiveDefiniteError


@dataclass(frozen=True)
class GmrfField:
    """Lattice Gaussian field in canonical form.

    Attributes:
        shape: (rows, cols) of the lattice
        Q: sparse symmetric positive-definite precision matrix, km^-2
        eta: potential vector Q @ mu, km^-1
        mu: mean vector, km
    """

    shape: Tuple[int, int]
    Q: scipy.sparse.csr_matrix
    eta: np.ndarray
    mu: np.ndarray

    @property
    def n(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class JointField:
    """Block-diagonal combination of the E-layer and F-layer fields.

    E-layer nodes come first (indices 0..n_e-1), then F-layer nodes.
    """

    e: GmrfField
    f: GmrfField
    Q: scipy.sparse.csr_matrix
    eta: np.ndarray
    mu: np.ndarray

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def n_e(self) -> int:
        return self.e.n

    def node_index(self, layer: str, subregion: int) -> int:
        """Joint-field node index for a 1-based subregion of a layer."""
        if layer == "E":
            return subregion - 1
        if layer == "F":
            return self.e.n + subregion - 1
        raise ValueError(f"unknown layer {layer!r}")


def _lattice_pattern(rows: int, cols: int):
    """Row/column index arrays of the 4-neighbour edges (i < j)."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return np.concatenate([right, down], axis=1)


def build_precision(
    grid: Tuple[int, int], diag: float, offdiag: float, mean: float = 0.0
) -> GmrfField:
    """Construct a lattice field with constant precision entries.

    Q gets ``diag`` on the diagonal and ``offdiag`` on every 4-neighbour
    edge; the mean vector is constant ``mean``.  Raises
    NotPositiveDefiniteError if the resulting Q fails Cholesky
    factorization.
    """
    rows, cols = grid
    if rows <= 0 or cols <= 0:
        raise ValueError("grid dimensions must be positive")
    n = rows * cols
    pairs = _lattice_pattern(rows, cols)
    i = np.concatenate([np.arange(n), pairs[0], pairs[1]])
    j = np.concatenate([np.arange(n), pairs[1], pairs[0]])
    v = np.concatenate([np.full(n, diag), np.full(2 * pairs.shape[1], offdiag)])
    Q = scipy.sparse.csr_matrix((v, (i, j)), shape=(n, n))
    try:
        scipy.linalg.cholesky(Q.toarray(), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"lattice precision with diag={diag}, offdiag={offdiag} is not positive definite"
        ) from exc
    mu = np.full(n, float(mean))
    eta = Q @ mu
    return GmrfField(shape=(rows, cols), Q=Q, eta=eta, mu=mu)


def build_smoothness_precision(
    grid: Tuple[int, int], coupling: float, mass: float, mean: float = 0.0
) -> GmrfField:
    """Free-boundary smoothness prior: Q = coupling * graph Laplacian + mass * I.

    Interior nodes carry diagonal 4 * coupling + mass and off-diagonal
    -coupling on the 4-neighbour edges; boundary diagonals are
    degree-proportional, which (unlike a constant diagonal) leaves the
    field's smooth global mode nearly unconstrained.  Small ``mass``
    values therefore give long-range spatial correlation.
    """
    rows, cols = grid
    if rows <= 0 or cols <= 0:
        raise ValueError("grid dimensions must be positive")
    if coupling <= 0 or mass <= 0:
        raise NotPositiveDefiniteError("coupling and mass must be positive")
    n = rows * cols
    pairs = _lattice_pattern(rows, cols)
    degree = np.zeros(n)
    np.add.at(degree, pairs[0], 1.0)
    np.add.at(degree, pairs[1], 1.0)
    i = np.concatenate([np.arange(n), pairs[0], pairs[1]])
    j = np.concatenate([np.arange(n), pairs[1], pairs[0]])
    v = np.concatenate(
        [coupling * degree + mass, np.full(2 * pairs.shape[1], -coupling)]
    )
    Q = scipy.sparse.csr_matrix((v, (i, j)), shape=(n, n))
    mu = np.full(n, float(mean))
    return GmrfField(shape=(rows, cols), Q=Q, eta=Q @ mu, mu=mu)


def scale_to_marginal_std(field: GmrfField, target_std: float) -> GmrfField:
    """Rescale Q so the mean marginal standard deviation equals ``target_std``.

    A global scaling of the precision matrix leaves the correlation
    structure unchanged while setting the field's amplitude.
    """
    _, var = dense_marginals(field.Q, field.eta)
    current = float(np.mean(np.sqrt(var)))
    s = (current / target_std) ** 2
    Q = (field.Q * s).tocsr()
    return GmrfField(shape=field.shape, Q=Q, eta=Q @ field.mu, mu=field.mu.copy())


def sample(field: GmrfField, rng) -> np.ndarray:
    """Draw one height vector h ~ N(mu, Q^-1).

    ``rng`` is a seed or ``numpy.random.Generator``; identical seeds give
    identical samples.  Uses the Cholesky factor of Q: with Q = L L^T and
    z standard normal, mu + L^-T z has covariance Q^-1 exactly.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    L = scipy.linalg.cholesky(field.Q.toarray(), lower=True)
    z = rng.standard_normal(field.n)
    return field.mu + scipy.linalg.solve_triangular(L, z, lower=True, trans="T")


def sample_many(field: GmrfField, count: int, rng) -> np.ndarray:
    """Draw ``count`` independent samples, shape (count, n)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    L = scipy.linalg.cholesky(field.Q.toarray(), lower=True)
    z = rng.standard_normal((field.n, count))
    return (field.mu[:, None] + scipy.linalg.solve_triangular(L, z, lower=True, trans="T")).T


def combine(e: GmrfField, f: GmrfField) -> JointField:
    """Stack the two layer fields into one block-diagonal joint field."""
    Q = scipy.sparse.block_diag([e.Q, f.Q], format="csr")
    return JointField(
        e=e,
        f=f,
        Q=Q,
        eta=np.concatenate([e.eta, f.eta]),
        mu=np.concatenate([e.mu, f.mu]),
    )


def dense_marginals(Q, eta) -> Tuple[np.ndarray, np.ndarray]:
    """Exact marginal means and variances by full factorization.

    Accepts Q as a dense array or any scipy sparse matrix.  This is the
    reference oracle for the belief-propagation solver: mean = Q^-1 eta and
    variances = diag(Q^-1).
    """
    Qd = Q.toarray() if scipy.sparse.issparse(Q) else np.asarray(Q, dtype=float)
    eta = np.asarray(eta, dtype=float)
    try:
        cho = scipy.linalg.cho_factor(Qd, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("precision matrix is singular or indefinite") from exc
    mean = scipy.linalg.cho_solve(cho, eta)
    cov = scipy.linalg.cho_solve(cho, np.eye(Qd.shape[0]))
    return mean, np.diag(cov).copy()
