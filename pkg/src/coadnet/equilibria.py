"""Relative equilibria from extended Laplacian spectra, and their stability.

Momentum coupling: every eigenvector ``mu`` of ``L`` with ``L mu = lambda_e mu``
is a fixed point of the rigid-body network, because then
``(L mu)_i x mu_i = 0`` node by node.

Position coupling: every eigenvector ``Gamma`` of ``L(lambda1)`` with
eigenvalue ``-lambda2``, paired with ``Pi = -lambda1 Ibar Gamma``, is a fixed
point of the heavy-top network.

The eigendecomposition exploits structure when it is present:

* uniform tensors: ``L = 1 (x) A - Ahat (x) B`` splits into one 3x3 problem
  per eigenvector of the normalised adjacency ``Ahat``. The ferromagnetic
  eigenvector ``sqrt(d)`` is inserted exactly, so ferro and antiferro records
  separate cleanly;
* diagonal tensors: ``L`` splits into three ``N x N`` problems, one per axis;
* otherwise a dense symmetric eigensolve of the full matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import K, Network, coupling_matrix, momentum_laplacian, position_laplacian
from .lie import block_hat, tangent_basis
from .model import ht_casimirs, ht_rhs, rb_casimirs, rb_rhs

FERRO = "ferromagnetic"
ANTIFERRO = "antiferromagnetic"
MIXED = "mixed"

ZERO_ABSCISSA = 1e-8
GROUP_RTOL = 1e-8


class ZeroState(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


@dataclass
class EquilibriumRecord:
    """One spectral equilibrium.

    Attributes
    ----------
    kind : str
        ``"momentum"`` (state shape ``(N, 3)``) or ``"position"`` (state
        shape ``(2, N, 3)``, momenta then positions).
    eigenvalue : float
        Eigenvalue of the Laplacian the state was built from: ``lambda_e``
        for momentum records, ``-lambda2`` for position records.
    lambda1, lambda2 : float or None
        Position-coupling multipliers.
    multiplicity : int
        Size of the (numerically) degenerate eigenvalue group.
    group : int
        Index of that group, in increasing eigenvalue order.
    cls : str
        Ferromagnetic, antiferromagnetic or mixed, for this basis vector.
    group_mixed : bool
        True when basis vectors of the same group fall in different classes.
    casimir_levels : ndarray
        Per-node Casimirs of the state.
    extremal : bool
        True for the lowest and highest eigenvalue groups.
    spectral_abscissa : float or None
        Largest real part of the linearisation spectrum, filled in by
        :func:`stability`. Values below ``1e-8`` in magnitude are stored as 0.
    """

    kind: str
    state: np.ndarray
    eigenvalue: float
    multiplicity: int
    group: int
    cls: str
    casimir_levels: np.ndarray
    lambda1: float | None = None
    lambda2: float | None = None
    group_mixed: bool = False
    spectral_abscissa: float | None = None
    extremal: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def lambda_e(self) -> float:
        return self.eigenvalue

    @property
    def positions(self) -> np.ndarray:
        return self.state[1] if self.kind == "position" else self.state

    @property
    def linearly_stable(self) -> bool | None:
        if self.spectral_abscissa is None:
            return None
        return self.spectral_abscissa == 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eigenvalue": self.eigenvalue,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "multiplicity": self.multiplicity,
            "group": self.group,
            "class": self.cls,
            "group_mixed": self.group_mixed,
            "extremal": self.extremal,
            "spectral_abscissa": self.spectral_abscissa,
            "casimir_levels": self.casimir_levels.tolist(),
            "state": self.state.tolist(),
        }


# -- eigendecomposition -------------------------------------------------------


def normalised_adjacency(net: Network) -> np.ndarray:
    """Dense ``D^{-1/2} A D^{-1/2}`` (scalar, N x N)."""
    m = np.zeros((net.n, net.n))
    sq = net.sqrt_degrees
    for i, j in net.edges:
        m[i, j] = m[j, i] = 1.0 / (sq[i] * sq[j])
    return m


def _uniform_eig(net, diag_block):
    """Eigenpairs of ``1 (x) diag_block - Ahat (x) J`` for uniform tensors."""
    n = net.n
    jt = net.coupling[0] if net.coupling.shape[0] else np.zeros((K, K))
    if n > 1:
        alpha, u = np.linalg.eigh(normalised_adjacency(net))
        s = net.sqrt_degrees / np.linalg.norm(net.sqrt_degrees)
        top = int(np.argmax(alpha))
        # the top eigenvector of Ahat is sqrt(d) for a connected graph
        u = u - np.outer(s, s @ u)
        u[:, top] = s
        alpha[top] = 1.0
    else:
        alpha, u = np.zeros(1), np.ones((1, 1))
    vals = []
    vecs = []
    for k in range(n):
        w, q = np.linalg.eigh(diag_block - alpha[k] * jt)
        for c in range(K):
            vals.append(w[c])
            vecs.append(np.kron(u[:, k], q[:, c]))
    vals = np.array(vals)
    vecs = np.array(vecs).T
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def _axis_eig(lap):
    """Eigenpairs of a Laplacian that decouples into the three axes."""
    n = lap.shape[0] // K
    vals = []
    vecs = np.zeros((K * n, K * n))
    col = 0
    for a in range(K):
        w, v = np.linalg.eigh(lap[a::K, a::K])
        vals.append(w)
        vecs[a::K, col:col + n] = v
        col += n
    vals = np.concatenate(vals)
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def laplacian_eig(net: Network, lap: np.ndarray, diag_block=None):
    """Orthonormal eigenbasis of a Laplacian, with the structural fast paths.

    ``diag_block`` is the (uniform) diagonal tensor block of ``lap``; when
    given and all tensors are uniform the adjacency-based split is used.
    """
    try:
        if diag_block is not None and net.uniform_inertia and net.uniform_coupling:
            return _uniform_eig(net, diag_block)
        if net.diagonal_tensors:
            return _axis_eig(lap)
        return np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc


def group_eigenvalues(vals: np.ndarray, rtol: float = GROUP_RTOL) -> np.ndarray:
    """Group index per sorted eigenvalue; neighbours closer than ``rtol`` share a group."""
    groups = np.zeros(vals.size, dtype=np.int64)
    g = 0
    for k in range(1, vals.size):
        if vals[k] - vals[k - 1] > rtol * max(1.0, abs(vals[k])):
            g += 1
        groups[k] = g
    return groups


def classify(net: Network, state, tol: float = 1e-8) -> str:
    """Ferromagnetic if ``mu_i / sqrt(d_i)`` is node independent, antiferromagnetic
    if ``sum_i sqrt(d_i) mu_i = 0``, mixed otherwise.

    ``state`` has shape ``(N, 3)``; for heavy-top states pass the positions.

    Raises
    ------
    ZeroState
    """
    mu = np.asarray(state, dtype=float).reshape(net.n, K)
    norm = np.linalg.norm(mu)
    if norm == 0:
        raise ZeroState("cannot classify the zero state")
    sq = net.sqrt_degrees
    scaled = mu / sq[:, None]
    ref = np.max(np.linalg.norm(scaled, axis=1))
    if np.max(np.linalg.norm(scaled - scaled.mean(axis=0), axis=1)) < tol * ref:
        return FERRO
    if np.linalg.norm(sq @ mu) < tol * norm:
        return ANTIFERRO
    return MIXED


def _mark_groups(records):
    by_group = {}
    for r in records:
        by_group.setdefault(r.group, []).append(r)
    last = max(by_group)
    for members in by_group.values():
        mixed = len({r.cls for r in members}) > 1
        for r in members:
            r.multiplicity = len(members)
            r.group_mixed = mixed
            r.extremal = r.group in (0, last)


def momentum_equilibria(net: Network, a: float = 1.0, with_stability: bool = False):
    """All ``3N`` eigenvector equilibria of the rigid-body network.

    Each unit eigenvector ``v`` is rescaled to ``mu = sqrt(2a) v`` so that the
    total Casimir ``C = 1/2 |mu|^2`` equals ``a``. Records are sorted by
    eigenvalue.
    """
    if not a > 0:
        raise ValueError("Casimir level must be positive")
    lap = momentum_laplacian(net)
    block = net.inertia_inv[0] if net.uniform_inertia else None
    vals, vecs = laplacian_eig(net, lap, block)
    groups = group_eigenvalues(vals)
    scale = np.sqrt(2.0 * a)
    records = []
    for k in range(vals.size):
        mu = (scale * vecs[:, k]).reshape(net.n, K)
        records.append(EquilibriumRecord(
            kind="momentum", state=mu, eigenvalue=float(vals[k]), multiplicity=1,
            group=int(groups[k]), cls=classify(net, mu), casimir_levels=rb_casimirs(mu),
        ))
    _mark_groups(records)
    if with_stability:
        for r in records:
            stability(net, r)
    return records


def position_equilibria(net: Network, lambda1: float, c2: float = 1.0, with_stability: bool = False):
    """All ``3N`` eigenvector equilibria of the heavy-top network at fixed ``lambda1``.

    ``Gamma`` is the eigenvector scaled to ``sum |Gamma_i|^2 = c2`` and
    ``Pi = -lambda1 Ibar Gamma``. The resulting ``C1`` is reported in the
    per-node Casimirs, not prescribed.
    """
    if not c2 > 0:
        raise ValueError("c2 must be positive")
    lambda1 = float(lambda1)
    lap = position_laplacian(net, lambda1)
    block = -lambda1**2 * net.inertia[0] if net.uniform_inertia else None
    vals, vecs = laplacian_eig(net, lap, block)
    groups = group_eigenvalues(vals)
    scale = np.sqrt(c2)
    records = []
    for k in range(vals.size):
        gam = (scale * vecs[:, k]).reshape(net.n, K)
        pi = -lambda1 * net.apply_inertia(gam)
        state = np.stack((pi, gam))
        records.append(EquilibriumRecord(
            kind="position", state=state, eigenvalue=float(vals[k]), multiplicity=1,
            group=int(groups[k]), cls=classify(net, gam), casimir_levels=ht_casimirs(state),
            lambda1=lambda1, lambda2=float(-vals[k]),
        ))
    _mark_groups(records)
    if with_stability:
        for r in records:
            stability(net, r)
    return records


def residual(net: Network, record: EquilibriumRecord) -> float:
    """``|rhs(state)| / |state|`` under the dynamical vector field."""
    f = rb_rhs(net, record.state) if record.kind == "momentum" else ht_rhs(net, record.state)
    return float(np.linalg.norm(f) / np.linalg.norm(record.state))


# -- linearisation ------------------------------------------------------------


def linearize_momentum(net: Network, record: EquilibriumRecord) -> np.ndarray:
    """Dense ``hat(Pi_e) (L - lambda_e)``, the Jacobian of the rigid-body field."""
    lap = momentum_laplacian(net)
    return block_hat(record.state) @ (lap - record.eigenvalue * np.eye(lap.shape[0]))


def linearize_position(net: Network, record: EquilibriumRecord) -> np.ndarray:
    """Dense ``6N x 6N`` Jacobian of the heavy-top field at a position record.

    With ``G = hat(Gamma_e)``, ``H = hat(Ibar Gamma_e)`` (node-wise),
    ``Kc = D^{-1/2} A D^{-1/2}`` with tensor blocks::

        d/dt dPi    = (l1 G - l1 H Ibar^{-1}) dPi + (l2 G - l1^2 H - G Kc) dGamma
        d/dt dGamma = G Ibar^{-1} dPi + l1 G dGamma

    Unknowns are ordered ``(dPi_1..dPi_N, dGamma_1..dGamma_N)``.
    """
    n = net.n
    l1, l2 = record.lambda1, record.lambda2
    gam = record.state[1]
    g = block_hat(gam)
    h = block_hat(net.apply_inertia(gam))
    iinv = np.zeros((K * n, K * n))
    for i in range(n):
        iinv[K * i:K * i + K, K * i:K * i + K] = net.inertia_inv[i]
    kc = coupling_matrix(net)
    top = np.hstack((l1 * g - l1 * h @ iinv, l2 * g - l1**2 * h - g @ kc))
    bottom = np.hstack((g @ iinv, l1 * g))
    return np.vstack((top, bottom))


def spectral_abscissa(matrix: np.ndarray, zero_tol: float = ZERO_ABSCISSA) -> float:
    """Largest real part of the spectrum, with ``|Re| < zero_tol`` reported as 0."""
    if matrix.size == 0:
        return 0.0
    re = np.linalg.eigvals(matrix).real
    return _clip(float(np.max(re)), zero_tol)


def _clip(x, zero_tol):
    return 0.0 if abs(x) < zero_tol else x


def _axis_of(state):
    """Index of the only nonzero component of a node-wise vector field, or None."""
    nz = np.any(state != 0.0, axis=0)
    return int(np.flatnonzero(nz)[0]) if nz.sum() == 1 else None


def _momentum_abscissa(net, record, zero_tol):
    pi = record.state
    support = np.flatnonzero(np.any(pi != 0.0, axis=1))
    if support.size == 0:
        return 0.0
    lap = momentum_laplacian(net)
    lam = record.eigenvalue
    axis = _axis_of(pi) if net.diagonal_tensors else None
    if axis is not None:
        # For Pi_e = v e_a the transverse components b, c obey
        # x_b'' = -V (L_c - lam) V (L_b - lam) x_b up to sign conventions;
        # only the support of v contributes nonzero modes.
        b, c = [x for x in range(K) if x != axis]
        idx = support
        v = pi[idx, axis]
        ab = lap[b::K, b::K][np.ix_(idx, idx)] - lam * np.eye(idx.size)
        ac = lap[c::K, c::K][np.ix_(idx, idx)] - lam * np.eye(idx.size)
        m = -(v[:, None] * ab) @ (v[:, None] * ac)
        mu2 = np.linalg.eigvals(m).astype(complex)
        # Zero modes come back as roundoff of size eps*|m|, whose square
        # root would otherwise exceed the zero tolerance.
        mu2[np.abs(mu2) <= 100 * np.finfo(float).eps * max(np.linalg.norm(m, 1), 1.0)] = 0.0
        mu = np.sqrt(mu2)
        return _clip(float(np.max(np.abs(mu.real))), zero_tol)
    # Tangent reduction: the radial component of each node is frozen to
    # first order, so only the 2-dimensional tangent planes carry spectrum.
    e1, e2 = tangent_basis(pi[support])
    t = np.zeros((K * net.n, 2 * support.size))
    for k, i in enumerate(support):
        t[K * i:K * i + K, 2 * k] = e1[k]
        t[K * i:K * i + K, 2 * k + 1] = e2[k]
    jac = block_hat(pi) @ (lap - lam * np.eye(lap.shape[0]))
    return spectral_abscissa(t.T @ jac @ t, zero_tol)


def _orbit_tangent(pi, gam):
    """Orthonormal basis (6 x 4) of the heavy-top orbit tangent at one node."""
    n1 = np.concatenate((gam, pi))
    n2 = np.concatenate((np.zeros(K), gam))
    q, _ = np.linalg.qr(np.column_stack((n1, n2, np.eye(2 * K))))
    return q[:, 2:2 * K]


def _position_abscissa(net, record, zero_tol):
    pi, gam = record.state
    support = np.flatnonzero(np.any(gam != 0.0, axis=1))
    if support.size == 0:
        return 0.0
    jac = linearize_position(net, record)
    n = net.n
    t = np.zeros((2 * K * n, 4 * support.size))
    for k, i in enumerate(support):
        basis = _orbit_tangent(pi[i], gam[i])
        rows = np.r_[K * i:K * i + K, K * n + K * i:K * n + K * i + K]
        t[rows, 4 * k:4 * k + 4] = basis
    return spectral_abscissa(t.T @ jac @ t, zero_tol)


def stability(net: Network, record: EquilibriumRecord, zero_tol: float = ZERO_ABSCISSA) -> float:
    """Compute and store the spectral abscissa of a record's linearisation.

    The spectrum is obtained from reduced matrices: Casimir directions and
    nodes at rest contribute only zero eigenvalues and are dropped.
    """
    if record.kind == "momentum":
        val = _momentum_abscissa(net, record, zero_tol)
    else:
        val = _position_abscissa(net, record, zero_tol)
    record.spectral_abscissa = val
    return val


# -- energy-Casimir tests -----------------------------------------------------


@dataclass
class Definiteness:
    """Outcome of a Hessian definiteness test.

    ``verdict`` is one of ``positive_definite``, ``negative_definite``,
    ``positive_semidefinite``, ``negative_semidefinite``, ``indefinite`` or
    ``untested``.
    """

    verdict: str
    min_eig: float
    max_eig: float
    kernel_dim: int
    note: str = ""


def definiteness(matrix: np.ndarray, rtol: float = 1e-10) -> Definiteness:
    w = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    tol = rtol * max(1.0, float(np.max(np.abs(w))))
    pos = int(np.sum(w > tol))
    neg = int(np.sum(w < -tol))
    zero = w.size - pos - neg
    if neg == 0 and zero == 0:
        verdict = "positive_definite"
    elif pos == 0 and zero == 0:
        verdict = "negative_definite"
    elif neg == 0:
        verdict = "positive_semidefinite"
    elif pos == 0:
        verdict = "negative_semidefinite"
    else:
        verdict = "indefinite"
    return Definiteness(verdict, float(w[0]), float(w[-1]), zero)


def energy_casimir_test_momentum(net: Network, record: EquilibriumRecord, phi2: float) -> Definiteness:
    """Definiteness of ``(L - lambda_e) + phi'' mu_e mu_e^T`` on the full space.

    The energy-Casimir argument for extremal records needs a simple
    eigenvalue. For a degenerate extremal record the Hessian is still
    analysed, but the verdict is ``untested`` and the raw verdict is kept
    in ``note``.
    """
    lap = momentum_laplacian(net)
    mu = record.state.ravel()
    hess = lap - record.eigenvalue * np.eye(mu.size) + phi2 * np.outer(mu, mu)
    res = definiteness(hess)
    if record.extremal and record.multiplicity > 1:
        res.note = res.verdict
        res.verdict = "untested"
    return res


def energy_casimir_test_position(net: Network, record: EquilibriumRecord, lambda2_hat: float) -> Definiteness:
    """Definiteness of the augmented heavy-top Hessian with ``phi''(c1) = 0``.

    The upper block ``Ibar^{-1}`` is positive definite by construction, so the
    verdict is that of the Schur complement
    ``L(lambda1) + lambda2 + lambda2_hat Gamma_e Gamma_e^T``. A
    non-positive-definite inertia block makes the verdict ``indefinite``.
    """
    x_ok = all(np.linalg.eigvalsh(t).min() > 0 for t in net.inertia_inv)
    lap = position_laplacian(net, record.lambda1)
    a = record.state[1].ravel()
    schur = lap + record.lambda2 * np.eye(a.size) + lambda2_hat * np.outer(a, a)
    res = definiteness(schur)
    if not x_ok and res.verdict != "indefinite":
        res.note = "inertia block not positive definite"
        res.verdict = "indefinite"
    if record.extremal and record.multiplicity > 1:
        res.note = res.verdict
        res.verdict = "untested"
    return res


def ferro_records(records):
    return [r for r in records if r.cls == FERRO]


def class_counts(records) -> dict:
    out = {FERRO: 0, ANTIFERRO: 0, MIXED: 0}
    for r in records:
        out[r.cls] += 1
    return out
