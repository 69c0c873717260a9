"""Gibbs-measure observables, single-orbit thermodynamics and mean-field solvers.

Temperatures follow ``beta = 2 theta / sigma^2 = 1 / T`` with ``k_B = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import as_tensor, build_from_edges
from .integrate import Trajectory, integrate_batch
from .lie import tangent_basis
from .model import RigidBodyNetwork


class EmptyWindow(ValueError):
    """No samples remain after discarding the burn-in."""


@dataclass(frozen=True)
class Temperature:
    """Temperature with the matching noise amplitude at fixed dissipation.

    >>> t = Temperature(0.5, theta=1.0)
    >>> round(t.sigma, 12), t.beta
    (1.0, 2.0)
    """

    T: float
    theta: float = 1.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("temperature must be positive")
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def beta(self) -> float:
        return 1.0 / self.T

    @property
    def sigma(self) -> float:
        return float(np.sqrt(2.0 * self.theta * self.T))

    @classmethod
    def from_noise(cls, theta, sigma):
        return cls(sigma**2 / (2.0 * theta), theta)


def uniform_sphere(rng, n, radius=1.0):
    """``n`` points uniformly distributed on the sphere of the given radius."""
    x = rng.standard_normal((n, 3))
    return radius * x / np.linalg.norm(x, axis=1, keepdims=True)


def antithetic_sphere(rng, n, radius=1.0):
    """Uniform sphere points in antipodal pairs (``n`` rounded up to even).

    Pairing ``g`` with ``-g`` makes sample averages of odd functions vanish
    exactly, so mean-field maps keep ``F(0) = 0`` despite sampling.
    """
    half = uniform_sphere(rng, (int(n) + 1) // 2, radius)
    return np.concatenate((half, -half))


# -- single orbit -------------------------------------------------------------


@dataclass
class OrbitThermo:
    """Partition function, mean energy, energy variance and entropy with standard errors."""

    Z: float
    mean_energy: float
    energy_variance: float
    entropy: float
    Z_se: float
    mean_energy_se: float
    entropy_se: float


def _kinetic(inertia_inv, pi):
    return 0.5 * np.einsum("ni,ij,nj->n", pi, inertia_inv, pi)


def orbit_thermo_single(inertia, radius, beta, n_samples, seed) -> OrbitThermo:
    """Monte Carlo thermodynamics of one rigid body on the sphere ``|Pi| = radius``.

    With ``h = 1/2 Pi.I^{-1}Pi`` and area measure ``dA``:
    ``Z = int exp(-beta h) dA``, ``<E>`` and its variance under
    ``P = exp(-beta h)/Z``, and ``S = -int P log P dA = log Z + beta <E>``.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    pi = uniform_sphere(rng, int(n_samples), radius)
    h = _kinetic(np.linalg.inv(as_tensor(inertia)), pi)
    area = 4.0 * np.pi * radius**2
    shift = h.min()
    w = np.exp(-beta * (h - shift))
    wbar = w.mean()
    z = area * wbar * np.exp(-beta * shift)
    e = np.sum(w * h) / np.sum(w)
    var = np.sum(w * (h - e) ** 2) / np.sum(w)
    s = np.log(z) + beta * e
    n = h.size
    z_se = area * np.exp(-beta * shift) * w.std(ddof=1) / np.sqrt(n)
    infl_e = w * (h - e) / wbar
    e_se = infl_e.std(ddof=1) / np.sqrt(n)
    infl_s = (w - wbar) / wbar + beta * infl_e
    s_se = infl_s.std(ddof=1) / np.sqrt(n)
    return OrbitThermo(float(z), float(e), float(var), float(s), float(z_se), float(e_se), float(s_se))


def sphere_quadrature(n_theta=200, n_phi=400, radius=1.0):
    """Product Gauss-Legendre (in ``cos`` of the polar angle) x trapezoid (azimuth) rule.

    Returns nodes of shape ``(n_theta * n_phi, 3)`` and area weights summing
    to ``4 pi radius^2``. Exact for polynomials up to high degree.
    """
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - x**2)
    pts = np.stack(
        (np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(x, np.ones(n_phi))), axis=-1
    ).reshape(-1, 3)
    w = np.outer(wx, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    return radius * pts, radius**2 * w


def orbit_thermo_quadrature(inertia, radius, beta, n_theta=200, n_phi=400) -> OrbitThermo:
    """Deterministic counterpart of :func:`orbit_thermo_single` (standard errors are 0)."""
    pts, w = sphere_quadrature(n_theta, n_phi, radius)
    h = _kinetic(np.linalg.inv(as_tensor(inertia)), pts)
    b = w * np.exp(-beta * h)
    z = b.sum()
    e = np.sum(b * h) / z
    var = np.sum(b * (h - e) ** 2) / z
    return OrbitThermo(float(z), float(e), float(var), float(np.log(z) + beta * e), 0.0, 0.0, 0.0)


def gibbs_energy_bin_probabilities(inertia, radius, beta, edges, n_theta=1000, n_phi=2000):
    """Probability of ``h`` falling in each bin under the Gibbs density, by quadrature."""
    pts, w = sphere_quadrature(n_theta, n_phi, radius)
    h = _kinetic(np.linalg.inv(as_tensor(inertia)), pts)
    b = w * np.exp(-beta * (h - h.min()))
    counts, _ = np.histogram(h, bins=edges, weights=b)
    return counts / b.sum()


def sample_gibbs_single(inertia, radius, beta, n_chains, samples_per_chain, dt=2e-3,
                        spacing=1.0, burn_in_time=5.0, theta=1.0, seed=0):
    """Sample the Gibbs measure of one rigid body by running the stochastic dynamics.

    ``n_chains`` independent trajectories are integrated together with
    per-step projection onto the orbit. After ``burn_in_time`` one sample is
    kept every ``spacing`` time units.

    Returns
    -------
    ndarray, shape (n_chains * samples_per_chain, 3)
    """
    temp = Temperature(1.0 / beta, theta)
    net = build_from_edges(1, [], inertia=inertia)
    model = RigidBodyNetwork(net)
    seeds = np.random.SeedSequence(int(seed)).generate_state(n_chains, np.uint64)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))
    s0 = uniform_sphere(rng, n_chains, radius)[:, None, :]
    every = max(1, int(round(spacing / dt)))
    burn = int(np.ceil(burn_in_time / dt / every)) * every
    steps = burn + every * samples_per_chain
    out = integrate_batch(model, s0, dt, steps, theta, np.full(n_chains, temp.sigma), seeds,
                          record_every=every, projection=True, store_states=True)
    kept = out["states"][:, burn // every + 1:, 0, :]
    return kept.reshape(-1, 3)


# -- trajectory observables ---------------------------------------------------


@dataclass
class Observables:
    """Time averages over the post-burn-in window.

    ``magnetisation`` is the node and time average of the momenta (rigid
    body) or positions (heavy top), divided by ``radius``.
    ``magnitude`` is the norm of that vector. ``mean_abs`` holds the time
    average of ``|m_a(t)|`` per component, which is insensitive to global
    sign flips.
    """

    magnetisation: np.ndarray
    magnitude: float
    mean_abs: np.ndarray
    mean_norm: float
    mean_energy: float
    energy_variance: float
    sample_count: int
    burn_in_count: int


def window_start(n_samples: int, burn_in: float) -> int:
    if not 0 <= burn_in < 1:
        raise ValueError("burn_in must lie in [0, 1)")
    return int(np.floor(burn_in * n_samples))


def observables_from_series(magnetisation, energy, burn_in, radius=1.0) -> Observables:
    """Observables from raw ``(S, 3)`` magnetisation and ``(S,)`` energy series."""
    s = len(energy)
    start = window_start(s, burn_in)
    if start >= s:
        raise EmptyWindow("no samples after burn-in")
    m = np.asarray(magnetisation[start:]) / radius
    e = np.asarray(energy[start:])
    mean = m.mean(axis=0)
    return Observables(
        magnetisation=mean,
        magnitude=float(np.linalg.norm(mean)),
        mean_abs=np.abs(m).mean(axis=0),
        mean_norm=float(np.linalg.norm(m, axis=1).mean()),
        mean_energy=float(e.mean()),
        energy_variance=float(e.var()),
        sample_count=int(s - start),
        burn_in_count=int(start),
    )


def observables_from_trajectory(traj: Trajectory, burn_in: float = 0.0, radius: float = 1.0) -> Observables:
    """Average a trajectory's recorded magnetisation and energy after the burn-in fraction.

    The first ``floor(burn_in * samples)`` samples are discarded.

    Raises
    ------
    EmptyWindow
    """
    return observables_from_series(traj.magnetisation, traj.energy, burn_in, radius)


# -- mean field ---------------------------------------------------------------


@dataclass
class MeanFieldResult:
    """Fixed point of a mean-field self-consistency map.

    ``value`` is the order parameter of the retained branch, ``stderr`` the
    Monte Carlo standard error of ``F(value)`` per component, and
    ``branches`` lists ``(start, value, converged, iterations)`` for every
    initial guess tried.
    """

    value: np.ndarray
    converged: bool
    iterations: int
    stderr: np.ndarray
    residual: float
    branches: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.value, self.converged, self.iterations))


class _WeightedSphereMap:
    """``F(x) = sum_k g_k w_k exp(beta g_k.J x) / sum_k w_k exp(beta g_k.J x)``."""

    def __init__(self, samples, log_base, coupling, beta, antithetic=False):
        self.g = samples
        self.antithetic = antithetic
        self.log_base = log_base
        self.jg = samples @ as_tensor(coupling)  # rows g_k^T J
        self.beta = beta

    def weights(self, x):
        a = self.log_base + self.beta * (self.jg @ x)
        a -= a.max()
        return np.exp(a)

    def __call__(self, x):
        w = self.weights(x)
        return w @ self.g / w.sum()

    def stderr(self, x):
        """Standard error of the fixed point ``x`` per component.

        The sampling covariance of ``F(x)`` is propagated through
        ``(1 - DF)^{-1}`` with ``DF = beta Cov_w(g, g) J``, so it grows near
        a critical temperature where the fixed point is sensitive. For
        antithetic samples the pair, not the point, is the independent unit.
        """
        w = self.weights(x)
        w = w / w.sum()
        f = w @ self.g
        d = self.g - f
        infl = w[:, None] * d
        if self.antithetic:
            half = len(infl) // 2
            infl = infl[:half] + infl[half:]
        cov_f = infl.T @ infl
        jac = self.beta * (w[:, None] * d).T @ self.jg
        resp = np.linalg.pinv(np.eye(3) - jac)
        return np.sqrt(np.maximum(np.diag(resp @ cov_f @ resp.T), 0.0))


def _iterate(fmap, x0, damping, tol, max_iter):
    x = np.asarray(x0, dtype=float)
    for k in range(1, max_iter + 1):
        nxt = (1.0 - damping) * x + damping * fmap(x)
        step = np.linalg.norm(nxt - x)
        x = nxt
        if step < tol:
            return x, True, k
    return x, False, max_iter


def _solve_branches(fmap, radius, damping, tol, max_iter, init):
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    if not tol > 0:
        raise ValueError("tol must be positive")
    starts = [np.asarray(init, dtype=float)] if init is not None else [0.5 * radius * e for e in np.eye(3)]
    branches = []
    for x0 in starts:
        x, ok, it = _iterate(fmap, x0, damping, tol, max_iter)
        branches.append((x0, x, ok, it))
    best = max(branches, key=lambda b: np.linalg.norm(fmap(b[1])))
    x = best[1]
    return MeanFieldResult(
        value=x, converged=best[2], iterations=best[3], stderr=fmap.stderr(x),
        residual=float(np.linalg.norm(x - fmap(x))), branches=branches,
    )


def meanfield_rb(inertia, coupling, radius, beta, mc_samples=20000, damping=0.5, tol=1e-8,
                 max_iter=5000, seed=0, init=None) -> MeanFieldResult:
    """Self-consistent mean momentum of the rigid-body network.

    Solves ``m = int Pi exp(-beta h_mf) dPi / int exp(-beta h_mf) dPi`` with
    ``h_mf = 1/2 Pi.I^{-1}Pi - Pi.J m`` over the sphere ``|Pi| = radius``.
    The integrals use one fixed set of uniform sphere samples (common random
    numbers), so the map is deterministic across iterations. Without
    ``init`` the iteration starts from ``0.5 radius`` along each axis and the
    branch with the largest ``|F(m)|`` is returned.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))
    g = antithetic_sphere(rng, mc_samples, radius)
    log_base = -beta * _kinetic(np.linalg.inv(as_tensor(inertia)), g)
    fmap = _WeightedSphereMap(g, log_base, coupling, beta, antithetic=True)
    return _solve_branches(fmap, radius, damping, tol, max_iter, init)


def fiber_log_weight_exact(inertia, gamma, c1, c2, beta):
    """Log of ``int exp(-beta/2 Pi.I^{-1}Pi) dy`` over the fibre ``Pi = (c1/c2) Gamma + E y``.

    Closed-form Gaussian integral, used as a reference for the sampled estimate.
    At ``beta = 0`` the integral diverges; the ``Gamma``-dependent part
    ``-1/2 log det A`` is returned instead, which is all a normalised
    average needs.
    """
    m = np.linalg.inv(as_tensor(inertia))
    gamma = np.atleast_2d(gamma)
    e1, e2 = tangent_basis(gamma)
    p = (c1 / c2) * gamma
    out = np.empty(len(gamma))
    for k in range(len(gamma)):
        e = np.column_stack((e1[k], e2[k]))
        a = e.T @ m @ e
        b = e.T @ m @ p[k]
        if beta == 0:
            out[k] = -0.5 * np.log(np.linalg.det(a))
            continue
        quad = p[k] @ m @ p[k] - b @ np.linalg.solve(a, b)
        out[k] = np.log(2.0 * np.pi / beta) - 0.5 * np.log(np.linalg.det(a)) - 0.5 * beta * quad
    return out


def fiber_log_weight_sampled(inertia, gamma, c1, c2, beta, z, inflation=1.5):
    """Importance-sampled fibre integral with shared standard normals ``z`` (shape ``(M, 2)``).

    For each ``Gamma`` the proposal for the fibre coordinate ``y`` is a
    Gaussian centred on the target mean whose covariance is the target
    covariance ``(beta A)^{-1}``, ``A = E^T I^{-1} E``, inflated by
    ``inflation > 1`` so the importance weights stay bounded. The same
    standard normals ``z`` are used for every ``Gamma``.
    """
    m = np.linalg.inv(as_tensor(inertia))
    gamma = np.atleast_2d(gamma)
    e1, e2 = tangent_basis(gamma)
    p = (c1 / c2) * gamma
    me1, me2, mp = e1 @ m, e2 @ m, p @ m
    a11, a12, a22 = np.sum(me1 * e1, 1), np.sum(me1 * e2, 1), np.sum(me2 * e2, 1)
    b1, b2 = np.sum(mp * e1, 1), np.sum(mp * e2, 1)
    det = a11 * a22 - a12 * a12
    if beta == 0:
        return -0.5 * np.log(det)
    # target mean -A^{-1} b
    y1c = -(a22 * b1 - a12 * b2) / det
    y2c = -(a11 * b2 - a12 * b1) / det
    # Cholesky factor of A^{-1} = [[a22, -a12], [-a12, a11]] / det
    l11 = np.sqrt(a22 / det)
    l21 = -a12 / det / l11
    l22 = np.sqrt(a11 / det - l21**2)
    f = np.sqrt(inflation / beta)
    z1, z2 = z[None, :, 0], z[None, :, 1]
    y1 = y1c[:, None] + f * l11[:, None] * z1
    y2 = y2c[:, None] + f * (l21[:, None] * z1 + l22[:, None] * z2)
    pi = p[:, None, :] + y1[..., None] * e1[:, None, :] + y2[..., None] * e2[:, None, :]
    kin = 0.5 * np.einsum("gmi,ij,gmj->gm", pi, m, pi)
    log_q = -0.5 * np.sum(z * z, axis=1)[None, :] - np.log(2.0 * np.pi * f**2 * l11 * l22)[:, None]
    la = -beta * kin - log_q
    top = la.max(axis=1, keepdims=True)
    return top[:, 0] + np.log(np.mean(np.exp(la - top), axis=1))


def meanfield_ht(inertia, coupling, c1, c2, beta, mc_samples=20000, fiber_samples=64, damping=0.5,
                 tol=1e-8, max_iter=5000, seed=0, init=None) -> MeanFieldResult:
    """Self-consistent mean position of the heavy-top network.

    ``Gamma`` is sampled uniformly on ``|Gamma|^2 = c2``; the momentum
    integral over each fibre ``Pi.Gamma = c1`` (flat measure in the tangent
    plane) is estimated by importance sampling and enters as a fixed weight
    per ``Gamma`` sample. The sphere samples are drawn exactly as in
    :func:`meanfield_rb` with ``radius = sqrt(c2)``, so with ``I = 1`` (where
    the fibre integral is the same for every ``Gamma``) the two solvers see
    identical integrands.
    """
    if not c2 > 0:
        raise ValueError("c2 must be positive")
    radius = np.sqrt(c2)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))
    g = antithetic_sphere(rng, mc_samples, radius)
    zrng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))
    z = zrng.standard_normal((int(fiber_samples), 2))
    log_base = np.concatenate([
        fiber_log_weight_sampled(inertia, g[k:k + 2048], c1, c2, beta, z)
        for k in range(0, len(g), 2048)
    ])
    fmap = _WeightedSphereMap(g, log_base, coupling, beta, antithetic=True)
    return _solve_branches(fmap, radius, damping, tol, max_iter, init)


def meanfield_curve(kind, temperatures, **kwargs):
    """Mean-field order parameter over a temperature grid.

    Each temperature is started from the three axis guesses. Returns a list
    of ``(T, MeanFieldResult)``.
    """
    solver = meanfield_rb if kind == "rigid_body" else meanfield_ht
    return [(float(t), solver(beta=1.0 / t, **kwargs)) for t in temperatures]
