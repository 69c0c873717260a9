"""Hamiltonians, Casimirs and vector fields of the two network models.

Rigid-body (momentum-coupled) states are arrays of shape ``(..., N, 3)``
holding the momenta. Heavy-top (position-coupled) states have shape
``(..., 2, N, 3)`` with ``s[..., 0, :, :]`` the momenta and
``s[..., 1, :, :]`` the advected positions. Leading axes are batch axes;
every operation acts on each batch entry independently and with the same
floating point operation order.
"""

from __future__ import annotations

import numpy as np

from .graph import Network
from .lie import cross


def _flat_sum(x: np.ndarray, ndim: int) -> np.ndarray:
    return np.sum(x.reshape(x.shape[: x.ndim - ndim] + (-1,)), axis=-1)


# -- rigid-body network -------------------------------------------------------


def rb_laplacian_apply(net: Network, pi: np.ndarray) -> np.ndarray:
    """``(L Pi)_i = I_i^{-1} Pi_i - sum_j J_ij Pi_j / sqrt(d_i d_j)``."""
    return net.apply_inertia_inv(pi) - net.couple(pi)


def rb_hamiltonian(net: Network, pi) -> np.ndarray:
    """Energy ``1/2 <Pi, L Pi>``."""
    pi = np.asarray(pi, dtype=float)
    return 0.5 * _flat_sum(pi * rb_laplacian_apply(net, pi), 2)


def rb_rhs(net: Network, pi) -> np.ndarray:
    """Lie-Poisson field ``dPi_i/dt = Pi_i x (L Pi)_i``.

    Expanding the Laplacian gives ``Pi_i x Omega_i - sum_j Pi_i x J_ij Pi_j /
    sqrt(d_i d_j)``.
    """
    pi = np.asarray(pi, dtype=float)
    return cross(pi, rb_laplacian_apply(net, pi))


def rb_dissipation(net: Network, pi) -> np.ndarray:
    """Double-bracket field with unit amplitude, ``Pi_i x (Pi_i x (L Pi)_i)``.

    Along this field ``dh/dt = -sum_i |(L Pi)_i x Pi_i|^2`` and every
    ``|Pi_i|`` is constant. Callers scale by ``theta``.
    """
    pi = np.asarray(pi, dtype=float)
    return cross(pi, cross(pi, rb_laplacian_apply(net, pi)))


def rb_dissipation_rate(net: Network, pi) -> np.ndarray:
    """``-sum_i |(L Pi)_i x Pi_i|^2``, the energy rate along :func:`rb_dissipation`."""
    pi = np.asarray(pi, dtype=float)
    c = cross(rb_laplacian_apply(net, pi), pi)
    return -_flat_sum(c * c, 2)


def rb_casimirs(pi) -> np.ndarray:
    """Per-node Casimirs ``1/2 |Pi_i|^2``, shape ``(..., N)``."""
    pi = np.asarray(pi, dtype=float)
    return 0.5 * np.sum(pi * pi, axis=-1)


# -- heavy-top network --------------------------------------------------------


def ht_hamiltonian(net: Network, s) -> np.ndarray:
    """``1/2 Pi.Ibar^{-1}Pi - 1/2 Gamma.(D^{-1/2} A D^{-1/2}) Gamma``."""
    s = np.asarray(s, dtype=float)
    pi, gam = s[..., 0, :, :], s[..., 1, :, :]
    e = pi * net.apply_inertia_inv(pi) - gam * net.couple(gam)
    return 0.5 * _flat_sum(e, 2)


def _ht_parts(net, s):
    pi, gam = s[..., 0, :, :], s[..., 1, :, :]
    omega = net.apply_inertia_inv(pi)
    chi = net.couple(gam)
    return pi, gam, omega, chi


def ht_rhs(net: Network, s) -> np.ndarray:
    """``dPi_i/dt = Pi_i x Omega_i - Gamma_i x chi_i``, ``dGamma_i/dt = Gamma_i x Omega_i``.

    Here ``chi_i = sum_j J_ij Gamma_j / sqrt(d_i d_j)``.
    """
    s = np.asarray(s, dtype=float)
    pi, gam, omega, chi = _ht_parts(net, s)
    return np.stack((cross(pi, omega) - cross(gam, chi), cross(gam, omega)), axis=-3)


def ht_dissipation(net: Network, s) -> np.ndarray:
    """Double-bracket field on the heavy-top orbits with unit amplitude.

    With ``A = dGamma/dt`` and ``B = dPi/dt`` taken from :func:`ht_rhs`, the
    field is ``(Pi x B + Gamma x A, Gamma x B)``. This is a coadjoint
    motion, so ``Pi_i.Gamma_i`` and ``|Gamma_i|^2`` are constant along it,
    and ``dh/dt = -sum_i (|A_i|^2 + |B_i|^2)``.
    """
    s = np.asarray(s, dtype=float)
    pi, gam, omega, chi = _ht_parts(net, s)
    a = cross(gam, omega)
    b = cross(pi, omega) - cross(gam, chi)
    return np.stack((cross(pi, b) + cross(gam, a), cross(gam, b)), axis=-3)


def ht_dissipation_rate(net: Network, s) -> np.ndarray:
    """Energy rate ``-sum_i (|A_i|^2 + |B_i|^2)`` along :func:`ht_dissipation`."""
    f = ht_rhs(net, s)
    return -_flat_sum(f * f, 3)


def ht_casimirs(s) -> np.ndarray:
    """Per-node ``(Pi_i.Gamma_i, |Gamma_i|^2)``, shape ``(..., N, 2)``."""
    s = np.asarray(s, dtype=float)
    pi, gam = s[..., 0, :, :], s[..., 1, :, :]
    return np.stack((np.sum(pi * gam, axis=-1), np.sum(gam * gam, axis=-1)), axis=-1)


# -- model objects used by the integrators ------------------------------------


class RigidBodyNetwork:
    """Momentum-coupled network; state shape ``(..., N, 3)``."""

    kind = "rigid_body"
    state_axes = 2

    def __init__(self, net: Network):
        self.net = net

    def state_shape(self):
        return (self.net.n, 3)

    def hamiltonian(self, s):
        return rb_hamiltonian(self.net, s)

    def rhs(self, s):
        return rb_rhs(self.net, s)

    def dissipation(self, s):
        return rb_dissipation(self.net, s)

    def drift(self, s, theta):
        lp = rb_laplacian_apply(self.net, s)
        f = cross(s, lp)
        if theta:
            f = f + theta * cross(s, f)
        return f

    def casimirs(self, s):
        """Per-node Casimirs with a trailing axis of length 1."""
        return rb_casimirs(s)[..., None]

    def noise(self, s, dw):
        """Stratonovich diffusion ``Pi_i x dW_i``; ``dw`` has shape ``(..., N, 3)``."""
        return cross(s, dw)

    def magnetisation(self, s):
        return np.mean(s, axis=-2)

    def positions(self, s):
        return s

    def project(self, s, levels):
        """Rescale each node back to the Casimir level ``levels[..., i, 0]``."""
        r = np.sqrt(2.0 * levels[..., 0])
        norm = np.linalg.norm(s, axis=-1)
        return s * (r / norm)[..., None]


class HeavyTopNetwork:
    """Position-coupled network; state shape ``(..., 2, N, 3)``."""

    kind = "heavy_top"
    state_axes = 3

    def __init__(self, net: Network):
        self.net = net

    def state_shape(self):
        return (2, self.net.n, 3)

    def hamiltonian(self, s):
        return ht_hamiltonian(self.net, s)

    def rhs(self, s):
        return ht_rhs(self.net, s)

    def dissipation(self, s):
        return ht_dissipation(self.net, s)

    def drift(self, s, theta):
        pi, gam, omega, chi = _ht_parts(self.net, s)
        a = cross(gam, omega)
        b = cross(pi, omega) - cross(gam, chi)
        if theta:
            return np.stack(
                (b + theta * (cross(pi, b) + cross(gam, a)), a + theta * cross(gam, b)), axis=-3
            )
        return np.stack((b, a), axis=-3)

    def casimirs(self, s):
        return ht_casimirs(s)

    def noise(self, s, dw):
        """Same increment rotates ``Pi_i`` and ``Gamma_i``; ``dw`` has shape ``(..., N, 3)``."""
        return cross(s, dw[..., None, :, :])

    def magnetisation(self, s):
        return np.mean(s[..., 1, :, :], axis=-2)

    def positions(self, s):
        return s[..., 1, :, :]

    def project(self, s, levels):
        """Return each node to ``Pi.Gamma = c1`` and ``|Gamma|^2 = c2``."""
        c1, c2 = levels[..., 0], levels[..., 1]
        pi, gam = s[..., 0, :, :], s[..., 1, :, :]
        gam = gam * (np.sqrt(c2) / np.linalg.norm(gam, axis=-1))[..., None]
        corr = (c1 - np.sum(pi * gam, axis=-1)) / c2
        pi = pi + corr[..., None] * gam
        return np.stack((pi, gam), axis=-3)


def make_model(kind: str, net: Network):
    kinds = {"rigid_body": RigidBodyNetwork, "heavy_top": HeavyTopNetwork}
    key = kind.replace("-", "_").lower()
    if key not in kinds:
        raise ValueError(f"unknown model {kind!r}; expected one of {sorted(kinds)}")
    return kinds[key](net)
