"""Deterministic and stochastic time stepping for the network models.

The deterministic stepper is classical RK4 on ``rhs + theta * dissipation``.
The stochastic stepper is the Stratonovich-Heun predictor-corrector with
isotropic noise: three independent Wiener increments per node, applied
through the coadjoint action (and, for heavy tops, to both ``Pi_i`` and
``Gamma_i``).

Every trajectory owns one ``PCG64`` stream seeded from its ``seed``. Noise
is drawn in blocks of steps, which consumes the stream in exactly the
same order as per-step draws, so results do not depend on the block size.
Batched integration (many trajectories along a leading axis) performs the
same elementwise arithmetic as integrating each one separately and gives
bitwise identical results.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

_NOISE_BLOCK = 512


class NonFiniteState(FloatingPointError):
    """Raised when a step produces NaN or Inf.

    Attributes
    ----------
    step : int
        One-based index of the failing step.
    """

    def __init__(self, step, message=None):
        self.step = int(step)
        super().__init__(message or f"non-finite state at step {self.step}")


@dataclass
class IntegratorConfig:
    """Step size, run length, noise and dissipation amplitudes."""

    dt: float
    steps: int
    theta: float = 0.0
    sigma: float = 0.0
    seed: int = 0
    record_every: int = 1
    projection: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be an integer >= 1")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be an integer >= 1")
        if self.theta < 0 or self.sigma < 0:
            raise ValueError("theta and sigma must be non-negative")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.steps = int(self.steps)
        self.record_every = int(self.record_every)
        self.seed = int(self.seed)
        self.dt = float(self.dt)
        self.theta = float(self.theta)
        self.sigma = float(self.sigma)


@dataclass
class Trajectory:
    """Recorded samples of one run.

    ``states`` is ``None`` when the run was made without storing states.
    ``casimirs`` has shape ``(samples, N, c)`` with ``c = 1`` for rigid
    bodies and ``c = 2`` (``Pi.Gamma``, ``|Gamma|^2``) for heavy tops.
    """

    kind: str
    times: np.ndarray
    energy: np.ndarray
    casimirs: np.ndarray
    magnetisation: np.ndarray
    states: np.ndarray | None
    casimir_scale: np.ndarray
    config: dict = field(default_factory=dict)
    final: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.times.size

    def casimir_drift(self) -> np.ndarray:
        """Maximum relative drift per node and Casimir, shape ``(N, c)``.

        The reference scale is ``|Pi_i|^2 / 2`` for rigid bodies and
        ``(|Pi_i||Gamma_i|, |Gamma_i|^2)`` for heavy tops, all at the first
        sample, so Casimirs that start near zero are not divided by zero.
        """
        return casimir_drift(self.casimirs, self.casimir_scale)

    def max_casimir_drift(self) -> float:
        return float(np.max(self.casimir_drift()))

    def energy_drift(self) -> float:
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / max(abs(e0), np.finfo(float).tiny))


def casimir_drift(casimirs: np.ndarray, scale: np.ndarray) -> np.ndarray:
    diff = np.abs(casimirs - casimirs[..., :1, :, :]) if casimirs.ndim == 4 else np.abs(casimirs - casimirs[:1])
    return np.max(diff, axis=-3) / scale


def casimir_scale(model, s):
    """Per-node reference magnitudes for relative Casimir drift."""
    if model.kind == "rigid_body":
        return 0.5 * np.sum(s * s, axis=-1)[..., None]
    pi, gam = s[..., 0, :, :], s[..., 1, :, :]
    pn, gn = np.linalg.norm(pi, axis=-1), np.linalg.norm(gam, axis=-1)
    return np.stack((pn * gn, gn * gn), axis=-1)


def _check_finite(s, step):
    if not np.all(np.isfinite(s)):
        raise NonFiniteState(step)


def _rk4(model, s, dt, theta):
    k1 = model.drift(s, theta)
    k2 = model.drift(s + (0.5 * dt) * k1, theta)
    k3 = model.drift(s + (0.5 * dt) * k2, theta)
    k4 = model.drift(s + dt * k3, theta)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _heun(model, s, dt, theta, dw):
    f0 = model.drift(s, theta)
    g0 = model.noise(s, dw)
    pred = s + dt * f0 + g0
    f1 = model.drift(pred, theta)
    g1 = model.noise(pred, dw)
    return s + (0.5 * dt) * (f0 + f1) + 0.5 * (g0 + g1)


def step_deterministic(model, s, dt, theta=0.0):
    """One RK4 step of ``rhs + theta * dissipation``.

    Raises
    ------
    NonFiniteState
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = _rk4(model, np.asarray(s, dtype=float), dt, theta)
    _check_finite(out, 1)
    return out


def step_stochastic(model, s, dt, theta, sigma, rng):
    """One Stratonovich-Heun step with isotropic noise of amplitude ``sigma``.

    ``rng`` is a ``numpy.random.Generator``; one standard normal triple per
    node is drawn. With ``sigma == 0`` no numbers are drawn and the step is
    the RK4 step of :func:`step_deterministic`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = np.asarray(s, dtype=float)
    if sigma == 0:
        return step_deterministic(model, s, dt, theta)
    n = model.net.n
    dw = (sigma * np.sqrt(dt)) * rng.standard_normal(s.shape[: s.ndim - model.state_axes] + (n, 3))
    out = _heun(model, s, dt, theta, dw)
    _check_finite(out, 1)
    return out


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def integrate_batch(model, s0, dt, steps, theta, sigmas, seeds, record_every=1, projection=False,
                    store_states=False, raise_on_nonfinite=True):
    """Advance ``B`` trajectories stacked along the leading axis of ``s0``.

    Parameters
    ----------
    sigmas : array_like, shape (B,)
        Noise amplitude per trajectory.
    seeds : sequence of int, length B
        Seed per trajectory.
    raise_on_nonfinite : bool
        If False, a trajectory that becomes non-finite is frozen at its last
        finite state and its failing step is reported instead of raising.

    Returns
    -------
    dict
        ``times`` (S,), ``energy`` (B, S), ``casimirs`` (B, S, N, c),
        ``magnetisation`` (B, S, 3), ``states`` (B, S, ...) or None,
        ``failed_step`` (B,) with 0 for healthy trajectories.
    """
    s = np.array(s0, dtype=float)
    nb = s.shape[0]
    sigmas = np.asarray(sigmas, dtype=float).reshape(nb)
    stochastic = bool(np.any(sigmas > 0))
    rngs = [make_rng(sd) for sd in seeds] if stochastic else None
    bshape = (nb,) + (1,) * model.state_axes
    amp = (sigmas * np.sqrt(dt)).reshape((nb, 1, 1))
    n = model.net.n

    n_samples = steps // record_every + 1
    times = np.arange(n_samples) * (record_every * dt)
    energy = np.empty((nb, n_samples))
    cas0 = model.casimirs(s)
    casimirs = np.empty((nb, n_samples) + cas0.shape[1:])
    mag = np.empty((nb, n_samples, 3))
    states = np.empty((nb, n_samples) + s.shape[1:]) if store_states else None
    failed = np.zeros(nb, dtype=np.int64)

    def record(k):
        energy[:, k] = model.hamiltonian(s)
        casimirs[:, k] = model.casimirs(s)
        mag[:, k] = model.magnetisation(s)
        if store_states:
            states[:, k] = s

    record(0)
    levels = cas0
    block = None
    for step in range(1, steps + 1):
        if stochastic:
            j = (step - 1) % _NOISE_BLOCK
            if j == 0:
                m = min(_NOISE_BLOCK, steps - step + 1)
                block = np.stack([r.standard_normal((m, n, 3)) for r in rngs], axis=1)
            new = _heun(model, s, dt, theta, amp * block[j])
        else:
            new = _rk4(model, s, dt, theta)
        if projection:
            new = model.project(new, levels)
        ok = np.all(np.isfinite(new.reshape(nb, -1)), axis=1)
        if not np.all(ok):
            if raise_on_nonfinite:
                raise NonFiniteState(step)
            bad = ~ok & (failed == 0)
            failed[bad] = step
            new = np.where(ok.reshape(bshape), new, s)
        s = new
        if step % record_every == 0:
            record(step // record_every)
    return {
        "times": times,
        "energy": energy,
        "casimirs": casimirs,
        "magnetisation": mag,
        "states": states,
        "failed_step": failed,
        "final": s,
    }


def run(model, s0, config: IntegratorConfig, store_states=True) -> Trajectory:
    """Integrate one trajectory and record observables every ``record_every`` steps.

    The result is a deterministic function of ``(model, s0, config)``.
    With ``sigma == 0`` the RK4 stepper is used, otherwise Heun.

    Raises
    ------
    NonFiniteState
        With the index of the first failing step.
    """
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != model.state_shape():
        raise ValueError(f"state shape {s0.shape} does not match model shape {model.state_shape()}")
    out = integrate_batch(
        model, s0[None], config.dt, config.steps, config.theta, [config.sigma], [config.seed],
        config.record_every, config.projection, store_states,
    )
    return Trajectory(
        kind=model.kind,
        times=out["times"],
        energy=out["energy"][0],
        casimirs=out["casimirs"][0],
        magnetisation=out["magnetisation"][0],
        states=None if out["states"] is None else out["states"][0],
        casimir_scale=casimir_scale(model, s0),
        config=asdict(config),
        final=out["final"][0],
    )


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``time,energy,casimir_total,mx,my,mz`` rows.

    For heavy tops ``casimir_total`` is ``sum |Gamma_i|^2``, the
    magnetisation is the mean of ``Gamma``, and a trailing column
    ``casimir_pg_total`` holds ``sum Pi_i.Gamma_i``.
    """
    ht = traj.kind == "heavy_top"
    header = ["time", "energy", "casimir_total", "mx", "my", "mz"]
    if ht:
        header.append("casimir_pg_total")
        ctot = traj.casimirs[..., 1].sum(axis=-1)
    else:
        ctot = traj.casimirs[..., 0].sum(axis=-1)
    lines = [",".join(header)]
    for k in range(traj.n_samples):
        row = [traj.times[k], traj.energy[k], ctot[k], *traj.magnetisation[k]]
        if ht:
            row.append(traj.casimirs[k, :, 0].sum())
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def dump_state(path, kind, state, time=0.0) -> None:
    """Write a state checkpoint as JSON (values round-trip exactly)."""
    data = {"kind": kind, "time": float(time), "shape": list(np.shape(state)),
            "state": np.asarray(state, dtype=float).ravel().tolist()}
    Path(path).write_text(json.dumps(data), encoding="utf-8")


def load_state(path):
    """Read a checkpoint written by :func:`dump_state`; returns ``(kind, state, time)``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    state = np.asarray(data["state"], dtype=float).reshape(data["shape"])
    return data["kind"], state, float(data.get("time", 0.0))
