"""Alternating optimization with binary phase coupling (AO-BPC).

One outer iteration updates, in order, the receive beamformer ``u``
(MMSE closed form), every transmit coefficient ``v_k`` (per-device power
allocation with a bisection on the Lagrange multiplier), then the surface:
a Gauss-Seidel pass over the reflection phases ``theta_r(m)``, a pass over
the coupling signs ``q(m)``, and finally ``theta_t = 1j * q * theta_r``.
Each block exactly minimizes the MSE over its own variables, so the
objective never increases.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from .channel import ChannelSet
from .model import (
    BeamformerState,
    effective_channels,
    mse_from_effective,
)
from .scenario import SystemConfig

ETA_FLOOR = 1e-14
BISECTION_MAX_ITERS = 200
BISECTION_RTOL = 1e-14


# ---------------------------------------------------------------- receive side


def receive_beamformer(H: np.ndarray, v: np.ndarray, sigma2: float) -> np.ndarray:
    """MMSE receiver for stacked effective channels ``H`` (rows ``h_k``).

    Solves ``(sum_k |v_k|^2 h_k h_k^H + sigma2 I) u = sum_k v_k h_k`` with a
    Cholesky-based Hermitian solve.  With ``sigma2 == 0`` and a singular
    matrix, ``numpy.linalg.LinAlgError`` propagates.
    """
    N = H.shape[1]
    D = H.T @ ((np.abs(v) ** 2)[:, None] * H.conj())
    D[np.diag_indices(N)] += sigma2
    w = H.T @ v
    if not np.any(w):
        return np.zeros(N, dtype=complex)
    with warnings.catch_warnings():
        if sigma2 == 0:
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(D, w, assume_a="pos")
        except scipy.linalg.LinAlgWarning as exc:
            raise np.linalg.LinAlgError(f"receive beamformer system is singular: {exc}") from exc


def update_u(ch: ChannelSet, state: BeamformerState, sigma2: float) -> np.ndarray:
    H = effective_channels(ch, state).stacked()
    return receive_beamformer(H, state.v, sigma2)


# ---------------------------------------------------------------- power allocation


@dataclass(frozen=True)
class PowerAllocationResult:
    v: complex
    mu: float
    active: bool


def _bisect_multiplier(gain: float, P: float) -> float:
    """Root of ``gain / (gain + mu)**2 = P`` in ``mu >= 0``."""

    def power(mu: float) -> float:
        return gain / (gain + mu) ** 2

    lo, hi = 0.0, gain
    while power(hi) >= P:
        lo, hi = hi, 2.0 * hi
    assert power(lo) >= P > power(hi), "multiplier bracket lost"
    mu = 0.5 * (lo + hi)
    for _ in range(BISECTION_MAX_ITERS):
        mu = 0.5 * (lo + hi)
        p = power(mu)
        if abs(p - P) <= BISECTION_RTOL * P or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
        if p > P:
            lo = mu
        else:
            hi = mu
    return mu


def update_v_single(h_eff: np.ndarray, u: np.ndarray, P: float) -> PowerAllocationResult:
    """Minimize ``|u^H h v - 1|^2`` subject to ``|v|^2 <= P``."""
    if not P > 0:
        raise ValueError(f"power budget must be positive, got {P!r}")
    g = complex(np.vdot(u, h_eff))
    gain = abs(g) ** 2
    if gain == 0.0:
        return PowerAllocationResult(v=0j, mu=0.0, active=False)
    if 1.0 / gain < P:
        return PowerAllocationResult(v=g.conjugate() / gain, mu=0.0, active=False)
    mu = _bisect_multiplier(gain, P)
    return PowerAllocationResult(v=g.conjugate() / (gain + mu), mu=mu, active=True)


def allocate_power(H: np.ndarray, u: np.ndarray, P: float) -> np.ndarray:
    return np.array([update_v_single(h, u, P).v for h in H], dtype=complex)


def update_all_v(ch: ChannelSet, state: BeamformerState, P: float) -> list[PowerAllocationResult]:
    H = effective_channels(ch, state).stacked()
    return [update_v_single(h, state.u, P) for h in H]


# ---------------------------------------------------------------- surface phases


class PhaseUpdateWorkspace:
    """Running quantities for element-wise surface updates.

    For R-WD ``k`` the scalar error is ``e_k = base_k + sum_m theta_r(m)* a_k(m)``
    with ``a_k = diag(u^H G) g_k v_k``; for T-WD ``k`` it is
    ``base_k + sum_m (coupling(m) theta_r(m))* c_k(m)``, i.e.
    ``theta_t = coupling * theta_r``.  AO-BPC uses ``coupling = 1j * q``.
    The errors are kept up to date as elements change, so ``b_k(m)`` and
    ``d_k(m)`` always see the latest values of the other elements.
    """

    def __init__(self, a, c, base_r, base_t, theta_r, coupling, noise_term: float = 0.0):
        self.a = a
        self.c = c
        self.theta_r = np.array(theta_r, dtype=complex)
        self.coupling = np.array(coupling, dtype=complex)
        self.noise_term = noise_term
        self.res_r = base_r + a @ self.theta_r.conj()
        self.res_t = base_t + c @ (self.coupling * self.theta_r).conj()

    @classmethod
    def build(
        cls,
        ch: ChannelSet,
        u: np.ndarray,
        v: np.ndarray,
        theta_r: np.ndarray,
        coupling: np.ndarray,
        sigma2: float = 0.0,
        transmit: bool = True,
    ) -> "PhaseUpdateWorkspace":
        """Workspace for the current ``u``, ``v``.

        ``transmit=False`` drops the surface path of T-WDs (conventional RIS):
        they still count in the objective but ``c`` is empty.
        """
        r, t = slice(0, ch.K_r), slice(ch.K_r, ch.K)
        uG = u.conj() @ ch.G
        direct = (ch.h @ u.conj()) * v - 1.0
        a = ch.g[r] * uG * v[r, None]
        c = ch.g[t] * uG * v[t, None]
        if not transmit:
            c = np.zeros_like(c)
        return cls(a, c, direct[r], direct[t], theta_r, coupling, sigma2 * np.vdot(u, u).real)

    @property
    def theta_t(self) -> np.ndarray:
        return self.coupling * self.theta_r

    def b(self, m: int) -> np.ndarray:
        return self.res_r - self.theta_r[m].conjugate() * self.a[:, m]

    def d(self, m: int) -> np.ndarray:
        return self.res_t - (self.coupling[m] * self.theta_r[m]).conjugate() * self.c[:, m]

    def eta(self, m: int) -> complex:
        r_part = np.dot(self.a[:, m], self.b(m).conj())
        t_part = np.dot(self.c[:, m], self.d(m).conj())
        return complex(r_part + self.coupling[m].conjugate() * t_part)

    def q_metric(self, m: int, theta_r_m: complex) -> float:
        """``Re[sum_k (theta_r(m) j)^* c_k(m) d_k(m)^*]``."""
        s = np.dot(self.c[:, m], self.d(m).conj())
        return float(((1j * theta_r_m).conjugate() * s).real)

    def set_theta_r(self, m: int, value: complex) -> None:
        delta = value.conjugate() - self.theta_r[m].conjugate()
        self.res_r += delta * self.a[:, m]
        self.res_t += self.coupling[m].conjugate() * delta * self.c[:, m]
        self.theta_r[m] = value

    def set_coupling(self, m: int, value: complex) -> None:
        delta = (value * self.theta_r[m]).conjugate() - (self.coupling[m] * self.theta_r[m]).conjugate()
        self.res_t += delta * self.c[:, m]
        self.coupling[m] = value

    def objective(self) -> float:
        return float(np.vdot(self.res_r, self.res_r).real + np.vdot(self.res_t, self.res_t).real + self.noise_term)


def update_theta_r_element(ws: PhaseUpdateWorkspace, m: int) -> complex:
    """Best unit-modulus ``theta_r(m)``: ``-eta/|eta|`` (unchanged if ``eta`` vanishes)."""
    eta = ws.eta(m)
    mag = abs(eta)
    if mag <= ETA_FLOOR:
        return complex(ws.theta_r[m])
    return -eta / mag


def update_q_element(ws: PhaseUpdateWorkspace, m: int, theta_r_m: complex) -> float:
    """Coupling sign for element ``m``; a non-negative metric selects ``-1``."""
    return -1.0 if ws.q_metric(m, theta_r_m) >= 0.0 else 1.0


def couple_theta_t(theta_r: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 1j * np.asarray(q) * theta_r


def theta_pass(ws: PhaseUpdateWorkspace, on_step: Callable | None = None) -> None:
    for m in range(ws.theta_r.size):
        ws.set_theta_r(m, update_theta_r_element(ws, m))
        if on_step is not None:
            on_step(ws)


def q_pass(ws: PhaseUpdateWorkspace, on_step: Callable | None = None) -> None:
    for m in range(ws.theta_r.size):
        q_m = update_q_element(ws, m, ws.theta_r[m])
        ws.set_coupling(m, 1j * q_m)
        if on_step is not None:
            on_step(ws)


def sweep_phases(
    ch: ChannelSet,
    state: BeamformerState,
    sigma2: float,
    sweeps: int = 1,
    on_step: Callable | None = None,
) -> BeamformerState:
    """Gauss-Seidel pass over ``theta_r`` then over ``q``, then recouple ``theta_t``."""
    ws = PhaseUpdateWorkspace.build(ch, state.u, state.v, state.theta_r, 1j * state.q, sigma2)
    for _ in range(sweeps):
        theta_pass(ws, on_step)
        q_pass(ws, on_step)
    q = (ws.coupling / 1j).real
    theta_r = ws.theta_r
    return state.with_(theta_r=theta_r, q=q, theta_t=couple_theta_t(theta_r, q))


# ---------------------------------------------------------------- outer loop


@dataclass
class IterationTrace:
    mse_per_iter: list[float]
    iterations: int
    converged: bool
    final_state: BeamformerState
    scheme: str = "ao-bpc"
    block_mse: list[tuple[int, str, float]] = field(default_factory=list, repr=False)

    @property
    def final_mse(self) -> float:
        return self.mse_per_iter[-1]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "mse"])
            for i, mse in enumerate(self.mse_per_iter):
                writer.writerow([i, repr(mse)])


def initial_state(
    ch: ChannelSet, P: float, sigma2: float, rng: np.random.Generator
) -> BeamformerState:
    """Random feasible start: uniform phases, random signs, full power, MMSE ``u``."""
    theta_r = np.exp(2j * np.pi * rng.random(ch.M))
    q = rng.choice(np.array([-1.0, 1.0]), size=ch.M)
    v = np.full(ch.K, np.sqrt(P), dtype=complex)
    state = BeamformerState(
        v=v, u=np.zeros(ch.N, dtype=complex), theta_r=theta_r, theta_t=couple_theta_t(theta_r, q), q=q
    )
    return state.with_(u=update_u(ch, state, sigma2))


def alternate(
    state: BeamformerState,
    stack: Callable[[BeamformerState], np.ndarray],
    phase_step: Callable[[BeamformerState], BeamformerState],
    sigma2: float,
    P: float,
    epsilon: float,
    max_iters: int,
    scheme: str,
    record_blocks: bool = False,
) -> IterationTrace:
    """Shared outer loop: ``u``, then ``{v_k}``, then the scheme's surface step.

    ``stack(state)`` returns the ``(K, N)`` effective channels the scheme
    sees; the loop stops once an iteration lowers the MSE by less than
    ``epsilon`` or after ``max_iters`` iterations.
    """

    def objective(s: BeamformerState) -> float:
        return mse_from_effective(stack(s), s.u, s.v, sigma2)

    trace = IterationTrace([objective(state)], 0, False, state, scheme)
    for it in range(1, max_iters + 1):
        H = stack(state)
        state = state.with_(u=receive_beamformer(H, state.v, sigma2))
        if record_blocks:
            trace.block_mse.append((it, "u", objective(state)))
        state = state.with_(v=allocate_power(H, state.u, P))
        if record_blocks:
            trace.block_mse.append((it, "v", objective(state)))
        state = phase_step(state)
        mse = objective(state)
        if record_blocks:
            trace.block_mse.append((it, "phase", mse))
        decrease = trace.mse_per_iter[-1] - mse
        trace.mse_per_iter.append(mse)
        trace.iterations = it
        trace.final_state = state
        if decrease < epsilon:
            trace.converged = True
            break
    return trace


def star_stack(ch: ChannelSet) -> Callable[[BeamformerState], np.ndarray]:
    return lambda s: effective_channels(ch, s).stacked()


def run_aobpc(
    config: SystemConfig,
    ch: ChannelSet,
    init: BeamformerState | None = None,
    rng: np.random.Generator | None = None,
    record_blocks: bool = False,
) -> IterationTrace:
    """Run AO-BPC from ``init`` (or a random feasible start drawn from ``rng``)."""
    sigma2, P = config.sigma2, config.power
    if init is None:
        if rng is None:
            raise ValueError("either init or rng is required")
        init = initial_state(ch, P, sigma2, rng)
    init.check(P)
    return alternate(
        init,
        star_stack(ch),
        lambda s: sweep_phases(ch, s, sigma2, config.phase_sweeps),
        sigma2,
        P,
        config.epsilon,
        config.max_iters,
        "ao-bpc",
        record_blocks,
    )
