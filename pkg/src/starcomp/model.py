"""Decision variables, effective channels and the computation MSE."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import ChannelSet

UNIT_TOL = 1e-12
COUPLING_TOL = 1e-9
POWER_RTOL = 1e-9


class InfeasibleStateError(ValueError):
    """A beamformer state violates the unit-modulus, coupling or power constraints."""


@dataclass(frozen=True)
class BeamformerState:
    """``{v, u, theta_r, theta_t, q}``.

    ``theta_r``/``theta_t`` hold the unit-modulus diagonal vectors; the
    surface applies their conjugates.  ``q`` is the +-1 coupling vector with
    ``theta_t = 1j * q * theta_r``.
    """

    v: np.ndarray
    u: np.ndarray
    theta_r: np.ndarray
    theta_t: np.ndarray
    q: np.ndarray

    def with_(self, **changes) -> "BeamformerState":
        return replace(self, **changes)

    def violations(self, P: float, coupled: bool = True) -> list[str]:
        out = []
        if np.max(np.abs(np.abs(self.theta_r) - 1.0), initial=0.0) > UNIT_TOL:
            out.append("theta_r not unit modulus")
        if np.max(np.abs(np.abs(self.theta_t) - 1.0), initial=0.0) > UNIT_TOL:
            out.append("theta_t not unit modulus")
        if coupled:
            if not np.all(np.isin(self.q, (-1.0, 1.0))):
                out.append("q not in {-1, +1}")
            elif np.max(np.abs(self.theta_t - 1j * self.q * self.theta_r), initial=0.0) > COUPLING_TOL:
                out.append("theta_t not coupled to theta_r")
        if np.max(np.abs(self.v) ** 2, initial=0.0) > P * (1.0 + POWER_RTOL):
            out.append("power budget exceeded")
        return out

    def check(self, P: float, coupled: bool = True) -> None:
        problems = self.violations(P, coupled)
        if problems:
            raise InfeasibleStateError("; ".join(problems))


@dataclass(frozen=True)
class EffectiveChannels:
    """``h_r`` is ``(K_r, N)`` with rows ``h_k + G diag(theta_r*) g_k``; ``h_t`` likewise."""

    h_r: np.ndarray
    h_t: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.h_r, self.h_t], axis=0)


def cascade(ch: ChannelSet, theta: np.ndarray, rows: slice) -> np.ndarray:
    """Surface-path contribution ``G diag(theta*) g_k`` for the selected devices."""
    return (ch.g[rows] * theta.conj()) @ ch.G.T


def effective_channels(ch: ChannelSet, state: BeamformerState) -> EffectiveChannels:
    r, t = slice(0, ch.K_r), slice(ch.K_r, ch.K)
    return EffectiveChannels(
        h_r=ch.h[r] + cascade(ch, state.theta_r, r),
        h_t=ch.h[t] + cascade(ch, state.theta_t, t),
    )


def mse_terms(H: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Per-device error ``|u^H h_k v_k - 1|^2`` for stacked effective channels ``H``."""
    return np.abs((H @ u.conj()) * v - 1.0) ** 2


def mse_from_effective(H: np.ndarray, u: np.ndarray, v: np.ndarray, sigma2: float) -> float:
    return float(np.sum(mse_terms(H, u, v)) + sigma2 * np.vdot(u, u).real)


def compute_mse(ch: ChannelSet, state: BeamformerState, sigma2: float) -> float:
    """Computation MSE ``E|u^H y - sum_k s_k|^2`` for unit-power independent symbols."""
    H = effective_channels(ch, state).stacked()
    return mse_from_effective(H, state.u, state.v, sigma2)


@dataclass(frozen=True)
class SignalRealization:
    s: np.ndarray
    x: np.ndarray
    noise: np.ndarray
    y: np.ndarray
    s_hat: complex
    s_target: complex


def _receive(ch, state, s, noise):
    # s: (T, K), noise: (T, N) -> y: (T, N), following the physical signal chain.
    x = s * state.v
    r, t = slice(0, ch.K_r), slice(ch.K_r, ch.K)
    incident_r = x[:, r] @ ch.g[r]
    incident_t = x[:, t] @ ch.g[t]
    surface_out = incident_r * state.theta_r.conj() + incident_t * state.theta_t.conj()
    y = x @ ch.h + surface_out @ ch.G.T + noise
    return x, y


def _draw(rng, shape, var=1.0):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_signal(
    ch: ChannelSet, state: BeamformerState, sigma2: float, rng: np.random.Generator
) -> SignalRealization:
    s = _draw(rng, (1, ch.K))
    noise = _draw(rng, (1, ch.N), sigma2)
    x, y = _receive(ch, state, s, noise)
    s_hat = complex(np.vdot(state.u, y[0]))
    return SignalRealization(
        s=s[0], x=x[0], noise=noise[0], y=y[0], s_hat=s_hat, s_target=complex(s.sum())
    )


def simulate_aircomp(
    ch: ChannelSet,
    state: BeamformerState,
    sigma2: float,
    rng: np.random.Generator,
    n_trials: int,
    batch: int = 100_000,
) -> float:
    """Empirical MSE of ``u^H y`` against ``sum_k s_k`` over ``n_trials`` draws.

    Symbols are i.i.d. unit-variance circularly symmetric complex Gaussian.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    total = 0.0
    done = 0
    while done < n_trials:
        T = min(batch, n_trials - done)
        s = _draw(rng, (T, ch.K))
        noise = _draw(rng, (T, ch.N), sigma2)
        _, y = _receive(ch, state, s, noise)
        err = y @ state.u.conj() - s.sum(axis=1)
        total += float(np.sum(err.real**2 + err.imag**2))
        done += T
    return total / n_trials


_STATE_FIELDS = ("v", "u", "theta_r", "theta_t", "q")


def dump_state(state: BeamformerState, path: str | Path) -> None:
    """CSV with one ``field,index,re,im`` row per entry."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field", "index", "re", "im"])
        for name in _STATE_FIELDS:
            for i, z in enumerate(np.asarray(getattr(state, name), dtype=complex)):
                writer.writerow([name, i, repr(float(z.real)), repr(float(z.imag))])


def load_state(path: str | Path) -> BeamformerState:
    data: dict[str, list[complex]] = {name: [] for name in _STATE_FIELDS}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            data[row["field"]].append(complex(float(row["re"]), float(row["im"])))
    arrays = {k: np.array(v, dtype=complex) for k, v in data.items()}
    arrays["q"] = arrays["q"].real.copy()
    return BeamformerState(**arrays)
