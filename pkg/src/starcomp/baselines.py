"""Benchmark schemes: conventional RIS, random fixed coupling, and uncoupled phases.

All of them reuse the AO-BPC outer loop and element updates; they differ only
in which channels the T-WDs see and in how ``theta_t`` is tied to ``theta_r``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .aobpc import (
    IterationTrace,
    PhaseUpdateWorkspace,
    alternate,
    initial_state,
    run_aobpc,
    star_stack,
    theta_pass,
)
from .channel import ChannelSet
from .model import BeamformerState, InfeasibleStateError, cascade, mse_from_effective
from .scenario import SystemConfig


class SchemeId(str, enum.Enum):
    AO_BPC = "ao-bpc"
    CRIS = "cris"
    AO_RPC = "ao-rpc"
    AO_WPC = "ao-wpc"

    @classmethod
    def parse(cls, text: str) -> list["SchemeId"]:
        """Comma-separated names, or ``all``."""
        if text.strip() == "all":
            return list(cls)
        return [cls(part.strip()) for part in text.split(",") if part.strip()]


@dataclass(frozen=True)
class RandomCoupling:
    """Fixed unit-modulus ``q_hat`` with ``theta_t = theta_r * q_hat``."""

    q_hat: np.ndarray

    @classmethod
    def draw(cls, M: int, rng: np.random.Generator) -> "RandomCoupling":
        return cls(np.exp(2j * np.pi * rng.random(M)))


# ---------------------------------------------------------------- CRIS


def cris_stack(ch: ChannelSet):
    """Conventional RIS: R-WDs go through ``diag(theta_r*)``, T-WDs only have direct links."""
    r = slice(0, ch.K_r)

    def stack(s: BeamformerState) -> np.ndarray:
        H = ch.h.copy()
        H[r] += cascade(ch, s.theta_r, r)
        return H

    return stack


def cris_mse(ch: ChannelSet, state: BeamformerState, sigma2: float) -> float:
    """Conventional-RIS MSE, using ``state.theta_r`` as the surface vector."""
    return mse_from_effective(cris_stack(ch)(state), state.u, state.v, sigma2)


def run_cris(config: SystemConfig, ch: ChannelSet, init: BeamformerState) -> IterationTrace:
    sigma2, P = config.sigma2, config.power
    _check_common(init, P)
    ones = np.ones(ch.M, dtype=complex)

    def phase_step(s: BeamformerState) -> BeamformerState:
        ws = PhaseUpdateWorkspace.build(ch, s.u, s.v, s.theta_r, ones, sigma2, transmit=False)
        for _ in range(config.phase_sweeps):
            theta_pass(ws)
        return s.with_(theta_r=ws.theta_r)

    return alternate(
        init, cris_stack(ch), phase_step, sigma2, P, config.epsilon, config.max_iters, "cris"
    )


# ---------------------------------------------------------------- AO-RPC


def run_aorpc(
    config: SystemConfig, ch: ChannelSet, init: BeamformerState, coupling: RandomCoupling
) -> IterationTrace:
    """``theta_r`` updated element-wise with the fixed coupling substituted into the T-WD terms."""
    sigma2, P = config.sigma2, config.power
    q_hat = np.asarray(coupling.q_hat, dtype=complex)
    if np.max(np.abs(np.abs(q_hat) - 1.0)) > 1e-12:
        raise InfeasibleStateError("random coupling is not unit modulus")
    init = init.with_(theta_t=init.theta_r * q_hat)
    _check_common(init, P)

    def phase_step(s: BeamformerState) -> BeamformerState:
        ws = PhaseUpdateWorkspace.build(ch, s.u, s.v, s.theta_r, q_hat, sigma2)
        for _ in range(config.phase_sweeps):
            theta_pass(ws)
        return s.with_(theta_r=ws.theta_r, theta_t=ws.theta_t)

    return alternate(
        init, star_stack(ch), phase_step, sigma2, P, config.epsilon, config.max_iters, "ao-rpc"
    )


# ---------------------------------------------------------------- AO-WPC


def _group_workspace(ch: ChannelSet, u, v, theta, rows: slice, sigma2: float) -> PhaseUpdateWorkspace:
    uG = u.conj() @ ch.G
    a = ch.g[rows] * uG * v[rows, None]
    base = (ch.h[rows] @ u.conj()) * v[rows] - 1.0
    empty = np.zeros((0, ch.M), dtype=complex)
    return PhaseUpdateWorkspace(
        a, empty, base, np.zeros(0, dtype=complex), theta, np.ones(ch.M), sigma2 * np.vdot(u, u).real
    )


def run_aowpc(config: SystemConfig, ch: ChannelSet, init: BeamformerState) -> IterationTrace:
    """``theta_r`` and ``theta_t`` optimized independently, each on its own group."""
    sigma2, P = config.sigma2, config.power
    _check_common(init, P)
    r, t = slice(0, ch.K_r), slice(ch.K_r, ch.K)

    def phase_step(s: BeamformerState) -> BeamformerState:
        ws_r = _group_workspace(ch, s.u, s.v, s.theta_r, r, sigma2)
        ws_t = _group_workspace(ch, s.u, s.v, s.theta_t, t, sigma2)
        for _ in range(config.phase_sweeps):
            theta_pass(ws_r)
            theta_pass(ws_t)
        return s.with_(theta_r=ws_r.theta_r, theta_t=ws_t.theta_r)

    return alternate(
        init, star_stack(ch), phase_step, sigma2, P, config.epsilon, config.max_iters, "ao-wpc"
    )


# ---------------------------------------------------------------- dispatch


def _check_common(state: BeamformerState, P: float) -> None:
    state.check(P, coupled=False)


def run_scheme(
    scheme: SchemeId | str,
    config: SystemConfig,
    ch: ChannelSet,
    init: BeamformerState,
    coupling: RandomCoupling | None = None,
) -> IterationTrace:
    scheme = SchemeId(scheme)
    if scheme is SchemeId.AO_BPC:
        return run_aobpc(config, ch, init)
    if scheme is SchemeId.CRIS:
        return run_cris(config, ch, init)
    if scheme is SchemeId.AO_WPC:
        return run_aowpc(config, ch, init)
    if coupling is None:
        raise ValueError("AO-RPC needs a RandomCoupling")
    return run_aorpc(config, ch, init, coupling)


def run_all(
    config: SystemConfig,
    ch: ChannelSet,
    init_rng: np.random.Generator,
    coupling_rng: np.random.Generator,
    schemes=tuple(SchemeId),
) -> dict[SchemeId, IterationTrace]:
    """Run several schemes from one shared random start."""
    init = initial_state(ch, config.power, config.sigma2, init_rng)
    coupling = RandomCoupling.draw(ch.M, coupling_rng)
    return {SchemeId(s): run_scheme(s, config, ch, init, coupling) for s in schemes}
