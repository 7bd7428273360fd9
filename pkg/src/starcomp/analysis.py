"""Closed-form MSEs, the rank-one recursive inverse and the large-array comparison.

After the MMSE receiver is plugged in, the MSE only depends on the effective
channels and the transmit coefficients: ``K - w^H D^{-1} w`` with
``D = sum_k |v_k|^2 h_k h_k^H + sigma2 I`` and ``w = sum_k v_k h_k``.  When the
effective channels of different devices are mutually orthogonal this reduces
to ``K - sum_k x_k / (sigma2 + x_k)`` with ``x_k = |v_k|^2 ||h_k||^2``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np
import scipy.linalg

from .aobpc import initial_state, receive_beamformer, update_u
from .baselines import cris_mse, cris_stack, run_cris
from .channel import ChannelSet, generate_channels
from .model import BeamformerState, cascade, compute_mse, effective_channels
from .scenario import SystemConfig, build_geometry, make_rng

# f_k values at or below this count as "no transmission gain".
WITNESS_TOL = 1e-15


# ---------------------------------------------------------------- exact closed forms


def _closed_form(H: np.ndarray, v: np.ndarray, sigma2: float) -> float:
    K, N = H.shape
    w = H.T @ v
    if not np.any(w):
        return float(K)
    D = H.T @ ((np.abs(v) ** 2)[:, None] * H.conj())
    D[np.diag_indices(N)] += sigma2
    x = scipy.linalg.solve(D, w, assume_a="pos")
    return float(K - np.vdot(w, x).real)


def closed_form_mse_star(
    ch: ChannelSet, v: np.ndarray, theta_r: np.ndarray, theta_t: np.ndarray, sigma2: float
) -> float:
    """MSE of the STAR surface system under the optimal receiver."""
    r, t = slice(0, ch.K_r), slice(ch.K_r, ch.K)
    H = np.concatenate([ch.h[r] + cascade(ch, theta_r, r), ch.h[t] + cascade(ch, theta_t, t)])
    return _closed_form(H, np.asarray(v, dtype=complex), sigma2)


def closed_form_mse_cris(ch: ChannelSet, v: np.ndarray, theta: np.ndarray, sigma2: float) -> float:
    """Same for a reflect-only surface: T-WDs keep their direct links only."""
    H = ch.h.copy()
    H[: ch.K_r] += cascade(ch, theta, slice(0, ch.K_r))
    return _closed_form(H, np.asarray(v, dtype=complex), sigma2)


# ---------------------------------------------------------------- Sherman-Morrison


@dataclass(frozen=True)
class RecursiveInverseState:
    """``D_inv`` is the inverse of ``D_n = sigma2 I + sum_{k<=n} w_k x_k x_k^H``."""

    n: int
    D_inv: np.ndarray


def sherman_morrison_states(
    terms: Iterable[tuple[float, np.ndarray]], sigma2: float, dim: int | None = None
) -> Iterator[RecursiveInverseState]:
    """Yield ``D_0^{-1}, D_1^{-1}, ...``, one rank-one update per ``(weight, vector)`` term."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    terms = [(float(wt), np.asarray(x, dtype=complex)) for wt, x in terms]
    if dim is None:
        if not terms:
            raise ValueError("dim is required when there are no terms")
        dim = terms[0][1].size
    D_inv = np.eye(dim, dtype=complex) / sigma2
    yield RecursiveInverseState(0, D_inv)
    for n, (wt, x) in enumerate(terms, start=1):
        y = D_inv @ x
        D_inv = D_inv - wt * np.outer(y, y.conj()) / (1.0 + wt * np.vdot(x, y).real)
        yield RecursiveInverseState(n, D_inv)


def sherman_morrison_inverse(
    terms: Sequence[tuple[float, np.ndarray]], sigma2: float, dim: int | None = None
) -> np.ndarray:
    """``(sigma2 I + sum_k w_k x_k x_k^H)^{-1}`` built up one term at a time."""
    state = None
    for state in sherman_morrison_states(terms, sigma2, dim):
        pass
    return state.D_inv


def mse_terms_for_inverse(H: np.ndarray, v: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """``(|v_k|^2, h_k)`` pairs for stacked effective channels."""
    return [(float(abs(vk) ** 2), hk) for vk, hk in zip(v, H)]


# ---------------------------------------------------------------- orthogonal approximation


def effective_norms_star(ch: ChannelSet, theta_r: np.ndarray, theta_t: np.ndarray) -> np.ndarray:
    """``||h_k + G diag(theta*) g_k||^2`` with each group's own surface vector."""
    H = np.concatenate(
        [
            ch.h[: ch.K_r] + cascade(ch, theta_r, slice(0, ch.K_r)),
            ch.h[ch.K_r :] + cascade(ch, theta_t, slice(ch.K_r, ch.K)),
        ]
    )
    return np.sum(np.abs(H) ** 2, axis=1)


def effective_norms_cris(ch: ChannelSet, theta: np.ndarray) -> np.ndarray:
    H = ch.h.copy()
    H[: ch.K_r] += cascade(ch, theta, slice(0, ch.K_r))
    return np.sum(np.abs(H) ** 2, axis=1)


def _approx(norms: np.ndarray, v: np.ndarray, sigma2: float) -> float:
    norms = np.asarray(norms, dtype=float)
    if np.any(norms < 0):
        raise ValueError("channel norms must be non-negative")
    x = np.abs(np.asarray(v)) ** 2 * norms
    return float(norms.size - np.sum(x / (sigma2 + x)))


def approx_mse_star(norms: np.ndarray, v: np.ndarray, sigma2: float) -> float:
    """Large-array MSE from per-device effective norms (R-WDs via ``theta_r``, T-WDs via ``theta_t``)."""
    return _approx(norms, v, sigma2)


def approx_mse_cris(norms: np.ndarray, v: np.ndarray, sigma2: float) -> float:
    """Large-array MSE of the reflect-only system (T-WD norms are direct-link norms)."""
    return _approx(norms, v, sigma2)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def element_owner(M: int, K: int) -> np.ndarray:
    """Element ``m`` serves device ``m % K`` in the orthogonal construction."""
    return np.arange(M) % K


def orthogonal_channels(
    N: int, M: int, K: int, K_r: int, rng: np.random.Generator, gain: float = 1.0
) -> ChannelSet:
    """Channels whose effective links stay mutually orthogonal for every surface setting.

    Device ``k`` talks to the FC along column ``k`` of a random unitary
    matrix, both directly and through the elements it owns; ``g_k`` is zero
    outside those elements.  Needs ``N >= K`` and ``M >= K``.
    """
    if N < K or M < K:
        raise ValueError(f"need N >= K and M >= K, got N={N}, M={M}, K={K}")
    Q = random_unitary(N, rng)
    owner = element_owner(M, K)
    alpha = gain * (0.5 + rng.random(K)) * np.exp(2j * np.pi * rng.random(K))
    beta = gain * (0.5 + rng.random(M)) * np.exp(2j * np.pi * rng.random(M))
    h = alpha[:, None] * Q[:, :K].T
    g = np.zeros((K, M), dtype=complex)
    g[owner, np.arange(M)] = (0.5 + rng.random(M)) * np.exp(2j * np.pi * rng.random(M))
    G = Q[:, owner] * beta
    return ChannelSet(h=h, g=g, G=G, K_r=K_r)


# ---------------------------------------------------------------- STAR vs reflect-only


@dataclass(frozen=True)
class Theorem2Witness:
    """Transmission-side setting that makes the STAR system strictly better.

    ``e_k = |v_k|^2 ||h_k||^2`` and ``f_k = |v_k|^2 (2 Re(h_k^H G diag(theta_t*) g_k)
    + ||G diag(theta_t*) g_k||^2)`` for each T-WD, so the T-WD term of the
    large-array MSE goes from ``e/(sigma2+e)`` to ``(e+f)/(sigma2+e+f)``.
    """

    e_k: np.ndarray
    f_k: np.ndarray
    theta_t_bar: np.ndarray
    q: np.ndarray


@dataclass(frozen=True)
class Theorem2Result:
    witness: Theorem2Witness
    gap: float
    exact_gap: float
    found: bool

    @property
    def strict(self) -> bool:
        return self.found and self.gap < 0


def build_theta_t_bar(ch: ChannelSet, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coupling-feasible ``theta_t = 1j * q * theta`` with every element's T-WD contribution
    rotated into the right half-plane.

    Element ``m`` adds ``q(m) Re(-1j * theta(m)* S_m)`` to
    ``sum_{k in K_t} Re(h_k^H G diag(theta_t*) g_k)``, with
    ``S_m = sum_k (h_k^H G)_m g_k(m)``; the sign of ``q(m)`` makes it non-negative.
    """
    t = slice(ch.K_r, ch.K)
    S = np.sum((ch.h[t].conj() @ ch.G) * ch.g[t], axis=0)
    contrib = (-1j * np.asarray(theta).conj() * S).real
    q = np.where(contrib < 0, -1.0, 1.0)
    return 1j * q * theta, q


def theorem2_gap(
    ch: ChannelSet,
    v: np.ndarray,
    theta: np.ndarray,
    sigma2: float,
    theta_t_bar: np.ndarray | None = None,
) -> Theorem2Result:
    """Compare STAR (``theta_r = theta``, ``theta_t = theta_t_bar``) against reflect-only.

    ``gap`` uses the large-array forms and ``exact_gap`` the exact closed
    forms; both are negative when STAR helps.  ``found`` is False when no
    T-WD gains from the transmission path (e.g. ``G = 0``).
    """
    v = np.asarray(v, dtype=complex)
    if theta_t_bar is None:
        theta_t_bar, q = build_theta_t_bar(ch, theta)
    else:
        q = (np.asarray(theta_t_bar) / (1j * np.asarray(theta))).real
    t = slice(ch.K_r, ch.K)
    direct = ch.h[t]
    path = cascade(ch, theta_t_bar, t)
    p2 = np.abs(v[t]) ** 2
    e_k = p2 * np.sum(np.abs(direct) ** 2, axis=1)
    f_k = p2 * (2.0 * np.sum(direct.conj() * path, axis=1).real + np.sum(np.abs(path) ** 2, axis=1))
    witness = Theorem2Witness(e_k=e_k, f_k=f_k, theta_t_bar=theta_t_bar, q=q)
    gap = approx_mse_star(effective_norms_star(ch, theta, theta_t_bar), v, sigma2) - approx_mse_cris(
        effective_norms_cris(ch, theta), v, sigma2
    )
    exact_gap = closed_form_mse_star(ch, v, theta, theta_t_bar, sigma2) - closed_form_mse_cris(
        ch, v, theta, sigma2
    )
    found = ch.K_t > 0 and bool(np.all(f_k > WITNESS_TOL))
    return Theorem2Result(witness=witness, gap=gap, exact_gap=exact_gap, found=found)


# ---------------------------------------------------------------- check battery


@dataclass(frozen=True)
class CheckRecord:
    check_name: str
    instance_id: int
    value_lhs: float
    value_rhs: float
    passed: bool


REPORT_COLUMNS = ("check_name", "instance_id", "value_lhs", "value_rhs", "pass")


def _random_state(ch: ChannelSet, config: SystemConfig, rng: np.random.Generator) -> BeamformerState:
    state = initial_state(ch, config.power, config.sigma2, rng)
    scale = np.sqrt(rng.random(ch.K))
    return state.with_(v=state.v * scale * np.exp(2j * np.pi * rng.random(ch.K)))


def run_checks(config: SystemConfig, seed: int = 0, instances: int = 10) -> list[CheckRecord]:
    """Closed-form, recursive-inverse, orthogonal-regime and STAR-vs-RIS checks."""
    records: list[CheckRecord] = []
    sigma2 = config.sigma2
    geometry = build_geometry(config)

    def add(name, i, lhs, rhs, ok):
        records.append(CheckRecord(name, i, float(lhs), float(rhs), bool(ok)))

    for i in range(instances):
        ch = generate_channels(config, geometry, make_rng(seed, (i, 0)))
        state = _random_state(ch, config, make_rng(seed, (i, 1)))
        state = state.with_(u=update_u(ch, state, sigma2))
        cf = closed_form_mse_star(ch, state.v, state.theta_r, state.theta_t, sigma2)
        direct = compute_mse(ch, state, sigma2)
        add("closed_form_star", i, cf, direct, abs(cf - direct) <= 1e-8 * max(1.0, abs(direct)))

        H = cris_stack(ch)(state)
        u = receive_beamformer(H, state.v, sigma2)
        cf = closed_form_mse_cris(ch, state.v, state.theta_r, sigma2)
        direct = cris_mse(ch, state.with_(u=u), sigma2)
        add("closed_form_cris", i, cf, direct, abs(cf - direct) <= 1e-8 * max(1.0, abs(direct)))

        H = effective_channels(ch, state).stacked()
        D = H.T @ ((np.abs(state.v) ** 2)[:, None] * H.conj()) + sigma2 * np.eye(ch.N)
        dense = np.linalg.inv(D)
        rec = sherman_morrison_inverse(mse_terms_for_inverse(H, state.v), sigma2, ch.N)
        rel = np.linalg.norm(rec - dense) / np.linalg.norm(dense)
        add("sherman_morrison", i, rel, 1e-8, rel <= 1e-8)

        orth = orthogonal_channels(
            max(config.N, config.K), max(config.M, config.K), config.K, config.K_r, make_rng(seed, (i, 2))
        )
        orth_state = _random_state(orth, _unit_config(config), make_rng(seed, (i, 3)))
        approx = approx_mse_star(
            effective_norms_star(orth, orth_state.theta_r, orth_state.theta_t), orth_state.v, 1.0
        )
        exact = closed_form_mse_star(orth, orth_state.v, orth_state.theta_r, orth_state.theta_t, 1.0)
        add("orthogonal_approx_star", i, approx, exact, abs(approx - exact) < 1e-6)
        approx = approx_mse_cris(effective_norms_cris(orth, orth_state.theta_r), orth_state.v, 1.0)
        exact = closed_form_mse_cris(orth, orth_state.v, orth_state.theta_r, 1.0)
        add("orthogonal_approx_cris", i, approx, exact, abs(approx - exact) < 1e-6)

        if orth.K_t > 0:
            unit = _unit_config(config)
            cris = run_cris(unit, orth, initial_state(orth, unit.power, unit.sigma2, make_rng(seed, (i, 4))))
            s = cris.final_state
            result = theorem2_gap(orth, s.v, s.theta_r, unit.sigma2)
            add("star_gain_witness", i, result.gap, 0.0, result.found and result.gap < 0)
    return records


def _unit_config(config: SystemConfig) -> SystemConfig:
    """Unit noise and unit power for the orthogonal instances."""
    return config.replace(sigma2_dbm=30.0, snr_db=0.0, snr_reference_dbm=None)


def all_passed(records: Iterable[CheckRecord]) -> bool:
    return all(r.passed for r in records)


def write_report(records: Iterable[CheckRecord], dest: str | Path | TextIO) -> None:
    """CSV report to a path or an open text stream."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_report(records, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in records:
        writer.writerow([r.check_name, r.instance_id, repr(r.value_lhs), repr(r.value_rhs), str(r.passed).lower()])
