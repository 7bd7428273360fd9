"""Geometric Rician channel generation for the FC / STAR-RIS / device links."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import Geometry, SystemConfig, db_to_linear

# Rician factors at or above this are treated as pure line-of-sight.
PURE_LOS_KAPPA = 1e12

# The FC is a ULA; its axis is not pinned down by the model, we lay it along x.
FC_ARRAY_AXIS = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization.

    Attributes
    ----------
    h : (K, N) complex
        Direct device-to-FC channels, row ``k`` is ``h_k``.
    g : (K, M) complex
        Device-to-surface channels, row ``k`` is ``g_k``.
    G : (N, M) complex
        Surface-to-FC channel.
    K_r : int
        Rows ``0..K_r-1`` belong to R-WDs, the rest to T-WDs.
    """

    h: np.ndarray
    g: np.ndarray
    G: np.ndarray
    K_r: int

    def __post_init__(self) -> None:
        K, N = self.h.shape
        if self.g.shape[0] != K or self.G.shape != (N, self.g.shape[1]):
            raise ValueError(
                f"inconsistent channel shapes h{self.h.shape} g{self.g.shape} G{self.G.shape}"
            )
        if not 0 <= self.K_r <= K:
            raise ValueError(f"K_r = {self.K_r} outside [0, {K}]")

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def N(self) -> int:
        return self.h.shape[1]

    @property
    def M(self) -> int:
        return self.g.shape[1]

    @property
    def K_t(self) -> int:
        return self.K - self.K_r


def path_loss(d: float, alpha: float, c0: float, d0: float = 1.0) -> float:
    """Distance-dependent large-scale gain ``c0 * (d/d0)**(-alpha)``."""
    if not d > 0 or not d0 > 0:
        raise ValueError(f"distances must be positive (d={d!r}, d0={d0!r})")
    return c0 * (d / d0) ** (-alpha)


def ula_steering(N: int, cos_angle: float) -> np.ndarray:
    """Half-wavelength ULA response, element ``n`` has phase ``pi * n * cos_angle``."""
    return np.exp(1j * np.pi * np.arange(N) * cos_angle)


def ura_steering(M_y: int, M_z: int, direction: np.ndarray) -> np.ndarray:
    """Half-wavelength URA response in the y-z plane.

    Elements are ordered row-major over ``(z, y)``: index ``iz * M_y + iy``.
    """
    direction = np.asarray(direction, dtype=float)
    a_y = np.exp(1j * np.pi * np.arange(M_y) * direction[1])
    a_z = np.exp(1j * np.pi * np.arange(M_z) * direction[2])
    return np.kron(a_z, a_y)


def correlation_root(M: int, rho: float) -> np.ndarray:
    """Square root ``S`` with ``S @ S.conj().T == R`` for ``R[i, j] = rho**|i-j|``."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"correlation coefficient must lie in [0, 1), got {rho}")
    if rho == 0.0:
        return np.eye(M, dtype=complex)
    idx = np.arange(M)
    R = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(R).astype(complex)


def _unit(vec: np.ndarray) -> tuple[np.ndarray, float]:
    d = float(np.linalg.norm(vec))
    if d <= 0.0:
        raise ValueError("degenerate geometry: two nodes share a position")
    return vec / d, d


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _rician_weights(kappa_db: float) -> tuple[float, float]:
    kappa = db_to_linear(kappa_db)
    if kappa >= PURE_LOS_KAPPA:
        return 1.0, 0.0
    return np.sqrt(kappa / (1.0 + kappa)), np.sqrt(1.0 / (1.0 + kappa))


def generate_channels(
    config: SystemConfig, geometry: Geometry, rng: np.random.Generator
) -> ChannelSet:
    """Draw ``{h_k, g_k, G}`` for one realization.

    Every link is ``sqrt(L) * (sqrt(k/(1+k)) * LoS + sqrt(1/(1+k)) * R^1/2 w)``
    with exponentially correlated NLoS.  Random draws are consumed in the
    order ``h``, ``g``, ``G`` regardless of the Rician factors.
    """
    N, M, K, K_r = config.N, config.M, config.K, config.K_r
    c0, d0 = config.c0, config.D0_m
    root_N = correlation_root(N, config.corr_rho)
    root_M = correlation_root(M, config.corr_rho)
    fc, ris = geometry.fc_position, geometry.ris_position
    wds = geometry.wd_positions

    w_h = _cn(rng, (K, N))
    w_g = _cn(rng, (K, M))
    w_G = _cn(rng, (N, M))

    h = np.empty((K, N), dtype=complex)
    g = np.empty((K, M), dtype=complex)
    for k in range(K):
        reflect = k < K_r
        alpha = config.alpha_rwf if reflect else config.alpha_twf
        kappa_db = config.kappa_rwf_db if reflect else config.kappa_twf_db
        to_wd, dist = _unit(wds[k] - fc)
        los_w, nlos_w = _rician_weights(kappa_db)
        los = ula_steering(N, float(to_wd @ FC_ARRAY_AXIS))
        h[k] = np.sqrt(path_loss(dist, alpha, c0, d0)) * (los_w * los + nlos_w * root_N @ w_h[k])

        to_wd, dist = _unit(wds[k] - ris)
        los_w, nlos_w = _rician_weights(config.kappa_wr_db)
        los = ura_steering(config.M_y, config.M_z, to_wd)
        g[k] = np.sqrt(path_loss(dist, config.alpha_wr, c0, d0)) * (
            los_w * los + nlos_w * root_M @ w_g[k]
        )

    to_ris, dist = _unit(ris - fc)
    los_w, nlos_w = _rician_weights(config.kappa_rf_db)
    a_fc = ula_steering(N, float(to_ris @ FC_ARRAY_AXIS))
    a_ris = ura_steering(config.M_y, config.M_z, -to_ris)
    los = np.outer(a_fc, a_ris.conj())
    G = np.sqrt(path_loss(dist, config.alpha_rf, c0, d0)) * (
        los_w * los + nlos_w * root_N @ w_G @ root_M.T
    )
    return ChannelSet(h=h, g=g, G=G, K_r=K_r)


def dump_channels(ch: ChannelSet, path: str | Path) -> None:
    """Write channels as CSV rows ``name,i,j,re,im`` (h: i=k, j=n; g: i=k, j=m; G: i=n, j=m)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "i", "j", "re", "im"])
        writer.writerow(["K_r", ch.K_r, 0, 0.0, 0.0])
        for name, arr in (("h", ch.h), ("g", ch.g), ("G", ch.G)):
            for (i, j), z in np.ndenumerate(arr):
                writer.writerow([name, i, j, repr(float(z.real)), repr(float(z.imag))])


def load_channels(path: str | Path) -> ChannelSet:
    entries: dict[str, dict[tuple[int, int], complex]] = {"h": {}, "g": {}, "G": {}}
    K_r = 0
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["name"] == "K_r":
                K_r = int(row["i"])
                continue
            entries[row["name"]][int(row["i"]), int(row["j"])] = complex(
                float(row["re"]), float(row["im"])
            )

    def _build(d: dict[tuple[int, int], complex]) -> np.ndarray:
        shape = tuple(max(ix[a] for ix in d) + 1 for a in range(2)) if d else (0, 0)
        out = np.zeros(shape, dtype=complex)
        for ix, z in d.items():
            out[ix] = z
        return out

    return ChannelSet(h=_build(entries["h"]), g=_build(entries["g"]), G=_build(entries["G"]), K_r=K_r)
