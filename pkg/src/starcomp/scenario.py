"""Scenario configuration, deployment geometry and seeded random streams.

Everything downstream reads its parameters from a :class:`SystemConfig` and
draws its randomness from :func:`make_rng`, so a (config, seed) pair fully
determines an experiment.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np


class ConfigError(ValueError):
    """Raised for inconsistent or out-of-range scenario parameters."""


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watt(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def snr_to_power(snr_db: float, sigma2: float) -> float:
    """Transmit power budget ``P`` such that ``P / sigma2`` equals ``snr_db``."""
    if not sigma2 > 0:
        raise ValueError(f"noise power must be positive, got {sigma2!r}")
    return sigma2 * db_to_linear(snr_db)


@dataclass(frozen=True)
class SystemConfig:
    """All parameters of one STAR-RIS AirComp scenario.

    The first ``K_r`` devices are R-WDs (reflection side of the surface),
    the remaining ``K_t`` are T-WDs.  Distances are in meters, losses and
    Rician factors in dB.  Reflection and transmission amplitudes are fixed
    at one, so there is no energy-splitting parameter.

    ``snr_reference_dbm`` selects the noise level the SNR is quoted against.
    ``None`` (default) gives ``P = sigma2 * 10**(snr_db/10)``.  A number
    ``r`` gives ``P = 10**((snr_db + r)/10)`` mW instead, which is the
    regime in which the SNR trends become visible (with the default link
    budget, ``P = sigma2 * SNR`` leaves every device ~60 dB below the
    noise floor).
    """

    N: int = 64
    M_y: int = 4
    M_z: int = 16
    K: int = 64
    K_r: int = 32
    K_t: int = 32
    snr_db: float = 15.0
    sigma2_dbm: float = -80.0
    c0_db: float = -30.0
    D0_m: float = 1.0
    alpha_wr: float = 2.2
    alpha_rwf: float = 3.8
    alpha_twf: float = 4.0
    alpha_rf: float = 3.0
    kappa_wr_db: float = 3.0
    kappa_rf_db: float = 3.0
    kappa_rwf_db: float = -3.0
    kappa_twf_db: float = -3.0
    d_x_m: float = 2.0
    d_y_m: float = 50.0
    d_z_m: float = 3.0
    d_r_m: float = 3.0
    corr_rho: float = 0.0
    epsilon: float = 1e-4
    max_iters: int = 1000
    seed: int = 0
    snr_reference_dbm: float | None = None
    phase_sweeps: int = 1

    def __post_init__(self) -> None:
        self.validate()

    @property
    def M(self) -> int:
        return self.M_y * self.M_z

    @property
    def sigma2(self) -> float:
        return dbm_to_watt(self.sigma2_dbm)

    @property
    def power(self) -> float:
        if self.snr_reference_dbm is None:
            return snr_to_power(self.snr_db, self.sigma2)
        return snr_to_power(self.snr_db, dbm_to_watt(self.snr_reference_dbm))

    @property
    def c0(self) -> float:
        return db_to_linear(self.c0_db)

    def validate(self) -> None:
        for name in ("N", "M_y", "M_z", "K", "K_r", "K_t", "max_iters", "phase_sweeps"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            if value < 0:
                raise ConfigError(f"{name} must be non-negative, got {value}")
        if self.N < 1 or self.M_y < 1 or self.M_z < 1 or self.K < 1:
            raise ConfigError("N, M_y, M_z and K must all be at least 1")
        if self.max_iters < 1 or self.phase_sweeps < 1:
            raise ConfigError("max_iters and phase_sweeps must be at least 1")
        if self.K_r + self.K_t != self.K:
            raise ConfigError(f"K_r + K_t = {self.K_r + self.K_t} does not match K = {self.K}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.corr_rho < 1.0:
            raise ConfigError(f"corr_rho must lie in [0, 1), got {self.corr_rho}")
        if not (self.D0_m > 0 and self.d_r_m > 0):
            raise ConfigError("D0_m and d_r_m must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not (math.isfinite(self.snr_db) and math.isfinite(self.sigma2_dbm)):
            raise ConfigError("snr_db and sigma2_dbm must be finite")
        if not self.power > 0:
            raise ConfigError("transmit power budget must be positive")

    def replace(self, **changes: Any) -> "SystemConfig":
        """Copy with some fields changed; ``M`` may be given and is split as ``M_y * M_z``."""
        if "M" in changes:
            M = changes.pop("M")
            M_y = changes.get("M_y", self.M_y)
            if M % M_y:
                raise ConfigError(f"M = {M} is not a multiple of M_y = {M_y}")
            changes["M_z"] = M // M_y
        if "K" in changes and "K_r" not in changes and "K_t" not in changes:
            K = changes["K"]
            changes["K_r"] = round(K * self.K_r / self.K)
        if "K" in changes or "K_r" in changes:
            K = changes.get("K", self.K)
            changes.setdefault("K_t", K - changes.get("K_r", self.K_r))
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def default_config() -> SystemConfig:
    """Reference simulation settings (64 antennas, 64 elements, 64 devices)."""
    return SystemConfig()


def desk_config(N: int = 16, M: int = 16, K: int = 8, **changes: Any) -> SystemConfig:
    """Reference settings scaled down to desk size (``M_y`` stays 4, ``K_r = K/2``)."""
    return default_config().replace(N=N, M=M, K=K, **changes)


_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}


def config_from_dict(data: dict[str, Any], base: SystemConfig | None = None) -> SystemConfig:
    unknown = set(data) - _FIELDS - {"M"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = default_config() if base is None else base
    try:
        return base.replace(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, base: SystemConfig | None = None) -> SystemConfig:
    """Read a flat JSON object whose keys are :class:`SystemConfig` field names."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return config_from_dict(data, base)


def save_config(config: SystemConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class Geometry:
    """Node positions in meters. FC on the x-axis, surface in the y-z plane."""

    fc_position: np.ndarray
    ris_position: np.ndarray
    r_wd_positions: np.ndarray = field(repr=False)
    t_wd_positions: np.ndarray = field(repr=False)

    @property
    def wd_positions(self) -> np.ndarray:
        return np.concatenate([self.r_wd_positions, self.t_wd_positions], axis=0)


def _circle(center: np.ndarray, radius: float, count: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(count) / max(count, 1)
    pts = np.zeros((count, 3))
    pts[:, 0] = center[0] + radius * np.cos(angles)
    pts[:, 1] = center[1] + radius * np.sin(angles)
    pts[:, 2] = center[2]
    return pts


def build_geometry(config: SystemConfig) -> Geometry:
    """Place the FC, the surface and both device circles (devices at height 0).

    R-WDs sit on a circle of radius ``d_r`` centred at ``(0, d_y - d_r, 0)``
    and T-WDs on the mirrored circle at ``(0, d_y + d_r, 0)``; device ``i``
    of a group with ``n`` members is at angle ``2*pi*i/n``.
    """
    dy, dr = config.d_y_m, config.d_r_m
    r_center = np.array([0.0, dy - dr, 0.0])
    t_center = np.array([0.0, dy + dr, 0.0])
    return Geometry(
        fc_position=np.array([config.d_x_m, 0.0, 0.0]),
        ris_position=np.array([0.0, dy, config.d_z_m]),
        r_wd_positions=_circle(r_center, dr, config.K_r),
        t_wd_positions=_circle(t_center, dr, config.K_t),
    )


def make_rng(seed: int, stream_id: int | Iterable[int] = 0) -> np.random.Generator:
    """Independent reproducible generator for ``(seed, stream_id)``.

    ``stream_id`` may be an int or a tuple of ints such as
    ``(trial, value_index, purpose)``.  PCG64 seeded through SeedSequence
    gives identical draws on every platform.
    """
    if isinstance(stream_id, (int, np.integer)):
        key = [int(stream_id)]
    else:
        key = [int(s) for s in stream_id]
    if any(k < 0 for k in key) or seed < 0:
        raise ValueError("seed and stream ids must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))
