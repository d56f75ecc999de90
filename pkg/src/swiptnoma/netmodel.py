"""Multicell topology, NOMA pairing, channel generation and scenario I/O.

Everything inside the library is in watts and nats.  dBm, dB and bits only
appear in the ``*_dbm`` / ``*_bits`` fields of scenario files and in the
conversion helpers below.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

INSTANCE_FORMAT = "swiptnoma-instance"
INSTANCE_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario configuration or malformed scenario file."""


# ── unit helpers ──────────────────────────────────────────────────────────────

def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


def bits_to_nats(bits: float) -> float:
    return bits * math.log(2.0)


def nats_to_bits(nats):
    return nats / math.log(2.0)


def pathloss_db(d: float, beta: float) -> float:
    """Path loss ``30 + 10 beta log10(d)`` in dB for a link of ``d`` meters."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d!r}")
    return 30.0 + 10.0 * beta * math.log10(d)


# ── configuration ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class NetworkConfig:
    n_cells: int = 3
    pairs_per_cell: int = 2
    antennas: int = 4
    cell_radius: float = 100.0
    near_distance_range: tuple[float, float] = (10.0, 10.0)
    far_distance_range: tuple[float, float] = (80.0, 90.0)
    pathloss_exponent_near: float = 2.0
    pathloss_exponent_far: float = 3.0
    rician_factor_db: float = 10.0
    carrier_frequency: float = 2e9
    bandwidth: float = 20e6
    rng_seed: int = 0

    def validate(self) -> None:
        if self.n_cells < 1 or self.pairs_per_cell < 1 or self.antennas < 1:
            raise ConfigError("n_cells, pairs_per_cell and antennas must be >= 1")
        near_lo, near_hi = self.near_distance_range
        far_lo, far_hi = self.far_distance_range
        if not (0 < near_lo <= near_hi < far_lo <= far_hi <= self.cell_radius):
            raise ConfigError(
                "need 0 < near_min <= near_max < far_min <= far_max <= cell_radius, got "
                f"near={self.near_distance_range}, far={self.far_distance_range}, "
                f"radius={self.cell_radius}"
            )
        if self.pathloss_exponent_near <= 0 or self.pathloss_exponent_far <= 0:
            raise ConfigError("path-loss exponents must be positive")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")


@dataclass(frozen=True)
class PowerNoiseConfig:
    """Power, noise, harvesting and QoS parameters (watts, W/Hz, nats)."""

    p_max: float = dbm_to_watt(35.0)
    noise_psd: float = dbm_to_watt(-174.0)
    circuit_noise_psd: float = dbm_to_watt(-174.0)
    eh_threshold: float = dbm_to_watt(-20.0)
    eh_efficiency: float = 0.5
    amp_inefficiency: float = 5.0
    per_antenna_power: float = 0.6
    circuit_power: float = 2.5
    qos_rate: float = bits_to_nats(0.5)

    def validate(self) -> None:
        positive = ("p_max", "noise_psd", "circuit_noise_psd", "per_antenna_power", "circuit_power")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.eh_threshold < 0:
            raise ConfigError("eh_threshold must be nonnegative")
        if not 0 < self.eh_efficiency < 1:
            raise ConfigError("eh_efficiency must lie in (0, 1)")
        if self.amp_inefficiency < 1:
            raise ConfigError("amp_inefficiency must be >= 1")
        if self.qos_rate < 0:
            raise ConfigError("qos_rate must be nonnegative")


@dataclass(frozen=True)
class Scenario:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    power: PowerNoiseConfig = field(default_factory=PowerNoiseConfig)

    def validate(self) -> None:
        self.network.validate()
        self.power.validate()

    def with_overrides(self, **kw: Any) -> "Scenario":
        """Copy with fields replaced; keys may belong to either section."""
        net_keys = {k: v for k, v in kw.items() if k in NetworkConfig.__dataclass_fields__}
        pow_keys = {k: v for k, v in kw.items() if k in PowerNoiseConfig.__dataclass_fields__}
        unknown = set(kw) - set(net_keys) - set(pow_keys)
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        return Scenario(replace(self.network, **net_keys), replace(self.power, **pow_keys))


# ── scenario files ────────────────────────────────────────────────────────────
# Schema (JSON):
#   {"network": {<NetworkConfig fields>},
#    "power": {"p_max_dbm", "noise_psd_dbm_hz", "circuit_noise_psd_dbm_hz",
#              "eh_threshold_dbm", "eh_efficiency", "amp_inefficiency",
#              "per_antenna_power_w", "circuit_power_w", "qos_rate_bits"}}
# Every key is optional; missing keys take the defaults above.  A null
# "eh_threshold_dbm" means no harvesting requirement.

_POWER_FILE_KEYS = {
    "p_max_dbm": ("p_max", dbm_to_watt),
    "noise_psd_dbm_hz": ("noise_psd", dbm_to_watt),
    "circuit_noise_psd_dbm_hz": ("circuit_noise_psd", dbm_to_watt),
    "eh_threshold_dbm": ("eh_threshold", dbm_to_watt),
    "eh_efficiency": ("eh_efficiency", float),
    "amp_inefficiency": ("amp_inefficiency", float),
    "per_antenna_power_w": ("per_antenna_power", float),
    "circuit_power_w": ("circuit_power", float),
    "qos_rate_bits": ("qos_rate", bits_to_nats),
}


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = set(data) - {"network", "power"}
    if unknown:
        raise ConfigError(f"unknown scenario sections: {sorted(unknown)}")
    net_raw = dict(data.get("network", {}))
    for key in ("near_distance_range", "far_distance_range"):
        if key in net_raw:
            net_raw[key] = tuple(float(v) for v in net_raw[key])
    bad = set(net_raw) - set(NetworkConfig.__dataclass_fields__)
    if bad:
        raise ConfigError(f"unknown network fields: {sorted(bad)}")
    pow_kw = {}
    for key, value in data.get("power", {}).items():
        if key not in _POWER_FILE_KEYS:
            raise ConfigError(f"unknown power field: {key!r}")
        name, conv = _POWER_FILE_KEYS[key]
        if value is None and key == "eh_threshold_dbm":
            pow_kw[name] = 0.0          # null threshold: harvesting disabled
            continue
        pow_kw[name] = conv(float(value))
    try:
        scen = Scenario(NetworkConfig(**net_raw), PowerNoiseConfig(**pow_kw))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    scen.validate()
    return scen


def scenario_to_dict(scen: Scenario) -> dict[str, Any]:
    net = asdict(scen.network)
    net["near_distance_range"] = list(net["near_distance_range"])
    net["far_distance_range"] = list(net["far_distance_range"])
    p = scen.power
    return {
        "network": net,
        "power": {
            "p_max_dbm": watt_to_dbm(p.p_max),
            "noise_psd_dbm_hz": watt_to_dbm(p.noise_psd),
            "circuit_noise_psd_dbm_hz": watt_to_dbm(p.circuit_noise_psd),
            "eh_threshold_dbm": watt_to_dbm(p.eh_threshold) if p.eh_threshold > 0 else None,
            "eh_efficiency": p.eh_efficiency,
            "amp_inefficiency": p.amp_inefficiency,
            "per_antenna_power_w": p.per_antenna_power,
            "circuit_power_w": p.circuit_power,
            "qos_rate_bits": nats_to_bits(p.qos_rate),
        },
    }


def load_json(path: str | Path) -> Any:
    """Read JSON, turning syntax errors into ConfigError with line/column."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load_scenario(path: str | Path) -> Scenario:
    try:
        return scenario_from_dict(load_json(path))
    except ConfigError as exc:
        if str(path) in str(exc):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def default_scenario_path() -> Path:
    return Path(__file__).with_name("data") / "default_scenario.json"


# ── instances ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """One channel realization.

    UE index convention inside each cell: ``j < K`` are near (cell-center)
    users, ``j >= K`` are far (cell-edge) users.  ``pairing[i, j]`` gives the
    far partner index ``p(j)`` of near user ``j`` in cell ``i``.
    ``channels[s, i, j]`` is the row vector from BS ``s`` to UE ``(i, j)``.
    """

    scenario: Scenario
    bs_positions: np.ndarray      # (N, 2)
    ue_positions: np.ndarray      # (N, 2K, 2)
    pairing: np.ndarray           # (N, K) int, values in [K, 2K)
    channels: np.ndarray          # (N, N, 2K, Nt) complex
    seed: int = 0                 # realization seed, reused to seed the optimizers' random starts

    @property
    def n_cells(self) -> int:
        return self.channels.shape[0]

    @property
    def pairs(self) -> int:
        return self.channels.shape[2] // 2

    @property
    def antennas(self) -> int:
        return self.channels.shape[3]

    @property
    def sigma2(self) -> float:
        """Total receiver noise power in watts."""
        return self.scenario.power.noise_psd * self.scenario.network.bandwidth

    @property
    def sigma_c2(self) -> float:
        return self.scenario.power.circuit_noise_psd * self.scenario.network.bandwidth

    @property
    def p_max(self) -> float:
        return self.scenario.power.p_max

    @property
    def p_c(self) -> float:
        """Fixed circuit power N_t P_A + P_cir."""
        p = self.scenario.power
        return self.antennas * p.per_antenna_power + p.circuit_power

    def clusters(self):
        """Yield ``(i, j, p(j))`` for every near user."""
        for i in range(self.n_cells):
            for j in range(self.pairs):
                yield i, j, int(self.pairing[i, j])

    def distance(self, s: int, i: int, j: int) -> float:
        return float(np.linalg.norm(self.ue_positions[i, j] - self.bs_positions[s]))


def hex_sites(n: int, spacing: float) -> np.ndarray:
    """First ``n`` sites of a hexagonal lattice, spiralling out from the origin."""
    dirs = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
    sites = [(0, 0)]
    ring = 1
    while len(sites) < n:
        q, r = ring, 0
        # start at corner 0 and walk the ring starting with direction 2
        for d in range(6):
            dq, dr = dirs[(d + 2) % 6]
            for _ in range(ring):
                sites.append((q, r))
                q, r = q + dq, r + dr
        ring += 1
    axial = np.array(sites[:n], dtype=float)
    x = spacing * (axial[:, 0] + axial[:, 1] / 2.0)
    y = spacing * (math.sqrt(3.0) / 2.0) * axial[:, 1]
    return np.stack([x, y], axis=1)


def generate_instance(scen: Scenario, seed: int | None = None) -> NetworkInstance:
    """Draw topology, pairing and channels.  Deterministic for a fixed seed.

    Serving-BS links to own near users are Rician (fixed-amplitude LOS term
    with independent uniform phase per antenna, K-factor as a power ratio);
    every other link is Rayleigh.  Large-scale gain is ``10^(-PL/10)``.
    """
    scen.validate()
    cfg = scen.network
    seed = cfg.rng_seed if seed is None else seed
    rng = np.random.default_rng(seed)
    n, k, nt = cfg.n_cells, cfg.pairs_per_cell, cfg.antennas

    bs = hex_sites(n, math.sqrt(3.0) * cfg.cell_radius)
    dist = np.concatenate([
        rng.uniform(*cfg.near_distance_range, size=(n, k)),
        rng.uniform(*cfg.far_distance_range, size=(n, k)),
    ], axis=1)
    angle = rng.uniform(0.0, 2.0 * math.pi, size=(n, 2 * k))
    ue = bs[:, None, :] + dist[..., None] * np.stack([np.cos(angle), np.sin(angle)], axis=-1)
    pairing = np.stack([k + rng.permutation(k) for _ in range(n)])

    kf = 10.0 ** (cfg.rician_factor_db / 10.0)
    scatter = (rng.standard_normal((n, n, 2 * k, nt))
               + 1j * rng.standard_normal((n, n, 2 * k, nt))) / math.sqrt(2.0)
    los = np.exp(1j * rng.uniform(0.0, 2.0 * math.pi, size=(n, k, nt)))
    small = scatter.copy()
    for i in range(n):
        small[i, i, :k] = math.sqrt(kf / (kf + 1.0)) * los[i] + math.sqrt(1.0 / (kf + 1.0)) * scatter[i, i, :k]

    d = np.linalg.norm(ue[None, :, :, :] - bs[:, None, None, :], axis=-1)   # (s, i, j)
    beta = np.full((n, n, 2 * k), cfg.pathloss_exponent_far)
    for i in range(n):
        beta[i, i, :k] = cfg.pathloss_exponent_near
    pl_db = 30.0 + 10.0 * beta * np.log10(d)
    channels = np.sqrt(10.0 ** (-pl_db / 10.0))[..., None] * small
    return NetworkInstance(scen, bs, ue, pairing, channels, int(seed))


def instance_to_dict(inst: NetworkInstance) -> dict[str, Any]:
    return {
        "format": INSTANCE_FORMAT,
        "version": INSTANCE_VERSION,
        "scenario": scenario_to_dict(inst.scenario),
        "bs_positions": inst.bs_positions.tolist(),
        "ue_positions": inst.ue_positions.tolist(),
        "pairing": inst.pairing.tolist(),
        "seed": inst.seed,
        "channels_re": inst.channels.real.tolist(),
        "channels_im": inst.channels.imag.tolist(),
    }


def instance_from_dict(data: dict[str, Any]) -> NetworkInstance:
    if data.get("format") != INSTANCE_FORMAT:
        raise ConfigError(f"not an instance dump (format={data.get('format')!r})")
    if data.get("version") != INSTANCE_VERSION:
        raise ConfigError(f"unsupported instance version {data.get('version')!r}")
    channels = np.asarray(data["channels_re"]) + 1j * np.asarray(data["channels_im"])
    return NetworkInstance(
        scenario_from_dict(data["scenario"]),
        np.asarray(data["bs_positions"], dtype=float),
        np.asarray(data["ue_positions"], dtype=float),
        np.asarray(data["pairing"], dtype=int),
        channels,
        int(data.get("seed", 0)),
    )


def save_instance(inst: NetworkInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1))


def load_instance(path: str | Path) -> NetworkInstance:
    return instance_from_dict(load_json(path))
