"""System configuration: scenario parameters, validation and plain-text I/O.

All quantities are stored in SI base units (meters, seconds, Hz, watts,
linear power ratios).  The plain-text config format accepts explicit
``dB`` / ``dBm`` suffixes on the fields where those units are customary;
the canonical serialization always emits base units so that a
load/serialize round trip is exact.

Feasibility constraints checked by :func:`validate_config`:

  C4  lambda_min <= lambda          (emergency scenario only)
  C5  lambda <= lambda_max          (emergency scenario only)
  C6  min_radius <= cell_radius

plus the structural invariants of every parameter group.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum

from scipy import stats

__all__ = [
    "Scenario",
    "PowerMode",
    "GeometryParams",
    "ChannelParams",
    "TrafficParams",
    "FrameParams",
    "PowerPolicy",
    "ReliabilityParams",
    "SystemConfig",
    "ConfigError",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watts",
    "watts_to_dbm",
    "default_config",
    "default_tail_truncation",
    "load_config",
    "serialize_config",
    "validate_config",
    "ensure_valid",
]


# ----------------------------------------------------------------------------
#  Unit conversions
# ----------------------------------------------------------------------------

def db_to_linear(value_db: float) -> float:
    """Power ratio in dB -> linear ratio."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    """Linear power ratio -> dB."""
    if value <= 0:
        raise ValueError("dB conversion requires a positive ratio")
    return 10.0 * math.log10(value)


def dbm_to_watts(value_dbm: float) -> float:
    """Power in dBm -> watts."""
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def watts_to_dbm(value_w: float) -> float:
    """Power in watts -> dBm."""
    if value_w <= 0:
        raise ValueError("dBm conversion requires a positive power")
    return 10.0 * math.log10(value_w) + 30.0


class Scenario(Enum):
    NON_EMERGENCY = "non_emergency"
    EMERGENCY = "emergency"


class PowerMode(Enum):
    # Per-packet transmit power rule for the active devices.
    EQUAL_SPLIT_BY_MAX = "equal_split_by_max"   # p_max / rho_max (adaptive scheme)
    PER_DEVICE_SPLIT = "per_device_split"       # p_max / L_i (power-diversity benchmark)
    FIXED = "fixed"                             # p_max per packet (non-adaptive benchmark)


# ----------------------------------------------------------------------------
#  Parameter groups
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometryParams:
    """UAV serving-zone geometry."""
    cell_radius: float = 50.0      # m, radius of the serving disk
    uav_altitude: float = 125.0    # m, hover altitude
    min_radius: float = 10.0       # m, smallest admissible serving radius (C6)

    def invariant_violations(self) -> list[str]:
        out = []
        if not self.cell_radius > 0:
            out.append("geometry: cell_radius must be > 0")
        if not self.uav_altitude > 0:
            out.append("geometry: uav_altitude must be > 0")
        return out


@dataclass(frozen=True)
class ChannelParams:
    """Ground-to-air pathloss and noise model."""
    pathloss_coeff: float = 1.0    # linear attenuation coefficient (0 dB)
    pathloss_exp: float = 2.2      # pathloss exponent
    noise_power: float = 1e-13     # W (-100 dBm)
    bandwidth: float = 5e6         # Hz

    def invariant_violations(self) -> list[str]:
        out = []
        if not self.pathloss_exp >= 2:
            out.append("channel: pathloss_exp must be >= 2")
        if not self.noise_power > 0:
            out.append("channel: noise_power must be > 0")
        if not self.bandwidth > 0:
            out.append("channel: bandwidth must be > 0")
        return out


@dataclass(frozen=True)
class TrafficParams:
    """Per-frame traffic model of the active devices.

    In the non-emergency scenario every active device carries exactly one
    packet; in the emergency scenario per-device packet counts are
    Poisson(lam).  ``tail_truncation`` bounds the Poisson tail kept by the
    slot-occupancy series; ``None`` selects the smallest value whose
    discarded tail mass is below 1e-12.
    """
    n_active: int = 10             # devices active in the frame
    lam: float = 4.0               # mean packets per active device
    lambda_min: float = 2.0        # C4 lower bound on lam (emergency)
    lambda_max: float = 10.0       # C5 upper bound on lam (emergency)
    scenario: Scenario = Scenario.EMERGENCY
    tail_truncation: int | None = None

    def effective_tail_truncation(self) -> int:
        if self.tail_truncation is not None:
            return self.tail_truncation
        return default_tail_truncation(self.lam)

    def invariant_violations(self) -> list[str]:
        out = []
        if self.n_active < 1:
            out.append("traffic: n_active must be a positive integer")
        if self.lam < 0:
            out.append("traffic: lambda must be >= 0")
        if self.tail_truncation is not None and self.tail_truncation < 0:
            out.append("traffic: tail_truncation must be >= 0")
        return out


@dataclass(frozen=True)
class FrameParams:
    """Transmission frame structure."""
    frame_duration: float = 1e-3   # s, also the latency bound
    n_slots: int = 20              # time slots per frame
    packet_bits: int = 200         # payload bits per packet
    n_subcarriers: int = 4         # spreading-code length J
    code_pool_size: int = 64       # number of distinct spreading codes

    @property
    def slot_duration(self) -> float:
        return self.frame_duration / self.n_slots

    def invariant_violations(self) -> list[str]:
        out = []
        if self.frame_duration <= 0:
            out.append("frame: frame_duration must be > 0")
        if self.n_slots < 1:
            out.append("frame: n_slots must be >= 1")
        if self.packet_bits < 1:
            out.append("frame: packet_bits must be a positive integer")
        if self.n_subcarriers < 1:
            out.append("frame: n_subcarriers must be >= 1")
        if self.code_pool_size < 2:
            out.append("frame: code_pool_size must be >= 2")
        if 4 ** self.n_subcarriers < self.code_pool_size:
            out.append(
                "frame: code_pool_size exceeds the 4^n_subcarriers distinct "
                "quaternary spreading codes"
            )
        return out


@dataclass(frozen=True)
class PowerPolicy:
    """Per-packet transmit power rule.

    ``rho_max_proxy_quantile`` sets the deterministic Poisson quantile used
    as a stand-in for the per-frame maximum packet count when splitting the
    power budget; ``exact_rho_max=True`` makes the simulator use the actual
    per-frame maximum instead.
    """
    p_max: float = 0.01            # W (10 dBm), per-device power budget
    mode: PowerMode = PowerMode.EQUAL_SPLIT_BY_MAX
    rho_max_proxy_quantile: float = 0.99
    exact_rho_max: bool = False

    def invariant_violations(self) -> list[str]:
        out = []
        if not self.p_max > 0:
            out.append("power: p_max must be > 0")
        if not 0 < self.rho_max_proxy_quantile < 1:
            out.append("power: rho_max_proxy_quantile must lie in (0, 1)")
        return out


LOG2_E = math.log2(math.e)


@dataclass(frozen=True)
class ReliabilityParams:
    """Decoding threshold and short-packet reliability targets."""
    sinr_threshold: float = 1.0    # linear SINR threshold (0 dB)
    epsilon_max: float = 1e-5      # max short-packet error probability (C3)
    dispersion: float = LOG2_E ** 2  # channel dispersion approximation

    def invariant_violations(self) -> list[str]:
        out = []
        if not self.sinr_threshold > 0:
            out.append("reliability: sinr_threshold must be > 0")
        if not 0 < self.epsilon_max < 0.5:
            out.append("reliability: epsilon_max must lie in (0, 0.5)")
        if not self.dispersion > 0:
            out.append("reliability: dispersion must be > 0")
        return out


@dataclass(frozen=True)
class SystemConfig:
    """Complete scenario parameterization shared by all modules."""
    geometry: GeometryParams = field(default_factory=GeometryParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    traffic: TrafficParams = field(default_factory=TrafficParams)
    frame: FrameParams = field(default_factory=FrameParams)
    power: PowerPolicy = field(default_factory=PowerPolicy)
    reliability: ReliabilityParams = field(default_factory=ReliabilityParams)
    delta_slack: float = 0.0       # slack added to the traffic slot bound (C1)

    def active_intensity(self) -> float:
        """Spatial intensity of frame-active devices (devices / m^2)."""
        r = self.geometry.cell_radius
        return self.traffic.n_active / (math.pi * r * r)

    def rho_max_proxy(self) -> int:
        """Deterministic stand-in for the per-frame maximum packet count.

        Poisson quantile of the traffic rate in the emergency scenario,
        1 in the non-emergency scenario, never below 1.
        """
        if self.traffic.scenario is Scenario.NON_EMERGENCY:
            return 1
        q = self.power.rho_max_proxy_quantile
        return max(1, int(stats.poisson.ppf(q, self.traffic.lam)))

    def mean_packet_power(self) -> float:
        """Fixed per-packet power used by the analytical model (watts).

        Equal-split modes divide the budget by the rho_max proxy; the
        fixed-power mode transmits the full budget per packet.
        """
        if self.power.mode is PowerMode.FIXED:
            return self.power.p_max
        return self.power.p_max / self.rho_max_proxy()

    def traffic_slot_bound(self) -> float:
        """Upper bound on the slot count from the traffic load (C1)."""
        return self.traffic.n_active * self.traffic.lam + self.delta_slack


def default_tail_truncation(lam: float, tol: float = 1e-12) -> int:
    """Smallest m such that P(Poisson(lam) > ceil(lam) + m) < tol."""
    if lam <= 0:
        return 0
    base = math.ceil(lam)
    m = 0
    while stats.poisson.sf(base + m, lam) >= tol:
        m += 1
    return m


def default_config() -> SystemConfig:
    """The documented default configuration."""
    return SystemConfig()


# ----------------------------------------------------------------------------
#  Validation
# ----------------------------------------------------------------------------

def validate_config(cfg: SystemConfig) -> list[str]:
    """Collect every violated feasibility constraint and type invariant.

    Returns an empty list iff the configuration is feasible.  C4/C5 apply
    only in the emergency scenario.
    """
    issues: list[str] = []
    for group in (cfg.geometry, cfg.channel, cfg.traffic, cfg.frame,
                  cfg.power, cfg.reliability):
        issues.extend(group.invariant_violations())
    if cfg.delta_slack < 0:
        issues.append("delta_slack must be >= 0")
    t = cfg.traffic
    if t.scenario is Scenario.EMERGENCY:
        if t.lam < t.lambda_min:
            issues.append(
                f"C4: lambda ({t.lam:g}) below lambda_min ({t.lambda_min:g})"
            )
        if t.lam > t.lambda_max:
            issues.append(
                f"C5: lambda ({t.lam:g}) exceeds lambda_max ({t.lambda_max:g})"
            )
    g = cfg.geometry
    if g.cell_radius < g.min_radius:
        issues.append(
            f"C6: cell_radius ({g.cell_radius:g}) below min_radius "
            f"({g.min_radius:g})"
        )
    return issues


def ensure_valid(cfg: SystemConfig) -> SystemConfig:
    """Raise :class:`ConfigError` listing all violations, else return cfg."""
    issues = validate_config(cfg)
    if issues:
        raise ConfigError("; ".join(issues))
    return cfg


# ----------------------------------------------------------------------------
#  Plain-text config format
# ----------------------------------------------------------------------------

class ConfigError(ValueError):
    """Malformed or infeasible configuration document."""


# key -> (section attr, field attr, value kind)
# kinds: float, int, bool, watts (dBm suffix accepted), ratio (dB suffix
# accepted), scenario, power_mode
_KEY_TABLE: dict[str, tuple[str | None, str, str]] = {
    "geometry.cell_radius": ("geometry", "cell_radius", "float"),
    "geometry.uav_altitude": ("geometry", "uav_altitude", "float"),
    "geometry.min_radius": ("geometry", "min_radius", "float"),
    "channel.pathloss_coeff": ("channel", "pathloss_coeff", "ratio"),
    "channel.pathloss_exp": ("channel", "pathloss_exp", "float"),
    "channel.noise_power": ("channel", "noise_power", "watts"),
    "channel.bandwidth": ("channel", "bandwidth", "float"),
    "traffic.n_active": ("traffic", "n_active", "int"),
    "traffic.lambda": ("traffic", "lam", "float"),
    "traffic.lambda_min": ("traffic", "lambda_min", "float"),
    "traffic.lambda_max": ("traffic", "lambda_max", "float"),
    "traffic.scenario": ("traffic", "scenario", "scenario"),
    "traffic.tail_truncation": ("traffic", "tail_truncation", "int"),
    "frame.frame_duration": ("frame", "frame_duration", "float"),
    "frame.n_slots": ("frame", "n_slots", "int"),
    "frame.packet_bits": ("frame", "packet_bits", "int"),
    "frame.n_subcarriers": ("frame", "n_subcarriers", "int"),
    "frame.code_pool_size": ("frame", "code_pool_size", "int"),
    "power.p_max": ("power", "p_max", "watts"),
    "power.mode": ("power", "mode", "power_mode"),
    "power.rho_max_proxy_quantile": ("power", "rho_max_proxy_quantile", "float"),
    "power.exact_rho_max": ("power", "exact_rho_max", "bool"),
    "reliability.sinr_threshold": ("reliability", "sinr_threshold", "ratio"),
    "reliability.epsilon_max": ("reliability", "epsilon_max", "float"),
    "reliability.dispersion": ("reliability", "dispersion", "float"),
    "delta_slack": (None, "delta_slack", "float"),
}


def _parse_value(kind: str, raw: str, key: str, lineno: int):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "watts":
            if raw.lower().endswith("dbm"):
                return dbm_to_watts(float(raw[:-3]))
            return float(raw)
        if kind == "ratio":
            if raw.lower().endswith("db"):
                return db_to_linear(float(raw[:-2]))
            return float(raw)
        if kind == "scenario":
            return Scenario(raw.lower())
        if kind == "power_mode":
            return PowerMode(raw.lower())
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    raise AssertionError(f"unknown kind {kind}")


def load_config(source) -> SystemConfig:
    """Parse a key=value config document and validate the result.

    ``source`` may be a text string, a bytes object, or a readable stream.
    Omitted keys take the documented defaults; an empty document yields the
    default configuration.  Raises :class:`ConfigError` on parse problems
    (with line context) and on feasibility violations (naming the
    constraint).
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    values: dict[str, object] = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        key = key.lower()
        if key not in _KEY_TABLE:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        _, _, kind = _KEY_TABLE[key]
        values[key] = _parse_value(kind, raw, key, lineno)

    cfg = default_config()
    by_section: dict[str, dict[str, object]] = {}
    top: dict[str, object] = {}
    for key, value in values.items():
        section, attr, _ = _KEY_TABLE[key]
        if section is None:
            top[attr] = value
        else:
            by_section.setdefault(section, {})[attr] = value
    for section, kw in by_section.items():
        cfg = replace(cfg, **{section: replace(getattr(cfg, section), **kw)})
    if top:
        cfg = replace(cfg, **top)
    return ensure_valid(cfg)


def _format_value(kind: str, value) -> str:
    if kind in ("float", "watts", "ratio"):
        return repr(float(value))
    if kind == "int":
        return str(int(value))
    if kind == "bool":
        return "true" if value else "false"
    return value.value  # enums


def serialize_config(cfg: SystemConfig) -> str:
    """Canonical serialization; ``load_config`` of the result is identity.

    Base units only (watts, linear ratios) with full float precision.
    """
    lines = ["# musalink configuration (SI base units)"]
    for key, (section, attr, kind) in _KEY_TABLE.items():
        holder = cfg if section is None else getattr(cfg, section)
        value = getattr(holder, attr)
        if value is None:  # optional field left at its computed default
            continue
        lines.append(f"{key} = {_format_value(kind, value)}")
    return "\n".join(lines) + "\n"
