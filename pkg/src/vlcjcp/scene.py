"""Scenario geometry and configuration.

All externally visible lengths are in centimeters; channel math converts to
meters in one place (:mod:`vlcjcp.channel`).  A scenario is immutable after
validation and safe to share across threads.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

from .errors import SchemaError, ValidationError

__all__ = [
    "Vec3",
    "LedConfig",
    "PdConfig",
    "RoomConfig",
    "DimmingPlan",
    "ModulationConfig",
    "RicianConfig",
    "ScenarioConfig",
    "Diagnostic",
    "lambertian_order_from_half_angle",
    "half_angle_from_lambertian_order",
    "default_led_positions",
    "load_scenario",
    "load_scenario_file",
    "scenario_to_dict",
    "scenario_to_json",
    "validate_scenario",
]


@dataclass(frozen=True)
class Vec3:
    """Point or offset in centimeters."""

    x: float
    y: float
    z: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_tuple())


@dataclass(frozen=True)
class LedConfig:
    position: Vec3
    transmit_power_w: float
    half_angle_deg: float        # semi-angle at half power
    lambertian_order: float      # emission directivity exponent


@dataclass(frozen=True)
class PdConfig:
    offset: Vec3                 # relative to the device reference point
    area_cm2: float
    fov_half_angle_deg: float
    optical_gain_factor: float = 1.0  # optional concentrator/filter multiplier


@dataclass(frozen=True)
class RoomConfig:
    dims: Vec3                   # L x W x H, cm; x-y origin at room center, floor z=0
    wall_reflectivity: float
    grid_resolution_cm: float
    height_grid_resolution_cm: float


@dataclass(frozen=True)
class DimmingPlan:
    """Zone dimming: per-LED brightness rho = psi_dim @ kappa, plus the DC bias."""

    psi_dim: tuple[tuple[int, ...], ...]  # N_t x n_dim, binary, one zone per LED
    kappa: tuple[float, ...]              # per-zone dimming coefficients
    v_dc: float                           # DC bias
    rho_min: float                        # minimum allowed dimming level

    @property
    def n_zones(self) -> int:
        return len(self.kappa)

    def psi_matrix(self):
        import numpy as np

        return np.asarray(self.psi_dim, dtype=float)

    def rho(self):
        import numpy as np

        return self.psi_matrix() @ np.asarray(self.kappa, dtype=float)


@dataclass(frozen=True)
class ModulationConfig:
    pam_order: int     # M
    amplitude: float   # PAM level scaling factor
    v_dc: float        # DC bias (mirrored into the dimming plan)


@dataclass(frozen=True)
class RicianConfig:
    mode: str                             # "fixed" | "geometric"
    k_factor: float | None = None         # fixed mode; math.inf means LOS-only
    segment_size_cm: float | None = None  # geometric mode wall discretization


@dataclass(frozen=True)
class ScenarioConfig:
    room: RoomConfig
    leds: tuple[LedConfig, ...]
    pds: tuple[PdConfig, ...]
    pd_separation_cm: float
    dimming: DimmingPlan
    modulation: ModulationConfig
    n_pilots: int
    snr_db_list: tuple[float, ...]
    rician: RicianConfig
    seed: int

    @property
    def n_leds(self) -> int:
        return len(self.leds)

    @property
    def n_pds(self) -> int:
        return len(self.pds)

    def pd_positions(self, device_position: Vec3) -> tuple[Vec3, ...]:
        """PD centers for a device whose reference point sits at `device_position`."""
        return tuple(
            Vec3(device_position.x + pd.offset.x,
                 device_position.y + pd.offset.y,
                 device_position.z + pd.offset.z)
            for pd in self.pds
        )


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    path: str      # dotted field path, e.g. "leds[0].half_angle_deg"
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.severity}: {self.path}: {self.message}"


def lambertian_order_from_half_angle(half_angle_deg: float) -> float:
    """Directivity exponent for a given semi-angle at half power (0 < angle < 90)."""
    return math.log(2.0) / -math.log(math.cos(math.radians(half_angle_deg)))


def half_angle_from_lambertian_order(order: float) -> float:
    """Inverse of :func:`lambertian_order_from_half_angle`."""
    return math.degrees(math.acos(2.0 ** (-1.0 / order)))


def default_led_positions() -> list[Vec3]:
    """Canonical four-LED ceiling layout (cm): corners of a 100 cm square at z=300."""
    return [
        Vec3(50.0, 50.0, 300.0),
        Vec3(50.0, -50.0, 300.0),
        Vec3(-50.0, 50.0, 300.0),
        Vec3(-50.0, -50.0, 300.0),
    ]


# ---------------------------------------------------------------------------
# parsing

_TOP_KEYS = {"room", "leds", "pds", "dimming", "modulation", "pilots", "snr_db", "rician", "seed"}


def _check_keys(mapping: Mapping[str, Any], required: set[str], optional: set[str], path: str) -> None:
    if not isinstance(mapping, Mapping):
        raise SchemaError(f"{path}: expected an object")
    keys = set(mapping)
    missing = required - keys
    extra = keys - required - optional
    if missing:
        raise SchemaError(f"{path}: missing field(s) {sorted(missing)}")
    if extra:
        raise SchemaError(f"{path}: unknown field(s) {sorted(extra)}")


def _as_float(value: Any, path: str, *, allow_inf: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if allow_inf and value == "inf":
            return math.inf
        raise SchemaError(f"{path}: expected a number, got {value!r}")
    out = float(value)
    if math.isnan(out) or (math.isinf(out) and not allow_inf):
        raise SchemaError(f"{path}: expected a finite number")
    return out


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_vec3(value: Any, path: str) -> Vec3:
    if not isinstance(value, Sequence) or isinstance(value, (str, bytes)) or len(value) != 3:
        raise SchemaError(f"{path}: expected [x, y, z]")
    return Vec3(*(_as_float(v, f"{path}[{i}]") for i, v in enumerate(value)))


def _parse_led(doc: Mapping[str, Any], path: str) -> LedConfig:
    _check_keys(doc, {"position_cm", "transmit_power_w"},
                {"half_angle_deg", "lambertian_order"}, path)
    pos = _as_vec3(doc["position_cm"], f"{path}.position_cm")
    power = _as_float(doc["transmit_power_w"], f"{path}.transmit_power_w")
    half = doc.get("half_angle_deg")
    order = doc.get("lambertian_order")
    if half is None and order is None:
        raise SchemaError(f"{path}: need half_angle_deg or lambertian_order")
    if half is not None:
        half = _as_float(half, f"{path}.half_angle_deg")
    if order is not None:
        order = _as_float(order, f"{path}.lambertian_order")
    # fill in whichever of the pair was omitted; consistency of a supplied pair
    # is checked by validate_scenario
    if half is None:
        if order <= 0:
            raise SchemaError(f"{path}.lambertian_order: must be positive")
        half = half_angle_from_lambertian_order(order)
    elif order is None:
        if not 0.0 < half < 90.0:
            raise SchemaError(f"{path}.half_angle_deg: must be in (0, 90)")
        order = lambertian_order_from_half_angle(half)
    return LedConfig(pos, power, half, order)


def _parse_pd(doc: Mapping[str, Any], path: str) -> PdConfig:
    _check_keys(doc, {"offset_cm", "area_cm2", "fov_half_angle_deg"},
                {"optical_gain_factor"}, path)
    return PdConfig(
        offset=_as_vec3(doc["offset_cm"], f"{path}.offset_cm"),
        area_cm2=_as_float(doc["area_cm2"], f"{path}.area_cm2"),
        fov_half_angle_deg=_as_float(doc["fov_half_angle_deg"], f"{path}.fov_half_angle_deg"),
        optical_gain_factor=_as_float(doc.get("optical_gain_factor", 1.0),
                                      f"{path}.optical_gain_factor"),
    )


def load_scenario(document: str | Mapping[str, Any]) -> ScenarioConfig:
    """Parse and validate a scenario document (JSON text or parsed mapping).

    Raises SchemaError for structural problems and ValidationError for
    invariant violations; on success every derived quantity (for instance the
    Lambertian order from the half angle) has been filled in.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    _check_keys(document, _TOP_KEYS, set(), "scenario")

    room_doc = document["room"]
    _check_keys(room_doc, {"dims_cm", "wall_reflectivity", "grid_resolution_cm",
                           "height_grid_resolution_cm"}, set(), "room")
    room = RoomConfig(
        dims=_as_vec3(room_doc["dims_cm"], "room.dims_cm"),
        wall_reflectivity=_as_float(room_doc["wall_reflectivity"], "room.wall_reflectivity"),
        grid_resolution_cm=_as_float(room_doc["grid_resolution_cm"], "room.grid_resolution_cm"),
        height_grid_resolution_cm=_as_float(room_doc["height_grid_resolution_cm"],
                                            "room.height_grid_resolution_cm"),
    )

    leds_doc = document["leds"]
    if not isinstance(leds_doc, Sequence) or isinstance(leds_doc, (str, bytes)):
        raise SchemaError("leds: expected a list")
    leds = tuple(_parse_led(d, f"leds[{i}]") for i, d in enumerate(leds_doc))

    pds_doc = document["pds"]
    _check_keys(pds_doc, {"separation_cm", "elements"}, set(), "pds")
    separation = _as_float(pds_doc["separation_cm"], "pds.separation_cm")
    elements = pds_doc["elements"]
    if not isinstance(elements, Sequence) or isinstance(elements, (str, bytes)):
        raise SchemaError("pds.elements: expected a list")
    pds = tuple(_parse_pd(d, f"pds.elements[{i}]") for i, d in enumerate(elements))

    dim_doc = document["dimming"]
    _check_keys(dim_doc, {"psi_dim", "kappa", "rho_min"}, set(), "dimming")
    psi_raw = dim_doc["psi_dim"]
    if not isinstance(psi_raw, Sequence) or isinstance(psi_raw, (str, bytes)):
        raise SchemaError("dimming.psi_dim: expected a matrix (list of rows)")
    psi_rows = []
    for i, row in enumerate(psi_raw):
        if not isinstance(row, Sequence) or isinstance(row, (str, bytes)):
            raise SchemaError(f"dimming.psi_dim[{i}]: expected a list")
        psi_rows.append(tuple(_as_int(v, f"dimming.psi_dim[{i}][{j}]") for j, v in enumerate(row)))
    kappa_raw = dim_doc["kappa"]
    if not isinstance(kappa_raw, Sequence) or isinstance(kappa_raw, (str, bytes)):
        raise SchemaError("dimming.kappa: expected a list")
    kappa = tuple(_as_float(v, f"dimming.kappa[{i}]") for i, v in enumerate(kappa_raw))

    mod_doc = document["modulation"]
    _check_keys(mod_doc, {"pam_order", "amplitude", "v_dc"}, set(), "modulation")
    modulation = ModulationConfig(
        pam_order=_as_int(mod_doc["pam_order"], "modulation.pam_order"),
        amplitude=_as_float(mod_doc["amplitude"], "modulation.amplitude"),
        v_dc=_as_float(mod_doc["v_dc"], "modulation.v_dc"),
    )
    dimming = DimmingPlan(
        psi_dim=tuple(psi_rows),
        kappa=kappa,
        v_dc=modulation.v_dc,
        rho_min=_as_float(dim_doc["rho_min"], "dimming.rho_min"),
    )

    n_pilots = _as_int(document["pilots"], "pilots")

    snr_raw = document["snr_db"]
    if not isinstance(snr_raw, Sequence) or isinstance(snr_raw, (str, bytes)):
        raise SchemaError("snr_db: expected a list")
    snr_db = tuple(_as_float(v, f"snr_db[{i}]", allow_inf=True) for i, v in enumerate(snr_raw))

    ric_doc = document["rician"]
    _check_keys(ric_doc, {"mode"}, {"k_factor", "segment_size_cm"}, "rician")
    mode = ric_doc["mode"]
    if mode not in ("fixed", "geometric"):
        raise SchemaError("rician.mode: expected 'fixed' or 'geometric'")
    k_factor = ric_doc.get("k_factor")
    if k_factor is not None:
        k_factor = _as_float(k_factor, "rician.k_factor", allow_inf=True)
    segment = ric_doc.get("segment_size_cm")
    if segment is not None:
        segment = _as_float(segment, "rician.segment_size_cm")
    rician = RicianConfig(mode=mode, k_factor=k_factor, segment_size_cm=segment)

    seed = _as_int(document["seed"], "seed")

    cfg = ScenarioConfig(room=room, leds=leds, pds=pds, pd_separation_cm=separation,
                         dimming=dimming, modulation=modulation, n_pilots=n_pilots,
                         snr_db_list=snr_db, rician=rician, seed=seed)
    problems = [d for d in validate_scenario(cfg) if d.severity == "error"]
    if problems:
        raise ValidationError("; ".join(f"{d.path}: {d.message}" for d in problems))
    return cfg


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Inverse of load_scenario: load(scenario_to_dict(cfg)) == cfg."""

    def enc(v: float):
        return "inf" if v == math.inf else v

    return {
        "room": {
            "dims_cm": list(cfg.room.dims.as_tuple()),
            "wall_reflectivity": cfg.room.wall_reflectivity,
            "grid_resolution_cm": cfg.room.grid_resolution_cm,
            "height_grid_resolution_cm": cfg.room.height_grid_resolution_cm,
        },
        "leds": [
            {
                "position_cm": list(led.position.as_tuple()),
                "transmit_power_w": led.transmit_power_w,
                "half_angle_deg": led.half_angle_deg,
                "lambertian_order": led.lambertian_order,
            }
            for led in cfg.leds
        ],
        "pds": {
            "separation_cm": cfg.pd_separation_cm,
            "elements": [
                {
                    "offset_cm": list(pd.offset.as_tuple()),
                    "area_cm2": pd.area_cm2,
                    "fov_half_angle_deg": pd.fov_half_angle_deg,
                    "optical_gain_factor": pd.optical_gain_factor,
                }
                for pd in cfg.pds
            ],
        },
        "dimming": {
            "psi_dim": [list(row) for row in cfg.dimming.psi_dim],
            "kappa": list(cfg.dimming.kappa),
            "rho_min": cfg.dimming.rho_min,
        },
        "modulation": {
            "pam_order": cfg.modulation.pam_order,
            "amplitude": cfg.modulation.amplitude,
            "v_dc": cfg.modulation.v_dc,
        },
        "pilots": cfg.n_pilots,
        "snr_db": [enc(v) for v in cfg.snr_db_list],
        "rician": {
            "mode": cfg.rician.mode,
            **({"k_factor": enc(cfg.rician.k_factor)} if cfg.rician.k_factor is not None else {}),
            **({"segment_size_cm": cfg.rician.segment_size_cm}
               if cfg.rician.segment_size_cm is not None else {}),
        },
        "seed": cfg.seed,
    }


def scenario_to_json(cfg: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(cfg), indent=2)


# ---------------------------------------------------------------------------
# validation

def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _rel_diff(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def validate_scenario(cfg: ScenarioConfig) -> list[Diagnostic]:
    """Check every configuration invariant; one diagnostic per violation."""
    out: list[Diagnostic] = []

    def err(path: str, message: str) -> None:
        out.append(Diagnostic("error", path, message))

    room = cfg.room
    if not room.dims.is_finite() or min(room.dims.as_tuple()) <= 0:
        err("room.dims_cm", "all room dimensions must be positive and finite")
    else:
        if not 0.0 < room.grid_resolution_cm <= min(room.dims.x, room.dims.y):
            err("room.grid_resolution_cm", "must be in (0, min(L, W)]")
        if not 0.0 < room.height_grid_resolution_cm <= room.dims.z:
            err("room.height_grid_resolution_cm", "must be in (0, H]")
    if not 0.0 <= room.wall_reflectivity <= 1.0:
        err("room.wall_reflectivity", "must be in [0, 1]")

    n_t = cfg.n_leds
    if n_t < 2 or not _is_power_of_two(n_t):
        err("leds", f"need a power-of-two LED count >= 2 (got {n_t})")
    for i, led in enumerate(cfg.leds):
        p = f"leds[{i}]"
        if not led.position.is_finite():
            err(f"{p}.position_cm", "coordinates must be finite")
        elif room.dims.is_finite():
            half_l, half_w = room.dims.x / 2.0, room.dims.y / 2.0
            if abs(led.position.x) > half_l or abs(led.position.y) > half_w \
                    or not 0.0 <= led.position.z <= room.dims.z:
                err(f"{p}.position_cm", "LED outside the room volume")
        if not led.transmit_power_w > 0:
            err(f"{p}.transmit_power_w", "must be positive")
        if not 0.0 < led.half_angle_deg < 90.0:
            err(f"{p}.half_angle_deg", "must be in (0, 90)")
        elif led.lambertian_order <= 0 or not math.isfinite(led.lambertian_order):
            err(f"{p}.lambertian_order", "must be positive and finite")
        else:
            derived = lambertian_order_from_half_angle(led.half_angle_deg)
            if _rel_diff(led.lambertian_order, derived) > 1e-6:
                err(f"{p}.lambertian_order",
                    f"inconsistent with half_angle_deg={led.half_angle_deg:g} "
                    f"(derived order {derived:.6g}, got {led.lambertian_order:g})")

    if cfg.n_pds != 2:
        err("pds.elements", f"exactly two photodiodes are modeled (got {cfg.n_pds})")
    for i, pd in enumerate(cfg.pds):
        p = f"pds.elements[{i}]"
        if not pd.offset.is_finite():
            err(f"{p}.offset_cm", "offset must be finite")
        if not pd.area_cm2 > 0:
            err(f"{p}.area_cm2", "must be positive")
        if not 0.0 < pd.fov_half_angle_deg <= 90.0:
            err(f"{p}.fov_half_angle_deg", "must be in (0, 90]")
        if not pd.optical_gain_factor >= 1.0:
            err(f"{p}.optical_gain_factor", "must be >= 1 (use exactly 1 to disable)")
    if not cfg.pd_separation_cm > 0:
        err("pds.separation_cm", "must be positive")
    elif cfg.n_pds == 2:
        a, b = cfg.pds[0].offset, cfg.pds[1].offset
        dist = math.dist(a.as_tuple(), b.as_tuple())
        if _rel_diff(dist, cfg.pd_separation_cm) > 1e-6:
            err("pds.separation_cm",
                f"does not match the PD offset distance ({dist:.6g} cm)")

    mod = cfg.modulation
    if mod.pam_order < 2 or not _is_power_of_two(mod.pam_order):
        err("modulation.pam_order", "M must be a power of two >= 2")
    if not mod.amplitude > 0:
        err("modulation.amplitude", "must be positive")
    if mod.v_dc < 0 or not math.isfinite(mod.v_dc):
        err("modulation.v_dc", "must be non-negative and finite")

    dim = cfg.dimming
    n_dim = dim.n_zones
    if n_dim < 1:
        err("dimming.kappa", "need at least one zone")
    if len(dim.psi_dim) != n_t:
        err("dimming.psi_dim", f"need one row per LED ({n_t})")
    else:
        for i, row in enumerate(dim.psi_dim):
            if len(row) != n_dim:
                err(f"dimming.psi_dim[{i}]", f"row length must equal the zone count ({n_dim})")
            elif any(v not in (0, 1) for v in row) or sum(row) != 1:
                err(f"dimming.psi_dim[{i}]", "each LED belongs to exactly one zone (one 1 per row)")
    if not 0.0 < dim.rho_min <= 1.0:
        err("dimming.rho_min", "must be in (0, 1]")
    rows_ok = len(dim.psi_dim) == n_t and all(len(r) == n_dim for r in dim.psi_dim)
    if rows_ok and n_dim >= 1:
        rho = [sum(r * k for r, k in zip(row, dim.kappa)) for row in dim.psi_dim]
        for i, value in enumerate(rho):
            if not dim.rho_min <= value <= 1.0:
                err("dimming.kappa",
                    f"rho[{i}] = {value:g} outside [rho_min, 1] = [{dim.rho_min:g}, 1]")
        # the most negative PAM level must not drive any LED below zero
        if mod.amplitude > 0 and mod.pam_order >= 2:
            needed = mod.amplitude * (mod.pam_order - 1)
            if mod.v_dc * dim.rho_min < needed - 1e-12:
                err("modulation.v_dc",
                    f"non-negativity violated: v_dc*rho_min = {mod.v_dc * dim.rho_min:g} "
                    f"< A*(M-1) = {needed:g}")
            for i, (led, r) in enumerate(zip(cfg.leds, rho)):
                peak = needed + mod.v_dc * r
                if peak > led.transmit_power_w + 1e-12:
                    err(f"leds[{i}].transmit_power_w",
                        f"peak intensity {peak:g} exceeds transmit power {led.transmit_power_w:g}")
    if cfg.n_pds and n_dim > cfg.n_pds:
        err("dimming.kappa",
            f"zone count {n_dim} exceeds the receive branch count {cfg.n_pds} "
            "(dimming solve would be rank deficient)")

    if cfg.n_pilots <= 0 or (n_t >= 1 and cfg.n_pilots % (2 * n_t) != 0):
        err("pilots", f"pilot count must be a positive multiple of 2*N_t = {2 * n_t}")

    if not cfg.snr_db_list:
        err("snr_db", "need at least one SNR point")
    for i, v in enumerate(cfg.snr_db_list):
        if math.isnan(v) or v == -math.inf:
            err(f"snr_db[{i}]", "must be a real value or +inf")

    ric = cfg.rician
    if ric.mode == "fixed":
        if ric.k_factor is None or ric.k_factor < 0:
            err("rician.k_factor", "fixed mode needs k_factor >= 0 (inf for LOS only)")
    elif ric.mode == "geometric":
        if ric.segment_size_cm is None or not ric.segment_size_cm > 0:
            err("rician.segment_size_cm", "geometric mode needs a positive segment size")
    else:
        err("rician.mode", "expected 'fixed' or 'geometric'")

    if not 0 <= cfg.seed < 2 ** 64:
        err("seed", "must be a 64-bit unsigned integer")

    return out


def with_rician(cfg: ScenarioConfig, k_factor: float) -> ScenarioConfig:
    """Copy of `cfg` with a fixed Rician K factor (test/sweep convenience)."""
    return replace(cfg, rician=RicianConfig(mode="fixed", k_factor=k_factor))
