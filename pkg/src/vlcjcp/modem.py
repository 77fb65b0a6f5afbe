"""Transmit-side primitives: PAM constellation, spatial-modulation bit mapping,
DC bias / zone dimming, pilot scheduling, and the frame codec with CRC-16.

Bit conventions (fixed for interoperability): groups are consumed MSB first,
LED index bits before PAM bits, both in natural binary.  Gray mapping would be
a possible extension but is not implemented.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CrcError,
    DomainError,
    FramingError,
    LengthError,
    NonNegativityError,
)
from .scene import DimmingPlan, ScenarioConfig

__all__ = [
    "PamConstellation",
    "SmSymbol",
    "SmFrame",
    "START_MARKER",
    "END_MARKER",
    "pam_constellation",
    "mean_symbol_energy",
    "sm_bits_per_symbol",
    "sm_encode_bits",
    "sm_indices_from_bits",
    "bits_from_sm_indices",
    "apply_dimming_bias",
    "pilot_schedule",
    "crc16",
    "bytes_to_bits",
    "build_frame",
    "parse_frame",
    "frame_to_bits",
    "frame_from_bits",
]

START_MARKER = 0xA5
END_MARKER = 0x5A


@dataclass(frozen=True)
class PamConstellation:
    order: int                  # M
    scale: float                # half the level spacing
    levels: tuple[float, ...]   # scale * (2m - 1 - order), m = 1..order


@dataclass(frozen=True)
class SmSymbol:
    led_index: int
    pam_index: int
    amplitude: float


@dataclass(frozen=True)
class SmFrame:
    start_marker: int
    pilot_block: tuple[tuple[int, float], ...]  # (led_index, amplitude) slots
    payload: tuple[SmSymbol, ...]
    crc16: int                                  # over the payload bits
    end_marker: int


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def pam_constellation(order: int, scale: float) -> PamConstellation:
    """Zero-mean M-PAM levels scale*(2m-1-M); adjacent levels differ by 2*scale."""
    if order < 2 or not _is_power_of_two(order):
        raise DomainError(f"PAM order must be a power of two >= 2, got {order}")
    if not scale > 0:
        raise DomainError("PAM scale must be positive")
    levels = tuple(scale * (2 * m - 1 - order) for m in range(1, order + 1))
    return PamConstellation(order=order, scale=scale, levels=levels)


def mean_symbol_energy(order: int, scale: float) -> float:
    """Mean squared PAM level, scale^2 (M^2 - 1) / 3."""
    return scale * scale * (order * order - 1) / 3.0


def sm_bits_per_symbol(n_leds: int, order: int) -> int:
    return int(np.log2(n_leds)) + int(np.log2(order))


def sm_indices_from_bits(bits, n_leds: int, order: int):
    """Vectorized bit-group mapping -> (led_index, pam_index) arrays."""
    bits = np.asarray(bits, dtype=np.uint8)
    led_bits = int(np.log2(n_leds))
    pam_bits = int(np.log2(order))
    eta = led_bits + pam_bits
    if bits.ndim != 1 or bits.size % eta != 0:
        raise LengthError(f"bit count {bits.size} not a multiple of {eta}")
    groups = bits.reshape(-1, eta)
    led_w = 1 << np.arange(led_bits - 1, -1, -1)
    pam_w = 1 << np.arange(pam_bits - 1, -1, -1)
    led_idx = groups[:, :led_bits] @ led_w
    pam_idx = groups[:, led_bits:] @ pam_w
    return led_idx.astype(np.int64), pam_idx.astype(np.int64)


def bits_from_sm_indices(led_idx, pam_idx, n_leds: int, order: int) -> np.ndarray:
    """Exact inverse of :func:`sm_indices_from_bits`."""
    led_idx = np.asarray(led_idx, dtype=np.int64)
    pam_idx = np.asarray(pam_idx, dtype=np.int64)
    led_bits = int(np.log2(n_leds))
    pam_bits = int(np.log2(order))
    n = led_idx.size
    out = np.empty((n, led_bits + pam_bits), dtype=np.uint8)
    for b in range(led_bits):
        out[:, b] = (led_idx >> (led_bits - 1 - b)) & 1
    for b in range(pam_bits):
        out[:, led_bits + b] = (pam_idx >> (pam_bits - 1 - b)) & 1
    return out.reshape(-1)


def sm_encode_bits(bits, n_leds: int, constellation: PamConstellation) -> list[SmSymbol]:
    """Map a bit sequence to SM symbols; one LED active per signaling period."""
    led_idx, pam_idx = sm_indices_from_bits(bits, n_leds, constellation.order)
    return [
        SmSymbol(int(j), int(i), constellation.levels[int(i)])
        for j, i in zip(led_idx, pam_idx)
    ]


def apply_dimming_bias(symbol_vector, plan: DimmingPlan) -> np.ndarray:
    """Add the per-LED DC bias v_dc * (psi_dim @ kappa) to a symbol vector.

    Raises NonNegativityError if any resulting intensity is negative, which
    indicates an invalid configuration (the scenario validator enforces
    v_dc * rho_min >= A*(M-1) up front).
    """
    x = np.asarray(symbol_vector, dtype=float)
    out = x + plan.v_dc * plan.rho()
    if np.any(out < 0):
        bad = int(np.argmin(out))
        raise NonNegativityError(
            f"transmit intensity for LED {bad} is negative ({out[bad]:g})")
    return out


def pilot_schedule(n_leds: int, scale: float, n_pilots: int) -> tuple[tuple[int, float], ...]:
    """Deterministic bipolar pilot sequence known to the receiver.

    LEDs are visited in index order, each with amplitude +scale then -scale;
    the full cycle repeats n_pilots / (2 * n_leds) times.  Bipolar amplitudes
    keep the channel gains and the dimming bias jointly identifiable.
    """
    if n_pilots <= 0 or n_pilots % (2 * n_leds) != 0:
        raise DomainError(
            f"pilot count must be a positive multiple of 2*N_t = {2 * n_leds}, got {n_pilots}")
    cycles = n_pilots // (2 * n_leds)
    slots: list[tuple[int, float]] = []
    for _ in range(cycles):
        for led in range(n_leds):
            slots.append((led, +scale))
            slots.append((led, -scale))
    return tuple(slots)


# ---------------------------------------------------------------------------
# CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, MSB first, no reflection,
# no final XOR.  Check value: ASCII "123456789" -> 0x29B1.

_CRC_POLY = 0x1021
_CRC_INIT = 0xFFFF


def _build_crc_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint16)
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ _CRC_POLY) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
        table[byte] = crc
    return table


_CRC_TABLE = _build_crc_table()


def crc16(bits) -> int:
    """CRC over a bit sequence (MSB-first); byte-aligned prefix runs table-driven."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    crc = _CRC_INIT
    n_bytes = bits.size // 8
    if n_bytes:
        data = np.packbits(bits[: n_bytes * 8])
        for byte in data.tolist():
            crc = ((crc << 8) & 0xFFFF) ^ int(_CRC_TABLE[(crc >> 8) ^ byte])
    for bit in bits[n_bytes * 8:].tolist():
        top = (crc >> 15) & 1
        crc = (crc << 1) & 0xFFFF
        if top ^ bit:
            crc ^= _CRC_POLY
    return crc


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def _int_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - b)) & 1 for b in range(width)], dtype=np.uint8)


def _bits_to_int(bits) -> int:
    out = 0
    for b in np.asarray(bits, dtype=np.uint8).tolist():
        out = (out << 1) | int(b)
    return out


# ---------------------------------------------------------------------------
# frame codec

def build_frame(payload_bits, plan: DimmingPlan, scenario: ScenarioConfig) -> SmFrame:
    """Assemble start marker | pilots | payload | CRC | end marker."""
    mod = scenario.modulation
    constellation = pam_constellation(mod.pam_order, mod.amplitude)
    payload_bits = np.asarray(payload_bits, dtype=np.uint8).reshape(-1)
    payload = tuple(sm_encode_bits(payload_bits, scenario.n_leds, constellation))
    pilots = pilot_schedule(scenario.n_leds, mod.amplitude, scenario.n_pilots)
    return SmFrame(
        start_marker=START_MARKER,
        pilot_block=pilots,
        payload=payload,
        crc16=crc16(payload_bits),
        end_marker=END_MARKER,
    )


def _payload_bits_of(frame: SmFrame, n_leds: int, order: int) -> np.ndarray:
    led = np.array([s.led_index for s in frame.payload], dtype=np.int64)
    pam = np.array([s.pam_index for s in frame.payload], dtype=np.int64)
    return bits_from_sm_indices(led, pam, n_leds, order)


def parse_frame(frame: SmFrame, scenario: ScenarioConfig) -> np.ndarray:
    """Verify markers and CRC, return the payload bits; inverse of build_frame."""
    if frame.start_marker != START_MARKER:
        raise FramingError(f"bad start marker 0x{frame.start_marker:02X}")
    if frame.end_marker != END_MARKER:
        raise FramingError(f"bad end marker 0x{frame.end_marker:02X}")
    bits = _payload_bits_of(frame, scenario.n_leds, scenario.modulation.pam_order)
    expected = crc16(bits)
    if expected != frame.crc16:
        raise CrcError(f"checksum mismatch: frame 0x{frame.crc16:04X}, payload 0x{expected:04X}")
    return bits


def frame_to_bits(frame: SmFrame, n_leds: int, order: int) -> np.ndarray:
    """Bit-exact serialization.

    Layout: [8-bit start][pilot slots: log2(N_t) index bits + 1 sign bit each]
    [payload symbol groups][16-bit CRC, big-endian][8-bit end].  Sign bit 0
    encodes +A, 1 encodes -A.
    """
    led_bits = int(np.log2(n_leds))
    chunks = [_int_to_bits(frame.start_marker, 8)]
    for led, amplitude in frame.pilot_block:
        chunks.append(_int_to_bits(led, led_bits))
        chunks.append(np.array([0 if amplitude >= 0 else 1], dtype=np.uint8))
    chunks.append(_payload_bits_of(frame, n_leds, order))
    chunks.append(_int_to_bits(frame.crc16, 16))
    chunks.append(_int_to_bits(frame.end_marker, 8))
    return np.concatenate(chunks)


def frame_from_bits(bits, scenario: ScenarioConfig) -> SmFrame:
    """Deserialize :func:`frame_to_bits` output (markers and CRC verified)."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    n_leds = scenario.n_leds
    mod = scenario.modulation
    constellation = pam_constellation(mod.pam_order, mod.amplitude)
    led_bits = int(np.log2(n_leds))
    eta = sm_bits_per_symbol(n_leds, mod.pam_order)
    pilot_bits = scenario.n_pilots * (led_bits + 1)
    overhead = 8 + pilot_bits + 16 + 8
    if bits.size < overhead or (bits.size - overhead) % eta != 0:
        raise LengthError(
            f"serialized frame length {bits.size} incompatible with "
            f"n_pilots={scenario.n_pilots}, eta={eta}")
    pos = 0
    start = _bits_to_int(bits[pos:pos + 8]); pos += 8
    pilots = []
    for _ in range(scenario.n_pilots):
        led = _bits_to_int(bits[pos:pos + led_bits]); pos += led_bits
        sign = int(bits[pos]); pos += 1
        pilots.append((led, -mod.amplitude if sign else mod.amplitude))
    n_payload_bits = bits.size - overhead
    payload_bits = bits[pos:pos + n_payload_bits]; pos += n_payload_bits
    crc = _bits_to_int(bits[pos:pos + 16]); pos += 16
    end = _bits_to_int(bits[pos:pos + 8])
    frame = SmFrame(
        start_marker=start,
        pilot_block=tuple(pilots),
        payload=tuple(sm_encode_bits(payload_bits, n_leds, constellation)),
        crc16=crc,
        end_marker=end,
    )
    parse_frame(frame, scenario)  # marker + CRC verification
    return frame
