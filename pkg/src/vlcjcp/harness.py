"""Monte Carlo experiment engine: BER sweeps, 2-D/3-D positioning-error sweeps,
spiral trajectories, and empirical CDFs, all deterministically seeded.

Seeding contract: every trial draws from an independent stream derived as
SeedSequence(scenario seed, spawn_key=(sweep kind, trial index)).  The spawn
key deliberately excludes the sweep value, receiver position, and PAM order:
trial k sees identical fading and noise draws at every point of a sweep, so
cross-SNR monotonicity and location/order comparisons are paired (common
random numbers) while trials stay mutually independent.  Aggregation is
commutative, so results do not depend on the worker count.

The SNR-to-noise mapping is calibrated once per sweep point against a
reference receiver at the room center (x = y = 0) at the height of the swept
point; the noise floor is then held fixed across receiver positions, so
off-center receivers genuinely see weaker signals rather than a rescaled
noise.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .channel import NoiseModel, link_stats, noise_variance_for_snr, sample_channel_matrix
from .errors import CollinearError, DomainError, EmptyError, InsufficientCirclesError
from .modem import pam_constellation, pilot_schedule, sm_bits_per_symbol, \
    sm_indices_from_bits, bits_from_sm_indices
from .positioning import position_2d, position_3d
from .receiver import ls_joint_estimate, ml_detect_batch, remove_dc_bias
from .scene import ScenarioConfig, Vec3

__all__ = [
    "SweepSpec",
    "MetricsRecord",
    "derive_rng",
    "run_ber_sweep",
    "run_positioning_sweep_2d",
    "run_positioning_sweep_3d",
    "spiral_trajectory",
    "empirical_cdf",
    "eval_cdf",
    "write_metrics_csv",
    "write_samples_csv",
    "write_json_report",
    "METRICS_CSV_HEADER",
]

METRICS_CSV_HEADER = ["sweep_var", "value", "metric", "mean", "ci_half_width", "trials", "seed"]

_KIND_TAG = {"ber": 0, "pos2d": 1, "pos3d": 2}
_Z95 = 1.959963984540054  # normal-approximation 95 percent quantile


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep and how hard to average at each point."""

    scenario: ScenarioConfig
    variable: str = "snr_db"
    values: tuple[float, ...] = ()
    trials_per_point: int = 1000
    bits_per_trial: int = 1_000_000
    frame_payload_symbols: int = 2000

    def __post_init__(self):
        if not self.values:
            raise DomainError("sweep needs at least one value")
        if self.trials_per_point < 1:
            raise DomainError("trials_per_point must be >= 1")


@dataclass
class MetricsRecord:
    """One aggregated measurement plus enough coordinates to replay it."""

    metric: str                      # "ber" | "mean_error_cm"
    snr_db: float
    value: float
    trials: int
    ci_half_width: float
    seed: int
    position: tuple[float, float, float] | None = None
    m_order: int | None = None
    failures: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)

    def series_label(self) -> str:
        parts = []
        if self.m_order is not None:
            parts.append(f"m={self.m_order}")
        if self.position is not None:
            x, y, z = self.position
            parts.append(f"pos=({x:g},{y:g},{z:g})")
        return f"{self.metric}[{','.join(parts)}]" if parts else self.metric


def derive_rng(seed: int, kind: str, trial: int) -> np.random.Generator:
    """Independent per-trial stream; see the module docstring for the contract."""
    key = (_KIND_TAG[kind], trial)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _map_ordered(fn: Callable[[int], object], count: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _reference_noise(scenario: ScenarioConfig, snr_db: float, height_cm: float) -> NoiseModel:
    reference = scenario.pd_positions(Vec3(0.0, 0.0, height_cm))
    return noise_variance_for_snr(link_stats(scenario, reference),
                                  scenario.modulation, snr_db)


def _pilot_observations(scenario, h, noise, rng, schedule):
    """y_p = amplitude * h[:, led] + v_dc * h @ rho + w for every pilot slot."""
    led = np.array([s[0] for s in schedule])
    amp = np.array([s[1] for s in schedule])
    bias = scenario.modulation.v_dc * (h @ scenario.dimming.rho())
    clean = amp[:, None] * h.T[led] + bias[None, :]
    w = rng.standard_normal(clean.shape) * math.sqrt(noise.sigma2_w)
    return clean + w


def _with_pam_order(scenario: ScenarioConfig, m_order: int) -> ScenarioConfig:
    if m_order == scenario.modulation.pam_order:
        return scenario
    return replace(scenario, modulation=replace(scenario.modulation, pam_order=m_order))


def run_ber_sweep(
    spec: SweepSpec,
    position: Vec3 = Vec3(-2.5, 1.5, 0.0),
    m_orders: Sequence[int] | None = None,
    threads: int = 1,
) -> list[MetricsRecord]:
    """Bit error rate per (SNR, PAM order) for a receiver at `position`.

    Full chain per frame: fresh Rician draw (block fading), pilot LS
    estimation, DC removal, joint ML detection; decoding errors are the
    measurement and never abort a point.
    """
    scenario = spec.scenario
    if m_orders is None:
        m_orders = [scenario.modulation.pam_order]
    records = []
    for snr_db in spec.values:
        for m_order in m_orders:
            scn = _with_pam_order(scenario, m_order)
            noise = _reference_noise(scn, snr_db, position.z)
            pd_positions = scn.pd_positions(position)
            constellation = pam_constellation(m_order, scn.modulation.amplitude)
            levels = np.asarray(constellation.levels)
            schedule = pilot_schedule(scn.n_leds, scn.modulation.amplitude, scn.n_pilots)
            psi = scn.dimming.psi_matrix()
            eta = sm_bits_per_symbol(scn.n_leds, m_order)
            bits_per_frame = spec.frame_payload_symbols * eta
            n_frames = max(1, math.ceil(spec.bits_per_trial / bits_per_frame))

            def one_frame(frame_idx: int, scn=scn, noise=noise, pd_positions=pd_positions,
                          levels=levels, schedule=schedule, psi=psi, eta=eta,
                          m_order=m_order, constellation=constellation):
                rng = derive_rng(scn.seed, "ber", frame_idx)
                real = sample_channel_matrix(scn, pd_positions, rng)
                obs = _pilot_observations(scn, real.h, noise, rng, schedule)
                est = ls_joint_estimate(obs, schedule, psi, scn.modulation.v_dc)
                bits = rng.integers(0, 2, spec.frame_payload_symbols * eta,
                                    dtype=np.uint8)
                led_idx, pam_idx = sm_indices_from_bits(bits, scn.n_leds, m_order)
                clean = levels[pam_idx][:, None] * real.h.T[led_idx]
                bias = scn.modulation.v_dc * (real.h @ scn.dimming.rho())
                y = clean + bias[None, :] + rng.standard_normal(clean.shape) \
                    * math.sqrt(noise.sigma2_w)
                debiased = remove_dc_bias(y, est, scn.modulation.v_dc)
                pam_hat, led_hat, _ = ml_detect_batch(debiased, est.h_hat, constellation)
                bits_hat = bits_from_sm_indices(led_hat, pam_hat, scn.n_leds, m_order)
                return int(np.sum(bits != bits_hat)), bits.size

            results = _map_ordered(one_frame, n_frames, threads)
            errors = sum(r[0] for r in results)
            total_bits = sum(r[1] for r in results)
            ber = errors / total_bits
            ci = _Z95 * math.sqrt(max(ber * (1.0 - ber), 0.0) / total_bits)
            records.append(MetricsRecord(metric="ber", snr_db=snr_db, value=ber,
                                         trials=total_bits, ci_half_width=ci,
                                         seed=scenario.seed,
                                         position=(position.x, position.y, position.z),
                                         m_order=m_order))
    return records


def _positioning_records(spec, positions, kind, trial_fn, threads, max_samples):
    scenario = spec.scenario
    records = []
    for snr_db in spec.values:
        for position in positions:
            noise = _reference_noise(scenario, snr_db, position.z)
            pd_positions = scenario.pd_positions(position)

            def one_trial(trial: int):
                rng = derive_rng(scenario.seed, kind, trial)
                return trial_fn(position, pd_positions, noise, rng)

            outcomes = _map_ordered(one_trial, spec.trials_per_point, threads)
            errors = np.array([e for e in outcomes if e is not None])
            failures = sum(1 for e in outcomes if e is None)
            if errors.size > max_samples:
                keep = np.linspace(0, errors.size - 1, max_samples).astype(int)
                samples = errors[keep]
            else:
                samples = errors
            mean = float(errors.mean()) if errors.size else math.nan
            ci = (_Z95 * float(errors.std(ddof=1)) / math.sqrt(errors.size)
                  if errors.size > 1 else 0.0)
            records.append(MetricsRecord(metric="mean_error_cm", snr_db=snr_db,
                                         value=mean, trials=spec.trials_per_point,
                                         ci_half_width=ci, seed=scenario.seed,
                                         position=(position.x, position.y, position.z),
                                         failures=failures, samples=samples))
    return records


def run_positioning_sweep_2d(
    spec: SweepSpec,
    positions: Sequence[Vec3],
    mode: str = "analytic",
    threads: int = 1,
    max_samples: int = 100_000,
) -> list[MetricsRecord]:
    """Mean 2-D positioning error per (SNR, position), PD 1 as the reference.

    Failed fixes are censored: counted in MetricsRecord.failures and excluded
    from the mean, never silently dropped.
    """
    scenario = spec.scenario
    schedule = pilot_schedule(scenario.n_leds, scenario.modulation.amplitude,
                              scenario.n_pilots)
    psi = scenario.dimming.psi_matrix()

    def trial(position, pd_positions, noise, rng):
        real = sample_channel_matrix(scenario, pd_positions, rng)
        obs = _pilot_observations(scenario, real.h, noise, rng, schedule)
        est = ls_joint_estimate(obs, schedule, psi, scenario.modulation.v_dc)
        debiased = remove_dc_bias(obs, est, scenario.modulation.v_dc)
        rss = _measure(debiased, schedule)
        try:
            fix = position_2d(rss[0], scenario, position.z, mode, noise=noise,
                              pd_index=0, truth=pd_positions[0])
        except (InsufficientCirclesError, CollinearError):
            return None
        return fix.euclidean_error_cm

    return _positioning_records(spec, positions, "pos2d", trial, threads, max_samples)


def run_positioning_sweep_3d(
    spec: SweepSpec,
    positions: Sequence[Vec3],
    mode: str = "analytic",
    threads: int = 1,
    max_samples: int = 100_000,
) -> list[MetricsRecord]:
    """Mean 3-D positioning error per (SNR, position).

    The trial error is the mean of the two PDs' Euclidean errors at the
    selected height.
    """
    scenario = spec.scenario
    schedule = pilot_schedule(scenario.n_leds, scenario.modulation.amplitude,
                              scenario.n_pilots)
    psi = scenario.dimming.psi_matrix()

    def trial(position, pd_positions, noise, rng):
        real = sample_channel_matrix(scenario, pd_positions, rng)
        obs = _pilot_observations(scenario, real.h, noise, rng, schedule)
        est = ls_joint_estimate(obs, schedule, psi, scenario.modulation.v_dc)
        debiased = remove_dc_bias(obs, est, scenario.modulation.v_dc)
        try:
            est1, est2, _ = position_3d(debiased, schedule, scenario,
                                        noise=noise, mode=mode,
                                        truths=(pd_positions[0], pd_positions[1]))
        except (InsufficientCirclesError, CollinearError):
            return None
        return 0.5 * (est1.euclidean_error_cm + est2.euclidean_error_cm)

    return _positioning_records(spec, positions, "pos3d", trial, threads, max_samples)


def _measure(debiased, schedule):
    from .positioning import measure_rss

    return measure_rss(debiased, schedule)


def spiral_trajectory(
    kind: str,
    center: tuple[float, float],
    r_start: float,
    r_end: float,
    turns: float,
    n_points: int,
    z_start: float = 0.0,
    z_end: float = 0.0,
    room=None,
) -> list[Vec3]:
    """Evaluation trajectory: radius (and height, for \"3d\") linear in t.

    p(t_k) = center + r(t_k) (cos theta_k, sin theta_k) with
    theta_k = 2 pi turns t_k and t_k = k / (n_points - 1).  Raises DomainError
    if any point falls outside `room` (a RoomConfig) when one is given.
    """
    if kind not in ("2d", "3d"):
        raise DomainError(f"unknown spiral kind {kind!r}")
    if n_points < 2:
        raise DomainError("need at least two points")
    if r_start < 0 or r_end < 0:
        raise DomainError("radii must be non-negative")
    t = np.arange(n_points) / (n_points - 1)
    radius = r_start + (r_end - r_start) * t
    theta = 2.0 * math.pi * turns * t
    z = z_start + (z_end - z_start) * t if kind == "3d" else np.full(n_points, z_start)
    xs = center[0] + radius * np.cos(theta)
    ys = center[1] + radius * np.sin(theta)
    points = [Vec3(float(x), float(y), float(zz)) for x, y, zz in zip(xs, ys, z)]
    if room is not None:
        half_l, half_w = room.dims.x / 2.0, room.dims.y / 2.0
        for k, p in enumerate(points):
            if abs(p.x) > half_l or abs(p.y) > half_w or not 0.0 <= p.z <= room.dims.z:
                raise DomainError(f"trajectory point {k} at {p.as_tuple()} leaves the room")
    return points


def empirical_cdf(samples) -> list[tuple[float, float]]:
    """Right-continuous step function F(x) = #{samples <= x} / n."""
    values = np.asarray(samples, dtype=float).reshape(-1)
    if values.size == 0:
        raise EmptyError("empirical CDF of an empty sample set")
    unique, counts = np.unique(np.sort(values), return_counts=True)
    cum = np.cumsum(counts) / values.size
    return list(zip(unique.tolist(), cum.tolist()))


def eval_cdf(cdf: list[tuple[float, float]], x: float) -> float:
    prob = 0.0
    for value, p in cdf:
        if value <= x:
            prob = p
        else:
            break
    return prob


# ---------------------------------------------------------------------------
# structured output

def write_metrics_csv(records: Sequence[MetricsRecord], path) -> None:
    """Pinned layout: sweep_var,value,metric,mean,ci_half_width,trials,seed.

    Series coordinates (position, PAM order) ride inside the metric label so
    one file can hold a whole sweep.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_CSV_HEADER)
        for rec in records:
            writer.writerow([
                "snr_db", f"{rec.snr_db:g}", rec.series_label(),
                f"{rec.value:.10e}", f"{rec.ci_half_width:.6e}",
                rec.trials, rec.seed,
            ])


def write_samples_csv(record: MetricsRecord, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["error_cm"])
        for value in (record.samples if record.samples is not None else []):
            writer.writerow([f"{value:.10e}"])


def write_json_report(records: Sequence[MetricsRecord], path, meta: dict | None = None) -> None:
    payload = {
        "meta": meta or {},
        "records": [
            {
                "metric": rec.metric,
                "series": rec.series_label(),
                "snr_db": rec.snr_db,
                "position": rec.position,
                "m_order": rec.m_order,
                "mean": rec.value,
                "ci_half_width": rec.ci_half_width,
                "trials": rec.trials,
                "failures": rec.failures,
                "seed": rec.seed,
            }
            for rec in records
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)
        fh.write("\n")
