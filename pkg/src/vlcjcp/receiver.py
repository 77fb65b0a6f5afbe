"""Receive-side processing: pilot-aided least-squares joint estimation of the
channel matrix and dimming coefficients, DC bias removal, and joint maximum
likelihood detection of (PAM level, active LED).

Estimation runs in two stages.  Stage 1 treats each receive branch
independently: with bipolar pilots (+a then -a per LED) the per-LED gains come
from half-differences of pilot pairs and the composite bias c = H psi kappa
from the slot mean, both closed-form.  Stage 2 extracts kappa from c_hat using
the estimated channel.  A one-shot solver with the true channel inside the
regressor is kept as a test oracle (`ls_joint_estimate_known_h`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChannelError, RankError, ScheduleError
from .modem import PamConstellation

__all__ = [
    "JointEstimate",
    "DetectionResult",
    "ls_joint_estimate",
    "ls_joint_estimate_known_h",
    "remove_dc_bias",
    "ml_detect",
    "ml_detect_batch",
    "sm_decode_bits",
]

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class JointEstimate:
    h_hat: np.ndarray        # N_r x N_t channel estimate
    kappa_hat: np.ndarray    # per-zone dimming estimate
    rho_hat: np.ndarray      # psi_dim @ kappa_hat
    c_hat: np.ndarray        # composite bias estimate per receive branch
    residual_norm: float     # || c_hat - H_hat psi kappa_hat ||


def _schedule_arrays(schedule):
    led = np.array([s[0] for s in schedule], dtype=np.int64)
    amp = np.array([s[1] for s in schedule], dtype=float)
    return led, amp


def _check_bipolar_complete(led: np.ndarray, amp: np.ndarray, n_leds: int) -> float:
    """Validate the bipolar LED-complete structure, return the pilot magnitude."""
    mags = np.unique(np.abs(amp))
    if mags.size != 1 or mags[0] <= 0:
        raise ScheduleError("pilot amplitudes must share one nonzero magnitude")
    scale = float(mags[0])
    for t in range(n_leds):
        sel = amp[led == t]
        n_pos = int(np.sum(sel > 0))
        n_neg = int(np.sum(sel < 0))
        if n_pos == 0 or n_pos != n_neg:
            raise ScheduleError(
                f"LED {t} needs equally many +/- pilot slots (got {n_pos}/{n_neg})")
    return scale


def ls_joint_estimate(pilot_obs, schedule, psi_dim, v_dc: float) -> JointEstimate:
    """Two-stage LS estimate of (H, kappa, rho) from pilot observations.

    Args:
        pilot_obs: (n_P, N_r) received pilot vectors.
        schedule: (led_index, amplitude) slots, bipolar and LED-complete.
        psi_dim: (N_t, n_dim) zone assignment matrix.
        v_dc: DC bias applied at the transmitter.

    Raises ScheduleError for a degenerate schedule and RankError when the
    stage-2 system cannot identify all zones (n_dim > N_r or a numerically
    rank-deficient H_hat psi_dim).
    """
    y = np.asarray(pilot_obs, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    led, amp = _schedule_arrays(schedule)
    if y.shape[0] != led.size:
        raise ScheduleError(
            f"{led.size} schedule slots but {y.shape[0]} pilot observations")
    psi = np.asarray(psi_dim, dtype=float)
    n_t, n_dim = psi.shape
    n_r = y.shape[1]
    scale = _check_bipolar_complete(led, amp, n_t)

    h_hat = np.empty((n_r, n_t))
    for t in range(n_t):
        pos = (led == t) & (amp > 0)
        neg = (led == t) & (amp < 0)
        h_hat[:, t] = (y[pos].mean(axis=0) - y[neg].mean(axis=0)) / (2.0 * scale)

    if v_dc == 0.0:
        # no bias was transmitted: c and kappa are unobservable and irrelevant
        zeros = np.zeros(n_dim)
        return JointEstimate(h_hat=h_hat, kappa_hat=zeros, rho_hat=psi @ zeros,
                             c_hat=np.zeros(n_r), residual_norm=0.0)

    # the schedule is zero mean, so averaging all slots isolates v_dc * c
    c_hat = y.mean(axis=0) / v_dc

    if n_dim > n_r:
        raise RankError(f"{n_dim} dimming zones but only {n_r} receive branches")
    design = h_hat @ psi  # N_r x n_dim
    if np.linalg.matrix_rank(design) < n_dim:
        raise RankError("H_hat psi_dim is rank deficient, zones not identifiable")
    gram = design.T @ design
    if np.linalg.cond(gram) < _COND_LIMIT:
        kappa_hat = np.linalg.solve(gram, design.T @ c_hat)
    else:
        kappa_hat = np.linalg.pinv(design) @ c_hat
    rho_hat = psi @ kappa_hat
    residual = float(np.linalg.norm(c_hat - design @ kappa_hat))
    return JointEstimate(h_hat=h_hat, kappa_hat=kappa_hat, rho_hat=rho_hat,
                         c_hat=c_hat, residual_norm=residual)


def ls_joint_estimate_known_h(pilot_obs, schedule, psi_dim, v_dc: float,
                              h_true) -> JointEstimate:
    """One-shot LS over xi = [vec(H); kappa] with the true H inside the regressor.

    Test oracle only: it mirrors the stacked-regressor formulation that needs
    prior channel knowledge, which the two-stage estimator avoids.
    """
    y = np.asarray(pilot_obs, dtype=float)
    led, amp = _schedule_arrays(schedule)
    psi = np.asarray(psi_dim, dtype=float)
    h_true = np.asarray(h_true, dtype=float)
    n_r, n_t = h_true.shape
    n_dim = psi.shape[1]
    bias_block = v_dc * (h_true @ psi)  # N_r x n_dim, constant across slots
    rows = []
    rhs = []
    for p in range(led.size):
        x_p = np.zeros(n_t)
        x_p[led[p]] = amp[p]
        for r in range(n_r):
            row = np.zeros(n_r * n_t + n_dim)
            row[r * n_t: (r + 1) * n_t] = x_p
            row[n_r * n_t:] = bias_block[r]
            rows.append(row)
            rhs.append(y[p, r])
    xi, *_ = np.linalg.lstsq(np.asarray(rows), np.asarray(rhs), rcond=None)
    h_hat = xi[: n_r * n_t].reshape(n_r, n_t)
    kappa_hat = xi[n_r * n_t:]
    rho_hat = psi @ kappa_hat
    c_hat = h_hat @ rho_hat
    residual = float(np.linalg.norm(c_hat - (h_hat @ psi) @ kappa_hat))
    return JointEstimate(h_hat=h_hat, kappa_hat=kappa_hat, rho_hat=rho_hat,
                         c_hat=c_hat, residual_norm=residual)


def remove_dc_bias(y, estimate: JointEstimate, v_dc: float) -> np.ndarray:
    """Subtract the estimated DC term v_dc * H_hat rho_hat from observations.

    Accepts a single N_r vector or an (n, N_r) batch.
    """
    y = np.asarray(y, dtype=float)
    bias = v_dc * (estimate.h_hat @ estimate.rho_hat)
    return y - bias


@dataclass(frozen=True)
class DetectionResult:
    pam_index: int
    led_index: int
    metric: float  # minimized squared Euclidean distance


def ml_detect_batch(y, h_hat, constellation: PamConstellation):
    """Joint ML detection for a batch of debiased observations.

    Args:
        y: (n, N_r) debiased receive vectors.
        h_hat: (N_r, N_t) channel estimate with at least one nonzero column.

    Returns (pam_index, led_index, metric) arrays; ties resolve to the
    lexicographically smallest (led_index, pam_index).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    h = np.asarray(h_hat, dtype=float)
    if not np.any(h != 0.0):
        raise DegenerateChannelError("all-zero channel estimate")
    levels = np.asarray(constellation.levels)
    # hypotheses ordered LED-major so the first argmin is the lexicographic winner
    candidates = h.T[:, None, :] * levels[None, :, None]      # (N_t, M, N_r)
    flat = candidates.reshape(-1, h.shape[0])                 # (N_t*M, N_r)
    diff = y[:, None, :] - flat[None, :, :]
    metrics = np.einsum("nkr,nkr->nk", diff, diff)
    best = np.argmin(metrics, axis=1)
    led = best // constellation.order
    pam = best % constellation.order
    return pam.astype(np.int64), led.astype(np.int64), metrics[np.arange(y.shape[0]), best]


def ml_detect(y, h_hat, constellation: PamConstellation) -> DetectionResult:
    """Single-vector exhaustive ML detection over all M * N_t hypotheses."""
    pam, led, metric = ml_detect_batch(np.asarray(y, dtype=float)[None, :], h_hat, constellation)
    return DetectionResult(pam_index=int(pam[0]), led_index=int(led[0]),
                           metric=float(metric[0]))


def sm_decode_bits(results, n_leds: int, order: int) -> np.ndarray:
    """Map detection results back to bits; exact inverse of the SM encoder."""
    from .modem import bits_from_sm_indices

    if not results:
        return np.zeros(0, dtype=np.uint8)
    led = np.array([r.led_index for r in results], dtype=np.int64)
    pam = np.array([r.pam_index for r in results], dtype=np.int64)
    return bits_from_sm_indices(led, pam, n_leds, order)
