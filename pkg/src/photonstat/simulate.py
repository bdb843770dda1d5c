"""Stochastic time-tag simulation of an emitter behind an HBT beamsplitter.

The emitter trajectory is an exact-jump (Gillespie) realization of the
level-system Markov chain: exponential waiting times from the total outgoing
rate, categorical choice of transition, one photon per radiative jump.
Photons are routed 50/50 to channels A and B, uncorrelated background
photons are added, and each channel then passes through the detector model
in a fixed, documented order:

    efficiency thinning -> Gaussian timing jitter -> re-sort ->
    dead-time pruning -> dark-count injection -> final dead-time sweep

The final sweep covers injected dark counts so the output always satisfies
the stream invariants (strictly increasing, same-channel spacing >=
dead time).  Physical detectors interleave these effects; the fixed order
makes outputs reproducible and testable.

Randomness comes from numpy's PCG64 via ``np.random.default_rng``.  One
SeedSequence is spawned per consumer in a fixed layout (trajectory, photon
routing, background, detector A, detector B), so runs are bit-identical for
a given (seed, configuration).

The pump transition is the reverse of the radiative pair (radiative target
-> radiative source); CW excitation overrides that matrix entry, pulsed
excitation gates it with rectangular windows.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np
from numba import njit

from .emitter import LevelSystem
from .streams import TimeTagStream

__all__ = [
    "DetectorModel",
    "CWExcitation",
    "PulsedExcitation",
    "SimConfig",
    "simulate",
    "run_trajectory",
]

MAX_DURATION_S = 1e6  # beyond this the picosecond int64 axis overflows usefully

# Placeholder avalanche-photodiode figures; dead time and jitter are typical
# vendor values, not measured ones.
APD_DEAD_TIME_PS = 25_000.0
APD_JITTER_SIGMA_PS = 350.0


@dataclass(frozen=True)
class DetectorModel:
    """Single-photon detector imperfections.  Defaults are an ideal detector."""

    efficiency: float = 1.0
    dead_time_ps: float = 0.0
    jitter_sigma_ps: float = 0.0
    dark_rate: float = 0.0  # counts/s

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")
        if self.dead_time_ps < 0 or self.jitter_sigma_ps < 0 or self.dark_rate < 0:
            raise ValueError("dead_time_ps, jitter_sigma_ps, dark_rate must be >= 0")

    @classmethod
    def typical_apd(cls, efficiency: float = 0.65, dark_rate: float = 100.0):
        """A plausible avalanche photodiode (placeholder figures)."""
        return cls(
            efficiency=efficiency,
            dead_time_ps=APD_DEAD_TIME_PS,
            jitter_sigma_ps=APD_JITTER_SIGMA_PS,
            dark_rate=dark_rate,
        )


@dataclass(frozen=True)
class CWExcitation:
    """Continuous pumping.  ``pump_rate`` (1/s) overrides the matrix entry for
    the pump transition; None leaves the system's own rate in place."""

    pump_rate: float | None = None

    def __post_init__(self):
        if self.pump_rate is not None and (
            not np.isfinite(self.pump_rate) or self.pump_rate < 0
        ):
            raise ValueError("pump_rate must be finite and >= 0")


@dataclass(frozen=True)
class PulsedExcitation:
    """Rectangular pump windows of ``pulse_width_ps`` at ``rep_rate`` Hz."""

    pump_rate_in_pulse: float
    rep_rate: float = 10e6
    pulse_width_ps: float = 100.0

    def __post_init__(self):
        if self.pump_rate_in_pulse < 0:
            raise ValueError("pump_rate_in_pulse must be >= 0")
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be > 0")
        if self.pulse_width_ps <= 0:
            raise ValueError("pulse_width_ps must be > 0")
        if self.pulse_width_ps * 1e-12 >= 1.0 / self.rep_rate:
            raise ValueError("pulse_width must be shorter than the pulse period")


@dataclass(frozen=True)
class SimConfig:
    duration_s: float
    seed: int
    excitation: CWExcitation | PulsedExcitation
    background_rate: float = 0.0  # uncorrelated photons/s reaching the detectors

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration must be > 0")
        if self.duration_s > MAX_DURATION_S:
            raise ValueError(
                f"duration {self.duration_s} s overflows the picosecond axis "
                f"(max {MAX_DURATION_S:.0e} s)"
            )
        if self.background_rate < 0:
            raise ValueError("background_rate must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


# ---------------------------------------------------------------------------
# trajectory kernels


def _transition_tables(rates: np.ndarray):
    """Per-state total rate, cumulative branch probabilities and targets."""
    n = rates.shape[0]
    total = rates.sum(axis=1)
    cum = np.ones((n, n))
    tgt = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        k = 0
        acc = 0.0
        for j in range(n):
            if rates[i, j] > 0:
                acc += rates[i, j]
                cum[i, k] = acc / total[i]
                tgt[i, k] = j
                k += 1
        if k:
            cum[i, k - 1] = 1.0  # guard against rounding
    return total, cum, tgt


@njit(cache=True)
def _gillespie_cw(rng, total, cum, tgt, rad_src, rad_tgt, start, duration_s,
                  occupancy):
    t = 0.0
    state = start
    cap = 4096
    emit = np.empty(cap, np.int64)
    n_emit = 0
    n_jumps = 0
    while True:
        rate = total[state]
        if rate <= 0.0:
            occupancy[state] += duration_s - t
            break
        dt = rng.exponential(1.0 / rate)
        if t + dt >= duration_s:
            occupancy[state] += duration_s - t
            break
        t += dt
        occupancy[state] += dt
        u = rng.random()
        k = 0
        while cum[state, k] < u:
            k += 1
        new_state = tgt[state, k]
        n_jumps += 1
        if state == rad_src and new_state == rad_tgt:
            if n_emit == cap:
                cap *= 2
                grown = np.empty(cap, np.int64)
                grown[:n_emit] = emit[:n_emit]
                emit = grown
            emit[n_emit] = np.int64(round(t * 1e12))
            n_emit += 1
        state = new_state
    return emit[:n_emit].copy(), n_jumps


@njit(cache=True)
def _gillespie_pulsed(rng, total_on, cum_on, tgt_on, total_off, cum_off,
                      tgt_off, rad_src, rad_tgt, start, period_s, width_s,
                      duration_s, occupancy):
    t = 0.0
    state = start
    pulse = 0
    cap = 4096
    emit = np.empty(cap, np.int64)
    n_emit = 0
    n_jumps = 0
    while t < duration_s:
        pulse_start = pulse * period_s
        pulse_end = pulse_start + width_s
        in_pulse = t < pulse_end
        if in_pulse:
            seg_end = pulse_end
            rate = total_on[state]
        else:
            seg_end = (pulse + 1) * period_s
            rate = total_off[state]
        if seg_end > duration_s:
            seg_end = duration_s
        if rate <= 0.0:
            # Frozen until the rates change at the segment boundary.
            occupancy[state] += seg_end - t
            t = seg_end
            if not in_pulse:
                pulse += 1
            continue
        dt = rng.exponential(1.0 / rate)
        if t + dt >= seg_end:
            # Survived the segment; memorylessness lets us redraw afresh.
            occupancy[state] += seg_end - t
            t = seg_end
            if not in_pulse and seg_end < duration_s:
                pulse += 1
            continue
        t += dt
        occupancy[state] += dt
        u = rng.random()
        k = 0
        if in_pulse:
            while cum_on[state, k] < u:
                k += 1
            new_state = tgt_on[state, k]
        else:
            while cum_off[state, k] < u:
                k += 1
            new_state = tgt_off[state, k]
        n_jumps += 1
        if state == rad_src and new_state == rad_tgt:
            if n_emit == cap:
                cap *= 2
                grown = np.empty(cap, np.int64)
                grown[:n_emit] = emit[:n_emit]
                emit = grown
            emit[n_emit] = np.int64(round(t * 1e12))
            n_emit += 1
        state = new_state
    return emit[:n_emit].copy(), n_jumps


@njit(cache=True)
def _dead_time_sweep(ts, min_sep_ps):
    """Keep tags separated by at least ``min_sep_ps`` from the last kept tag."""
    out = np.empty_like(ts)
    n = 0
    for i in range(ts.size):
        if n == 0 or ts[i] - out[n - 1] >= min_sep_ps:
            out[n] = ts[i]
            n += 1
    return out[:n].copy()


def run_trajectory(sys: LevelSystem, excitation, duration_s: float, rng):
    """Exact-jump trajectory; returns (emission times ps, occupancy s, jumps).

    ``occupancy`` is time spent per state, summing to ``duration_s``.
    Raises if the start state (radiative target) has zero total rate under
    CW excitation.
    """
    rad_src, rad_tgt = sys.radiative
    occupancy = np.zeros(sys.n_states)
    if isinstance(excitation, CWExcitation):
        rates = np.array(sys.rates)
        if excitation.pump_rate is not None:
            rates[rad_tgt, rad_src] = excitation.pump_rate
        # Re-validate the effective system (pump override changes the graph).
        LevelSystem(rates=rates, radiative=sys.radiative, labels=sys.labels)
        total, cum, tgt = _transition_tables(rates)
        if total[rad_tgt] <= 0:
            raise ValueError("zero total rate from the initial (ground) state")
        emit, n_jumps = _gillespie_cw(
            rng, total, cum, tgt, rad_src, rad_tgt, rad_tgt, duration_s,
            occupancy,
        )
    elif isinstance(excitation, PulsedExcitation):
        rates_on = np.array(sys.rates)
        rates_on[rad_tgt, rad_src] = excitation.pump_rate_in_pulse
        rates_off = np.array(sys.rates)
        rates_off[rad_tgt, rad_src] = 0.0
        if rates_on[rad_tgt].sum() <= 0:
            raise ValueError("zero total rate from the initial (ground) state")
        total_on, cum_on, tgt_on = _transition_tables(rates_on)
        total_off, cum_off, tgt_off = _transition_tables(rates_off)
        emit, n_jumps = _gillespie_pulsed(
            rng, total_on, cum_on, tgt_on, total_off, cum_off, tgt_off,
            rad_src, rad_tgt, rad_tgt, 1.0 / excitation.rep_rate,
            excitation.pulse_width_ps * 1e-12, duration_s, occupancy,
        )
    else:
        raise TypeError(f"unsupported excitation {type(excitation).__name__}")
    return emit, occupancy, n_jumps


# ---------------------------------------------------------------------------
# detector chain


def _apply_detector(times_ps: np.ndarray, det: DetectorModel, duration_ps: int,
                    rng) -> np.ndarray:
    ts = times_ps
    if det.efficiency < 1.0:
        ts = ts[rng.random(ts.size) < det.efficiency]
    if det.jitter_sigma_ps > 0 and ts.size:
        jittered = ts + np.rint(rng.normal(0.0, det.jitter_sigma_ps, ts.size))
        jittered = jittered[(jittered >= 0) & (jittered <= duration_ps)]
        ts = np.sort(jittered.astype(np.int64))
    if det.dead_time_ps > 0 and ts.size:
        ts = _dead_time_sweep(ts, np.int64(round(det.dead_time_ps)))
    if det.dark_rate > 0:
        n_dark = rng.poisson(det.dark_rate * duration_ps * 1e-12)
        darks = rng.integers(0, duration_ps, size=n_dark, dtype=np.int64,
                             endpoint=True)
        ts = np.sort(np.concatenate([ts, darks]))
    # Final sweep: dark counts also trigger dead time, and a detector cannot
    # register two clicks within one picosecond.
    min_sep = np.int64(max(round(det.dead_time_ps), 1))
    return _dead_time_sweep(ts, min_sep) if ts.size else ts


def _config_hash(sys: LevelSystem, det: DetectorModel, cfg: SimConfig) -> str:
    doc = {
        "system": sys.to_dict(),
        "detector": asdict(det),
        "config": {
            "duration_s": cfg.duration_s,
            "seed": int(cfg.seed),
            "excitation": {type(cfg.excitation).__name__: asdict(cfg.excitation)},
            "background_rate": cfg.background_rate,
        },
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def simulate(sys: LevelSystem, det: DetectorModel, cfg: SimConfig):
    """Simulate an HBT measurement; returns (streamA, streamB[, sync]).

    The SYNC stream (pulse start times) is returned only in pulsed mode.
    Deterministic for a fixed (seed, configuration).
    """
    duration_ps = int(round(cfg.duration_s * 1e12))
    children = np.random.SeedSequence(int(cfg.seed)).spawn(5)
    rng_traj = np.random.default_rng(children[0])
    rng_route = np.random.default_rng(children[1])
    rng_bg = np.random.default_rng(children[2])
    rng_det = (np.random.default_rng(children[3]), np.random.default_rng(children[4]))

    emissions, _occ, _jumps = run_trajectory(sys, cfg.excitation, cfg.duration_s,
                                             rng_traj)

    to_b = rng_route.random(emissions.size) < 0.5
    per_channel = [emissions[~to_b], emissions[to_b]]

    if cfg.background_rate > 0:
        n_bg = rng_bg.poisson(cfg.background_rate * cfg.duration_s)
        bg = rng_bg.integers(0, duration_ps, size=n_bg, dtype=np.int64,
                             endpoint=True)
        bg_to_b = rng_bg.random(n_bg) < 0.5
        per_channel = [
            np.sort(np.concatenate([per_channel[0], bg[~bg_to_b]])),
            np.sort(np.concatenate([per_channel[1], bg[bg_to_b]])),
        ]

    meta = {
        "seed": int(cfg.seed),
        "rng": "numpy-pcg64",
        "config_sha256": _config_hash(sys, det, cfg),
        "generator": "photonstat.simulate",
    }
    streams = [
        TimeTagStream(
            channel=name,
            timestamps=_apply_detector(per_channel[i], det, duration_ps,
                                       rng_det[i]),
            duration_ps=duration_ps,
            metadata=dict(meta, channel=name),
        )
        for i, name in enumerate(("A", "B"))
    ]

    if isinstance(cfg.excitation, PulsedExcitation):
        n_pulses = int(cfg.duration_s * cfg.excitation.rep_rate) + 2
        starts = np.rint(np.arange(n_pulses) * (1e12 / cfg.excitation.rep_rate))
        starts = starts[starts <= duration_ps].astype(np.int64)
        sync = TimeTagStream(
            channel="SYNC",
            timestamps=starts,
            duration_ps=duration_ps,
            metadata=dict(meta, channel="SYNC"),
        )
        return streams[0], streams[1], sync
    return streams[0], streams[1]
