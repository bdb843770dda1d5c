"""Synthetic spectra and thermal-cycle series for demos and closed-loop tests.

These generators build the ground truth that the analysis side must
recover: Lorentzian ZPL (optionally with a phonon side band) whose center
shifts linearly with temperature, whose FWHM broadens linearly, and whose
area follows the thermally activated quenching law.  Raw g2(0) values are
diluted with the background fraction implied by the signal/background
rates, so the background-correction round trip closes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emitter import QuenchModel, quench_intensity
from .spectral import Spectrum, ThermalEntry, ThermalSeries

__all__ = ["CycleParams", "synthetic_spectrum", "synthetic_thermal_cycle"]


def _lorentzian_from_area(energy, center, fwhm, area):
    g = fwhm / 2.0
    amplitude = 2.0 * area / (np.pi * fwhm)
    u = energy - center
    return amplitude * g**2 / (u**2 + g**2)


def synthetic_spectrum(
    energy_ev,
    center_ev: float,
    fwhm_ev: float,
    area: float,
    psb_shift_ev: float = 0.16,
    psb_fwhm_ev: float = 0.08,
    psb_area: float = 0.0,
    baseline: float = 0.0,
    noise_frac: float = 0.0,
    rng=None,
    temperature_k=None,
    source_id=None,
) -> Spectrum:
    """One Lorentzian ZPL plus an optional red-shifted side band."""
    energy_ev = np.asarray(energy_ev, dtype=float)
    counts = _lorentzian_from_area(energy_ev, center_ev, fwhm_ev, area)
    if psb_area > 0:
        counts = counts + _lorentzian_from_area(
            energy_ev, center_ev - psb_shift_ev, psb_fwhm_ev, psb_area
        )
    counts = counts + baseline
    if noise_frac > 0:
        if rng is None:
            rng = np.random.default_rng()
        counts = counts * (1.0 + noise_frac * rng.standard_normal(counts.size))
    counts = np.clip(counts, 0.0, None)
    return Spectrum(energy_ev=energy_ev, counts=counts,
                    temperature_k=temperature_k, source_id=source_id)


@dataclass(frozen=True)
class CycleParams:
    """Ground truth for a 300 K - 800 K - 300 K thermal cycle."""

    center0_ev: float = 1.94          # ZPL center at the coldest point
    red_shift_mev_total: float = 40.0
    fwhm0_mev: float = 15.0
    broaden_mev_per_k: float = 0.13
    quench: QuenchModel = QuenchModel(i0=1.0, a=206.0, e_ev=0.25)
    area_scale: float = 1e6           # counts*eV at I = i0
    g2_0_intrinsic: float = 0.0
    rho: float = 0.9                  # constant signal fraction S/(S+B)
    s_rate0: float = 1e5              # signal counts/s at I = i0
    psb_area_frac: float = 0.0        # PSB area as a fraction of ZPL area
    noise_frac: float = 0.0
    t_min: float = 300.0
    t_max: float = 800.0
    t_step: float = 100.0


def synthetic_thermal_cycle(params: CycleParams = CycleParams(), seed: int = 0,
                            energy_ev=None, cooling: bool = True
                            ) -> ThermalSeries:
    """Generate the heat-then-cool series; cooling mirrors heating exactly
    up to noise, so reversibility deltas vanish in expectation."""
    p = params
    rng = np.random.default_rng(seed)
    if energy_ev is None:
        energy_ev = np.arange(p.center0_ev - 0.35, p.center0_ev + 0.15, 5e-4)

    heat_temps = np.arange(p.t_min, p.t_max + 0.5 * p.t_step, p.t_step)
    cool_temps = heat_temps[::-1][1:] if cooling else np.array([])
    span = p.t_max - p.t_min

    entries = []
    for phase, temps in (("heating", heat_temps), ("cooling", cool_temps)):
        for T in temps:
            frac = (T - p.t_min) / span
            center = p.center0_ev - 1e-3 * p.red_shift_mev_total * frac
            fwhm = 1e-3 * (p.fwhm0_mev + p.broaden_mev_per_k * (T - p.t_min))
            intensity = quench_intensity(p.quench, T) / p.quench.i0
            area = p.area_scale * intensity
            if p.noise_frac > 0:
                area = area * (1.0 + p.noise_frac * rng.standard_normal())
            spectrum = synthetic_spectrum(
                energy_ev, center, fwhm, area,
                psb_area=p.psb_area_frac * area,
                noise_frac=p.noise_frac, rng=rng, temperature_k=T,
            )
            s_rate = p.s_rate0 * intensity
            b_rate = s_rate * (1.0 - p.rho) / p.rho
            g2_raw = p.rho**2 * p.g2_0_intrinsic + (1.0 - p.rho**2)
            if p.noise_frac > 0:
                g2_raw = abs(g2_raw + 0.3 * p.noise_frac * rng.standard_normal())
            entries.append(ThermalEntry(
                temperature_k=float(T), phase=phase, spectrum=spectrum,
                g2_0=float(g2_raw), s_rate=float(s_rate), b_rate=float(b_rate),
            ))
    return ThermalSeries(entries=tuple(entries))
