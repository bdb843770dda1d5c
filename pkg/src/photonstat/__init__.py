"""photonstat: single-photon-emitter photophysics on synthetic time tags.

Simulates Hanbury Brown-Twiss photon streams from N-level rate-equation
emitters, correlates them into g2(tau) and lifetime histograms at high
throughput, and fits the usual photophysical models (three-level g2,
background correction, exponential lifetimes, thermally activated
quenching, ZPL spectral metrics, Huang-Rhys factors).
"""

from .correlate import (
    CorrelationHistogram,
    LifetimeHistogram,
    correlate,
    lifetime_histogram,
    normalize,
    read_histogram_csv,
    write_histogram_csv,
)
from .emitter import (
    K_B_EV,
    FourLevelParams,
    LevelSystem,
    QuenchModel,
    build_four_level,
    g2_analytic,
    quench_intensity,
    steady_state,
    thermal_rates,
)
from .fitting import (
    FitResult,
    correct_background,
    fit_g2,
    fit_lifetime,
    fit_linear,
    fit_quenching,
    g2_three_level,
    lm_fit,
    rho_from_sb,
)
from .simulate import (
    CWExcitation,
    DetectorModel,
    PulsedExcitation,
    SimConfig,
    run_trajectory,
    simulate,
)
from .spectral import (
    AnalysisConfig,
    PeakFit,
    SeriesAnalysis,
    Spectrum,
    ThermalEntry,
    ThermalSeries,
    analyze_series,
    decompose_zpl_psb,
    fit_zpl,
    huang_rhys,
    load_series_manifest,
    read_spectrum_csv,
    write_spectrum_csv,
)
from .streams import TimeTagStream, intensity_trace, read_streams, write_ptag

__version__ = "0.1.0"
