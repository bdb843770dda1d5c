"""N-level rate-equation emitter models.

An emitter is a continuous-time Markov chain over electronic states with one
designated radiative transition; every photon the simulator emits corresponds
to one jump along that transition.  This module provides the generic
:class:`LevelSystem`, the four-level template (ground/excited plus a
thermally coupled shelving path), steady states, the analytic second-order
autocorrelation g2(tau), and the thermally activated intensity-quenching law.

Conventions
-----------
- ``rates[i, j]`` is the transition rate k(i -> j) in 1/s; the diagonal is
  ignored.  States are 0-indexed in Python; the JSON interchange format uses
  1-indexed state numbers (see :func:`LevelSystem.to_dict`).
- After a photon detection the system is reset to the radiative *target*
  state, so g2(0) = 0 for any system whose radiative source differs from its
  target.  This is the conditional-emission convention realized by an HBT
  measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "K_B_EV",
    "LevelSystem",
    "FourLevelParams",
    "QuenchModel",
    "build_four_level",
    "steady_state",
    "generator_matrix",
    "g2_analytic",
    "quench_intensity",
    "thermal_rates",
]

# Boltzmann constant in eV/K, fixed so activation energies are in eV.
K_B_EV = 8.617333e-5


@dataclass(frozen=True)
class LevelSystem:
    """An N-state emitter with a transition-rate matrix.

    Parameters
    ----------
    rates : (n, n) array
        Off-diagonal entry ``rates[i, j]`` is the rate of the i -> j
        transition in 1/s.  Diagonal entries are ignored.
    radiative : (source, target)
        0-indexed state pair identifying the photon-emitting transition.
    labels : optional state names, one per state.

    A system is valid when its rate graph has exactly one closed
    communicating class and that class contains both radiative states, so
    emission continues indefinitely.  Unreachable transient states are
    allowed (they simply carry zero steady-state population); absorbing
    traps are rejected.
    """

    rates: np.ndarray
    radiative: tuple[int, int]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ValueError("rates must be a square matrix")
        n = rates.shape[0]
        if n < 2:
            raise ValueError("a level system needs at least 2 states")
        if not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite")
        off = rates[~np.eye(n, dtype=bool)]
        if np.any(off < 0):
            raise ValueError("off-diagonal rates must be >= 0")
        rates = rates.copy()
        np.fill_diagonal(rates, 0.0)
        rates.flags.writeable = False
        object.__setattr__(self, "rates", rates)

        src, tgt = self.radiative
        src, tgt = int(src), int(tgt)
        if not (0 <= src < n and 0 <= tgt < n) or src == tgt:
            raise ValueError("radiative pair must be two distinct valid states")
        if rates[src, tgt] <= 0:
            raise ValueError("radiative transition rate must be > 0")
        object.__setattr__(self, "radiative", (src, tgt))

        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n:
                raise ValueError("labels length must match n_states")
            object.__setattr__(self, "labels", labels)

        _check_closed_class(rates, (src, tgt))

    @property
    def n_states(self) -> int:
        return self.rates.shape[0]

    def to_dict(self) -> dict:
        """JSON document: flat row-major rates, 1-indexed radiative pair."""
        src, tgt = self.radiative
        return {
            "n_states": self.n_states,
            "rates": [float(x) for x in self.rates.ravel(order="C")],
            "radiative": [src + 1, tgt + 1],
            "labels": list(self.labels) if self.labels is not None else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LevelSystem":
        n = int(doc["n_states"])
        flat = np.asarray(doc["rates"], dtype=float)
        if flat.size != n * n:
            raise ValueError(f"rates array has {flat.size} entries, expected {n * n}")
        src, tgt = doc["radiative"]
        labels = doc.get("labels")
        return cls(
            rates=flat.reshape(n, n),
            radiative=(int(src) - 1, int(tgt) - 1),
            labels=tuple(labels) if labels else None,
        )


def _check_closed_class(rates: np.ndarray, radiative: tuple[int, int]):
    """Reject absorbing traps: exactly one closed communicating class must
    exist and it must contain the radiative pair."""
    n = rates.shape[0]
    graph = csr_matrix((rates > 0).astype(np.int8))
    n_comp, comp = connected_components(graph, directed=True, connection="strong")
    # A class is closed when no edge leaves it.
    has_exit = np.zeros(n_comp, dtype=bool)
    src_idx, dst_idx = np.nonzero(rates > 0)
    for i, j in zip(src_idx, dst_idx):
        if comp[i] != comp[j]:
            has_exit[comp[i]] = True
    # Isolated edgeless states form their own closed singleton classes.
    closed = [c for c in range(n_comp) if not has_exit[c]]
    if len(closed) != 1:
        raise ValueError(
            "degenerate rate graph: expected exactly one closed communicating "
            f"class, found {len(closed)}"
        )
    if comp[radiative[0]] != closed[0] or comp[radiative[1]] != closed[0]:
        raise ValueError(
            "absorbing state: probability drains away from the radiative cycle"
        )


@dataclass(frozen=True)
class FourLevelParams:
    """Rates of the four-level emitter template.

    States: 1 = ground, 2 = excited, 4 = shelf reached from the excited
    state, 3 = relay on the nonradiative return path 2 -> 4 -> 3 -> 1.
    ``zpl_energy_ev`` is carried as metadata only.
    """

    pump_rate: float          # 1 -> 2, 1/s
    k_rad: float              # 2 -> 1 radiative, 1/s
    k24: float                # 2 -> 4 shelving, 1/s
    k42: float                # 4 -> 2 de-shelving, 1/s
    k43: float                # 4 -> 3, 1/s
    k31: float                # 3 -> 1, 1/s
    zpl_energy_ev: float | None = None

    def __post_init__(self):
        for name in ("pump_rate", "k_rad", "k24", "k42", "k43", "k31"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.k_rad <= 0:
            raise ValueError("k_rad must be > 0")
        if self.pump_rate <= 0:
            raise ValueError("pump_rate must be > 0")

    def to_dict(self) -> dict:
        return {
            "pump_rate": self.pump_rate,
            "k_rad": self.k_rad,
            "k24": self.k24,
            "k42": self.k42,
            "k43": self.k43,
            "k31": self.k31,
            "zpl_energy_ev": self.zpl_energy_ev,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FourLevelParams":
        return cls(
            pump_rate=float(doc["pump_rate"]),
            k_rad=float(doc["k_rad"]),
            k24=float(doc["k24"]),
            k42=float(doc["k42"]),
            k43=float(doc["k43"]),
            k31=float(doc["k31"]),
            zpl_energy_ev=(
                float(doc["zpl_energy_ev"])
                if doc.get("zpl_energy_ev") is not None
                else None
            ),
        )


@dataclass(frozen=True)
class QuenchModel:
    """Thermally activated intensity quenching I(T) = I0 / (1 + A exp(-E/kT)).

    ``i0`` is the intensity extrapolated to 0 K, ``a`` the dimensionless
    pre-exponential factor of the nonradiative channel, and ``e_ev`` its
    activation energy in eV.
    """

    i0: float
    a: float
    e_ev: float
    k_b: float = field(default=K_B_EV, init=False)

    def __post_init__(self):
        if not (np.isfinite(self.i0) and self.i0 > 0):
            raise ValueError("i0 must be > 0")
        if not (np.isfinite(self.a) and self.a >= 0):
            raise ValueError("a must be >= 0")
        if not (np.isfinite(self.e_ev) and self.e_ev >= 0):
            raise ValueError("e_ev must be >= 0")


FOUR_LEVEL_LABELS = ("ground", "excited", "relay", "shelf")


def build_four_level(params: FourLevelParams) -> LevelSystem:
    """Assemble the four-level emitter: pumped two-level core plus the
    shelving loop excited -> shelf -> relay -> ground.

    With ``k24 = 0`` the shelf is unreachable and the system degenerates to
    an effective two-level emitter.  ``k31 = 0`` or ``k43 = 0`` while
    ``k24 > 0`` would trap all population and is rejected.
    """
    p = params
    if p.k24 > 0 and (p.k31 == 0 or p.k43 == 0):
        raise ValueError(
            "absorbing state: k24 > 0 requires k43 > 0 and k31 > 0 "
            "so shelved population returns to the ground state"
        )
    rates = np.zeros((4, 4))
    rates[0, 1] = p.pump_rate   # ground -> excited
    rates[1, 0] = p.k_rad       # excited -> ground (photon)
    rates[1, 3] = p.k24         # excited -> shelf
    rates[3, 1] = p.k42         # shelf -> excited
    rates[3, 2] = p.k43         # shelf -> relay
    rates[2, 0] = p.k31         # relay -> ground
    return LevelSystem(rates=rates, radiative=(1, 0), labels=FOUR_LEVEL_LABELS)


def generator_matrix(sys: LevelSystem) -> np.ndarray:
    """Master-equation generator G with dp/dt = G @ p (columns sum to 0)."""
    rates = sys.rates
    G = rates.T.copy()
    np.fill_diagonal(G, 0.0)
    G[np.diag_indices_from(G)] = -rates.sum(axis=1)
    return G


def steady_state(sys: LevelSystem) -> np.ndarray:
    """Stationary population vector p with G p = 0, sum(p) = 1, p >= 0.

    Computed from the SVD null space of the generator; raises if the
    null space is not one-dimensional (degenerate system).
    """
    G = generator_matrix(sys)
    max_rate = float(np.max(sys.rates))
    _, s, vt = np.linalg.svd(G)
    tol = max(s[0], 1.0) * G.shape[0] * np.finfo(float).eps
    if s.size >= 2 and s[-2] <= tol:
        raise ValueError(
            "degenerate system: generator null space has dimension > 1"
        )
    p = vt[-1]
    total = p.sum()
    if abs(total) < 1e-12:
        raise ValueError("degenerate system: null vector has zero total mass")
    p = p / total
    # Transient states come out as +-eps noise; clamp to exact zero.
    p[np.abs(p) < 1e-12] = 0.0
    if np.any(p < 0):
        raise ValueError("degenerate system: stationary vector not nonnegative")
    residual = float(np.linalg.norm(G @ p))
    if residual > 1e-10 * max_rate:
        raise ValueError(
            f"steady-state residual {residual:.3e} exceeds 1e-10 * max rate"
        )
    return p


def g2_analytic(sys: LevelSystem, taus) -> np.ndarray:
    """Second-order autocorrelation of the radiative transition.

    g2(tau) is the population of the radiative source state at time tau,
    starting from the radiative target state (the post-detection reset),
    divided by its steady-state population.  Negative delays are folded by
    symmetry g2(-tau) = g2(tau).

    The master equation is propagated with adaptive explicit integration
    (DOP853, rtol 1e-9).  Raises RuntimeError if step control fails.
    """
    scalar = np.ndim(taus) == 0
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if not np.all(np.isfinite(taus)):
        raise ValueError("delays must be finite")
    abs_taus = np.abs(taus)

    src, tgt = sys.radiative
    p_ss = steady_state(sys)
    denom = p_ss[src]
    if denom <= 0:
        raise ValueError("radiative source state has zero steady-state population")

    G = generator_matrix(sys)
    p0 = np.zeros(sys.n_states)
    p0[tgt] = 1.0

    order = np.argsort(abs_taus)
    sorted_taus = abs_taus[order]
    t_max = sorted_taus[-1]
    out = np.empty_like(sorted_taus)
    if t_max == 0.0:
        out[:] = p0[src] / denom
    else:
        # Strictly increasing interior evaluation grid for solve_ivp.
        t_eval = np.unique(sorted_taus[sorted_taus > 0])
        sol = solve_ivp(
            lambda _t, p: G @ p,
            t_span=(0.0, t_max),
            y0=p0,
            method="DOP853",
            t_eval=t_eval,
            rtol=1e-9,
            atol=1e-14,
        )
        if not sol.success:
            raise RuntimeError(f"master-equation propagation failed: {sol.message}")
        values = dict(zip(t_eval, sol.y[src]))
        values[0.0] = p0[src]
        out = np.array([values[t] for t in sorted_taus]) / denom

    g2 = np.empty_like(out)
    g2[order] = out
    return g2[0] if scalar else g2


def quench_intensity(model: QuenchModel, temperature_k) -> np.ndarray | float:
    """Evaluate I(T) = I0 / (1 + A exp(-E / (k_b T))).  T must be > 0."""
    T = np.asarray(temperature_k, dtype=float)
    if np.any(T <= 0) or not np.all(np.isfinite(T)):
        raise ValueError("temperature must be > 0 K")
    out = model.i0 / (1.0 + model.a * np.exp(-model.e_ev / (model.k_b * T)))
    return float(out) if out.ndim == 0 else out


def thermal_rates(
    base: FourLevelParams, e_ev: float, kappa: float, temperature_k: float
) -> FourLevelParams:
    """Arrhenius-activated shelving: k24 = kappa * exp(-E / (k_b T)).

    Only the shelving rate carries the temperature dependence; all other
    rates are returned unchanged, which makes the simulated emission rate
    versus temperature follow the quenching law of :class:`QuenchModel`.
    """
    if e_ev < 0 or kappa < 0:
        raise ValueError("e_ev and kappa must be >= 0")
    if temperature_k <= 0:
        raise ValueError("temperature must be > 0 K")
    k24 = kappa * np.exp(-e_ev / (K_B_EV * temperature_k))
    return replace(base, k24=float(k24))
