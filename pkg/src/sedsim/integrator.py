"""RK4 trajectory driver with field interpolation, window policies and event handling.

Steps are taken in a regularized variable by default: ``dt = min(|r|, cap) ds``
with ``ds = 2 pi / (k * steps_per_orbit)``, which is a uniform step in
eccentric anomaly for a Kepler orbit. Every orbit then takes exactly
``steps_per_orbit`` steps while perihelion passages of eccentric orbits get
proportionally finer time steps. ``time_regularization="none"`` gives the
plain ``dt = P(E) / steps_per_orbit``.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .constants import PhysicalConstants
from .dynamics import PhaseState, formulation_code, orbital_wavenumber
from .field import FieldRealization, FieldWindow, FrequencyGrid, build_field, switch_window
from .record import TrajectoryRecord, detect_ionisation

log = logging.getLogger(__name__)

__all__ = [
    "MovingCutoff", "FixedCutoff", "IntegratorConfig", "FieldSource", "Trajectory",
    "build_field_interpolant", "propagate", "rk4", "rk4_step", "apply_energy_floor",
    "moving_cutoff_controller", "initial_window", "detect_ionisation", "TrajectoryRecord",
]


@dataclass(frozen=True)
class MovingCutoff:
    """Keep ``n_harm`` harmonics of the orbital frequency ``k^3``; refit on a relative drift."""

    n_harm: float = 2.5
    update_increment: float = 0.2

    def __post_init__(self):
        if not self.n_harm > 0:
            raise ValueError("n_harm must be positive")
        if not 0 < self.update_increment < 1:
            raise ValueError("update_increment must lie in (0, 1)")


@dataclass(frozen=True)
class FixedCutoff:
    """Fixed mode bounds; ``None`` picks the defaults documented in the README."""

    n_low: Optional[int] = None
    n_high: Optional[int] = None


Cutoff = Union[MovingCutoff, FixedCutoff]

# highest frequency of the default fixed window: 1.5 harmonics at E = -1.6
FIXED_HIGH_HARMONICS = 1.5
MIXED_SPLIT_FREQUENCY = (2.0 / 3.0) ** 1.5


@dataclass(frozen=True)
class IntegratorConfig:
    formulation: str = "s_form"
    steps_per_orbit: int = 4000
    field_refreshes: int = 10
    interpolation: str = "lagrange"
    interpolation_order: int = 4
    energy_floor: float = -1.6
    ionisation_threshold: float = -0.05
    ionisation_dwell: float = 1e7
    cutoff: Cutoff = MovingCutoff()
    mixed_split: Optional[int] = None
    time_regularization: str = "eccentric_anomaly"
    guard_radius: float = 1e-3
    sample_interval: float = 1.0
    field_enabled: bool = True
    initial_mapping: str = "exact"

    def __post_init__(self):
        formulation_code(self.formulation)
        if int(self.steps_per_orbit) != self.steps_per_orbit or self.steps_per_orbit < 600:
            raise ValueError("steps_per_orbit must be an integer >= 600")
        if self.field_refreshes < 1:
            raise ValueError("field_refreshes must be >= 1")
        if self.interpolation not in ("lagrange", "exact"):
            raise ValueError("interpolation must be 'lagrange' or 'exact'")
        if self.interpolation_order != 4:
            raise ValueError("only fourth-order (5-point) interpolation is implemented")
        if not self.energy_floor < self.ionisation_threshold < 0:
            raise ValueError("need energy_floor < ionisation_threshold < 0")
        if not self.ionisation_dwell > 0:
            raise ValueError("ionisation_dwell must be positive")
        if self.time_regularization not in ("eccentric_anomaly", "none"):
            raise ValueError("time_regularization must be 'eccentric_anomaly' or 'none'")
        if not self.guard_radius > 0:
            raise ValueError("guard_radius must be positive")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if self.initial_mapping not in ("exact", "neglect_beta"):
            raise ValueError("initial_mapping must be 'exact' or 'neglect_beta'")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cutoff"] = {"kind": "moving" if isinstance(self.cutoff, MovingCutoff) else "fixed",
                       **dataclasses.asdict(self.cutoff)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IntegratorConfig":
        d = dict(d)
        c = dict(d.pop("cutoff"))
        kind = c.pop("kind")
        d["cutoff"] = MovingCutoff(**c) if kind == "moving" else FixedCutoff(**c)
        return cls(**d)


# -- generic RK4 --------------------------------------------------------------------

def rk4(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``y' = f(t, y)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# -- field sources ----------------------------------------------------------------------

class FieldSource:
    """Band-resolved field values for one window, summed exactly or interpolated.

    In interpolating mode exact bundles are computed on nodes
    ``t_origin + j * spacing`` and a 5-point Lagrange stencil centred on the
    nearest node fills in between. Each node is computed independently, so
    the values do not depend on how the node table was grown.
    """

    def __init__(self, field: Optional[FieldRealization], bounds: tuple[int, int], *,
                 interpolate: bool = True, refreshes: int = 10, t_origin: float = 0.0,
                 enabled: bool = True, chunk: int = 512):
        self.field = field
        self.n_low, self.n_high = int(bounds[0]), int(bounds[1])
        self.enabled = bool(enabled and field is not None)
        if self.enabled:
            if not 0 <= self.n_low < self.n_high:
                raise ValueError(f"empty field window {bounds}")
            if self.n_high > field.grid.max_mode:
                raise ValueError(f"window upper bound {self.n_high} exceeds max_mode")
            self.omega_max = self.n_high / field.grid.N
            self.spacing = (2.0 * math.pi / self.omega_max) / refreshes
            self._fld = (field.omega, field.amp_E, field.amp_A, field.amp_C,
                         field.coeff_A, field.coeff_B)
        else:
            self.omega_max = 0.0
            self.spacing = math.inf
            z = np.zeros(1)
            self._fld = (z, z, z, z, np.zeros((3, 1)), np.zeros((3, 1)))
        self.interpolate = bool(interpolate and self.enabled)
        self.refreshes = refreshes
        self.t_origin = float(t_origin)
        self.chunk = chunk
        self.evaluations = 0
        self._nodes = np.zeros((0, 5, 3))
        self._j0 = 0
        self.meta = np.array([0.0, 0.0, self.t_origin, self.spacing if self.interpolate else 1.0])

    @property
    def bounds(self) -> tuple[int, int]:
        return self.n_low, self.n_high

    def _index(self, t: float) -> float:
        return (t - self.t_origin) / self.spacing

    def ensure(self, t_lo: float, t_hi: float) -> None:
        """Make the node table cover stencils for all times in ``[t_lo, t_hi]``."""
        if not self.interpolate:
            return
        j_lo = math.floor(self._index(t_lo)) - 3
        j_hi = math.ceil(self._index(t_hi)) + 3
        have_lo, have_hi = self._j0, self._j0 + len(self._nodes)
        if have_lo <= j_lo and j_hi <= have_hi:
            return
        new_hi = max(j_hi + self.chunk, have_hi)
        new = np.empty((new_hi - j_lo, 5, 3))
        keep_lo, keep_hi = max(j_lo, have_lo), min(new_hi, have_hi)
        if keep_lo < keep_hi:
            new[keep_lo - j_lo:keep_hi - j_lo] = self._nodes[keep_lo - have_lo:keep_hi - have_lo]
            gaps = [(j_lo, keep_lo), (keep_hi, new_hi)]
        else:
            gaps = [(j_lo, new_hi)]
        for a, b in gaps:
            if b > a:
                K.fill_nodes(new, a - j_lo, a, b - a, self.t_origin, self.spacing, *self._fld,
                             self.n_low, self.n_high)
                self.evaluations += b - a
        self._nodes, self._j0 = new, j_lo
        self.meta[0], self.meta[1] = j_lo, len(new)

    def window_ints(self, regularize: bool) -> np.ndarray:
        source = K.SOURCE_NODES if self.interpolate else K.SOURCE_EXACT
        return np.array([self.n_low, self.n_high, int(self.enabled), source, int(regularize)],
                        dtype=np.int64)

    def bundle(self, t: float) -> np.ndarray:
        """``(5, 3)`` array of ``E_low, E_high, A_low, A_high, C_high`` at ``t``."""
        out = np.empty((5, 3))
        if self.interpolate:
            self.ensure(t, t)
        ok = K.field_at(float(t), self.window_ints(False), self._fld, self._nodes, self.meta, out)
        assert ok
        return out

    __call__ = bundle

    def E(self, t: float) -> np.ndarray:
        b = self.bundle(t)
        return b[K.E_LOW] + b[K.E_HIGH]

    def node_times(self) -> np.ndarray:
        return self.t_origin + (self._j0 + np.arange(len(self._nodes))) * self.spacing


def build_field_interpolant(field: FieldRealization, window: Union[FieldWindow, tuple[int, int]],
                            t_start: float, t_end: float, refreshes: int = 10) -> FieldSource:
    """Interpolating source with nodes covering ``[t_start, t_end]``."""
    bounds = (window.n_low, window.n_high) if isinstance(window, FieldWindow) else window
    src = FieldSource(field, bounds, interpolate=True, refreshes=refreshes, t_origin=t_start)
    src.ensure(t_start, t_end)
    return src


# -- single steps and policies ------------------------------------------------------------

def rk4_step(state: PhaseState, dt: float, source: Optional[FieldSource], beta: float,
             window: Optional[FieldWindow] = None) -> PhaseState:
    """Advance a formulation state by one uniform RK4 step of length ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    code = formulation_code(state.formulation)
    dA = window.delta_A if window is not None else np.zeros(3)
    dC = window.delta_C if window is not None else np.zeros(3)
    r, v = np.empty(3), np.empty(3)

    def f(t, y):
        F = source.bundle(t) if source is not None else np.zeros((5, 3))
        K.physical(code, y, F, dA, dC, beta, r, v)
        if np.linalg.norm(r) == 0:
            raise FloatingPointError("trajectory hit r = 0")
        dy = np.empty(6)
        K.deriv(code, y, r, F, dA, beta, dy)
        return dy

    return PhaseState(state.formulation, rk4(f, state.t, state.y, dt), state.t + dt)


def propagate(state: PhaseState, dt: float, n_steps: int, source: Optional[FieldSource],
              beta: float, window: Optional[FieldWindow] = None) -> PhaseState:
    """``n_steps`` uniform RK4 steps through the compiled loop (no events, no sampling)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    code = formulation_code(state.formulation)
    if source is None:
        source = FieldSource(None, (0, 1), enabled=False)
    dA = window.delta_A if window is not None else np.zeros(3)
    dC = window.delta_C if window is not None else np.zeros(3)
    y = state.y.copy()
    cf = np.array([state.t, math.nan, 0.0, math.inf, state.t])
    ci = np.zeros(2, dtype=np.int64)
    r, v = np.empty(3), np.empty(3)
    K.physical(code, y, source.bundle(state.t), dA, dC, beta, r, v)
    prev_r = r.copy()
    par = np.zeros(K.N_PARAMS)
    par[[K.P_BETA, K.P_DS, K.P_GCAP]] = beta, dt, math.inf
    par[[K.P_TMAX, K.P_TEVENT, K.P_THR, K.P_DWELL, K.P_INTERVAL]] = math.inf
    par[K.P_FLOOR] = -math.inf
    par[K.P_GUARD] = 0.0
    win = source.window_ints(False)
    source.ensure(state.t, state.t + (n_steps + 1) * dt)
    buf = np.empty((1, 6))
    while ci[K.CI_STEPS] < n_steps:
        par[K.P_MAXSTEPS] = n_steps - ci[K.CI_STEPS]
        events, _ = K.advance(code, y, cf, ci, prev_r, dA, dC, source._fld, win,
                              source._nodes, source.meta, par, buf)
        if events & K.EV_NONFINITE:
            raise FloatingPointError(f"non-finite state near t={cf[K.CF_T]}")
        if events & K.EV_NEED_NODES:
            source.ensure(cf[K.CF_T], cf[K.CF_NEED_T] + dt)
    return PhaseState(state.formulation, y, float(cf[K.CF_T]))


def apply_energy_floor(r, v, energy_floor: float, rng: Optional[np.random.Generator] = None):
    """Rescale the speed so the energy equals ``energy_floor``; no-op above it.

    Returns ``(v_new, event)`` where ``event`` is None if nothing was done.
    A state at rest is pushed along a random direction drawn from ``rng``.
    """
    r = np.asarray(r, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    rn = float(np.linalg.norm(r))
    energy = 0.5 * float(v @ v) - 1.0 / rn
    if not energy < energy_floor:
        return v.copy(), None
    target = math.sqrt(2.0 * (energy_floor + 1.0 / rn))
    speed = float(np.linalg.norm(v))
    event = {"kind": "push", "energy_before": energy, "energy_after": energy_floor}
    if speed > 0:
        direction = v / speed
    else:
        rng = rng if rng is not None else np.random.default_rng()
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        event["random_direction"] = True
        log.warning("energy-floor push on a state at rest; using a random direction")
    return direction * target, event


def _target_k3(energy: float, threshold: float) -> float:
    return orbital_wavenumber(min(energy, threshold)) ** 3


def window_for(k3: float, N: int, formulation: str, policy: MovingCutoff,
               max_mode: Optional[int] = None) -> tuple[int, int]:
    """Mode bounds of the moving window for orbital frequency ``k3``."""
    if formulation == "mixed_gc":
        n_low = max(1, round(k3 * N))
        n_high = round((policy.n_harm + 0.5) * k3 * N)
    else:
        n_low, n_high = 0, round(policy.n_harm * k3 * N)
    if max_mode is not None:
        n_high = min(n_high, max_mode)
    return n_low, max(n_high, n_low + 1)


def moving_cutoff_controller(energy: float, k3_ref: float, policy: MovingCutoff, N: int,
                             formulation: str, max_mode: Optional[int] = None,
                             threshold: float = -0.05):
    """Return ``(n_low, n_high, k3)`` when ``k^3`` drifted by the increment, else None."""
    if not energy < 0:
        return None
    k3 = _target_k3(energy, threshold)
    if abs(k3 / k3_ref - 1.0) < policy.update_increment - 1e-12:
        return None
    return (*window_for(k3, N, formulation, policy, max_mode), k3)


def initial_window(cfg: IntegratorConfig, grid: FrequencyGrid, energy: float) -> tuple[int, int, float]:
    """Starting bounds ``(n_low, n_high, k3_ref)`` for the configured policy."""
    N = grid.N
    if isinstance(cfg.cutoff, MovingCutoff):
        k3 = _target_k3(energy, cfg.ionisation_threshold)
        return (*window_for(k3, N, cfg.formulation, cfg.cutoff, grid.max_mode), k3)
    k3_floor = (-2.0 * cfg.energy_floor) ** 1.5
    n_high = cfg.cutoff.n_high or round(FIXED_HIGH_HARMONICS * k3_floor * N)
    if cfg.cutoff.n_low is not None:
        n_low = cfg.cutoff.n_low
    elif cfg.formulation == "mixed_gc":
        n_low = cfg.mixed_split or max(1, round(MIXED_SPLIT_FREQUENCY * N))
    else:
        n_low = 0
    if cfg.formulation != "mixed_gc" and cfg.formulation != "newton" and n_low != 0:
        raise ValueError(f"formulation {cfg.formulation} keeps the whole spectrum in C; n_low must be 0")
    return n_low, n_high, math.nan


# -- the trajectory driver ----------------------------------------------------------------

_SAMPLE_BUFFER = 4096


class Trajectory:
    """One electron under damping and a fixed field realization.

    ``run`` integrates until ``t_max``, ionisation, an abort or
    ``max_orbits`` and returns the :class:`TrajectoryRecord`.
    """

    def __init__(self, field: Optional[FieldRealization], constants: PhysicalConstants,
                 cfg: IntegratorConfig, r0, v0, *, t0: float = 0.0,
                 rng: Optional[np.random.Generator] = None, meta: Optional[dict] = None):
        self.field = field
        self.constants = constants
        self.cfg = cfg
        self.beta = constants.beta
        self.code = formulation_code(cfg.formulation)
        self.rng = rng if rng is not None else np.random.Generator(np.random.Philox(0))
        self.regularize = cfg.time_regularization == "eccentric_anomaly"
        r0 = np.asarray(r0, dtype=np.float64)
        v0 = np.asarray(v0, dtype=np.float64)
        if np.linalg.norm(r0) < cfg.guard_radius:
            raise ValueError("initial position inside the guard radius")
        energy0 = 0.5 * float(v0 @ v0) - 1.0 / float(np.linalg.norm(r0))
        field_on = cfg.field_enabled and field is not None
        if field_on:
            n_low, n_high, self.k3_ref = initial_window(cfg, field.grid, energy0)
        else:
            n_low, n_high, self.k3_ref = 0, 1, math.nan
        self.window = FieldWindow(n_low, n_high)
        self.source = self._make_source((n_low, n_high), t0)
        self.y = np.empty(6)
        F = self.source.bundle(t0)
        if cfg.initial_mapping == "exact":
            K.from_physical(self.code, r0, v0, F, self.window.delta_A, self.window.delta_C,
                            self.beta, self.y)
        else:
            self.y[:] = np.concatenate([v0, r0] if self.code == K.PQ else [r0, v0])
        self.cf = np.array([t0, math.nan, 0.0, t0 + cfg.sample_interval, t0])
        r, v = self.physical()
        energy, _, _, _ = K.elements(r, v)
        if energy > cfg.ionisation_threshold:
            self.cf[K.CF_ABOVE] = t0
        self.ci = np.zeros(2, dtype=np.int64)
        self.prev_r = r.copy()
        self.orbits = 0
        self.status = "running"
        self.ionisation_time: Optional[float] = None
        self.events: list = []
        self.meta = dict(meta or {})
        self._rows: list = []
        self._pending_switches: list = []
        self._derive_step(energy)
        self._add_sample(K.FL_INITIAL | K.FL_REGULAR)

    # -- helpers --
    def _make_source(self, bounds, t_origin) -> FieldSource:
        return FieldSource(self.field, bounds, interpolate=self.cfg.interpolation == "lagrange",
                           refreshes=self.cfg.field_refreshes, t_origin=t_origin,
                           enabled=self.cfg.field_enabled)

    @property
    def t(self) -> float:
        return float(self.cf[K.CF_T])

    def physical(self) -> tuple[np.ndarray, np.ndarray]:
        r, v = np.empty(3), np.empty(3)
        K.physical(self.code, self.y, self.source.bundle(self.t), self.window.delta_A,
                   self.window.delta_C, self.beta, r, v)
        return r, v

    def state(self) -> PhaseState:
        return PhaseState(self.cfg.formulation, self.y.copy(), self.t)

    def _derive_step(self, energy: float) -> None:
        k = orbital_wavenumber(min(energy, self.cfg.ionisation_threshold))
        n = self.cfg.steps_per_orbit
        if self.regularize:
            self.ds = 2.0 * math.pi / (k * n)
            self.gcap = self.source.spacing / self.ds if self.source.interpolate else math.inf
        else:
            self.ds = min(2.0 * math.pi / (k**3 * n), self.source.spacing)
            self.gcap = math.inf
        self.ci[K.CI_SINCE_DERIVE] = 0

    def _add_sample(self, flag: int) -> None:
        r, v = self.physical()
        energy, L, eps, rn = K.elements(r, v)
        self._merge_row(np.array([self.t, energy, L, eps, rn, flag], dtype=np.float64))

    def _merge_row(self, row: np.ndarray) -> None:
        if self._rows and self._rows[-1].shape[0] and self._rows[-1][-1, 0] == row[0]:
            last = self._rows[-1][-1]
            row[5] = float(int(last[5]) | int(row[5]))
            last[:] = row
        else:
            self._rows.append(row.reshape(1, 6).copy())

    def _event(self, kind: str, **data) -> dict:
        ev = {"kind": kind, "t": self.t, **data}
        self.events.append(ev)
        return ev

    def _params(self, t_max: float) -> np.ndarray:
        par = np.zeros(K.N_PARAMS)
        par[K.P_BETA] = self.beta
        par[K.P_DS] = self.ds
        par[K.P_GCAP] = self.gcap
        par[K.P_TMAX] = t_max
        par[K.P_TEVENT] = self._pending_switches[0][0] if self._pending_switches else math.inf
        par[K.P_FLOOR] = self.cfg.energy_floor
        par[K.P_THR] = self.cfg.ionisation_threshold
        par[K.P_DWELL] = self.cfg.ionisation_dwell
        par[K.P_GUARD] = self.cfg.guard_radius
        par[K.P_INTERVAL] = self.cfg.sample_interval
        fallback = 2 * self.cfg.steps_per_orbit
        par[K.P_MAXSTEPS] = max(1, fallback - int(self.ci[K.CI_SINCE_DERIVE]))
        return par

    # -- interventions --
    def push_to_floor(self) -> Optional[dict]:
        r, v = self.physical()
        v_new, ev = apply_energy_floor(r, v, self.cfg.energy_floor, self.rng)
        if ev is None:
            return None
        F = self.source.bundle(self.t)
        K.from_physical(self.code, r, v_new, F, self.window.delta_A, self.window.delta_C,
                        self.beta, self.y)
        ev = self._event(**ev)
        self._add_sample(K.FL_PUSH)
        return ev

    def switch(self, n_low: int, n_high: int, reason: str = "forced") -> dict:
        """Change the active window at the current time, keeping r and v continuous."""
        t = self.t
        F_old = self.source.bundle(t)
        r_before, v_before = self.physical()
        new_source = self._make_source((n_low, n_high), t)
        F_new = new_source.bundle(t)
        old_win = self.window
        new_win = switch_window(
            old_win, self.field, t, n_low, n_high,
            sampler=lambda b, tt: (F_old[K.A_LOW], F_old[K.A_HIGH], F_old[K.C_HIGH]),
            new_sampler=lambda b, tt: (F_new[K.A_LOW], F_new[K.A_HIGH], F_new[K.C_HIGH]))
        b = self.beta
        if self.code == K.SFORM:
            # via the (p, q) variables, which are unchanged by a switch
            p = self.y[3:] - b * (F_old[K.A_LOW] + old_win.delta_A)
            q = self.y[:3] + b * b * p
            self.y[3:] = p + b * (F_new[K.A_LOW] + new_win.delta_A)
            self.y[:3] = q - b * b * p
        self.window, self.source = new_win, new_source
        r_after, v_after = self.physical()
        ev = self._event(
            "switch", reason=reason, old=[old_win.n_low, old_win.n_high], new=[n_low, n_high],
            jump_r=float(np.max(np.abs(r_after - r_before))),
            jump_v=float(np.max(np.abs(v_after - v_before))),
            delta_A=float(np.linalg.norm(new_win.delta_A)),
            delta_C=float(np.linalg.norm(new_win.delta_C)),
            shift_drift=float(b * np.linalg.norm(new_win.delta_A)))
        self._add_sample(K.FL_SWITCH)
        return ev

    def schedule_switches(self, switches: Sequence[tuple[float, int, int]]) -> None:
        self._pending_switches = sorted((float(t), int(a), int(c)) for t, a, c in switches)

    def _poll_cutoff(self, energy: float) -> None:
        if not (isinstance(self.cfg.cutoff, MovingCutoff) and self.source.enabled):
            return
        req = moving_cutoff_controller(energy, self.k3_ref, self.cfg.cutoff, self.field.grid.N,
                                       self.cfg.formulation, self.field.grid.max_mode,
                                       self.cfg.ionisation_threshold)
        if req is not None and (req[0], req[1]) != self.source.bounds:
            self.switch(req[0], req[1], reason="moving_cutoff")
            self.k3_ref = req[2]
        elif req is not None:
            self.k3_ref = req[2]

    # -- main loop --
    def run(self, t_max: float, max_orbits: Optional[int] = None,
            checkpoint_path=None, checkpoint_every: int = 0) -> TrajectoryRecord:
        samples = np.empty((_SAMPLE_BUFFER, 6))
        win = self.source.window_ints(self.regularize)
        self.status = "running"
        while True:
            t = self.t
            if t >= t_max:
                self.status = "completed"
                break
            self.source.ensure(t, t + 4.0 * self.source.spacing if self.source.interpolate else t)
            events, ns = K.advance(self.code, self.y, self.cf, self.ci, self.prev_r,
                                   self.window.delta_A, self.window.delta_C, self.source._fld, win,
                                   self.source._nodes, self.source.meta, self._params(t_max), samples)
            if ns:
                for row in samples[:ns]:
                    self._merge_row(row.copy())
            if events & K.EV_NEED_NODES:
                self.source.ensure(self.t, self.cf[K.CF_NEED_T] + self.source.spacing)
                continue
            if events & K.EV_NONFINITE:
                self.status = "nonfinite"
                self._event("abort", reason="non-finite state at next step")
                log.error("non-finite state near t=%g; trajectory aborted", self.t)
                break
            if events & K.EV_SINGULAR:
                self.status = "singular"
                r, _ = self.physical()
                self._event("abort", reason="guard radius", r=float(np.linalg.norm(r)))
                log.error("trajectory entered guard radius at t=%g", self.t)
                break
            if events & K.EV_IONISED:
                self.status = "ionised"
                self.ionisation_time = float(self.cf[K.CF_ABOVE])
                self._event("ionisation", start=self.ionisation_time)
                break
            if events & K.EV_FLOOR:
                self.push_to_floor()
            if events & K.EV_SCHEDULED:
                while self._pending_switches and self._pending_switches[0][0] <= self.t:
                    _, a, c = self._pending_switches.pop(0)
                    self.switch(a, c)
                win = self.source.window_ints(self.regularize)
            if events & (K.EV_ORBIT | K.EV_DONE):
                r, v = self.physical()
                energy = K.elements(r, v)[0]
                if events & K.EV_ORBIT:
                    self.orbits += 1
                    self._poll_cutoff(energy)
                    win = self.source.window_ints(self.regularize)
                self._derive_step(energy)
                if events & K.EV_ORBIT:
                    if max_orbits is not None and self.orbits >= max_orbits:
                        self.status = "max_orbits"
                        self._add_sample(K.FL_FINAL)
                        break
                    if checkpoint_path is not None and checkpoint_every and self.orbits % checkpoint_every == 0:
                        self.save_checkpoint(checkpoint_path)
            if events & K.EV_TMAX:
                self.status = "completed"
                break
        return self.record()

    def record(self) -> TrajectoryRecord:
        table = np.concatenate(self._rows) if self._rows else np.zeros((0, 6))
        meta = {**self.meta, "formulation": self.cfg.formulation, "beta": self.beta,
                "Z": self.constants.Z, "steps": int(self.ci[K.CI_STEPS])}
        return TrajectoryRecord.from_table(table, events=[dict(e) for e in self.events],
                                           status=self.status, ionisation_time=self.ionisation_time,
                                           orbits=self.orbits, meta=meta)

    # -- checkpointing --
    def save_checkpoint(self, path) -> None:
        """Write the full carried state; the field is rebuilt from its seed on load."""
        if self.field is not None and self.field.seed is None:
            raise ValueError("checkpointing needs a seeded field realization")
        header = {
            "constants": dataclasses.asdict(self.constants),
            "integrator": self.cfg.to_dict(),
            "field": None if self.field is None else {
                "seed": self.field.seed, "N": self.field.grid.N,
                "max_mode": self.field.grid.max_mode, "cutoff_scale": self.field.cutoff_scale},
            "window": [self.window.n_low, self.window.n_high],
            "switch_log": self.window.switch_log,
            "source_origin": self.source.t_origin,
            "k3_ref": self.k3_ref, "ds": self.ds, "gcap": self.gcap,
            "orbits": self.orbits, "status": self.status,
            "ionisation_time": self.ionisation_time, "events": self.events,
            "meta": self.meta, "pending_switches": self._pending_switches,
            "rng": _rng_state_to_json(self.rng),
        }
        table = np.concatenate(self._rows) if self._rows else np.zeros((0, 6))
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header)), y=self.y, cf=self.cf, ci=self.ci,
                     prev_r=self.prev_r, delta_A=self.window.delta_A,
                     delta_C=self.window.delta_C, table=table)

    @classmethod
    def from_checkpoint(cls, path) -> "Trajectory":
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            arrays = {k: z[k].copy() for k in z.files if k != "header"}
        self = cls.__new__(cls)
        self.constants = PhysicalConstants(**header["constants"])
        self.cfg = IntegratorConfig.from_dict(header["integrator"])
        fp = header["field"]
        self.field = None if fp is None else build_field(
            fp["seed"], FrequencyGrid(fp["N"], fp["max_mode"]), fp["cutoff_scale"])
        self.beta = self.constants.beta
        self.code = formulation_code(self.cfg.formulation)
        self.regularize = self.cfg.time_regularization == "eccentric_anomaly"
        state = _rng_state_from_json(header["rng"])
        self.rng = np.random.Generator(getattr(np.random, state["bit_generator"])())
        self.rng.bit_generator.state = state
        self.window = FieldWindow(*header["window"], delta_A=arrays["delta_A"],
                                  delta_C=arrays["delta_C"],
                                  switch_log=[(t, tuple(a), tuple(b)) for t, a, b in header["switch_log"]])
        self.source = self._make_source(tuple(header["window"]), header["source_origin"])
        self.y, self.cf, self.ci, self.prev_r = arrays["y"], arrays["cf"], arrays["ci"], arrays["prev_r"]
        self.k3_ref, self.ds, self.gcap = header["k3_ref"], header["ds"], header["gcap"]
        self.orbits, self.status = header["orbits"], header["status"]
        self.ionisation_time = header["ionisation_time"]
        self.events, self.meta = header["events"], header["meta"]
        self._pending_switches = [tuple(s) for s in header["pending_switches"]]
        self._rows = [arrays["table"]] if len(arrays["table"]) else []
        return self


def _rng_state_to_json(rng: np.random.Generator) -> dict:
    def conv(x):
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, np.ndarray):
            return {"__array__": [int(i) for i in x], "dtype": str(x.dtype)}
        if isinstance(x, np.integer):
            return int(x)
        return x
    return conv(rng.bit_generator.state)


def _rng_state_from_json(state: dict) -> dict:
    def conv(x):
        if isinstance(x, dict):
            if "__array__" in x:
                return np.array(x["__array__"], dtype=x["dtype"])
            return {k: conv(v) for k, v in x.items()}
        return x
    return conv(state)
