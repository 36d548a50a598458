"""One-dimensional spectral representation of the zero-point field.

A realization holds two standard Gaussian coefficients ``A_n``, ``B_n`` per
mode and Cartesian component on the uniform grid ``omega_n = n / N``. The
three fields share those coefficients::

    C(t) = sum_n a^C_n (-A_n cos w_n t - B_n sin w_n t)
    A(t) = sum_n a^A_n ( A_n sin w_n t - B_n cos w_n t)     (A = dC/dt)
    E(t) = sum_n a^E_n (-A_n cos w_n t - B_n sin w_n t)     (E = -dA/dt)

with amplitudes ``sqrt(dw w^3/pi)``, ``sqrt(dw w/pi)``, ``sqrt(dw/(pi w))``
for E, A, C, each times the cutoff ``exp(-cutoff_scale * w / 2)``. The sign
of the ``B_n`` terms is chosen so that the three sums are exact derivatives
of one another; statistically it is immaterial since ``B_n`` is symmetric.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .reduction import ReductionPlan, chunked_sum

Band = Optional[Union[Tuple[int, int], "FieldWindow"]]


@dataclass(frozen=True)
class FrequencyGrid:
    mesh_density: int
    max_mode: int

    def __post_init__(self):
        if int(self.mesh_density) != self.mesh_density or self.mesh_density < 1:
            raise ValueError(f"mesh density N must be a positive integer, got {self.mesh_density}")
        if int(self.max_mode) != self.max_mode or self.max_mode < 1:
            raise ValueError(f"max_mode must be a positive integer, got {self.max_mode}")

    @property
    def N(self) -> int:
        return self.mesh_density

    @property
    def delta_omega(self) -> float:
        return 1.0 / self.mesh_density

    @property
    def omega(self) -> np.ndarray:
        return np.arange(1, self.max_mode + 1, dtype=np.float64) / self.mesh_density


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FieldRealization:
    """Frozen coefficients of one noise sample path, with cached amplitudes.

    ``coeff_A`` and ``coeff_B`` have shape ``(3, max_mode)``; column ``n - 1``
    belongs to mode ``n``.
    """

    grid: FrequencyGrid
    coeff_A: np.ndarray
    coeff_B: np.ndarray
    cutoff_scale: float
    seed: Optional[int] = None
    omega: np.ndarray = dc_field(init=False, repr=False)
    amp_E: np.ndarray = dc_field(init=False, repr=False)
    amp_A: np.ndarray = dc_field(init=False, repr=False)
    amp_C: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        m = self.grid.max_mode
        for name in ("coeff_A", "coeff_B"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (3, m):
                raise ValueError(f"{name} must have shape (3, {m}), got {arr.shape}")
            object.__setattr__(self, name, _readonly(arr))
        if self.cutoff_scale < 0:
            raise ValueError("cutoff_scale must be nonnegative")
        w = self.grid.omega
        dw = self.grid.delta_omega
        damp = np.exp(-0.5 * self.cutoff_scale * w)
        object.__setattr__(self, "omega", _readonly(w))
        object.__setattr__(self, "amp_E", _readonly(np.sqrt(dw * w**3 / np.pi) * damp))
        object.__setattr__(self, "amp_A", _readonly(np.sqrt(dw * w / np.pi) * damp))
        object.__setattr__(self, "amp_C", _readonly(np.sqrt(dw / (np.pi * w)) * damp))

    def amplitude(self, kind: str) -> np.ndarray:
        return {"E": self.amp_E, "A": self.amp_A, "C": self.amp_C}[kind]


def build_field(seed: int, grid: FrequencyGrid, cutoff_scale: float) -> FieldRealization:
    """Draw a realization from the Philox counter-based generator keyed by ``seed``.

    The draw order is ``A`` then ``B``, each as a ``(3, max_mode)`` block of
    standard normals, so a given seed reproduces identical coefficients.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    coeffs = rng.standard_normal((2, 3, grid.max_mode))
    return FieldRealization(grid, coeffs[0], coeffs[1], cutoff_scale, seed)


@dataclass
class FieldWindow:
    """Active mode bounds and the continuity shifts accumulated at switches.

    The potential formulations take the ``A`` field from the low band
    ``[1, n_low]`` and the ``C`` field from the high band ``[n_low+1, n_high]``;
    ``n_low = 0`` puts the whole spectrum in ``C``.
    """

    n_low: int
    n_high: int
    delta_A: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    delta_C: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    switch_log: list = dc_field(default_factory=list)

    def __post_init__(self):
        self.n_low, self.n_high = int(self.n_low), int(self.n_high)
        if not 0 <= self.n_low < self.n_high:
            raise ValueError(f"window bounds must satisfy 0 <= n_low < n_high, got ({self.n_low}, {self.n_high})")
        self.delta_A = np.array(self.delta_A, dtype=np.float64)
        self.delta_C = np.array(self.delta_C, dtype=np.float64)

    def check(self, grid: FrequencyGrid) -> None:
        if self.n_high > grid.max_mode:
            raise ValueError(f"n_high={self.n_high} exceeds max_mode={grid.max_mode}")

    @property
    def low_band(self) -> Tuple[int, int]:
        return (1, self.n_low)

    @property
    def high_band(self) -> Tuple[int, int]:
        return (self.n_low + 1, self.n_high)


def _band(field: FieldRealization, band: Band) -> Tuple[int, int]:
    if band is None:
        return 1, field.grid.max_mode
    if isinstance(band, FieldWindow):
        band.check(field.grid)
        return 1, band.n_high
    lo, hi = int(band[0]), int(band[1])
    if lo < 1:
        raise ValueError("mode index 0 is excluded (the C amplitude diverges at omega = 0)")
    if hi > field.grid.max_mode:
        raise ValueError(f"band upper index {hi} exceeds max_mode={field.grid.max_mode}")
    return lo, hi


_PHASES = {
    # (coefficient on A_n cos, on A_n sin, on B_n cos, on B_n sin)
    "E": (-1.0, 0.0, 0.0, -1.0),
    "C": (-1.0, 0.0, 0.0, -1.0),
    "A": (0.0, 1.0, -1.0, 0.0),
}


def mode_terms(field: FieldRealization, band: Band, t: float, kind: str) -> np.ndarray:
    """Per-mode contributions to field ``kind`` at time ``t``, shape ``(m, 3)``."""
    lo, hi = _band(field, band)
    sl = slice(lo - 1, hi)
    ph = field.omega[sl] * float(t)
    c, s = np.cos(ph), np.sin(ph)
    ac, as_, bc, bs = _PHASES[kind]
    A, B = field.coeff_A[:, sl], field.coeff_B[:, sl]
    terms = (ac * c + as_ * s) * A + (bc * c + bs * s) * B
    return (terms * field.amplitude(kind)[sl]).T


def _eval(field, band, t, kind, plan):
    lo, hi = _band(field, band)
    t_arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t_arr)):
        raise ValueError("t must be finite")
    if hi < lo:
        return np.zeros(t_arr.shape + (3,))
    if plan is not None:
        flat = [chunked_sum(mode_terms(field, (lo, hi), tt, kind), plan) for tt in t_arr.ravel()]
        return np.array(flat).reshape(t_arr.shape + (3,))
    sl = slice(lo - 1, hi)
    ph = np.multiply.outer(t_arr, field.omega[sl])
    c, s = np.cos(ph), np.sin(ph)
    amp = field.amplitude(kind)[sl]
    ac, as_, bc, bs = _PHASES[kind]
    A, B = field.coeff_A[:, sl] * amp, field.coeff_B[:, sl] * amp
    out = np.zeros(t_arr.shape + (3,))
    for coef, trig, mat in ((ac, c, A), (as_, s, A), (bc, c, B), (bs, s, B)):
        if coef:
            out += coef * (trig @ mat.T)
    return out


def eval_E(field: FieldRealization, band: Band, t, plan: Optional[ReductionPlan] = None) -> np.ndarray:
    """Electric field at time(s) ``t``; returns shape ``t.shape + (3,)``."""
    return _eval(field, band, t, "E", plan)


def eval_A(field: FieldRealization, band: Band, t, plan: Optional[ReductionPlan] = None) -> np.ndarray:
    return _eval(field, band, t, "A", plan)


def eval_C(field: FieldRealization, band: Band, t, plan: Optional[ReductionPlan] = None) -> np.ndarray:
    """Time integral of ``A``; the band must not contain mode 0."""
    return _eval(field, band, t, "C", plan)


# -- analytic correlation targets ---------------------------------------------

def correlation_EE_theory(t, N: int, cutoff_scale: float):
    """Closed form of <E_a(t) E_a(0)> for the infinite mode sum on mesh 1/N.

    Summing n^3 q^n exactly gives ``(3 + 2 sinh^2 z) / sinh^4 z`` with
    ``z = (cutoff_scale + i t) / 2N``.
    """
    z = (cutoff_scale + 1j * np.asarray(t, dtype=np.float64)) / (2.0 * N)
    sh2 = np.sinh(z) ** 2
    return np.real((3.0 + 2.0 * sh2) / sh2**2) / (8.0 * np.pi * N**4)


def correlation_EE_limit(t, cutoff_scale: float):
    """Continuum (N -> infinity) limit ``(6/pi) Re (t - i cutoff_scale)^-4``."""
    t = np.asarray(t, dtype=np.float64)
    return 6.0 / np.pi * np.real(1.0 / (t - 1j * cutoff_scale) ** 4)


def correlation_AA_theory(t, N: int, cutoff_scale: float):
    z = (cutoff_scale + 1j * np.asarray(t, dtype=np.float64)) / (2.0 * N)
    return np.real(1.0 / np.sinh(z) ** 2) / (4.0 * np.pi * N**2)


def correlation_AA_limit(t, cutoff_scale: float):
    t = np.asarray(t, dtype=np.float64)
    return np.real(1.0 / (cutoff_scale + 1j * t) ** 2) / np.pi


def correlation_modesum(t, grid: FrequencyGrid, cutoff_scale: float, kind: str = "E",
                        band: Optional[Tuple[int, int]] = None):
    """Expected correlation of a finite band, ``sum_n amp_n^2 cos(w_n t)``."""
    lo, hi = band if band is not None else (1, grid.max_mode)
    n = np.arange(lo, hi + 1, dtype=np.float64)
    w = n / grid.N
    p = {"E": 3, "A": 1, "C": -1}[kind]
    amp2 = w**p / (np.pi * grid.N) * np.exp(-cutoff_scale * w)
    return np.cos(np.multiply.outer(np.asarray(t, dtype=np.float64), w)) @ amp2


def empirical_correlation(fields: Sequence[FieldRealization], kind: str, lags, origins,
                          mode_chunk: int = 4096):
    """Ensemble and time-origin average of ``X_a(s + t) X_b(s)``.

    Returns ``(auto, cross)``: ``auto[i]`` averages the same-component product
    over realizations, components and origins for ``lags[i]``; ``cross[i]``
    averages the x-y and y-z products.
    """
    fields = list(fields)
    grid, cut = fields[0].grid, fields[0].cutoff_scale
    for f in fields:
        if f.grid != grid or f.cutoff_scale != cut:
            raise ValueError("all realizations must share the grid and cutoff")
    lags = np.asarray(lags, dtype=np.float64)
    origins = np.asarray(origins, dtype=np.float64)
    times = np.concatenate([origins, (origins[None, :] + lags[:, None]).ravel()])
    amp = fields[0].amplitude(kind)
    ac, as_, bc, bs = _PHASES[kind]
    A = np.concatenate([f.coeff_A for f in fields])  # (3R, M)
    B = np.concatenate([f.coeff_B for f in fields])
    X = np.zeros((A.shape[0], times.size))
    for start in range(0, grid.max_mode, mode_chunk):
        sl = slice(start, min(start + mode_chunk, grid.max_mode))
        ph = np.multiply.outer(times, fields[0].omega[sl])
        c, s = np.cos(ph), np.sin(ph)
        Aa, Ba = A[:, sl] * amp[sl], B[:, sl] * amp[sl]
        for coef, trig, mat in ((ac, c, Aa), (as_, s, Aa), (bc, c, Ba), (bs, s, Ba)):
            if coef:
                X += coef * (mat @ trig.T)
    X = X.reshape(len(fields), 3, times.size)
    x0 = X[:, :, : origins.size]
    xt = X[:, :, origins.size:].reshape(len(fields), 3, lags.size, origins.size)
    auto = np.mean(xt * x0[:, :, None, :], axis=(0, 1, 3))
    cross = 0.5 * (np.mean(xt[:, 0] * x0[:, 1, None, :], axis=(0, 2))
                   + np.mean(xt[:, 1] * x0[:, 2, None, :], axis=(0, 2)))
    return auto, cross


# -- window switching -----------------------------------------------------------

Sampler = Callable[[Tuple[int, int], float], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def exact_sampler(field: FieldRealization) -> Sampler:
    """Sampler returning ``(A_low, A_high, C_high)`` by direct summation."""

    def sample(bounds, t):
        n_low, n_high = bounds
        a_low = eval_A(field, (1, n_low), t) if n_low > 0 else np.zeros(3)
        a_high = eval_A(field, (n_low + 1, n_high), t)
        c_high = eval_C(field, (n_low + 1, n_high), t)
        return a_low, a_high, c_high

    return sample


def switch_window(window: FieldWindow, field: FieldRealization, t_switch: float,
                  new_low: int, new_high: int, sampler: Optional[Sampler] = None,
                  new_sampler: Optional[Sampler] = None) -> FieldWindow:
    """Move to new bounds and fold the field mismatch into the shifts.

    ``delta_A`` gains ``A + dC/dt - A' - dC'/dt`` and ``delta_C`` gains
    ``C - C'`` evaluated at ``t_switch``, so that the reconstructed position
    and velocity do not jump. ``sampler``/``new_sampler`` supply the field
    values on the old/new bounds; both default to direct summation.
    """
    new = FieldWindow(new_low, new_high)
    new.check(field.grid)
    window.check(field.grid)
    if window.switch_log and t_switch < window.switch_log[-1][0]:
        raise ValueError("switch times must be nondecreasing")
    sampler = sampler or exact_sampler(field)
    new_sampler = new_sampler or exact_sampler(field)
    a_lo, a_hi, c_hi = sampler((window.n_low, window.n_high), t_switch)
    a_lo2, a_hi2, c_hi2 = new_sampler((new_low, new_high), t_switch)
    new.delta_A = window.delta_A + (a_lo - a_lo2) + (a_hi - a_hi2)
    new.delta_C = window.delta_C + (c_hi - c_hi2)
    new.switch_log = window.switch_log + [
        (float(t_switch), (window.n_low, window.n_high), (new.n_low, new.n_high))]
    return new


# -- spectrum dump --------------------------------------------------------------

SPECTRUM_COLUMNS = ["n", "omega", "amp_E", "amp_A", "amp_C",
                    "A_x", "A_y", "A_z", "B_x", "B_y", "B_z"]


def write_spectrum(field: FieldRealization, path) -> None:
    """Write one comma-separated record per mode (header first)."""
    n = np.arange(1, field.grid.max_mode + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPECTRUM_COLUMNS)
        for i in range(field.grid.max_mode):
            row = [field.omega[i], field.amp_E[i], field.amp_A[i], field.amp_C[i],
                   *field.coeff_A[:, i], *field.coeff_B[:, i]]
            w.writerow([int(n[i])] + [repr(float(x)) for x in row])


def read_spectrum(path) -> dict:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(SPECTRUM_COLUMNS)}


def correlation_survey(N: int = 1000, seeds: int = 200, max_mode: int = 50_000,
                       cutoff_scale: float = 8.0, lags: Sequence[float] = (0.0, 0.5, 1.0, 5.0),
                       n_origins: int = 100, master_seed: int = 0, batch: int = 50) -> dict:
    """Empirical E and A autocorrelations over many realizations against the closed forms.

    Each realization is sampled at ``n_origins`` random time origins spread
    over one grid period ``2 pi N``. Returns per-kind arrays of empirical
    values, theory values and relative errors, plus the cross-component
    estimate scaled by the zero-lag theory value.
    """
    from .seeding import field_seed

    grid = FrequencyGrid(N, max_mode)
    lags = np.asarray(lags, dtype=np.float64)
    origins = np.random.default_rng(master_seed).uniform(0.0, 2.0 * np.pi * N, n_origins)
    sums = {k: np.zeros(lags.size) for k in ("E", "A")}
    cross = {k: np.zeros(lags.size) for k in ("E", "A")}
    for start in range(0, seeds, batch):
        fields = [build_field(field_seed(master_seed, i), grid, cutoff_scale)
                  for i in range(start, min(start + batch, seeds))]
        for kind in ("E", "A"):
            auto, xc = empirical_correlation(fields, kind, lags, origins)
            sums[kind] += auto * len(fields)
            cross[kind] += xc * len(fields)
    theory = {"E": correlation_EE_theory(lags, N, cutoff_scale),
              "A": correlation_AA_theory(lags, N, cutoff_scale)}
    zero_lag = {"E": correlation_EE_theory(0.0, N, cutoff_scale),
                "A": correlation_AA_theory(0.0, N, cutoff_scale)}
    out = {"lags": lags}
    for kind in ("E", "A"):
        emp = sums[kind] / seeds
        out[kind] = {"empirical": emp, "theory": theory[kind],
                     "relative_error": np.abs(emp / theory[kind] - 1.0),
                     "cross_over_zero_lag": cross[kind] / seeds / zero_lag[kind]}
    return out
