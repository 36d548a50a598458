"""Conjectured ground-state phase-space density, its marginals and a matching sampler.

The density over energy and angular momentum is ``f(E, L) = (2/pi^3) L R^3
exp(-2R)`` with ``R = -1/E``. Sampling draws ``R`` from ``(4/3) R^4 exp(-2R)``
(a Gamma law with shape 5 and scale 1/2) and ``kappa = L / L_max`` from
``3 kappa^2``.

For reference, the Wigner function of the quantum ground state is nonzero
at zero momentum while ``P_p`` vanishes there; the two momentum laws differ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, stats

from .dynamics import OrbitElements, orbit_elements

R_BRACKET = (1e-8, 50.0)
MEAN_R = 2.5
MEAN_EPS = 3.0 * math.pi / 16.0
_GAMMA_R = stats.gamma(a=5, scale=0.5)
_GAMMA_r = stats.gamma(a=3, scale=0.5)


class RootFindingError(RuntimeError):
    pass


def _arr(x):
    return np.asarray(x, dtype=np.float64)


def density_f(E, L):
    """Phase-space density in ``(E, L)``; zero outside ``E < 0, 0 <= L <= sqrt(R/2)``."""
    E, L = np.broadcast_arrays(_arr(E), _arr(L))
    out = np.zeros(E.shape)
    bound = E < 0
    R = np.where(bound, -1.0 / np.where(bound, E, -1.0), 0.0)
    ok = bound & (L >= 0) & (L <= np.sqrt(0.5 * R))
    out[ok] = 2.0 / math.pi**3 * L[ok] * R[ok] ** 3 * np.exp(-2.0 * R[ok])
    return out if out.ndim else float(out)


def exceeds_max_angular_momentum(E, L):
    """Mask of points where ``density_f`` was zeroed because ``L > L_max``."""
    E, L = np.broadcast_arrays(_arr(E), _arr(L))
    return (E < 0) & (L > np.sqrt(0.5 * -1.0 / np.where(E < 0, E, -1.0)))


def _masked(x, mask, fn):
    x = _arr(x)
    out = np.zeros(x.shape)
    out[mask(x)] = fn(x[mask(x)])
    return out if out.ndim else float(out)


def pdf_E(E):
    return _masked(E, lambda e: e < 0, lambda e: 4.0 / 3.0 * np.abs(e) ** -6 * np.exp(-2.0 / np.abs(e)))


def pdf_eps(eps):
    return _masked(eps, lambda e: (e >= 0) & (e < 1), lambda e: 3.0 * e * np.sqrt(1.0 - e * e))


def pdf_kappa(kappa):
    return _masked(kappa, lambda k: (k > 0) & (k <= 1), lambda k: 3.0 * k * k)


def pdf_R(R):
    return _masked(R, lambda r: r > 0, lambda r: 4.0 / 3.0 * r**4 * np.exp(-2.0 * r))


def pdf_r(r):
    """Radial probability density of the quantum ground state, ``4 r^2 exp(-2r)``."""
    return _masked(r, lambda x: x >= 0, lambda x: 4.0 * x * x * np.exp(-2.0 * x))


def pdf_EL(E, L):
    """Joint density of energy and angular-momentum magnitude (not a product)."""
    E, L = np.broadcast_arrays(_arr(E), _arr(L))
    out = np.zeros(E.shape)
    ok = (E < 0) & (L >= 0) & ~exceeds_max_angular_momentum(E, L)
    a = np.abs(E[ok])
    out[ok] = 8.0 * math.sqrt(2.0) * L[ok] ** 2 * a**-4.5 * np.exp(-2.0 / a)
    return out if out.ndim else float(out)


def pdf_p(p):
    """Momentum density per unit 3-d momentum volume, by quadrature over ``R``.

    Integrating ``4 pi p^2 pdf_p(p)`` over ``p >= 0`` gives one.
    """
    p = _arr(p)

    def one(x):
        if x < 0:
            return 0.0
        if x == 0:
            return 0.0
        val, _ = integrate.quad(lambda R: R**6 * math.exp(-2.0 * R) / (1.0 + 0.5 * x * x * R) ** 5,
                                0.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)
        return 2.0 * x / math.pi * val

    out = np.vectorize(one, otypes=[float])(p)
    return out if out.ndim else float(out)


def position_density(r):
    """Spatial density ``exp(-2r)/pi`` of the ground state."""
    return np.exp(-2.0 * _arr(r)) / math.pi


def position_density_mc(r: float, n: int, rng: np.random.Generator, chunk: int = 1_000_000) -> tuple[float, float]:
    """Monte Carlo ``int d^3p f(E(r,p), L(r,p))`` at distance ``r``; returns (estimate, std error).

    Momenta are drawn uniformly in the ball ``|p| < sqrt(2/r)`` that holds
    all bound states.
    """
    pmax = math.sqrt(2.0 / r)
    volume = 4.0 / 3.0 * math.pi * pmax**3
    total = total2 = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        d = rng.standard_normal((m, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        pm = pmax * rng.random(m) ** (1.0 / 3.0)
        cos_t = d[:, 2]  # angle to the position vector, taken along z
        E = 0.5 * pm * pm - 1.0 / r
        L = r * pm * np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
        vals = density_f(E, L)
        total += vals.sum()
        total2 += (vals * vals).sum()
        done += m
    mean = total / n
    var = max(total2 / n - mean * mean, 0.0)
    return volume * mean, volume * math.sqrt(var / n)


# -- closed-form distribution functions ----------------------------------------------------

def survival_R(R):
    """``(1 + 2R + 2R^2 + 4/3 R^3 + 2/3 R^4) exp(-2R)``: probability of exceeding ``R``."""
    R = _arr(R)
    return (1.0 + 2.0 * R + 2.0 * R**2 + 4.0 / 3.0 * R**3 + 2.0 / 3.0 * R**4) * np.exp(-2.0 * R)


def cdf_R(R):
    return np.where(_arr(R) > 0, _GAMMA_R.cdf(R), 0.0)


def cdf_kappa(k):
    return np.clip(_arr(k), 0.0, 1.0) ** 3


def cdf_eps(e):
    e = np.clip(_arr(e), 0.0, 1.0)
    return 1.0 - (1.0 - e * e) ** 1.5


def cdf_E(E):
    E = _arr(E)
    neg = np.where(E < 0, E, -1.0)
    return np.where(E < 0, _GAMMA_R.cdf(-1.0 / neg), 1.0)


def cdf_r(r):
    return np.where(_arr(r) > 0, _GAMMA_r.cdf(r), 0.0)


# -- sampling ---------------------------------------------------------------------------------

def solve_R(u1, iterations: int = 200, tol: float = 1e-15) -> np.ndarray:
    """Invert the survival function: ``survival_R(R) = u1``.

    Bisection on the bracket ``[1e-8, 50]`` then two Newton polish steps
    kept inside the final bracket. Raises :class:`RootFindingError` if a
    root lies outside the bracket or bisection fails to shrink it.
    """
    u = _arr(u1)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u1 must lie in the open interval (0, 1)")
    lo = np.full(u.shape, R_BRACKET[0])
    hi = np.full(u.shape, R_BRACKET[1])
    outside = (survival_R(lo) < u) | (survival_R(hi) > u)
    if np.any(outside):
        raise RootFindingError(f"{int(outside.sum())} value(s) of u1 have roots outside {R_BRACKET}")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        above = survival_R(mid) > u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= tol * hi):
            break
    else:
        raise RootFindingError("bisection did not converge")
    R = 0.5 * (lo + hi)
    for _ in range(2):
        step = (survival_R(R) - u) / np.maximum(pdf_R(R), 1e-300)
        R = np.clip(R + step, lo, hi)
    return R[0] if scalar else R


@dataclass(frozen=True)
class InitialCondition:
    R: float
    kappa: float
    eps: float
    energy: float
    L: float
    r: np.ndarray
    v: np.ndarray
    start: str
    elements: OrbitElements


def _unit(v):
    return v / np.linalg.norm(v)


def place_orbit(R: float, kappa: float, L_hat, eps_hat, start: str = "perihelion"):
    """Position and velocity at an apsis of the orbit with the given shape and orientation."""
    L_hat, eps_hat = _unit(_arr(L_hat)), _unit(_arr(eps_hat))
    eps = math.sqrt(max(0.0, 1.0 - kappa * kappa))
    L = kappa * math.sqrt(0.5 * R)
    if start == "perihelion":
        dist, axis = 0.5 * R * (1.0 - eps), eps_hat
    elif start == "aphelion":
        dist, axis = 0.5 * R * (1.0 + eps), -eps_hat
    else:
        raise ValueError("start must be 'perihelion' or 'aphelion'")
    r = dist * axis
    v = (L / dist) * np.cross(L_hat, axis)
    return r, v


def random_orientation(rng: np.random.Generator):
    """Uniform angular-momentum direction and a uniform apsis direction orthogonal to it."""
    L_hat = _unit(rng.standard_normal(3))
    trial = np.array([1.0, 0.0, 0.0]) if abs(L_hat[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = _unit(np.cross(L_hat, trial))
    e2 = np.cross(L_hat, e1)
    phi = 2.0 * math.pi * rng.random()
    return L_hat, math.cos(phi) * e1 + math.sin(phi) * e2


def sample_initial_conditions(u1: float, u2: float, rng: Optional[np.random.Generator] = None,
                              start: Optional[str] = None) -> InitialCondition:
    """One initial state from two uniforms; orientation and apsis choice come from ``rng``."""
    if not 0 < u2 < 1:
        raise ValueError("u2 must lie in the open interval (0, 1)")
    R = float(solve_R(u1))
    kappa = float(u2) ** (1.0 / 3.0)
    rng = rng if rng is not None else np.random.default_rng()
    L_hat, eps_hat = random_orientation(rng)
    if start is None:
        start = "perihelion" if rng.random() < 0.5 else "aphelion"
    r, v = place_orbit(R, kappa, L_hat, eps_hat, start)
    eps = math.sqrt(max(0.0, 1.0 - kappa * kappa))
    return InitialCondition(R, kappa, eps, -1.0 / R, kappa * math.sqrt(0.5 * R), r, v, start,
                            orbit_elements(r, v))


def sample_shapes(n: int, rng: np.random.Generator) -> dict:
    """Vectorized draw of ``R``, ``kappa``, ``eps`` and ``E`` for ``n`` orbits."""
    u = rng.random((n, 2))
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    R = solve_R(u[:, 0])
    kappa = u[:, 1] ** (1.0 / 3.0)
    eps = np.sqrt(np.maximum(0.0, 1.0 - kappa * kappa))
    return {"R": R, "kappa": kappa, "eps": eps, "E": -1.0 / R}


# -- goodness of fit ------------------------------------------------------------------------------

@dataclass(frozen=True)
class HistogramReport:
    edges: np.ndarray
    heights: np.ndarray
    pdf_values: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    ks_critical_1pct: float
    n: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def integral(self) -> float:
        return float(np.sum(self.heights * np.diff(self.edges)))

    @property
    def passes(self) -> bool:
        return self.ks_statistic < self.ks_critical_1pct


def histogram_compare(samples, pdf: Callable, binning: Union[int, Sequence[float]] = 50,
                      cdf: Optional[Callable] = None,
                      support: Optional[tuple[float, float]] = None) -> HistogramReport:
    """Normalized histogram against ``pdf`` plus a Kolmogorov-Smirnov test.

    Without ``cdf`` the target distribution function is tabulated by
    integrating ``pdf`` over ``support`` (defaults to the sample range).
    """
    x = _arr(samples).ravel()
    if x.size == 0:
        raise ValueError("empty sample set")
    if x.size < 100:
        raise ValueError("histogram comparison needs at least 100 samples")
    if np.ndim(binning) == 0 and int(binning) < 2:
        raise ValueError("need at least two bins")
    rng_ = support if support is not None else (float(x.min()), float(x.max()))
    if np.ndim(binning) == 0 and rng_[1] - rng_[0] <= 1e-9 * max(1.0, abs(rng_[0])):
        # degenerate sample: unit-width range with the first bin centred on the data
        w = 1.0 / int(binning)
        rng_ = (rng_[0] - 0.5 * w, rng_[0] + 1.0 - 0.5 * w)
    counts, edges = np.histogram(x, bins=binning, range=rng_ if np.ndim(binning) == 0 else None)
    inside = counts.sum()
    heights = counts / (inside * np.diff(edges)) if inside else np.zeros(len(counts))
    centers = 0.5 * (edges[1:] + edges[:-1])
    if cdf is None:
        grid = np.linspace(rng_[0], rng_[1], 20001)
        cum = integrate.cumulative_trapezoid(pdf(grid), grid, initial=0.0)
        cdf = lambda q: np.interp(q, grid, cum, left=0.0, right=cum[-1])  # noqa: E731
    ks = stats.kstest(x, cdf)
    return HistogramReport(edges, heights, _arr(pdf(centers)), float(ks.statistic), float(ks.pvalue),
                           float(stats.kstwo.ppf(0.99, x.size)), int(x.size))
