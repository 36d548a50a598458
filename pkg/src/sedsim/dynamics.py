"""Coulomb dynamics, Kepler elements and the interchangeable equation-of-motion forms.

All quantities are in Bohr units (lengths a0, times tau0). The Newton form
integrates position and velocity with radiation damping and the electric
field. The potential forms integrate smoother variables from which the
physical position and velocity are reconstructed:

* ``pure_gc``:  r = q + beta (C + dC),  q' = p + beta^2 f + beta dA,  p' = f
* ``mixed_gc``: as ``pure_gc`` with the low band carried by A,
  q' = p + beta^2 f + beta (A_low + dA)
* ``s_form``:   s'' = f(r) - beta E_low,  r = s + beta^2 s' + beta (C + dC) - beta^3 (A_low + dA)

``dA`` and ``dC`` are the window-switch shifts (zero before any switch).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K

FORMULATIONS = {"newton": K.NEWTON, "pure_gc": K.PQ, "mixed_gc": K.PQ, "s_form": K.SFORM}


def formulation_code(name: str) -> int:
    try:
        return FORMULATIONS[name]
    except KeyError:
        raise ValueError(f"unknown formulation {name!r}; choose from {sorted(FORMULATIONS)}") from None


def _vec(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.shape[-1:] != (3,):
        raise ValueError("expected 3-vector(s)")
    return a


def coulomb_force(r) -> np.ndarray:
    """Attractive inverse-square force ``-r/|r|^3``; accepts stacked vectors."""
    r = _vec(r)
    rn = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(rn == 0):
        raise ValueError("Coulomb force is singular at r = 0")
    return -r / rn**3


def force_gradient_dot(r, v) -> np.ndarray:
    """Directional derivative of the Coulomb force, ``(grad f) . v``."""
    r, v = _vec(r), _vec(v)
    rn = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(rn == 0):
        raise ValueError("force gradient is singular at r = 0")
    rhat = r / rn
    return -(v - 3.0 * np.sum(rhat * v, axis=-1, keepdims=True) * rhat) / rn**3


@dataclass(frozen=True)
class OrbitElements:
    energy: float
    L_vec: np.ndarray
    eps_vec: np.ndarray
    eps: float
    R: Optional[float]
    kappa: Optional[float]

    @property
    def L(self) -> float:
        return float(np.linalg.norm(self.L_vec))

    @property
    def bound(self) -> bool:
        return self.energy < 0


def orbit_elements(r, p) -> OrbitElements:
    """Kepler invariants of one state; ``R`` and ``kappa`` are None when unbound."""
    r, p = _vec(r), _vec(p)
    rn = float(np.linalg.norm(r))
    if rn == 0:
        raise ValueError("orbit elements undefined at r = 0")
    p2 = float(p @ p)
    energy = 0.5 * p2 - 1.0 / rn
    L_vec = np.cross(r, p)
    eps_vec = p2 * r - float(p @ r) * p - r / rn
    R = kappa = None
    if energy < 0:
        R = -1.0 / energy
        kappa = float(np.linalg.norm(L_vec)) / math.sqrt(0.5 * R)
    return OrbitElements(energy, L_vec, eps_vec, float(np.linalg.norm(eps_vec)), R, kappa)


def orbital_wavenumber(energy: float) -> float:
    """``k = sqrt(-2E)``; the Kepler angular frequency is ``k**3``."""
    if not energy < 0:
        raise ValueError(f"orbital wavenumber needs a bound energy, got {energy}")
    return math.sqrt(-2.0 * energy)


def orbital_period(energy: float) -> float:
    return 2.0 * math.pi / orbital_wavenumber(energy) ** 3


def orbit_radius(R: float, eps: float, phi):
    """Radius at true anomaly ``phi`` of a bound orbit with size ``R = -1/E``."""
    if not 0 <= eps < 1:
        raise ValueError("eccentricity must lie in [0, 1)")
    return (1.0 - eps**2) * R / (2.0 * (1.0 + eps * np.cos(phi)))


def orbit_geometry(elements: OrbitElements, phi):
    if not elements.bound:
        raise ValueError("orbit geometry needs bound elements")
    return orbit_radius(elements.R, elements.eps, phi)


def apsides(R: float, eps: float) -> tuple[float, float]:
    """Perihelion and aphelion distances ``R(1 -/+ eps)/2``."""
    return 0.5 * R * (1.0 - eps), 0.5 * R * (1.0 + eps)


@dataclass
class PhaseState:
    """Six-component state of one formulation at time ``t``.

    Newton stores ``(r, v)``; the grand-canonical forms store ``(p, q)``;
    the s-form stores ``(s, s')``.
    """

    formulation: str
    y: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        formulation_code(self.formulation)
        self.y = np.array(self.y, dtype=np.float64).reshape(6)


# -- field bundles -----------------------------------------------------------------

def bundle(E_low=0.0, E_high=0.0, A_low=0.0, A_high=0.0, C_high=0.0) -> np.ndarray:
    """Pack band-resolved field values into the ``(5, 3)`` layout the kernels use."""
    out = np.zeros((5, 3))
    for row, val in enumerate((E_low, E_high, A_low, A_high, C_high)):
        out[row] = val
    return out


def physical_state(state: PhaseState, fields: np.ndarray, beta: float,
                   delta_A=None, delta_C=None) -> tuple[np.ndarray, np.ndarray]:
    """Physical position and velocity reconstructed from a formulation state."""
    dA = np.zeros(3) if delta_A is None else np.asarray(delta_A, dtype=np.float64)
    dC = np.zeros(3) if delta_C is None else np.asarray(delta_C, dtype=np.float64)
    r, v = np.empty(3), np.empty(3)
    K.physical(formulation_code(state.formulation), state.y, np.asarray(fields, dtype=np.float64),
               dA, dC, float(beta), r, v)
    return r, v


def state_from_physical(formulation: str, r, v, fields: np.ndarray, beta: float,
                        delta_A=None, delta_C=None, t: float = 0.0) -> PhaseState:
    """Inverse of :func:`physical_state` at the same field values."""
    dA = np.zeros(3) if delta_A is None else np.asarray(delta_A, dtype=np.float64)
    dC = np.zeros(3) if delta_C is None else np.asarray(delta_C, dtype=np.float64)
    r = _vec(r)
    if np.linalg.norm(r) == 0:
        raise ValueError("state reconstruction is singular at r = 0")
    y = np.empty(6)
    K.from_physical(formulation_code(formulation), r, _vec(v), np.asarray(fields, dtype=np.float64),
                    dA, dC, float(beta), y)
    return PhaseState(formulation, y, t)


def state_neglecting_beta(formulation: str, r, v, t: float = 0.0) -> PhaseState:
    """Initial state that ignores the field shifts: ``q = r``, ``p = v`` (or ``s = r``, ``s' = v``)."""
    r, v = _vec(r), _vec(v)
    if formulation_code(formulation) == K.PQ:
        return PhaseState(formulation, np.concatenate([v, r]), t)
    return PhaseState(formulation, np.concatenate([r, v]), t)


def _rhs(formulation, state_y, fields, beta, delta_A, delta_C):
    code = formulation_code(formulation)
    y = np.asarray(state_y, dtype=np.float64).reshape(6)
    dA = np.zeros(3) if delta_A is None else np.asarray(delta_A, dtype=np.float64)
    dC = np.zeros(3) if delta_C is None else np.asarray(delta_C, dtype=np.float64)
    r, v = np.empty(3), np.empty(3)
    K.physical(code, y, fields, dA, dC, float(beta), r, v)
    if np.linalg.norm(r) == 0:
        raise ValueError("equation of motion is singular at r = 0")
    dy = np.empty(6)
    K.deriv(code, y, r, fields, dA, float(beta), dy)
    return dy


def rhs_newton(y, E_field, beta: float) -> np.ndarray:
    """d/dt of ``(r, v)``: ``v' = f + beta^2 (grad f).v - beta E``."""
    return _rhs("newton", y, bundle(E_high=E_field), beta, None, None)


def rhs_pure_gc(y, C_field, beta: float, delta_A=None, delta_C=None) -> np.ndarray:
    """d/dt of ``(p, q)`` with the whole spectrum in ``C``."""
    return _rhs("pure_gc", y, bundle(C_high=C_field), beta, delta_A, delta_C)


def rhs_mixed_gc(y, A_low, C_high, beta: float, delta_A=None, delta_C=None) -> np.ndarray:
    """d/dt of ``(p, q)`` with modes below the split carried by ``A``."""
    return _rhs("mixed_gc", y, bundle(A_low=A_low, C_high=C_high), beta, delta_A, delta_C)


def rhs_s_form(y, C_field, beta: float, E_low=0.0, A_low=0.0, delta_A=None,
               delta_C=None) -> np.ndarray:
    """d/dt of ``(s, s')``; ``E_low``/``A_low`` are only nonzero for a split spectrum."""
    return _rhs("s_form", y, bundle(E_low=E_low, A_low=A_low, C_high=C_field),
                beta, delta_A, delta_C)


def physical_velocity(formulation: str, y, fields, beta, delta_A=None, delta_C=None) -> np.ndarray:
    return physical_state(PhaseState(formulation, y), fields, beta, delta_A, delta_C)[1]
