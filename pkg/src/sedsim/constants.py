"""Physical constants and Bohr-unit conversions.

All dynamical quantities in the package are expressed in Bohr units for a
nucleus of charge ``Z``: lengths in ``a0 = hbar/(Z alpha m c)``, times in
``tau0 = hbar/(Z^2 alpha^2 m c^2)``; the Bohr period is ``2 pi tau0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants as _sc

FINE_STRUCTURE = _sc.alpha

# hbar / (m_e c^2 alpha^2): the atomic unit of time for Z = 1, in seconds
_TAU0_Z1 = _sc.hbar / (_sc.m_e * _sc.c**2 * _sc.alpha**2)


@dataclass(frozen=True)
class PhysicalConstants:
    """Nuclear charge, fine-structure constant and the derived coupling ``beta``.

    ``coupling`` multiplies ``beta`` (damping and noise together). It is 1 for
    physical runs; 0 gives the unperturbed Kepler problem.
    """

    Z: int = 1
    alpha: float = FINE_STRUCTURE
    coupling: float = 1.0

    def __post_init__(self):
        if self.Z <= 0:
            raise ValueError(f"Z must be positive, got {self.Z}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.coupling < 0:
            raise ValueError(f"coupling must be nonnegative, got {self.coupling}")

    @property
    def beta(self) -> float:
        return self.coupling * math.sqrt(2.0 / 3.0) * self.Z * self.alpha**1.5

    @property
    def cutoff_scale(self) -> float:
        """Z^2 alpha^2, the exponent scale of the spectral cutoff."""
        return (self.Z * self.alpha) ** 2

    @property
    def tau0_seconds(self) -> float:
        """Bohr time in seconds (uses the physical alpha only through ``alpha``)."""
        return _TAU0_Z1 * (_sc.alpha / self.alpha) ** 2 / self.Z**2

    @property
    def damping_time(self) -> float:
        """Radiative damping time 1/beta^2 in Bohr times (inf when beta = 0)."""
        b = self.beta
        return math.inf if b == 0 else 1.0 / b**2


BOHR_PERIOD = 2.0 * math.pi
