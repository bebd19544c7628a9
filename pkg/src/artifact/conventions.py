"""Conventions shared by every module.

Quadratures are ``Q_theta = (a e^{-i theta} + a^dag e^{i theta}) / sqrt 2`` so
vacuum variance is 1/2, ``<n|X_theta> = psi_n(X) e^{i n theta}`` and a coherent
state ``|alpha e^{i phi}>`` has mean ``sqrt 2 |alpha| cos(theta - phi)``.  A
phase shift of the signal by ``phi`` therefore enters the measured quadrature
phase with a negative sign.

Squeezing ``zeta > 0`` means the X quadrature (theta = 0) is the squeezed one.
Logarithmic negativity is reported in bits unless asked otherwise.
"""
import numpy as np

VACUUM_VARIANCE = 0.5
QUADRATURE_PHASE_SIGN = -1  # sign with which a signal phase enters theta
NEGATIVITY_BASE = 2


def coherent_mean(alpha: complex, theta: float) -> float:
    return float(np.sqrt(2) * np.abs(alpha) * np.cos(theta - np.angle(alpha)))
