"""State constructors and closed-form quadrature statistics.

Every constructor truncates at the space cutoff, renormalizes, and records
the discarded weight on the returned ``StateVector.discarded``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .fock import DensityOperator, FockSpace, StateVector, basis_state, embed_tensor

MAX_ZETA = 2.0
DEFAULT_MAX_DISCARD = 1e-2


@dataclass(frozen=True)
class LossSpec:
    """Amplitude transmissions of up to two channels; power loss R = 1 - tau^2."""

    tau1: float = 1.0
    tau2: float = 1.0

    def __post_init__(self):
        for t in (self.tau1, self.tau2):
            if not 0.0 <= t <= 1.0:
                raise ValueError("amplitude transmission must lie in [0, 1]")

    @classmethod
    def from_power(cls, T1: float = 1.0, T2: float = 1.0) -> "LossSpec":
        return cls(float(np.sqrt(T1)), float(np.sqrt(T2)))

    @property
    def R1(self) -> float:
        return 1.0 - self.tau1 ** 2

    @property
    def R2(self) -> float:
        return 1.0 - self.tau2 ** 2


def _finish(space, amps, total_weight, max_discard, what):
    kept = float(np.sum(np.abs(amps) ** 2))
    discarded = max(0.0, total_weight - kept)
    if discarded > max_discard:
        raise ValueError(f"{what}: truncation at cutoff {space.cutoff} discards {discarded:.3g} "
                         f"of the norm (limit {max_discard:g}); raise the cutoff")
    return StateVector(space, amps / np.sqrt(kept), discarded=discarded)


def fock(n: int, space: FockSpace | None = None) -> StateVector:
    space = space or FockSpace(1, max(n, 1))
    occ = (n,) if space.modes == 1 else None
    if occ is None:
        raise ValueError("use basis_state for multimode Fock states")
    return basis_state(space, occ)


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    mag = np.abs(alpha)
    if mag == 0:
        out = np.zeros(cutoff + 1, complex)
        out[0] = 1.0
        return out
    logmag = n * np.log(mag) - 0.5 * gammaln(n + 1) - 0.5 * mag ** 2
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent(alpha: complex, space: FockSpace | None = None, max_discard: float = DEFAULT_MAX_DISCARD,
             guard: bool = True) -> StateVector:
    """Single-mode coherent state, or a product of coherent states for a sequence of amplitudes."""
    alphas = np.atleast_1d(np.asarray(alpha, dtype=complex))
    if space is None:
        space = FockSpace(len(alphas), max(4, int(np.ceil(4 * np.max(np.abs(alphas)) ** 2))))
    if len(alphas) != space.modes:
        raise ValueError("need one amplitude per mode")
    parts = []
    for a in alphas:
        if guard and abs(a) ** 2 > space.cutoff / 4:
            raise ValueError(f"|alpha|^2 = {abs(a) ** 2:.3g} exceeds cutoff/4 = {space.cutoff / 4:g}")
        parts.append(_finish(FockSpace(1, space.cutoff), coherent_amplitudes(a, space.cutoff), 1.0,
                             max_discard, "coherent"))
    if len(parts) == 1:
        return parts[0]
    out = embed_tensor(parts)
    discarded = 1 - np.prod([1 - p.discarded for p in parts])
    return StateVector(space, out.amplitudes, discarded=float(discarded))


def _zeta_guard(zeta, space):
    if abs(zeta) > MAX_ZETA:
        raise ValueError(f"|zeta| = {abs(zeta):g} exceeds {MAX_ZETA}")
    if abs(zeta) > 0.5 and space.cutoff < 10:
        raise ValueError("zeta > 0.5 needs cutoff >= 10")


def sms_vacuum(zeta: float, space: FockSpace | None = None, max_discard: float = DEFAULT_MAX_DISCARD) -> StateVector:
    """Single-mode squeezed vacuum, X quadrature squeezed for zeta > 0."""
    space = space or FockSpace(1, 10)
    if space.modes != 1:
        raise ValueError("single-mode squeezed vacuum needs a one-mode space")
    _zeta_guard(zeta, space)
    amps = np.zeros(space.dim, complex)
    t = np.tanh(zeta)
    for k in range(space.cutoff // 2 + 1):
        log_c = 0.5 * gammaln(2 * k + 1) - k * np.log(2) - gammaln(k + 1)
        amps[2 * k] = (-t) ** k * np.exp(log_c) / np.sqrt(np.cosh(zeta))
    return _finish(space, amps, 1.0, max_discard, "squeezed vacuum")


def tmsv(zeta: float, space: FockSpace | None = None, max_discard: float = DEFAULT_MAX_DISCARD) -> StateVector:
    """Two-mode squeezed vacuum sum_n tanh^n(zeta) |n,n> / cosh(zeta)."""
    space = space or FockSpace(2, 10)
    if space.modes != 2:
        raise ValueError("two-mode squeezed vacuum needs a two-mode space")
    _zeta_guard(zeta, space)
    amps = np.zeros(space.dim, complex)
    for n in range(space.cutoff + 1):
        amps[space.index((n, n))] = np.tanh(zeta) ** n / np.cosh(zeta)
    return _finish(space, amps, 1.0, max_discard, "two-mode squeezed vacuum")


def thermal(mean_photons: float, space: FockSpace | None = None) -> DensityOperator:
    space = space or FockSpace(1, 10)
    n = np.arange(space.dim)
    w = mean_photons ** n / (1 + mean_photons) ** (n + 1) if mean_photons > 0 else (n == 0).astype(float)
    return DensityOperator(space, np.diag(w / w.sum()))


def attenuated_tms_weak(zeta: float, loss: LossSpec, space: FockSpace | None = None,
                        normalize: bool = True):
    """Leading-order density matrix of a weak two-mode squeezed state after loss.

    |00> + zeta t1 t2 |11> coherent part plus the single-photon-loss
    populations zeta^2 (1 - t1^2) |01><01| and zeta^2 (1 - t2^2) |10><10|.
    With ``normalize=False`` the raw matrix (trace slightly above one) is
    returned as an ndarray.
    """
    space = space or FockSpace(2, 1)
    psi = np.zeros(space.dim, complex)
    psi[space.index((0, 0))] = 1.0
    psi[space.index((1, 1))] = zeta * loss.tau1 * loss.tau2
    m = np.outer(psi, psi.conj())
    m[space.index((0, 1)), space.index((0, 1))] += zeta ** 2 * loss.R1
    m[space.index((1, 0)), space.index((1, 0))] += zeta ** 2 * loss.R2
    if not normalize:
        return m
    return DensityOperator(space, m / np.trace(m).real)


# -- quadrature statistics ---------------------------------------------------------

def sms_variance(zeta: float, R: float = 0.0, theta: float | np.ndarray = 0.0):
    """Quadrature variance of squeezed vacuum after power loss ``R``."""
    theta = np.asarray(theta, float)
    v = (1 - R) * (np.cos(theta) ** 2 * np.exp(-2 * zeta) + np.sin(theta) ** 2 * np.exp(2 * zeta)) / 2 + R / 2
    return float(v) if v.ndim == 0 else v


def tms_variance(zeta: float, loss: LossSpec | None = None, theta_sum: float | np.ndarray = 0.0):
    """Variance of (Q1 + Q2)/sqrt 2 for a lossy two-mode squeezed vacuum."""
    loss = loss or LossSpec()
    t1, t2 = loss.tau1, loss.tau2
    theta_sum = np.asarray(theta_sum, float)
    v = 0.5 + ((np.cosh(2 * zeta) - 1) * (t1 ** 2 + t2 ** 2)
               + 2 * t1 * t2 * np.cos(theta_sum) * np.sinh(2 * zeta)) / 4
    return float(v) if v.ndim == 0 else v


def squeezing_db(v_min: float) -> float:
    if v_min <= 0:
        raise ValueError("variance must be positive")
    return float(10 * np.log10(0.5 / v_min))


def extremal_variances(zeta: float, R: float) -> tuple:
    """(V_max, V_min) of squeezed vacuum with power loss R."""
    return ((np.exp(2 * zeta) * (1 - R) + R) / 2, (np.exp(-2 * zeta) * (1 - R) + R) / 2)


def infer_zeta_loss(v_max: float, v_min: float) -> tuple:
    """Invert the extremal variances for squeezing and power loss.

    Uses zeta = ln[(2 V_max - 1) / (1 - 2 V_min)] / 2, which is the exact
    inverse of ``extremal_variances`` and is positive for V_max > 1/2 > V_min.
    """
    if not (v_max > 0.5 > v_min > 0):
        raise ValueError("need v_max > 1/2 > v_min > 0")
    zeta = 0.5 * np.log((2 * v_max - 1) / (1 - 2 * v_min))
    R = (2 * v_max * v_min - 0.5) / (v_max + v_min - 1)
    return float(zeta), float(R)
