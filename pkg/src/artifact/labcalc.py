"""Closed-form laboratory estimators for a periodically poled KTP squeezer.

Everything is SI except Sellmeier wavelengths, which are micrometres.  The
arithmetic avoids float() casts so that unit-carrying quantities (e.g. pint)
pass straight through; the unit audit in the tests relies on this.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as sc
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import j1

LAMBDA_RANGE_UM = (0.35, 1.1)
BESSEL_FIRST_ZERO = 3.8317059702075125

# n^2 = A + B / (l^2 - C) + D / (l^2 - E), l in micrometres (flux-grown KTP)
KTP_SELLMEIER = {
    "x": (3.29100, 0.04140, 0.03978, 9.35522, 31.45571),
    "y": (3.45018, 0.04341, 0.04597, 16.98825, 39.43799),
    "z": (4.59423, 0.06206, 0.04763, 110.80672, 86.12171),
}


def _check_lambda(lam_um):
    lo, hi = LAMBDA_RANGE_UM
    lam = np.asarray(lam_um, float)
    if np.any(lam < lo) or np.any(lam > hi):
        raise ValueError(f"wavelength {lam_um} um outside supported range {lo}-{hi} um")


def sellmeier(lambda_um, axis: str = "y", coeffs=KTP_SELLMEIER):
    _check_lambda(lambda_um)
    A, B, C, D, E = coeffs[axis]
    l2 = np.asarray(lambda_um, float) ** 2
    return np.sqrt(A + B / (l2 - C) + D / (l2 - E))


def _dn_dlambda(lambda_um, axis, coeffs=KTP_SELLMEIER):
    A, B, C, D, E = coeffs[axis]
    l = np.asarray(lambda_um, float)
    n = sellmeier(l, axis, coeffs)
    return -l * (B / (l * l - C) ** 2 + D / (l * l - E) ** 2) / n


def group_index(lambda_um, axis: str = "y") -> tuple:
    """(phase index n, group velocity as a fraction of c)."""
    n = sellmeier(lambda_um, axis)
    ng = n - np.asarray(lambda_um, float) * _dn_dlambda(lambda_um, axis)
    return n, 1.0 / ng


def walkoff_delay(L, lam_um: float = 0.39, axis: str = "y"):
    """Pump-to-seed walk-off length L c (1/v(2 lam) ... ) for second harmonic at ``lam_um``.

    Positive when the harmonic at ``lam_um`` lags the fundamental at 2 ``lam_um``.
    """
    _, v_h = group_index(lam_um, axis)
    _, v_f = group_index(2 * lam_um, axis)
    return L * (1.0 / v_h - 1.0 / v_f)


def walkoff_from_velocities(L, v_fast, v_slow):
    """Walk-off for velocities given as fractions of c."""
    return L * (1.0 / v_slow - 1.0 / v_fast)


def qpm_residual(lambda_um, period_um, pump_axis="y", signal_axes=("y", "z")):
    """Type-II quasi-phase-matching mismatch n_p(l) - mean n_s(2 l) - l / D (dimensionless)."""
    ns = sum(sellmeier(2 * lambda_um, a) for a in signal_axes) / len(signal_axes)
    return sellmeier(lambda_um, pump_axis) - ns - lambda_um / period_um


def qpm_wavelength(period_um: float, bracket=(0.35, 0.5), **axes) -> float:
    """Second-harmonic wavelength (um) satisfying the quasi-phase-matching condition."""
    f = lambda l: qpm_residual(l, period_um, **axes)
    a, b = bracket
    if np.sign(f(a)) == np.sign(f(b)):
        raise ValueError(f"no phase-matching root in [{a}, {b}] um for period {period_um} um")
    return float(brentq(f, a, b, xtol=1e-14, rtol=1e-14))


# -- beams and nonlinear powers --------------------------------------------------------------

def focused_waist(lam, F, r):
    """Waist radius of a collimated beam of radius ``r`` focused by a lens ``F``."""
    return lam * F / (np.pi * r)


def beam_area(lam, F, r):
    return np.pi * focused_waist(lam, F, r) ** 2


def deff_from_shg(L, W_shg, W_seed, r_seed, F=0.1, lam=0.78e-6, nu=76e6, tau=2e-12, n1=None, n2=None,
                  axis="z", c=sc.c, eps0=sc.epsilon_0):
    """Effective nonlinearity (m/V) from single-pass second-harmonic power.

    d = sqrt(eps0 c^3 nu tau n1^2 n2 / (omega^2 L^2)) sqrt(W_shg S) / W_seed,
    S the focused seed area.  The square root on S is what makes the
    expression come out in m/V.  Indices default to the ``axis`` Sellmeier
    values at the seed and its harmonic.
    """
    lam_um = lam.m_as("um") if hasattr(lam, "m_as") else lam * 1e6
    n1 = sellmeier(lam_um, axis) if n1 is None else n1
    n2 = sellmeier(lam_um / 2, axis) if n2 is None else n2
    omega = 2 * np.pi * c / lam
    S = beam_area(lam, F, r_seed)
    return np.sqrt(eps0 * c ** 3 * nu * tau * n1 ** 2 * n2 / (omega ** 2 * L ** 2)) \
        * np.sqrt(W_shg * S) / W_seed


def deff_poled_bulk(d33=10.7e-12):
    """First-order quasi-phase-matched nonlinearity (2/pi) d33."""
    return 2 / np.pi * d33


def dfg_power(W_pump, W_shg, W_seed, r_pump, r_seed, F=0.1, lam_seed=0.78e-6):
    """Difference-frequency power from the seed/pump overlap; the pump is the second harmonic."""
    S_seed = beam_area(lam_seed, F, r_seed)
    S_pump = beam_area(lam_seed / 2, F, r_pump)
    return 2 * S_seed / (S_pump + S_seed) * W_pump * W_shg / W_seed


def zeta_classical(W_pump, W_shg, W_seed, r_pump, r_seed):
    """Squeezing parameter predicted from classical SHG data.

    sqrt(2) (w_seed / w_pump) sqrt(W_shg W_pump) / W_seed with focused radii
    w proportional to lambda / r, so w_seed / w_pump = 2 r_pump / r_seed.
    """
    return np.sqrt(2) * (2 * r_pump / r_seed) * np.sqrt(W_shg * W_pump) / W_seed


def zeta_from_deamp(W_seed, W_min=None, W_dfg=None):
    """Squeezing parameter from parametric deamplification of the seed."""
    if W_min is None:
        if W_dfg is None:
            raise ValueError("need W_min or W_dfg")
        W_min = (np.sqrt(W_seed) - np.sqrt(W_dfg)) ** 2
    return 0.5 * np.log(W_seed / W_min)


def squeezing_db_pure(zeta):
    return 10 * np.log10(np.exp(2 * zeta))


def squeezing_db_lossy(zeta, loss):
    """dB below vacuum after power loss ``loss``."""
    return -10 * np.log10((1 - loss) * np.exp(-2 * zeta) + loss)


# -- parametric down-conversion modes --------------------------------------------------------

@dataclass(frozen=True)
class CrystalParams:
    L: float = 1e-3
    period: float = 7.825e-6
    beta1: float = 6.4e-9  # s/m at the signal
    beta1_pump: float = 8.2e-9  # s/m
    beta2: float = 2.8e-25  # s^2/m
    n_pump: float | None = None  # default: y-axis Sellmeier at the pump
    d_eff: float | None = None

    def __post_init__(self):
        if not (self.L > 0 and self.period > 0):
            raise ValueError("length and poling period must be positive")


@dataclass(frozen=True)
class PumpParams:
    tau: float = 2e-12
    waist: float = 10e-6
    wavelength: float = 0.39e-6
    rep_rate: float = 76e6

    def __post_init__(self):
        if min(self.tau, self.waist, self.wavelength, self.rep_rate) <= 0:
            raise ValueError("pump parameters must be positive")

    @property
    def omega(self):
        return 2 * np.pi * sc.c / self.wavelength


@dataclass
class ModeDecomposition:
    d_omega: float
    D_omega: float
    d_k: float
    D_k: float
    tau_s: float
    d_s: float
    r_omega: float
    r_k: float
    N: float
    sinh_zeta: np.ndarray = field(repr=False)  # [l, i, j]

    @property
    def mean_photons(self) -> float:
        return float(np.sum(self.sinh_zeta ** 2))

    def tail(self) -> float:
        """Weight N - sum sinh^2 missing from the truncated table (geometric series)."""
        kept = 1.0
        for r, n in zip((self.r_omega, self.r_k, self.r_k), self.sinh_zeta.shape):
            kept *= 1 - np.tanh(abs(r)) ** (2 * n)
        return float(self.N * (1 - kept))


def pdc_mode_decomposition(crystal: CrystalParams = CrystalParams(), pump: PumpParams = PumpParams(),
                           N: float = 1.0, orders=(8, 8, 8)) -> ModeDecomposition:
    """Gaussian-approximation Schmidt decomposition of pulsed down-conversion.

    ``N`` sets the overall gain scale so that the full eigenvalue table has
    sum sinh^2 = N; the truncated table falls short by the geometric tail.
    """
    n_p = crystal.n_pump if crystal.n_pump is not None else sellmeier(pump.wavelength * 1e6, "y")
    k_p = n_p * pump.omega / sc.c
    L = crystal.L
    d_omega = 1 / np.sqrt(pump.tau ** 2 + L ** 2 / 10 * (crystal.beta1 - crystal.beta1_pump) ** 2)
    D_omega = 1 / np.sqrt(L * crystal.beta2 / 12)
    d_k = 1 / pump.waist
    D_k = 1 / np.sqrt(L / 6 / k_p)
    tau_s = np.sqrt(2 / (d_omega * D_omega))
    d_s = np.sqrt(2 / (d_k * D_k))
    r_w = np.log(D_omega / d_omega) / 2
    r_k = np.log(D_k / d_k) / 2
    lw = np.tanh(abs(r_w)) ** np.arange(orders[0]) / np.cosh(r_w)
    lk_i = np.tanh(abs(r_k)) ** np.arange(orders[1]) / np.cosh(r_k)
    lk_j = np.tanh(abs(r_k)) ** np.arange(orders[2]) / np.cosh(r_k)
    table = np.sqrt(N) * lw[:, None, None] * lk_i[None, :, None] * lk_j[None, None, :]
    return ModeDecomposition(float(d_omega), float(D_omega), float(d_k), float(D_k), float(tau_s),
                             float(d_s), float(r_w), float(r_k), float(N), table)


def sinc_gauss_error(order: int = 1, x=None) -> float:
    """Max deviation of the Gaussian stand-ins exp(-x^2/5) for sinc and exp(-x^2/3) for sinc^2."""
    x = np.linspace(-3, 3, 601) if x is None else x
    s = np.sinc(x / np.pi)
    if order == 1:
        return float(np.max(np.abs(s - np.exp(-x ** 2 / 5))))
    return float(np.max(np.abs(s ** 2 - np.exp(-x ** 2 / 3))))


# -- laser metrics ------------------------------------------------------------------------------

@dataclass
class PulseReport:
    tau_fwhm: float
    tau_coh: float
    ratio: float
    alpha: float


def pulse_metrics(autocorr_shift, lam, dlam, power, rep_rate=76e6, c=sc.c, hbar=sc.hbar) -> PulseReport:
    """Pulse width from the autocorrelator shift, coherence time and coherent amplitude per pulse."""
    tau = np.sqrt(2) * autocorr_shift / c
    tcoh = lam ** 2 / (c * dlam)
    alpha = np.sqrt(power / (rep_rate * hbar * 2 * np.pi * c / lam))
    return PulseReport(tau, tcoh, tau / tcoh, alpha)


@dataclass
class AiryReport:
    R: float
    w: float
    overlap: float  # cross-section profiles within the iris
    overlap_radial: float  # full 2-D field overlap within the iris


def airy_gauss(a, F, lam) -> AiryReport:
    """Iris radius at the first dark ring, matched Gaussian radius and their overlap.

    ``a`` is the pinhole diameter.  The Gaussian radius is where the far-field
    amplitude falls by e.  Overlaps are normalized field overlaps |<E|G>|^2
    with both profiles clipped at the iris.
    """
    k = 2 * np.pi / lam
    ka = k * a / 2
    R = BESSEL_FIRST_ZERO / ka * F
    w = np.sqrt(2 * np.pi) / ka * F

    def airy(r):
        u = ka * np.asarray(r, float) / F
        return np.where(u > 1e-12, 2 * j1(u) / np.where(u > 1e-12, u, 1), 1.0)

    gauss = lambda r: np.exp(-r ** 2 / w ** 2)

    def overlap(jac):
        num = quad(lambda r: airy(r) * gauss(r) * jac(r), 0, R)[0]
        ea = quad(lambda r: airy(r) ** 2 * jac(r), 0, R)[0]
        eg = quad(lambda r: gauss(r) ** 2 * jac(r), 0, R)[0]
        return num ** 2 / (ea * eg)

    return AiryReport(float(R), float(w), float(overlap(lambda r: 1.0)), float(overlap(lambda r: r)))


# -- table ------------------------------------------------------------------------------------------

def table(pdc_beta2: float = 2.8e-25) -> list:
    """Rows (name, inputs, value, unit, reference) for the standard laboratory fixture."""
    rows = []

    def add(name, inputs, value, unit, ref=None):
        rows.append({"name": name, "inputs": inputs, "value": float(value), "unit": unit,
                     "reference": "" if ref is None else ref})

    for lam in (0.39, 0.78):
        n, v = group_index(lam, "y")
        add(f"n_y({lam})", f"lambda={lam} um", n, "1")
        add(f"v_y({lam})", f"lambda={lam} um", v, "c")
        n, v = group_index(lam, "z")
        add(f"v_z({lam})", f"lambda={lam} um", v, "c")
    add("walkoff_y", "L=1 mm", walkoff_delay(1e-3, 0.39, "y") * 1e3, "mm", 0.58)
    add("walkoff_z", "L=1 mm", walkoff_delay(1e-3, 0.39, "z") * 1e3, "mm", 0.58)
    add("walkoff_printed_v", "L=1 mm, v=0.52c/0.41c", walkoff_from_velocities(1e-3, 0.52, 0.41) * 1e3, "mm", 0.58)
    add("lambda_qpm", "D=7.825 um", qpm_wavelength(7.825), "um", 0.38902)
    add("d_eff_type1", "L=1 mm, W_shg=100 uW", deff_from_shg(1e-3, 100e-6, 6e-3, 2.5e-3) * 1e12, "pm/V", 6.05)
    add("d_eff_type2", "L=2 mm, W_shg=10 uW", deff_from_shg(2e-3, 10e-6, 6e-3, 2.5e-3) * 1e12, "pm/V", 0.96)
    add("d_eff_bulk_qpm", "d33=10.7 pm/V", deff_poled_bulk() * 1e12, "pm/V", 6.81)
    add("W_dfg", "W_pump=40 mW, r_pump=2 mm", dfg_power(40e-3, 10e-6, 6e-3, 2e-3, 2.5e-3) * 1e6, "uW", 96)
    add("zeta_type2", "W_shg=10 uW", zeta_classical(40e-3, 10e-6, 6e-3, 2e-3, 2.5e-3), "1", 0.24)
    add("zeta_type1", "W_shg=100 uW", zeta_classical(40e-3, 100e-6, 6e-3, 2e-3, 2.5e-3), "1", 0.75)
    z = zeta_from_deamp(6e-3, W_min=3.7e-3)
    add("zeta_deamp", "W_seed=6 mW, W_min=3.7 mW", z, "1", 0.24)
    add("zeta_deamp_from_dfg", "W_dfg=96 uW", zeta_from_deamp(6e-3, W_dfg=96e-6), "1")
    add("squeezing_pure", "zeta_deamp", squeezing_db_pure(z), "dB", 2.1)
    add("squeezing_35pct_loss", "zeta_deamp, loss 0.35", squeezing_db_lossy(z, 0.35), "dB", 1.3)
    md = pdc_mode_decomposition(CrystalParams(beta2=pdc_beta2))
    add("delta_omega", "tau_p=2 ps", md.d_omega, "rad/s", 5e11)
    add("Delta_omega", "beta2", md.D_omega, "rad/s", 2e14)
    add("delta_k", "d_p=10 um", md.d_k, "1/m", 2.4e5)
    add("Delta_k", "L=1 mm", md.D_k, "1/m", 3.8e5)
    p = pulse_metrics(0.35e-3, 780e-9, 0.7e-9, 6e-3)
    add("tau_fwhm", "shift=0.35 mm", p.tau_fwhm * 1e12, "ps", 1.65)
    add("tau_coh", "780 nm, 0.7 nm", p.tau_coh * 1e12, "ps", 2.9)
    add("pulse_ratio", "", p.ratio, "1", 0.57)
    add("alpha", "P=6 mW, 76 MHz", p.alpha, "1", 1.8e4)
    a = airy_gauss(50e-6, 0.1, 780e-9)
    add("iris_R", "a=50 um, F=100 mm", a.R * 1e3, "mm", 1.9)
    add("gauss_w", "a=50 um, F=100 mm", a.w * 1e3, "mm", 1.24)
    add("airy_gauss_overlap", "cross-section", a.overlap, "1", 0.997)
    add("airy_gauss_overlap_radial", "2-D", a.overlap_radial, "1")
    return rows


def table_csv(rows=None) -> str:
    rows = table() if rows is None else rows
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["name", "inputs", "value", "unit", "reference"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "value": repr(r["value"])})
    return buf.getvalue()
