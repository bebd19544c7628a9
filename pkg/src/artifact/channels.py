"""Optical transformations and detector-conditioned maps.

Beamsplitters follow the Heisenberg convention ``a_out = U a_in`` for a 2x2
unitary mode matrix ``U``: a coherent pair ``(a1, a2)`` leaves as ``U @ (a1, a2)``
and a photon entering port ``k`` leaves port ``j`` with amplitude ``U[j, k]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from scipy.linalg import expm, logm

from .fock import (DensityOperator, FockSpace, OperatorMatrix, StateVector, annihilation_matrix,
                   apply_local_density, apply_local_vector, as_density, basis_state, fidelity,
                   lift, log_negativity, partial_trace)
from . import states as st

UNITARY_TOL = 1e-12


# -- beamsplitters -------------------------------------------------------------------

@dataclass(frozen=True)
class BeamsplitterSpec:
    """2x2 unitary mode matrix; build with ``from_mu_lambda`` or ``from_transmission``."""

    matrix: tuple

    def __post_init__(self):
        U = np.asarray(self.matrix, dtype=complex).reshape(2, 2)
        if np.max(np.abs(U.conj().T @ U - np.eye(2))) > 1e-10:
            raise ValueError("beamsplitter mode matrix is not unitary")
        object.__setattr__(self, "matrix", tuple(map(tuple, U)))

    @property
    def U(self) -> np.ndarray:
        return np.array(self.matrix, dtype=complex)

    @classmethod
    def from_mu_lambda(cls, mu: complex, lam: complex) -> "BeamsplitterSpec":
        """Split one input into ``mu a_1 + lambda a_2``; |mu|^2 + |lambda|^2 = 1."""
        if abs(abs(mu) ** 2 + abs(lam) ** 2 - 1) > UNITARY_TOL:
            raise ValueError("|mu|^2 + |lambda|^2 must equal 1")
        return cls(((mu, lam), (-np.conj(lam), np.conj(mu))))

    @classmethod
    def from_transmission(cls, t: float) -> "BeamsplitterSpec":
        """Real beamsplitter with amplitude transmission ``t``: a photon in port 0
        stays with amplitude t and crosses to port 1 with amplitude r."""
        if not 0 <= t <= 1:
            raise ValueError("transmission must lie in [0, 1]")
        r = np.sqrt(max(0.0, 1 - t * t))
        return cls(((t, -r), (r, t)))

    def inverse(self) -> "BeamsplitterSpec":
        return BeamsplitterSpec(self.U.conj().T)


#: polarization beamsplitter realized by a quarter-wave-biased modulator
EOM_SPLITTER = BeamsplitterSpec(0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]))
IDENTITY_SPLITTER = BeamsplitterSpec(np.eye(2))


@lru_cache(maxsize=64)
def _two_mode_unitary(key: bytes, cutoff: int) -> np.ndarray:
    U = np.frombuffer(key, dtype=complex).reshape(2, 2)
    # generator H with e^{-iH} = U; the Fock unitary is exp(-i a^dag H a)
    H = 1j * logm(U)
    H = 0.5 * (H + H.conj().T)
    d = cutoff + 1
    out = np.zeros((d * d, d * d), complex)
    for s in range(2 * cutoff + 1):
        ks = np.arange(s + 1)
        G = np.diag(H[0, 0] * ks + H[1, 1] * (s - ks)).astype(complex)
        for k in range(s):
            # a0^dag a1 : (k, s-k) -> (k+1, s-k-1)
            G[k + 1, k] += H[0, 1] * np.sqrt((k + 1) * (s - k))
            G[k, k + 1] += H[1, 0] * np.sqrt((k + 1) * (s - k))
        block = expm(-1j * G)
        keep = [k for k in ks if k <= cutoff and s - k <= cutoff]
        idx = [k * d + (s - k) for k in keep]
        out[np.ix_(idx, idx)] = block[np.ix_(keep, keep)]
    return out


def two_mode_unitary(spec: BeamsplitterSpec, cutoff: int) -> np.ndarray:
    """Fock-space matrix of the mixing; exact on every sector, unitary on total <= cutoff."""
    return _two_mode_unitary(np.ascontiguousarray(spec.U).tobytes(), int(cutoff))


def _check_pair(space, modes):
    i, j = modes
    if i == j:
        raise ValueError("beamsplitter modes must differ")
    for m in modes:
        if not 0 <= m < space.modes:
            raise IndexError(f"mode {m} out of range")


def beamsplit(state, modes, spec: BeamsplitterSpec):
    """Mix ``modes = (i, j)`` of a state with the given beamsplitter."""
    _check_pair(state.space, modes)
    W = two_mode_unitary(spec, state.space.cutoff)
    if isinstance(state, StateVector):
        v = apply_local_vector(state.amplitudes, state.space, W, modes)
        return StateVector(state.space, v, conditional=state.conditional or _leaks(v))
    rho = as_density(state)
    m = apply_local_density(rho.matrix, rho.space, W, modes)
    return DensityOperator(rho.space, m, conditional=rho.conditional or _leaks_trace(m))


def _leaks(v):
    return bool(abs(np.vdot(v, v).real - 1) > 1e-8)


def _leaks_trace(m):
    return bool(abs(np.trace(m).real - 1) > 1e-8)


def phase_shift(state, mode: int, phi: float):
    """Apply exp(i phi n) to one mode."""
    ph = np.diag(np.exp(1j * phi * np.arange(state.space.local_dim)))
    if isinstance(state, StateVector):
        return StateVector(state.space, apply_local_vector(state.amplitudes, state.space, ph, [mode]),
                           conditional=state.conditional)
    rho = as_density(state)
    return DensityOperator(rho.space, apply_local_density(rho.matrix, rho.space, ph, [mode]),
                           conditional=rho.conditional)


# -- loss -------------------------------------------------------------------------------

def loss_kraus(eta: float, cutoff: int) -> list:
    """Kraus operators of amplitude damping with power transmission ``eta``."""
    if not 0 <= eta <= 1:
        raise ValueError("power transmission must lie in [0, 1]")
    d = cutoff + 1
    ops = []
    for k in range(d):
        K = np.zeros((d, d))
        for n in range(k, d):
            K[n - k, n] = np.sqrt(comb(n, k) * eta ** (n - k) * (1 - eta) ** k)
        ops.append(K.astype(complex))
    return ops


def loss(state, mode: int, eta: float) -> DensityOperator:
    """Attenuate ``mode`` to power transmission ``eta``."""
    rho = as_density(state)
    if not 0 <= mode < rho.space.modes:
        raise IndexError(f"mode {mode} out of range")
    if eta == 1:
        return rho
    out = np.zeros_like(rho.matrix)
    for K in loss_kraus(eta, rho.space.cutoff):
        out += apply_local_density(rho.matrix, rho.space, K, [mode])
    return DensityOperator(rho.space, out, conditional=rho.conditional)


def loss_by_dilation(state, mode: int, eta: float) -> DensityOperator:
    """Same channel realized as a beamsplitter onto a vacuum ancilla (for cross-checks)."""
    rho = as_density(state)
    M = rho.space.modes
    big = FockSpace(M + 1, rho.space.cutoff)
    anc = np.zeros((big.local_dim, big.local_dim))
    anc[0, 0] = 1
    joint = DensityOperator(big, np.kron(rho.matrix, anc), conditional=rho.conditional)
    mixed = beamsplit(joint, (mode, M), BeamsplitterSpec.from_transmission(np.sqrt(eta)))
    return partial_trace(mixed, list(range(M)))


# -- detectors ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectorModel:
    """Click detector: quantum efficiency and background-to-signal click ratio."""

    eta: float = 1.0
    bg_ratio: float = 0.0

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError("efficiency must lie in [0, 1]")
        if not 0 <= self.bg_ratio < 1:
            raise ValueError("background ratio must lie in [0, 1)")

    def off_diagonal_weights(self, cutoff: int) -> np.ndarray:
        """<n|off|n> for n = 0..cutoff."""
        return (1 - self.bg_ratio) * (1 - self.eta) ** np.arange(cutoff + 1)


def spcm_povm(det: DetectorModel, space: FockSpace | None = None) -> tuple:
    """(on, off) POVM elements of a non-resolving click detector."""
    space = space or FockSpace(1, 10)
    if space.modes != 1:
        raise ValueError("detector POVM is single-mode")
    off = np.diag(det.off_diagonal_weights(space.cutoff)).astype(complex)
    on = np.eye(space.dim) - off
    return OperatorMatrix(space, on, "click"), OperatorMatrix(space, off, "no click")


@dataclass(frozen=True, eq=False)
class ConditionalOp:
    """One outcome of a measurement: subnormalized output whose trace is the probability."""

    output: DensityOperator
    probability: float
    label: str
    alternatives: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def state(self) -> DensityOperator:
        """Output renormalized; reading it never mutates the stored branch."""
        return self.output.normalized()

    def outcomes(self) -> list:
        return [self, *self.alternatives]


def _branch(matrix, space, label):
    p = float(np.trace(matrix).real)
    if p <= 0:
        p = 0.0
        out = None
    else:
        out = DensityOperator(space, matrix, conditional=True)
    return out, p


def _measure_last_mode(rho_big: DensityOperator, weights_on: np.ndarray):
    """Split a state on M+1 modes by a diagonal POVM on the last mode."""
    M = rho_big.space.modes - 1
    d = rho_big.space.local_dim
    t = rho_big.matrix.reshape(d ** M, d, d ** M, d)
    blocks = np.stack([t[:, n, :, n] for n in range(d)])  # (d, D, D)
    on = np.tensordot(weights_on, blocks, axes=1)
    off = np.tensordot(1 - weights_on, blocks, axes=1)
    return on, off


def _ideal_op(state, op_local, mode):
    if isinstance(state, StateVector):
        v = apply_local_vector(state.amplitudes, state.space, op_local, [mode])
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("operator annihilates the state")
        return StateVector(state.space, v / n)
    rho = as_density(state)
    m = apply_local_density(rho.matrix, rho.space, op_local, [mode])
    tr = np.trace(m).real
    if tr <= 0:
        raise ValueError("operator annihilates the state")
    return DensityOperator(rho.space, m / tr)


def annihilate(state, mode: int):
    """Ideal (normalized) action of the annihilation operator on one mode."""
    return _ideal_op(state, annihilation_matrix(state.space.cutoff), mode)


def subtract_photon(state, mode: int, t: float, det: DetectorModel = DetectorModel()) -> ConditionalOp:
    """Tap ``mode`` with a beamsplitter of amplitude transmission ``t`` and herald on a click.

    The tap is the exact Fock-space unitary.  The returned click branch carries
    the no-click branch in ``alternatives`` and the first-order validity
    diagnostic ``(1 - t^2) <n>`` in ``diagnostics``.
    """
    if not 0 < t < 1:
        raise ValueError("tap transmission must lie in (0, 1)")
    rho = as_density(state)
    M, N = rho.space.modes, rho.space.cutoff
    big = FockSpace(M + 1, N)
    anc = np.zeros((N + 1, N + 1))
    anc[0, 0] = 1
    joint = DensityOperator(big, np.kron(rho.matrix, anc), conditional=True)
    tapped = beamsplit(joint, (mode, M), BeamsplitterSpec.from_transmission(t))
    w_on = 1 - det.off_diagonal_weights(N)
    on, off = _measure_last_mode(tapped, w_on)
    nbar = float(np.real(np.trace(lift(np.diag(np.arange(N + 1.0)), rho.space, mode) @ rho.matrix)))
    diag = {"first_order_weight": (1 - t * t) * nbar, "mean_photons": nbar}
    out_off, p_off = _branch(off, rho.space, "no click")
    out_on, p_on = _branch(on, rho.space, "click")
    if out_on is None:
        raise ValueError("click branch has zero probability")
    no_click = ConditionalOp(out_off, p_off, "no click") if out_off is not None else None
    return ConditionalOp(out_on, p_on, "click", alternatives=(no_click,) if no_click else (), diagnostics=diag)


# -- nonlocal annihilation scenario ------------------------------------------------------

def delocalized_fock(n: int, split: float = 0.5, cutoff: int | None = None) -> StateVector:
    """|n> sent through a beamsplitter with power fraction ``split`` staying in mode 0."""
    space = FockSpace(2, cutoff if cutoff is not None else max(n, 1))
    spec = BeamsplitterSpec.from_mu_lambda(np.sqrt(split), np.sqrt(1 - split))
    return beamsplit(basis_state(space, (n, 0)), (0, 1), spec)


def vampire_branches(n_photons: int, t: float, split: float = 0.5, det_eta: float = 1.0):
    """Normalized (click, no-click) two-mode states after tapping arm A and recombining.

    ``t`` is the amplitude reflectivity of the tap, so a fraction t^2 of arm A
    is diverted to the detector.
    """
    spec = BeamsplitterSpec.from_mu_lambda(np.sqrt(split), np.sqrt(1 - split))
    psi = delocalized_fock(n_photons, split, cutoff=n_photons)
    res = subtract_photon(psi, 0, np.sqrt(1 - t * t), DetectorModel(det_eta, 0.0))
    out = []
    for branch in (res, *res.alternatives):
        out.append(beamsplit(branch.state, (0, 1), spec.inverse()))
    return out[0], out[1], res.probability


def vampire_output(n_photons: int, t: float, bg_ratio: float, t_ref: float = 0.06,
                   split: float = 0.5, det_eta: float = 1.0) -> DensityOperator:
    """Recombined heralded state including background clicks.

    Background clicks occur at a fixed absolute rate, quoted as ``bg_ratio``
    relative to the true subtraction rate at the working tap ``t_ref``.  As the
    true rate scales as t^2, the background weight at tap ``t`` is
    ``bg_ratio (t_ref / t)^2`` relative to true events, and a background click
    heralds the untouched (no-click) state.
    """
    click, no_click, _ = vampire_branches(n_photons, t, split, det_eta)
    w = bg_ratio * (t_ref / t) ** 2
    return DensityOperator(click.space, (click.matrix + w * no_click.matrix) / (1 + w))


def vampire_fidelity(n_photons: int, t: float, bg_ratio: float, t_ref: float = 0.06) -> float:
    """Fidelity of the recombined heralded state with |n-1, 0>."""
    if n_photons not in (1, 2):
        raise ValueError("supported photon numbers are 1 and 2")
    if not 0 < t < 1:
        raise ValueError("tap reflectivity must lie in (0, 1)")
    rho = vampire_output(n_photons, t, bg_ratio, t_ref)
    return rho.population(n_photons - 1, 0)


def vampire_fidelity_map(n_photons: int, taps, bg_ratios, t_ref: float = 0.06) -> np.ndarray:
    """Fidelity on a (tap, background) grid; rows follow ``taps``."""
    taps, bg_ratios = np.asarray(taps, float), np.asarray(bg_ratios, float)
    out = np.empty((taps.size, bg_ratios.size))
    for i, t in enumerate(taps):
        click, no_click, _ = vampire_branches(n_photons, t)
        pc = click.population(n_photons - 1, 0)
        pn = no_click.population(n_photons - 1, 0)
        w = bg_ratios * (t_ref / t) ** 2
        out[i] = (pc + w * pn) / (1 + w)
    return out


def naive_local_prediction(n_photons: int) -> DensityOperator:
    """Output expected if the subtraction acted only on its own arm.

    Arm A is emptied, arm B alone is recombined with vacuum on the same
    beamsplitter and the output mode is kept.
    """
    if n_photons not in (0, 1, 2):
        raise ValueError("supported photon numbers are 0, 1 and 2")
    N = max(n_photons, 1)
    psi = delocalized_fock(n_photons, 0.5, cutoff=N)
    rho_b = partial_trace(psi.density(), [1])
    vac = np.zeros((N + 1, N + 1))
    vac[0, 0] = 1
    joint = DensityOperator(FockSpace(2, N), np.kron(vac, rho_b.matrix))
    spec = BeamsplitterSpec.from_mu_lambda(np.sqrt(0.5), np.sqrt(0.5)).inverse()
    return partial_trace(beamsplit(joint, (0, 1), spec), [0])


def no_signalling_mean(state, det: DetectorModel = DetectorModel()) -> float:
    """Bob's photon number summed over Alice's click/no-click outcomes on mode 0."""
    rho = as_density(state)
    if rho.space.modes != 2:
        raise ValueError("need a two-mode state")
    on, off = spcm_povm(det, FockSpace(1, rho.space.cutoff))
    nB = lift(np.diag(np.arange(rho.space.local_dim, dtype=float)), rho.space, 1)
    total = 0.0
    for P in (on, off):
        total += np.trace(nB @ lift(P.matrix, rho.space, 0) @ rho.matrix).real
    return float(total)


# -- catalysis (noiseless amplification) ----------------------------------------------------

@dataclass(frozen=True)
class CatalysisSpec:
    """Amplifier beamsplitter transmission ``tau``; nominal gain g = 1/tau."""

    tau: float

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")

    @classmethod
    def from_gain(cls, g: float) -> "CatalysisSpec":
        if g <= 1:
            raise ValueError("gain must exceed 1")
        return cls(1.0 / g)

    @property
    def g(self) -> float:
        return 1.0 / self.tau

    @property
    def exact_gain(self) -> float:
        """Amplitude gain on |0> + x|1> with a perfect detector, (2 tau^2 - 1)/tau."""
        return (2 * self.tau ** 2 - 1) / self.tau


def catalysis(state, mode: int, spec: CatalysisSpec, det: DetectorModel = DetectorModel(),
              flip_phase: bool = True) -> ConditionalOp:
    """Heralded amplification of ``mode`` with a single-photon ancilla.

    The ancilla photon enters the second port of a beamsplitter with
    transmission ``tau``; a click at the ancilla output port heralds success.
    For tau^2 < 1/2 the raw gain is negative; with ``flip_phase`` a pi phase is
    applied to the output mode so the reported gain is positive.
    """
    rho = as_density(state)
    M, N = rho.space.modes, rho.space.cutoff
    if N < 2:
        raise ValueError("cutoff must be at least 2 to host the ancilla photon")
    big = FockSpace(M + 1, N)
    anc = np.zeros((N + 1, N + 1))
    anc[1, 1] = 1
    joint = DensityOperator(big, np.kron(rho.matrix, anc), conditional=True)
    r = np.sqrt(1 - spec.tau ** 2)
    U = BeamsplitterSpec(((spec.tau, -r), (r, spec.tau)))
    mixed = beamsplit(joint, (mode, M), U)
    w_on = 1 - det.off_diagonal_weights(N)
    on, off = _measure_last_mode(mixed, w_on)
    flipped = bool(flip_phase and spec.tau ** 2 < 0.5)
    if flipped:
        ph = np.diag((-1.0) ** np.arange(N + 1)).astype(complex)
        on = apply_local_density(on, rho.space, ph, [mode])
    out_on, p_on = _branch(on, rho.space, "click")
    out_off, p_off = _branch(off, rho.space, "no click")
    alts = (ConditionalOp(out_off, p_off, "no click"),) if out_off is not None else ()
    gain = spec.exact_gain * (-1 if flipped else 1)
    return ConditionalOp(out_on, p_on, "click", alternatives=alts,
                         diagnostics={"phase_flipped": flipped, "gain": gain, "nominal_gain": spec.g})


# -- distillation pipeline ------------------------------------------------------------------

@dataclass
class DistillReport:
    state: DensityOperator
    success_probability: float
    theta_sum: np.ndarray
    variance: np.ndarray
    min_variance: float
    input_min_variance: float
    attenuated_min_variance: float
    log_negativity_before: float
    log_negativity_after: float
    fidelity: float
    gain: float
    phase_conventions: dict

    def to_dict(self) -> dict:
        return {
            "success_probability": self.success_probability,
            "min_variance": self.min_variance,
            "input_min_variance": self.input_min_variance,
            "attenuated_min_variance": self.attenuated_min_variance,
            "log_negativity_before": self.log_negativity_before,
            "log_negativity_after": self.log_negativity_after,
            "fidelity": self.fidelity,
            "gain": self.gain,
            "phase_conventions": self.phase_conventions,
            "theta_sum": list(map(float, self.theta_sum)),
            "variance": list(map(float, self.variance)),
        }


def sum_variance_curve(rho: DensityOperator, theta_sum) -> np.ndarray:
    """Variance of (Q1 + Q2)/sqrt 2 versus theta1 + theta2 (theta2 held at 0)."""
    from .homodyne import two_mode_sum_variance
    return np.array([two_mode_sum_variance(rho, th, 0.0) for th in np.atleast_1d(theta_sum)])


def distill(zeta: float, channel_loss: st.LossSpec, spec: CatalysisSpec | None,
            det: DetectorModel = DetectorModel(), detection_eff: float = 1.0,
            cutoff: int = 6, n_phase: int = 61) -> DistillReport:
    """Two-mode squeezed vacuum, lossy channel, heralded amplification, detection loss.

    ``channel_loss`` acts on both modes (usually only tau2 < 1); the amplifier
    acts on mode 1.  ``spec=None`` skips amplification (unit-gain control).
    Detection efficiency is applied as a final loss on both modes.  The
    reported fidelity compares the distilled state with the lossless input, both
    seen through the same detection efficiency; the fidelity before detection
    loss and the one for a quarter-turn phase convention are kept in
    ``phase_conventions``.
    """
    space = FockSpace(2, cutoff)
    psi = st.tmsv(zeta, space)
    rho_in = psi.density()
    att = loss(loss(rho_in, 0, channel_loss.tau1 ** 2), 1, channel_loss.tau2 ** 2)
    if spec is None:
        amplified, p = att, 1.0
        gain = 1.0
        flipped = False
    else:
        res = catalysis(att, 1, spec, det)
        amplified, p = res.state, res.probability
        gain = res.diagnostics["gain"]
        flipped = res.diagnostics["phase_flipped"]
    measured = loss(loss(amplified, 0, detection_eff), 1, detection_eff)
    reference = loss(loss(rho_in, 0, detection_eff), 1, detection_eff)
    att_measured = loss(loss(att, 0, detection_eff), 1, detection_eff)
    theta = np.linspace(0, 2 * np.pi, n_phase)
    var = sum_variance_curve(measured, theta)
    fine = np.linspace(0, 2 * np.pi, 721)
    fine_var = sum_variance_curve(measured, fine)
    f_measured = fidelity(reference, measured)
    turned = loss(loss(phase_shift(amplified, 1, np.pi / 2), 0, detection_eff), 1, detection_eff)
    conventions = {
        "phase_flip_applied": flipped,
        "fidelity_as_reported": f_measured,
        "fidelity_with_quarter_turn": fidelity(reference, turned),
        "fidelity_before_detection_loss": fidelity(rho_in, amplified),
        "min_variance_theta_sum": float(fine[np.argmin(fine_var)]),
    }
    return DistillReport(
        state=measured,
        success_probability=p,
        theta_sum=theta,
        variance=var,
        min_variance=float(fine_var.min()),
        input_min_variance=float(sum_variance_curve(reference, fine).min()),
        attenuated_min_variance=float(sum_variance_curve(att_measured, fine).min()),
        log_negativity_before=log_negativity(att),
        log_negativity_after=log_negativity(amplified),
        fidelity=f_measured,
        gain=gain,
        phase_conventions=conventions,
    )


# -- heralded Fock states -------------------------------------------------------------------

def click_pattern_probabilities(n: int, eta: float, n_detectors: int = 2) -> dict:
    """P(number of clicking detectors) for n photons split evenly over detectors."""
    if n_detectors == 1:
        p_off = (1 - eta) ** n
        return {0: p_off, 1: 1 - p_off}
    if n_detectors != 2:
        raise ValueError("one or two detectors supported")
    probs = {0: 0.0, 1: 0.0, 2: 0.0}
    for k in range(n + 1):
        w = comb(n, k) / 2 ** n
        on1, on2 = 1 - (1 - eta) ** k, 1 - (1 - eta) ** (n - k)
        probs[2] += w * on1 * on2
        probs[1] += w * (on1 * (1 - on2) + on2 * (1 - on1))
        probs[0] += w * (1 - on1) * (1 - on2)
    return probs


def herald_fock(gamma: float, n_detectors: int = 1, det: DetectorModel = DetectorModel(),
                cutoff: int = 8) -> ConditionalOp:
    """Signal state heralded by all ``n_detectors`` clicking on the trigger of sum gamma^n |n n>."""
    if not 0 < gamma < 0.5:
        raise ValueError("gamma must lie in (0, 0.5)")
    n = np.arange(cutoff + 1)
    amps = gamma ** n
    weights = amps ** 2 / np.sum(amps ** 2)
    pattern = np.array([click_pattern_probabilities(k, det.eta, n_detectors)[n_detectors] for k in n])
    if det.bg_ratio:
        pattern = 1 - (1 - det.bg_ratio) * (1 - pattern)
    diag = weights * pattern
    space = FockSpace(1, cutoff)
    out = DensityOperator(space, np.diag(diag), conditional=True)
    return ConditionalOp(out, float(diag.sum()), f"{n_detectors} click(s)")


# -- rates -------------------------------------------------------------------------------------

@dataclass
class RateReport:
    p1: float
    two_click_per_pulse: float
    R2: float
    p2: float | None = None
    R_dist: float | None = None
    R_dist_quoted: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def rates(R1: float, eta: float, nu: float, distill: tuple | None = None,
          p1_herald: float = 1e-3, quoted_joint: float | None = 0.75e-6) -> RateReport:
    """Pair and coincidence probabilities of the heralded sources.

    ``distill = (zeta, T, g, eta_d)`` adds the amplifier-click probability in
    the weak-squeezing limit and the distilled-state rate nu p1_herald p2.
    """
    if min(R1, eta, nu) <= 0:
        raise ValueError("inputs must be positive")
    p1 = R1 / (eta * nu)
    two = p1 ** 2 * eta ** 2 / 2
    rep = RateReport(p1=p1, two_click_per_pulse=two, R2=two * nu)
    if distill is not None:
        zeta, T, g, eta_d = distill
        rep.p2 = eta_d * (zeta ** 2 / 2 * T * (1 - 1 / g ** 2) + 1 / g ** 2)
        rep.R_dist = nu * p1_herald * rep.p2
        if quoted_joint is not None:
            rep.R_dist_quoted = nu * quoted_joint
    return rep
