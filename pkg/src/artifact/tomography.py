"""Maximum-likelihood state and process reconstruction from homodyne data.

Process tensors use the Jamiolkowski operator E on H (input) x K (output),
input index slowest, normalized so that Tr_K E = I_H for trace-preserving
processes.  Output states follow rho_out = Tr_H[E (rho_in^T x I)].
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .fock import (DensityOperator, FockSpace, OperatorMatrix, hermitize, matrix_fidelity, psd_eigh,
                   as_density)
from .homodyne import QuadratureSamples, hermite_functions
from . import states as st


class NonMonotoneLikelihood(RuntimeError):
    pass


@dataclass(frozen=True)
class ReconstructionConfig:
    cutoff: int = 4
    report_cutoff: int | None = None
    max_iterations: int = 200
    tolerance: float = 1e-7
    phase_invariant: bool = True
    eig_floor: float = 1e-8  # relative to the largest eigenvalue
    bin_width: float = 0.05
    phase_bins: int = 64
    conjugate_probes: bool = True  # False reproduces the classic sign mistake

    def __post_init__(self):
        if self.report_cutoff is not None and self.report_cutoff > self.cutoff:
            raise ValueError("report cutoff must not exceed the reconstruction cutoff")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class ReconstructionReport:
    result: object
    iterations: int
    log_likelihood: list
    trace_residual: float
    fidelity: float | None = None
    converged: bool = False
    notes: list = field(default_factory=list)


# -- binning ---------------------------------------------------------------------------

def _quadrature_vectors(cutoff: int, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Rows are <n|X_theta> = psi_n(x) e^{i n theta} for each (x, theta) pair."""
    psi = hermite_functions(cutoff, x).T
    return psi * np.exp(1j * np.outer(theta, np.arange(cutoff + 1)))


def bin_records(values: np.ndarray, phases: np.ndarray, bin_width: float, phase_bins: int) -> tuple:
    """Collapse (values, phases) rows into unique bins with multiplicities.

    ``values`` and ``phases`` are (count, modes).  Returns bin-centre values,
    bin-centre phases and weights, in first-occurrence-independent sorted order.
    """
    values = np.atleast_2d(values)
    phases = np.atleast_2d(phases)
    vb = np.round(values / bin_width).astype(np.int64)
    pstep = 2 * np.pi / phase_bins
    pb = np.floor(np.mod(phases, 2 * np.pi) / pstep).astype(np.int64)
    keys = np.concatenate([vb, pb], axis=1)
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    M = values.shape[1]
    return uniq[:, :M] * bin_width, (uniq[:, M:] + 0.5) * pstep, counts.astype(float)


def _joint_vectors(cutoff, xs, thetas):
    """Product quadrature eigenvectors for multimode bins, shape (bins, (N+1)^M)."""
    vecs = None
    for k in range(xs.shape[1]):
        v = _quadrature_vectors(cutoff, xs[:, k], thetas[:, k])
        vecs = v if vecs is None else np.einsum("bi,bj->bij", vecs, v).reshape(v.shape[0], -1)
    return vecs


# -- state tomography -----------------------------------------------------------------------

def _as_arrays(records):
    if isinstance(records, QuadratureSamples):
        vals = records.values
        ph = np.broadcast_to(records.phases, vals.shape)
        return vals, ph
    if isinstance(records, (list, tuple)) and records and isinstance(records[0], QuadratureSamples):
        vals = np.concatenate([r.values for r in records])
        ph = np.concatenate([np.broadcast_to(r.phases, r.values.shape) for r in records])
        return vals, ph
    vals = np.array([r.values for r in records], float)
    ph = np.array([r.phases for r in records], float)
    return vals, ph


def maxlik_state(records, config: ReconstructionConfig = ReconstructionConfig()) -> ReconstructionReport:
    """Iterative R rho R reconstruction with step dilution to keep the likelihood monotone."""
    vals, ph = _as_arrays(records)
    if vals.shape[0] < 1000:
        raise ValueError("need at least 1000 records")
    if np.ptp(vals) == 0:
        raise ValueError("degenerate data: all quadrature values identical")
    xs, ths, w = bin_records(vals, ph, config.bin_width, config.phase_bins)
    M = vals.shape[1]
    space = FockSpace(M, config.cutoff)
    V = _joint_vectors(config.cutoff, xs, ths)  # <n|X>
    rho = np.eye(space.dim, dtype=complex) / space.dim
    total = w.sum()

    def probs(r):
        return np.clip(np.real(np.einsum("bi,ij,bj->b", V.conj(), r, V, optimize=True)), 1e-300, None)

    p = probs(rho)
    history = [float(np.sum(w * np.log(p)))]
    it = 0
    converged = False
    for it in range(1, config.max_iterations + 1):
        R = (V.T * (w / p)) @ V.conj() / total
        eps = None
        while True:
            G = R if eps is None else (np.eye(space.dim) + eps * R)
            new = hermitize(G @ rho @ G)
            new /= np.trace(new).real
            p_new = probs(new)
            L = float(np.sum(w * np.log(p_new)))
            if L >= history[-1] - 1e-9 * abs(history[-1]):
                break
            eps = 1.0 if eps is None else eps / 2
            if eps < 1e-8:
                raise NonMonotoneLikelihood(f"likelihood decreased at iteration {it}")
        rho, p = new, p_new
        history.append(L)
        if abs(history[-1] - history[-2]) < config.tolerance * abs(history[-1]):
            converged = True
            break
    w_, v_ = psd_eigh(rho)
    rho = (v_ * np.clip(w_, 0, None)) @ v_.conj().T
    rho /= np.trace(rho).real
    return ReconstructionReport(DensityOperator(space, hermitize(rho)), it, history, 0.0, converged=converged)


# -- process tensors ------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProcessTensor:
    space_in: FockSpace
    space_out: FockSpace
    E: np.ndarray
    masked: bool = False

    def __post_init__(self):
        d = self.space_in.dim * self.space_out.dim
        E = np.asarray(self.E, complex)
        if E.shape != (d, d):
            raise ValueError("process matrix shape does not match spaces")
        object.__setattr__(self, "E", E)

    @property
    def dims(self) -> tuple:
        return self.space_in.dim, self.space_out.dim

    def tensor(self) -> np.ndarray:
        """E[n, j, m, k] with n, m input and j, k output multi-indices (flattened)."""
        dh, dk = self.dims
        return self.E.reshape(dh, dk, dh, dk)

    def element(self, n, m, j, k) -> complex:
        """Coefficient of |n><m| (x) |j><k|."""
        si, so = self.space_in, self.space_out
        return complex(self.tensor()[si.index(n), so.index(j), si.index(m), so.index(k)])

    def trace_out(self) -> np.ndarray:
        """Tr_K E, which equals I_H for a trace-preserving process."""
        return np.einsum("njmj->nm", self.tensor())

    def trace_residual(self) -> float:
        return float(np.max(np.abs(self.trace_out() - np.eye(self.dims[0]))))

    def transition_probability(self, n, j) -> float:
        """Probability of |n> -> |j> for Fock multi-indices."""
        return float(self.element(n, n, j, j).real)

    def to_json_dict(self) -> dict:
        return {"modes": self.space_in.modes, "cutoff": self.space_in.cutoff,
                "space_in": [self.space_in.modes, self.space_in.cutoff],
                "space_out": [self.space_out.modes, self.space_out.cutoff],
                "masked": self.masked,
                "re": np.real(self.E).ravel().tolist(), "im": np.imag(self.E).ravel().tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ProcessTensor":
        si, so = FockSpace(*d["space_in"]), FockSpace(*d["space_out"])
        n = si.dim * so.dim
        E = (np.asarray(d["re"]) + 1j * np.asarray(d["im"])).reshape(n, n)
        return cls(si, so, E, bool(d.get("masked", False)))


def apply_process(E: ProcessTensor, rho_in) -> DensityOperator:
    rho = as_density(rho_in)
    if rho.space != E.space_in:
        raise ValueError("input state does not live on the process input space")
    # rho_out = Tr_H[E (rho^T x I)]
    out = np.einsum("njmk,nm->jk", E.tensor(), rho.matrix)
    return DensityOperator(E.space_out, hermitize(out), conditional=abs(np.trace(out).real - 1) > 1e-8)


def tensor_from_unitary(U, space: FockSpace | None = None) -> ProcessTensor:
    """Jamiolkowski operator of rho -> U rho U^dag."""
    mat = U.matrix if isinstance(U, OperatorMatrix) else np.asarray(U, complex)
    space = U.space if isinstance(U, OperatorMatrix) else space
    if space is None:
        raise ValueError("space required for raw matrices")
    if np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0]))) > 1e-8:
        raise ValueError("operator is not unitary")
    return tensor_from_kraus([mat], space, space)


def tensor_from_kraus(kraus: Sequence[np.ndarray], space_in: FockSpace, space_out: FockSpace) -> ProcessTensor:
    dh, dk = space_in.dim, space_out.dim
    E = np.zeros((dh * dk, dh * dk), complex)
    for K in kraus:
        # vec with input index first: |K>> = sum_n |n> (x) K|n>
        v = np.asarray(K, complex).T.reshape(-1)
        E += np.outer(v, v.conj())
    return ProcessTensor(space_in, space_out, E)


def beamsplitter_unitary(spec, cutoff: int) -> OperatorMatrix:
    from .channels import two_mode_unitary
    space = FockSpace(2, cutoff)
    return OperatorMatrix(space, two_mode_unitary(spec, cutoff), "beamsplitter")


def phase_invariant_mask(N: int, M: int):
    """Boolean mask over E (shape of the flattened matrix) and (surviving, zeroed) counts.

    An element |n><m| (x) |j><k| survives iff sum(j) - sum(k) = sum(n) - sum(m).
    """
    sp = FockSpace(M, N)
    tot = sp.total_photons()
    # row index (n, j), column (m, k)
    n_tot = np.repeat(tot, sp.dim)  # slow index n
    j_tot = np.tile(tot, sp.dim)
    lhs_row = n_tot - j_tot  # sum(n) - sum(j) along rows
    mask = lhs_row[:, None] == lhs_row[None, :]
    # sum(j)-sum(k) = sum(n)-sum(m)  <=>  sum(n)-sum(j) = sum(m)-sum(k)
    surviving = int(mask.sum())
    return mask, surviving, mask.size - surviving


def apply_mask(E: ProcessTensor, mask: np.ndarray | None = None) -> ProcessTensor:
    if mask is None:
        mask = phase_invariant_mask(E.space_in.cutoff, E.space_in.modes)[0]
    return ProcessTensor(E.space_in, E.space_out, np.where(mask, E.E, 0), masked=True)


# -- probes -----------------------------------------------------------------------------------------

@dataclass
class Probe:
    """One coherent input (amplitude per input mode) with its output records."""

    alphas: tuple
    values: np.ndarray  # (count, modes) output quadratures
    phases: np.ndarray  # (count, modes) local-oscillator phases
    delta: float | None = None
    fail_probability: float | None = None  # slot for trace-decreasing extensions


@dataclass
class ProbeSet:
    probes: list

    def __post_init__(self):
        if not self.probes:
            raise ValueError("probe set is empty")
        for p in self.probes:
            if len(p.values) < 1:
                raise ValueError("every probe needs at least one record")

    @property
    def total_records(self) -> int:
        return int(sum(len(p.values) for p in self.probes))


def _probe_state(alphas, cutoff, conjugate=True) -> np.ndarray:
    a = np.conj(alphas) if conjugate else np.asarray(alphas)
    vec = np.ones(1, complex)
    for x in a:
        c = st.coherent_amplitudes(x, cutoff)
        vec = np.kron(vec, c / np.linalg.norm(c))
    return vec


def probe_gram_condition(probes: ProbeSet, cutoff: int) -> float:
    distinct = {tuple(np.round(p.alphas, 12)): p.alphas for p in probes.probes}
    vecs = np.array([_probe_state(a, cutoff) for a in distinct.values()])
    overlaps = vecs.conj() @ vecs.T
    gram = np.abs(overlaps) ** 2  # Hilbert-Schmidt inner products of the projectors
    w = np.linalg.eigvalsh(gram)
    return float(w.max() / max(w.min(), 1e-300))


def _regularized_inverse_sqrt(A, sectors, rel_floor):
    """A^(-1/2) with eigenvalues floored at ``rel_floor`` * max, decomposed per sector.

    Also returns the PSD completion sum_v (1 - w_v/floor) |v><v| over floored
    eigenvectors and the number of floored eigenvalues.
    """
    A = hermitize(A)
    floor = rel_floor * np.linalg.eigvalsh(A).max()
    inv = np.zeros_like(A)
    fill = np.zeros_like(A)
    count = 0
    for s_ in np.unique(sectors):
        idx = np.flatnonzero(sectors == s_)
        w, v = np.linalg.eigh(A[np.ix_(idx, idx)])
        low = w < floor
        count += int(low.sum())
        wc = np.where(low, floor, w)
        inv[np.ix_(idx, idx)] = (v / np.sqrt(wc)) @ v.conj().T
        if low.any():
            vl = v[:, low]
            fill[np.ix_(idx, idx)] = (vl * (1 - np.clip(w[low], 0, None) / floor)) @ vl.conj().T
    return inv, fill, count


def maxlik_process(probes: ProbeSet, config: ReconstructionConfig = ReconstructionConfig(),
                   reference: ProcessTensor | None = None, max_condition: float = 1e12,
                   callback=None) -> ReconstructionReport:
    """Coherent-state-probed MaxLik process reconstruction.

    Iterates E <- L^-1 R E R L^-1 where R = sum_j |a_j*><a_j*| (x) R_j and
    L = (Tr_K[R E R])^(1/2) (x) I_K.  If an iterate lowers the likelihood the
    step is diluted, R -> I + eps R, before giving up.
    """
    N = config.cutoff
    M = len(probes.probes[0].alphas)
    space = FockSpace(M, N)
    dh = dk = space.dim
    cond = probe_gram_condition(probes, N)
    if cond > max_condition:
        raise ValueError(f"probe coverage too poor: Gram condition number {cond:.3g}")
    # per-probe binned projector vectors
    P_in, V_out, W = [], [], []
    for pr in probes.probes:
        xs, ths, w = bin_records(pr.values, pr.phases, config.bin_width, config.phase_bins)
        V_out.append(_joint_vectors(N, xs, ths))
        W.append(w)
        a = _probe_state(pr.alphas, N, config.conjugate_probes)
        P_in.append(np.outer(a, a.conj()))
    mask = phase_invariant_mask(N, M)[0] if config.phase_invariant else None

    E = np.eye(dh * dk, dtype=complex) / dk
    notes = []

    def out_states(Em):
        T = Em.reshape(dh, dk, dh, dk)
        # A_j = Tr_H[E (P_j x I)]; P_j already holds the conjugated probe
        return [np.einsum("njmk,mn->jk", T, P) for P in P_in]

    def likelihood(Em):
        total, ps = 0.0, []
        for A, V, w in zip(out_states(Em), V_out, W):
            p = np.clip(np.real(np.einsum("bi,ij,bj->b", V.conj(), A, V, optimize=True)), 1e-300, None)
            ps.append(p)
            total += float(np.sum(w * np.log(p)))
        return total, ps

    sectors = space.total_photons() if config.phase_invariant else np.zeros(dh, int)
    floored_steps = 0
    L0, ps = likelihood(E)
    history = [L0]
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        R = np.zeros((dh * dk, dh * dk), complex)
        for P, V, w, p in zip(P_in, V_out, W, ps):
            Rj = (V.T * (w / p)) @ V.conj()
            R += np.kron(P, Rj)
        if mask is not None:
            # phase-twirled gradient: keeps E inside the phase-invariant subspace exactly
            R = np.where(mask, R, 0)
        scale = np.abs(np.linalg.eigvalsh(hermitize(R))).max()
        Rn = R / scale
        eps = None
        while True:
            G = Rn if eps is None else np.eye(dh * dk) + eps * Rn
            GEG = hermitize(G @ E @ G)
            Lam2 = np.einsum("njmj->nm", GEG.reshape(dh, dk, dh, dk))
            inv_sqrt, fill, n_floored = _regularized_inverse_sqrt(Lam2, sectors, config.eig_floor)
            if n_floored:
                floored_steps += 1
            Linv = np.kron(inv_sqrt, np.eye(dk))
            # floored input directions get a maximally mixed output so Tr_K E = I stays exact
            new = hermitize(Linv @ GEG @ Linv + np.kron(fill, np.eye(dk) / dk))
            L, ps_new = likelihood(new)
            if L >= history[-1] - 1e-9 * abs(history[-1]):
                break
            eps = 1.0 if eps is None else eps / 2
            if eps < 1e-8:
                raise NonMonotoneLikelihood(f"likelihood decreased at iteration {it}: "
                                            f"{history[-1]:.12g} -> {L:.12g}")
        E, ps = new, ps_new
        history.append(L)
        if callback is not None:
            callback(it, L, E)
        if abs(history[-1] - history[-2]) < config.tolerance * abs(history[-1]):
            converged = True
            break
    if floored_steps:
        msg = f"Lambda regularized on {floored_steps} iteration(s): weakly probed input directions"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    result = ProcessTensor(space, space, E, masked=mask is not None)
    report = ReconstructionReport(result, it, history, result.trace_residual(), converged=converged, notes=notes)
    if reference is not None:
        Np = config.report_cutoff if config.report_cutoff is not None else N
        report.fidelity = process_fidelity(truncate(result, Np), truncate(reference, Np), fit_phase=True)
    return report


# -- truncation and fidelity ------------------------------------------------------------------------

def truncate(E: ProcessTensor, N_prime: int) -> ProcessTensor:
    """Restrict every index group to at most ``N_prime`` photons per mode."""
    N = E.space_in.cutoff
    if N_prime > N:
        raise ValueError("cannot truncate above the current cutoff")
    if N_prime == N:
        return E
    M_in, M_out = E.space_in.modes, E.space_out.modes
    keep_in = [i for i, occ in enumerate(E.space_in.basis()) if max(occ) <= N_prime]
    keep_out = [i for i, occ in enumerate(E.space_out.basis()) if max(occ) <= N_prime]
    T = E.tensor()[np.ix_(keep_in, keep_out, keep_in, keep_out)]
    si, so = FockSpace(M_in, N_prime), FockSpace(M_out, N_prime)
    d = si.dim * so.dim
    return ProcessTensor(si, so, T.reshape(d, d), E.masked)


def _rotate_output(E: ProcessTensor, phi: float) -> np.ndarray:
    ph = np.exp(1j * phi * E.space_out.total_photons())
    D = np.kron(np.ones(E.space_in.dim), ph)
    return D[:, None] * E.E * D.conj()[None, :]


def process_fidelity(E1: ProcessTensor, E2: ProcessTensor, fit_phase: bool = False) -> float:
    """Uhlmann fidelity of the normalized Jamiolkowski states.

    With ``fit_phase`` a common output phase delay on ``E1`` is optimized first.
    """
    if E1.E.shape != E2.E.shape:
        raise ValueError("process tensors differ in shape")
    A = E2.E / np.trace(E2.E).real

    def f(phi):
        B = _rotate_output(E1, phi)
        return matrix_fidelity(B / np.trace(B).real, A)

    if not fit_phase:
        return f(0.0)
    grid = np.linspace(-np.pi, np.pi, 73)
    vals = [f(p) for p in grid]
    p0 = grid[int(np.argmax(vals))]
    res = minimize_scalar(lambda p: -f(p), bounds=(p0 - 0.1, p0 + 0.1), method="bounded",
                          options={"xatol": 1e-6})
    return float(max(-res.fun, max(vals)))


# -- probe generation and synthetic data ---------------------------------------------------------

def _polarizer(x):
    s, c = np.sin(x), np.cos(x)
    return np.array([[s * s, s * c], [s * c, c * c]])


def waveplate(x: float, retardance: float) -> np.ndarray:
    """Jones matrix of a retarder with its fast axis at ``x`` from horizontal."""
    return _polarizer(x) + np.exp(1j * retardance) * _polarizer(x + np.pi / 2)


def waveplate_probe(half_deg: float, quarter_deg: float, energy: float = 0.9) -> tuple:
    """Mode amplitudes (vertical, horizontal) after half- then quarter-wave plates acting on H light."""
    jones = waveplate(np.radians(quarter_deg), np.pi / 2) @ waveplate(np.radians(half_deg), np.pi) @ np.array([0, 1])
    a = np.sqrt(energy) * jones
    return tuple(complex(v) for v in a)


def waveplate_probe_grid(angles_deg=(0, 15, 30, 45), energy: float = 0.9) -> list:
    return [waveplate_probe(h, q, energy) for h in angles_deg for q in angles_deg]


def sample_coherent_output(U: np.ndarray, alphas, phases: np.ndarray, rng) -> np.ndarray:
    """Homodyne samples of the coherent output U alpha at LO phases (count, modes)."""
    beta = np.asarray(U) @ np.asarray(alphas, complex)
    means = np.sqrt(2) * np.abs(beta)[None, :] * np.cos(phases - np.angle(beta)[None, :])
    return means + rng.normal(scale=np.sqrt(0.5), size=phases.shape)


def synthetic_probe_set(U: np.ndarray, probes: list, deltas=(0.67, 2.64, 5.29), per_setting: int = 20000,
                        seed: int = 0) -> ProbeSet:
    """Coherent probes through mode matrix ``U`` with a uniformly swept LO phase.

    Channel 1 carries phase theta_2 + delta for each relative phase ``delta``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for a in probes:
        for d in deltas:
            th2 = rng.uniform(0, 2 * np.pi, per_setting)
            ph = np.stack([th2 + d, th2], axis=1)
            out.append(Probe(tuple(a), sample_coherent_output(U, a, ph, rng), ph, delta=d))
    return ProbeSet(out)
