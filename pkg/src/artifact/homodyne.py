"""Homodyne measurement simulation and the trace/phase processing chain."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.optimize import least_squares

from .conventions import VACUUM_VARIANCE
from .fock import (DensityOperator, FockSpace, OperatorMatrix, annihilation_matrix, as_density,
                   partial_trace)


# -- wavefunctions and grids ------------------------------------------------------

def hermite_functions(nmax: int, x) -> np.ndarray:
    """Oscillator eigenfunctions psi_0..psi_nmax at ``x`` (vacuum variance 1/2).

    Three-term recurrence, stable for large n where explicit Hermite
    polynomials overflow.  Returns shape (nmax + 1, len(x)).
    """
    x = np.atleast_1d(np.asarray(x, float))
    out = np.empty((nmax + 1, x.size))
    out[0] = np.pi ** -0.25 * np.exp(-x ** 2 / 2)
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, nmax):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quad_wavefunction(n: int, x):
    psi = hermite_functions(n, x)[n]
    return float(psi[0]) if np.ndim(x) == 0 else psi


@dataclass(frozen=True)
class QuadratureGrid:
    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("grid needs lo < hi")
        if not self.step > 0:
            raise ValueError("grid step must be positive")

    @classmethod
    def default(cls, cutoff: int, step: float = 0.01) -> "QuadratureGrid":
        half = 4 + 2 * np.sqrt(cutoff + 1)
        return cls(-half, half, step)

    @property
    def points(self) -> np.ndarray:
        n = int(round((self.hi - self.lo) / self.step)) + 1
        return self.lo + self.step * np.arange(n)


def _overlaps(cutoff: int, x: np.ndarray, theta: float) -> np.ndarray:
    """<X_theta = x | n> for all x (rows) and n (columns)."""
    psi = hermite_functions(cutoff, x).T
    return psi * np.exp(-1j * theta * np.arange(cutoff + 1))


def pdf(state, phases: Sequence[float], grid: QuadratureGrid | None = None,
        check: bool = True) -> np.ndarray:
    """Joint quadrature density on the grid, one axis per mode.

    Raises if the grid integral differs from one by more than 1e-4.
    """
    rho = as_density(state)
    phases = np.atleast_1d(np.asarray(phases, float))
    if phases.size != rho.space.modes:
        raise ValueError("need one phase per mode")
    grid = grid or QuadratureGrid.default(rho.space.cutoff)
    x = grid.points
    M = rho.space.modes
    N = rho.space.cutoff
    if M == 1:
        B = _overlaps(N, x, phases[0])
        t = np.einsum("xn,nm,xm->x", B, rho.matrix, B.conj(), optimize=True)
    elif M == 2:
        B0, B1 = _overlaps(N, x, phases[0]), _overlaps(N, x, phases[1])
        r = rho.matrix.reshape(rho.space.shape * 2)
        T = np.einsum("xn,npmq,xm->xpq", B0, r, B0.conj(), optimize=True)
        t = np.einsum("yp,xpq,yq->xy", B1, T, B1.conj(), optimize=True)
    else:
        raise NotImplementedError("dense joint tables are limited to two modes; use sample()")
    p = np.real(t)
    if check:
        total = p.sum() * grid.step ** M
        if abs(total - rho.probability) > 1e-4:
            raise ValueError(f"grid too coarse or narrow: pdf integrates to {total:.6g}")
    return p


# -- sampling ------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRecord:
    values: tuple
    phases: tuple
    tag: str = ""
    t: float | None = None

    def to_json(self) -> str:
        d = {"values": list(self.values), "phases": list(self.phases), "tag": self.tag}
        if self.t is not None:
            d["t"] = self.t
        return json.dumps(d)


@dataclass
class QuadratureSamples:
    """Columnar batch of records sharing one phase setting."""

    values: np.ndarray  # (count, modes)
    phases: np.ndarray  # (modes,)
    tag: str = ""

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[QuadratureRecord]:
        ph = tuple(float(p) % (2 * np.pi) for p in self.phases)
        for row in self.values:
            yield QuadratureRecord(tuple(float(v) for v in row), ph, self.tag)

    def records(self) -> list:
        return list(self)


class DatasetError(ValueError):
    """Malformed record file; the message names the offending line."""


def load_records(path) -> list:
    """Read a JSONL file of quadrature records."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                vals, ph = tuple(float(v) for v in d["values"]), tuple(float(v) for v in d["phases"])
                if len(vals) != len(ph) or not vals:
                    raise ValueError("values and phases differ in length")
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed record ({exc})") from None
            out.append(QuadratureRecord(vals, ph, d.get("tag", ""), d.get("t")))
    if not out:
        raise DatasetError(f"{path}: no records")
    return out


def save_records(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def _draw_1d(p: np.ndarray, x: np.ndarray, step: float, n: int, rng) -> np.ndarray:
    w = np.clip(p, 0, None)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    u = rng.random(n)
    bins = np.searchsorted(cdf, u, side="right")
    bins = np.minimum(bins, x.size - 1)
    return bins


def _sample_last(mat, cutoff, phases, x, step, rows, bins, out, col, rng):
    """Draw the final mode for every row at once, given the grid bins of the previous one."""
    d = cutoff + 1
    uniq, group = np.unique(bins, return_inverse=True)
    Bu = _overlaps(cutoff, x[uniq], phases[0])
    cond = np.einsum("un,nimj,um->uij", Bu, mat.reshape(d, d, d, d), Bu.conj(), optimize=True)
    B1 = _overlaps(cutoff, x, phases[1])
    p = np.clip(np.real(np.einsum("xi,uij,xj->ux", B1, cond, B1.conj(), optimize=True)), 0, None)
    cdf = np.cumsum(p, axis=1)
    cdf /= cdf[:, -1:]
    # one flattened search: row g occupies the interval (g, g + 1]
    flat = (cdf + np.arange(uniq.size)[:, None]).ravel()
    u = rng.random(rows.size)
    idx = np.searchsorted(flat, group + u, side="right") - group * x.size
    idx = np.clip(idx, 0, x.size - 1)
    out[rows, col] = x[idx] + (rng.random(rows.size) - 0.5) * step


def _conditional(rho_t: np.ndarray, cutoff: int, x: float, theta: float) -> np.ndarray:
    """Unnormalized state of modes 1.. after projecting mode 0 onto |X_theta = x>."""
    b = _overlaps(cutoff, np.array([x]), theta)[0]
    d = cutoff + 1
    rest = rho_t.shape[0] // d
    t = rho_t.reshape(d, rest, d, rest)
    return np.einsum("n,nimj,m->ij", b, t, b.conj())


def sample(state, phases: Sequence[float], count: int, seed=None,
           grid: QuadratureGrid | None = None, tag: str = "") -> QuadratureSamples:
    """Draw ``count`` joint quadrature records at fixed local-oscillator phases.

    Mode 0 is drawn from its marginal; every later mode is drawn from the
    state conditioned on the grid bin of the earlier draws.  Within a bin the
    value is jittered uniformly, so draws are continuous.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rho = as_density(state)
    phases = np.atleast_1d(np.asarray(phases, float))
    if phases.size != rho.space.modes:
        raise ValueError("need one phase per mode")
    rng = np.random.default_rng(seed)
    grid = grid or QuadratureGrid.default(rho.space.cutoff)
    x = grid.points
    out = np.empty((count, rho.space.modes))
    _sample_into(rho.matrix / rho.probability, rho.space.modes, rho.space.cutoff, phases, x, grid.step,
                 np.arange(count), out, 0, rng)
    return QuadratureSamples(out, phases.copy(), tag)


def _sample_into(mat, modes, cutoff, phases, x, step, rows, out, col, rng):
    d = cutoff + 1
    if modes == 1:
        marg = mat
    else:
        marg = np.einsum("iaja->ij", mat.reshape(d, d ** (modes - 1), d, d ** (modes - 1)))
    B = _overlaps(cutoff, x, phases[0])
    p = np.real(np.einsum("xn,nm,xm->x", B, marg, B.conj()))
    bins = _draw_1d(p, x, step, rows.size, rng)
    out[rows, col] = x[bins] + (rng.random(rows.size) - 0.5) * step
    if modes == 1:
        return
    if modes == 2:
        _sample_last(mat, cutoff, phases, x, step, rows, bins, out, col + 1, rng)
        return
    order = np.argsort(bins, kind="stable")
    sorted_bins = bins[order]
    uniq, starts = np.unique(sorted_bins, return_index=True)
    ends = np.append(starts[1:], sorted_bins.size)
    for b, s, e in zip(uniq, starts, ends):
        cond = _conditional(mat, cutoff, x[b], phases[0])
        tr = np.trace(cond).real
        _sample_into(cond / tr, modes - 1, cutoff, phases[1:], x, step, rows[order[s:e]], out, col + 1, rng)


# -- projectors and exact moments ------------------------------------------------------

def projector(value: float, phase: float, space: FockSpace) -> OperatorMatrix:
    """Rank-one |X_theta><X_theta| with <n|X_theta> = psi_n(X) e^{i n theta}."""
    if space.modes != 1:
        raise ValueError("projector is single-mode; compose with embed_tensor")
    v = hermite_functions(space.cutoff, value)[:, 0] * np.exp(1j * phase * np.arange(space.local_dim))
    return OperatorMatrix(space, np.outer(v, v.conj()), f"X={value:.4g},theta={phase:.4g}")


def quadrature_moments(state, mode: int, theta: float) -> tuple:
    """Exact (mean, variance) of Q_theta on one mode."""
    rho = partial_trace(as_density(state), [mode]).normalized()
    N = rho.space.cutoff
    a = annihilation_matrix(N)
    m = rho.matrix
    ea = np.trace(a @ m)
    ea2 = np.trace(a @ a @ m)
    en = np.trace(a.conj().T @ a @ m).real
    mean = np.sqrt(2) * np.real(ea * np.exp(-1j * theta))
    second = (2 * np.real(ea2 * np.exp(-2j * theta)) + 2 * en + 1) / 2
    return float(mean), float(second - mean ** 2)


def two_mode_sum_variance(state, theta1: float, theta2: float) -> float:
    """Exact variance of (Q1_theta1 + Q2_theta2) / sqrt 2 from normal-ordered moments."""
    rho = as_density(state).normalized()
    if rho.space.modes != 2:
        raise ValueError("need a two-mode state")
    N = rho.space.cutoff
    a = annihilation_matrix(N)
    I = np.eye(N + 1)
    a1, a2 = np.kron(a, I), np.kron(I, a)
    m = rho.matrix
    e = lambda op: np.trace(op @ m)
    m1, v1 = quadrature_moments(rho, 0, theta1)
    m2, v2 = quadrature_moments(rho, 1, theta2)
    # <Q1 Q2> = Re[<a1 a2> e^{-i(t1+t2)} + <a1 a2^dag> e^{-i(t1-t2)}]
    q1q2 = np.real(e(a1 @ a2) * np.exp(-1j * (theta1 + theta2))
                   + e(a1 @ a2.conj().T) * np.exp(-1j * (theta1 - theta2)))
    cov = q1q2 - m1 * m2
    return float((v1 + v2 + 2 * cov) / 2)


# -- oscilloscope traces ------------------------------------------------------------------

@dataclass
class TraceBatch:
    """Sampled detector traces: ``samples`` has one row per recorded trace."""

    samples: np.ndarray
    sample_period: float
    pulse_period: float
    trigger_offset: float
    template: np.ndarray  # response over one pulse period, unit quadrature
    pulses_per_trace: int

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[1] < 100:
            raise ValueError("need at least 100 points per trace")

    @property
    def points_per_pulse(self) -> int:
        return int(round(self.pulse_period / self.sample_period))

    def to_csv(self, path) -> None:
        header = {"sample_period": self.sample_period, "pulse_period": self.pulse_period,
                  "trigger_offset": self.trigger_offset, "pulses_per_trace": self.pulses_per_trace,
                  "template": self.template.tolist()}
        with open(path, "w") as fh:
            fh.write(json.dumps(header) + "\n")
            np.savetxt(fh, self.samples, delimiter=",")


def gaussian_response(width_points: float, center_points: float):
    """Pulse shape factory: Gaussian of given width centred in the pulse period."""
    def shape(k):
        return np.exp(-0.5 * ((k - center_points) / width_points) ** 2)
    shape.width = width_points
    return shape


def synth_traces(quadratures, response_shape: Callable | np.ndarray, noise_floor: float, seed=None,
                 points_per_pulse: int = 40, pulses_per_trace: int = 500, sample_period: float = 1 / 76e6 / 40,
                 drift_amplitude: float = 0.0, drift_period_pulses: float = 5000.0,
                 trigger_offset: float = 0.0) -> TraceBatch:
    """Render quadrature values as detector traces.

    Each pulse contributes ``q * shape``; white electronic noise of standard
    deviation ``noise_floor`` and a slow sinusoidal baseline drift are added.
    """
    q = np.asarray(quadratures, float).ravel()
    rng = np.random.default_rng(seed)
    k = np.arange(points_per_pulse, dtype=float)
    template = np.asarray(response_shape(k) if callable(response_shape) else response_shape, float)
    if template.size != points_per_pulse:
        raise ValueError("response shape must cover one pulse period")
    width = np.count_nonzero(template > 0.05 * template.max())
    if 2 * width >= points_per_pulse:
        raise ValueError("pulse period must exceed twice the response width")
    n_traces = int(np.ceil(q.size / pulses_per_trace))
    padded = np.zeros(n_traces * pulses_per_trace)
    padded[:q.size] = q
    sig = padded.reshape(n_traces, pulses_per_trace, 1) * template
    sig = sig.reshape(n_traces, -1)
    if noise_floor > 0:
        sig = sig + rng.normal(0, noise_floor, sig.shape)
    if drift_amplitude:
        t = np.arange(sig.size).reshape(sig.shape) / points_per_pulse
        phase0 = rng.uniform(0, 2 * np.pi)
        sig = sig + drift_amplitude * np.sin(2 * np.pi * t / drift_period_pulses + phase0)
    batch = TraceBatch(sig, sample_period, sample_period * points_per_pulse, trigger_offset, template,
                       pulses_per_trace)
    batch.count = q.size
    return batch


def discover_window(batch: TraceBatch, threshold: float = 3.0) -> tuple:
    """Indices (start, stop) within a pulse period where the pointwise variance
    exceeds ``threshold`` times the baseline variance."""
    P = batch.points_per_pulse
    folded = batch.samples.reshape(-1, P)
    var = folded.var(axis=0)
    baseline = np.percentile(var, 20)
    if baseline <= 0:
        baseline = np.finfo(float).tiny
    hot = np.flatnonzero(var > threshold * baseline)
    if hot.size == 0 or (baseline == np.finfo(float).tiny and var.max() == 0):
        raise ValueError("no signal windows found above threshold")
    # keep the longest contiguous run
    runs = np.split(hot, np.flatnonzero(np.diff(hot) > 1) + 1)
    run = max(runs, key=len)
    return int(run[0]), int(run[-1]) + 1


def extract_quadratures(batch: TraceBatch, threshold: float = 3.0, gap_points: int = 5,
                        scale: bool = True) -> np.ndarray:
    """Per-pulse quadrature estimates: window mean minus the preceding gap mean.

    With ``scale`` the result is divided by the template mean over the window,
    so a clean trace returns the injected values exactly.
    """
    lo, hi = discover_window(batch, threshold)
    P = batch.points_per_pulse
    folded = batch.samples.reshape(-1, P)
    win = folded[:, lo:hi].mean(axis=1)
    gap_idx = [(lo - 1 - i) % P for i in range(gap_points)]
    gap_idx = [g for g in gap_idx if not lo <= g < hi]
    base = folded[:, gap_idx].mean(axis=1) if gap_idx else 0.0
    vals = win - base
    if scale:
        tmpl = batch.template
        gap_t = tmpl[gap_idx].mean() if gap_idx else 0.0
        vals = vals / (tmpl[lo:hi].mean() - gap_t)
    count = getattr(batch, "count", vals.size)
    return vals[:count]


def vacuum_normalize(values, vacuum_values) -> np.ndarray:
    """Rescale so the vacuum calibration set has variance 1/2."""
    return np.asarray(values) * np.sqrt(VACUUM_VARIANCE / np.var(vacuum_values))


# -- correlations and phase retrieval ---------------------------------------------------------

def correlator(q1, q2, window: int) -> np.ndarray:
    """Block covariance <Q1 Q2> - <Q1><Q2> over consecutive blocks of ``window`` samples."""
    q1, q2 = np.asarray(q1, float), np.asarray(q2, float)
    if q1.shape != q2.shape:
        raise ValueError("series lengths differ")
    if window < 2:
        raise ValueError("window must be >= 2")
    n = q1.size // window
    a = q1[: n * window].reshape(n, window)
    b = q2[: n * window].reshape(n, window)
    return (a * b).mean(axis=1) - a.mean(axis=1) * b.mean(axis=1)


class PhaseFitError(RuntimeError):
    pass


@dataclass
class PhaseModel:
    """phi(t) = x t^2 + y t + z, with series ~ amplitude cos(phi(t - t0)) + baseline."""

    x: float
    y: float
    z: float
    t0: float = 0.0
    amplitude: float = 1.0
    baseline: float = 0.0
    offset: float = 0.0  # fixed phase difference between the two channels
    windows: list = field(default_factory=list)
    residual_rms: float = 0.0

    def phase(self, t):
        s = np.asarray(t, float) - self.t0
        return self.x * s ** 2 + self.y * s + self.z

    def __call__(self, t):
        return self.amplitude * np.cos(self.phase(t)) + self.baseline


def fit_phase(series, t, t0: float = 0.0, model: str = "linear", min_r2: float = 0.2) -> PhaseModel:
    """Least-squares fit of a cosine with polynomial phase to ``series(t)``.

    The starting frequency comes from the FFT peak.  A fit explaining less than
    ``min_r2`` of the variance raises ``PhaseFitError``.
    """
    y_obs = np.asarray(series, float)
    t = np.asarray(t, float)
    if y_obs.shape != t.shape:
        raise ValueError("series and time arrays differ in length")
    if model not in ("linear", "quadratic"):
        raise ValueError("model must be 'linear' or 'quadratic'")
    s = t - t0
    dt = np.median(np.diff(t))
    c0 = y_obs.mean()
    spec = np.fft.rfft(y_obs - c0)
    freqs = np.fft.rfftfreq(y_obs.size, dt)
    k = int(np.argmax(np.abs(spec[1:])) + 1)
    w0 = 2 * np.pi * freqs[k]
    a0 = 2 * np.abs(spec[k]) / y_obs.size
    z0 = np.angle(spec[k] * np.exp(1j * w0 * s[0]))
    span = max(np.ptp(s), dt)

    # scale the quadratic coefficient by the span so the problem is well conditioned
    def unpack(p):
        if model == "linear":
            a, c, y, z = p
            x = 0.0
        else:
            a, c, y, z, xs = p
            x = xs / span
        return a, c, x, y, z

    def resid(p):
        a, c, x, y, z = unpack(p)
        return a * np.cos(x * s ** 2 + y * s + z) + c - y_obs

    p0 = [a0, c0, w0, z0] + ([0.0] if model == "quadratic" else [])
    best = None
    for dz in (0.0, np.pi / 2, np.pi, -np.pi / 2):
        p = list(p0)
        p[3] = z0 + dz
        r = least_squares(resid, p, x_scale="jac", method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                          max_nfev=20000)
        if best is None or r.cost < best.cost:
            best = r
    a, c, x, y, z = unpack(best.x)
    if a < 0:
        a, z = -a, z + np.pi
    rms = float(np.sqrt(np.mean(best.fun ** 2)))
    total = float(np.var(y_obs))
    r2 = 1 - rms ** 2 / total if total > 0 else 0.0
    if not best.success or r2 < min_r2:
        raise PhaseFitError(f"phase fit did not converge (R^2 = {r2:.3f}, residual rms {rms:.3g})")
    return PhaseModel(x=float(x), y=float(y), z=float(np.mod(z, 2 * np.pi)), t0=t0, amplitude=float(a),
                      baseline=float(c), residual_rms=rms)


def assign_phase(model: PhaseModel, t) -> np.ndarray:
    return np.mod(model.phase(t), 2 * np.pi)


def bin_by_phase(values, phases, n_bins: int = 10) -> tuple:
    """Group samples into ``n_bins`` equal phase bins; return (centers, groups)."""
    edges = np.linspace(0, 2 * np.pi, n_bins + 1)
    idx = np.clip(np.digitize(np.mod(phases, 2 * np.pi), edges) - 1, 0, n_bins - 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    return centers, [np.asarray(values)[idx == i] for i in range(n_bins)]


# -- mode matching ----------------------------------------------------------------------------

def mode_overlap(phi1, phi2, dx: float = 1.0) -> float:
    """|<phi1|phi2>|^2 for mode-function tables on a common grid (normalized here)."""
    a, b = np.asarray(phi1, complex), np.asarray(phi2, complex)
    if a.shape != b.shape:
        raise ValueError("mode tables are on different grids")
    na = np.sqrt(np.sum(np.abs(a) ** 2) * dx)
    nb = np.sqrt(np.sum(np.abs(b) ** 2) * dx)
    return float(np.abs(np.sum(a.conj() * b) * dx / (na * nb)) ** 2)


def spectral_visibility(delta: float, m: float) -> float:
    """|sin(delta m pi) / (delta m pi)| for relative frequency offset ``delta``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return float(abs(np.sinc(delta * m)))
