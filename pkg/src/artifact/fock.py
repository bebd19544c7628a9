"""Truncated multimode Fock-space linear algebra.

Basis states of ``M`` modes with at most ``N`` photons per mode are
enumerated row-major with mode 0 as the slowest-varying index, so the
flat index of ``|n_0, n_1, ..., n_{M-1}>`` is ``sum_k n_k (N+1)^(M-1-k)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
EIG_FLOOR = -1e-9
TRACE_TOL = 1e-8


@dataclass(frozen=True)
class FockSpace:
    """``modes`` optical modes, each truncated at ``cutoff`` photons."""

    modes: int
    cutoff: int

    def __post_init__(self):
        if int(self.modes) < 1:
            raise ValueError("modes must be >= 1")
        if int(self.cutoff) < 0:
            raise ValueError("cutoff must be >= 0")

    @property
    def local_dim(self) -> int:
        return self.cutoff + 1

    @property
    def dim(self) -> int:
        return self.local_dim ** self.modes

    @property
    def shape(self) -> tuple:
        return (self.local_dim,) * self.modes

    def index(self, occupation: Sequence[int]) -> int:
        if len(occupation) != self.modes:
            raise ValueError("occupation length does not match modes")
        if any(n < 0 or n > self.cutoff for n in occupation):
            raise ValueError(f"occupation {tuple(occupation)} outside cutoff {self.cutoff}")
        return int(np.ravel_multi_index(tuple(occupation), self.shape))

    def occupation(self, index: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(index, self.shape))

    def basis(self):
        """Iterate over occupation tuples in storage order."""
        return product(range(self.local_dim), repeat=self.modes)

    def total_photons(self) -> np.ndarray:
        """Total photon number of every basis state, in storage order."""
        grids = np.indices(self.shape).reshape(self.modes, -1)
        return grids.sum(axis=0)

    def with_modes(self, modes: int) -> "FockSpace":
        return FockSpace(modes, self.cutoff)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state amplitudes.

    A vector whose squared norm is below one must be flagged as a
    ``conditional`` branch; the squared norm is then the branch
    probability and is never renormalized implicitly.
    """

    space: FockSpace
    amplitudes: np.ndarray
    conditional: bool = False
    discarded: float = 0.0  # weight dropped by truncation before renormalizing

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.space.dim:
            raise ValueError(f"expected {self.space.dim} amplitudes, got {amps.size}")
        object.__setattr__(self, "amplitudes", amps)
        p = self.probability
        if not p > 0:
            raise ValueError("state has zero norm")
        if p > 1 + TRACE_TOL or (not self.conditional and abs(p - 1) > TRACE_TOL):
            raise ValueError(f"squared norm {p:.12g} invalid for "
                             f"{'conditional' if self.conditional else 'normalized'} state")

    @property
    def probability(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "StateVector":
        return StateVector(self.space, self.amplitudes / np.sqrt(self.probability))

    def density(self) -> "DensityOperator":
        return DensityOperator(self.space, np.outer(self.amplitudes, self.amplitudes.conj()),
                               conditional=self.conditional)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.space.shape)

    def amplitude(self, *occupation) -> complex:
        return complex(self.amplitudes[self.space.index(occupation)])


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian positive operator with trace in (0, 1].

    Trace below one is allowed only for ``conditional`` branches, where it
    equals the branch probability.
    """

    space: FockSpace
    matrix: np.ndarray
    conditional: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            m = m.reshape(d, d)
        object.__setattr__(self, "matrix", m)
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * scale:
            raise ValueError("density operator is not Hermitian")
        tr = self.probability
        if not tr > 0:
            raise ValueError("density operator has nonpositive trace")
        if tr > 1 + TRACE_TOL or (not self.conditional and abs(tr - 1) > TRACE_TOL):
            raise ValueError(f"trace {tr:.12g} invalid for "
                             f"{'conditional' if self.conditional else 'normalized'} operator")

    @property
    def probability(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalized(self) -> "DensityOperator":
        return DensityOperator(self.space, self.matrix / self.probability)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(hermitize(self.matrix))

    def is_physical(self, floor: float = EIG_FLOOR) -> bool:
        return bool(self.eigenvalues().min() >= floor * max(1.0, self.probability))

    def tensor(self) -> np.ndarray:
        return self.matrix.reshape(self.space.shape * 2)

    def element(self, row: Sequence[int], col: Sequence[int]) -> complex:
        return complex(self.matrix[self.space.index(row), self.space.index(col)])

    def population(self, *occupation) -> float:
        i = self.space.index(occupation)
        return float(self.matrix[i, i].real)

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def expect(self, op) -> complex:
        mat = op.matrix if isinstance(op, OperatorMatrix) else np.asarray(op)
        return complex(np.trace(mat @ self.matrix))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    space: FockSpace
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError("operator shape does not match space")
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix.conj().T, self.label + "^dag")

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.space, self.matrix @ other.matrix, f"{self.label}*{other.label}")
        if isinstance(other, StateVector):
            v = self.matrix @ other.amplitudes
            return v
        return self.matrix @ other


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


# -- single-mode building blocks -------------------------------------------

def annihilation_matrix(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1).astype(complex)


def local_operator(kind: str, cutoff: int) -> np.ndarray:
    a = annihilation_matrix(cutoff)
    if kind == "annihilate":
        return a
    if kind == "create":
        return a.conj().T.copy()
    if kind == "number":
        return np.diag(np.arange(cutoff + 1, dtype=float)).astype(complex)
    raise ValueError(f"unknown ladder kind {kind!r}")


def lift(local: np.ndarray, space: FockSpace, mode: int) -> np.ndarray:
    """Embed a single-mode matrix on ``mode`` with identity elsewhere."""
    if not 0 <= mode < space.modes:
        raise IndexError(f"mode {mode} out of range for {space.modes} modes")
    left = np.eye(space.local_dim ** mode)
    right = np.eye(space.local_dim ** (space.modes - mode - 1))
    return np.kron(np.kron(left, local), right)


def ladder(space: FockSpace, mode: int, kind: str = "annihilate") -> OperatorMatrix:
    """Ladder or number operator on one mode of ``space``."""
    local = local_operator(kind, space.cutoff)
    return OperatorMatrix(space, lift(local, space, mode), f"{kind}[{mode}]")


def quadrature_matrix(cutoff: int, theta: float) -> np.ndarray:
    """Single-mode Q_theta = (a e^{-i theta} + a^dag e^{i theta}) / sqrt 2."""
    a = annihilation_matrix(cutoff)
    return (a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)) / np.sqrt(2)


# -- applying local operators without building full matrices ------------------

def apply_local_vector(vec: np.ndarray, space: FockSpace, op: np.ndarray, modes: Sequence[int]) -> np.ndarray:
    """Apply ``op`` acting on the listed modes (row-major among them) to a flat vector."""
    k = len(modes)
    t = vec.reshape(space.shape)
    opt = op.reshape((space.local_dim,) * (2 * k))
    t = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), list(modes)))
    # tensordot puts the new axes first; move them back into place
    t = np.moveaxis(t, list(range(k)), list(modes))
    return t.reshape(-1)


def apply_local_density(mat: np.ndarray, space: FockSpace, op: np.ndarray, modes: Sequence[int],
                        right: np.ndarray | None = None) -> np.ndarray:
    """Return ``op rho right`` where both act on ``modes``; ``right`` defaults to op^dag."""
    M = space.modes
    k = len(modes)
    if right is None:
        right = op.conj().T
    t = mat.reshape(space.shape * 2)
    opt = op.reshape((space.local_dim,) * (2 * k))
    t = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), list(modes)))
    t = np.moveaxis(t, list(range(k)), list(modes))
    rt = right.reshape((space.local_dim,) * (2 * k))
    col_axes = [M + m for m in modes]
    t = np.tensordot(t, rt, axes=(col_axes, list(range(k))))
    t = np.moveaxis(t, list(range(2 * M - k, 2 * M)), col_axes)
    return t.reshape(space.dim, space.dim)


# -- composition ---------------------------------------------------------------

def embed_tensor(parts: Sequence):
    """Kronecker product of states or operators in the given mode order."""
    if not parts:
        raise ValueError("nothing to compose")
    kinds = {type(p) for p in parts}
    if len(kinds) != 1:
        raise TypeError("cannot mix states, densities and operators")
    cutoffs = {p.space.cutoff for p in parts}
    if len(cutoffs) != 1:
        raise ValueError("all parts must share the same cutoff")
    space = FockSpace(sum(p.space.modes for p in parts), parts[0].space.cutoff)
    kind = kinds.pop()
    if kind is StateVector:
        out = parts[0].amplitudes
        for p in parts[1:]:
            out = np.kron(out, p.amplitudes)
        return StateVector(space, out, conditional=any(p.conditional for p in parts))
    if kind is DensityOperator:
        out = parts[0].matrix
        for p in parts[1:]:
            out = np.kron(out, p.matrix)
        return DensityOperator(space, out, conditional=any(p.conditional for p in parts))
    if kind is OperatorMatrix:
        out = parts[0].matrix
        for p in parts[1:]:
            out = np.kron(out, p.matrix)
        return OperatorMatrix(space, out, "(x)".join(p.label for p in parts))
    raise TypeError(f"unsupported part type {kind.__name__}")


def basis_state(space: FockSpace, occupation: Sequence[int]) -> StateVector:
    v = np.zeros(space.dim, complex)
    v[space.index(occupation)] = 1.0
    return StateVector(space, v)


def vacuum(space: FockSpace) -> StateVector:
    return basis_state(space, (0,) * space.modes)


def as_density(state) -> DensityOperator:
    if isinstance(state, DensityOperator):
        return state
    if isinstance(state, StateVector):
        return state.density()
    raise TypeError(f"expected a state, got {type(state).__name__}")


def partial_trace(rho: DensityOperator, keep: Sequence[int]) -> DensityOperator:
    """Trace out every mode not listed in ``keep``."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be nonempty")
    M = rho.space.modes
    if keep[0] < 0 or keep[-1] >= M:
        raise IndexError("keep modes out of range")
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:M])
    cols = list(letters[M:2 * M])
    for m in range(M):
        if m not in keep:
            cols[m] = rows[m]
    spec = "".join(rows) + "".join(cols) + "->" + "".join(rows[k] for k in keep) + "".join(cols[k] for k in keep)
    t = np.einsum(spec, rho.tensor())
    sub = FockSpace(len(keep), rho.space.cutoff)
    return DensityOperator(sub, t.reshape(sub.dim, sub.dim), conditional=rho.conditional)


def partial_transpose(rho: DensityOperator, mode: int = 1) -> OperatorMatrix:
    if rho.space.modes != 2:
        raise ValueError("partial transpose is defined here for two-mode states only")
    if mode not in (0, 1):
        raise IndexError("mode must be 0 or 1")
    t = rho.tensor()
    t = t.transpose(2, 1, 0, 3) if mode == 0 else t.transpose(0, 3, 2, 1)
    return OperatorMatrix(rho.space, t.reshape(rho.space.dim, rho.space.dim), f"PT[{mode}]")


# -- matrix functions ----------------------------------------------------------

def psd_eigh(m: np.ndarray, floor: float = EIG_FLOOR):
    """Eigendecomposition with small negative eigenvalues clamped to zero."""
    w, v = np.linalg.eigh(hermitize(m))
    w = np.where(w < 0, np.where(w >= floor * max(1.0, np.abs(w).max()), 0.0, w), w)
    return w, v


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = psd_eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def trace_norm(m: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(hermitize(m))).sum())


def log_negativity(rho: DensityOperator, base=2) -> float:
    """Logarithm of the trace norm of the partial transpose.

    ``base`` is 2 (default) or ``"e"``.
    """
    if abs(rho.probability - 1) > 1e-8:
        raise ValueError("log-negativity needs a normalized state")
    norm = trace_norm(partial_transpose(rho, 1).matrix)
    value = np.log(norm)
    if base in ("e", np.e):
        return float(max(value, 0.0))
    if base == 2:
        return float(max(value / np.log(2), 0.0))
    raise ValueError("base must be 2 or 'e'")


def fidelity(rho, sigma) -> float:
    """Squared Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    When either argument is a normalized ket the closed form <psi|sigma|psi> is used.
    """
    if isinstance(sigma, StateVector) and not isinstance(rho, StateVector):
        rho, sigma = sigma, rho
    if isinstance(rho, StateVector) and not rho.conditional:
        other = sigma.amplitudes if isinstance(sigma, StateVector) else None
        if rho.space != sigma.space:
            raise ValueError("states live on different spaces")
        if other is not None:
            return float(min(1.0, abs(np.vdot(rho.amplitudes, other)) ** 2))
        psi = rho.amplitudes
        return float(min(1.0, max(0.0, np.vdot(psi, as_density(sigma).matrix @ psi).real)))
    rho, sigma = as_density(rho), as_density(sigma)
    if rho.space != sigma.space:
        raise ValueError("states live on different spaces")
    return matrix_fidelity(rho.matrix, sigma.matrix)


def matrix_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    sa = psd_sqrt(a)
    w, _ = psd_eigh(sa @ b @ sa)
    return float(min(1.0, np.sqrt(np.clip(w, 0, None)).sum() ** 2))


# -- serialization -------------------------------------------------------------

def to_json_dict(obj) -> dict:
    data = obj.amplitudes if isinstance(obj, StateVector) else obj.matrix
    d = {"modes": obj.space.modes, "cutoff": obj.space.cutoff,
         "re": np.real(data).ravel().tolist(), "im": np.imag(data).ravel().tolist()}
    if isinstance(obj, StateVector):
        d["kind"] = "state"
    elif isinstance(obj, DensityOperator):
        d["kind"] = "density"
    else:
        d["kind"] = "operator"
        d["label"] = obj.label
    return d


def from_json_dict(d: dict):
    space = FockSpace(int(d["modes"]), int(d["cutoff"]))
    data = np.asarray(d["re"], float) + 1j * np.asarray(d["im"], float)
    kind = d.get("kind", "density" if data.size == space.dim ** 2 else "state")
    if kind == "state":
        return StateVector(space, data)
    if kind == "density":
        return DensityOperator(space, data.reshape(space.dim, space.dim))
    return OperatorMatrix(space, data.reshape(space.dim, space.dim), d.get("label", ""))


def dumps(obj) -> str:
    return json.dumps(to_json_dict(obj))


def loads(text: str):
    return from_json_dict(json.loads(text))
