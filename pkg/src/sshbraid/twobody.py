"""Two non-interacting bosons on the coupled chains.

A two-boson state is stored by its amplitudes ``A[q, r]`` (q <= r) on the
normalized Fock kets: ``|1_q 1_r>`` for q < r and ``|2_q>`` for q = r.
Internally it is often easier to work with the symmetric matrix ``C``
defined by

    |Psi> = 1/sqrt(2) sum_{q,r} C[q, r] b+_q b+_r |0>,

for which ``A[q, r] = sqrt(2) C[q, r]`` (q < r), ``A[q, q] = C[q, q]``, the
norm is the Frobenius norm of ``C`` and single-particle evolution acts as
``C -> U C U^T``.

For bosons injected at both ends of one chain and carried to another chain
by a period with dynamical phase ``theta``, composing the single-particle
half-angle maps gives

    -i sin(theta) (|2_1> + |2_L>)/sqrt(2) + cos(theta) |1_1 1_L>

on the destination chain, with the full angle. The antibunched term
vanishes at half-odd multiples of pi, leaving a NOON state.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .evolve import default_steps, propagate_operator
from .model import ModelParams, build_hamiltonian, site_index

__all__ = [
    "TwoBosonState",
    "pair_basis",
    "single_particle_propagator",
    "compose_two_boson",
    "two_boson_transfer_matrix",
    "second_quantized_hamiltonian",
    "direct_two_boson_evolution",
    "correlation",
    "two_boson_density",
    "noon_state",
    "noon_fidelity",
    "antibunching_weight",
    "bunching_weight",
    "MAX_DIRECT_MODES",
]

MAX_DIRECT_MODES = 42
_SQRT2 = np.sqrt(2.0)


@functools.lru_cache(maxsize=16)
def pair_basis(M: int):
    """Ordered (q, r) pairs with q <= r and the inverse lookup table."""
    q, r = np.triu_indices(M)
    index = -np.ones((M, M), dtype=int)
    index[q, r] = np.arange(len(q))
    index[r, q] = index[q, r]
    q.setflags(write=False)
    r.setflags(write=False)
    index.setflags(write=False)
    return q, r, index


@dataclass(frozen=True)
class TwoBosonState:
    modes: int
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        D = self.modes * (self.modes + 1) // 2
        if a.shape != (D,):
            raise ValueError(f"expected {D} pair amplitudes for {self.modes} modes, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_sites(cls, modes: int, q: int, r: int) -> "TwoBosonState":
        """One boson on site ``q`` and one on ``r`` (which may coincide)."""
        _, _, index = pair_basis(modes)
        a = np.zeros(modes * (modes + 1) // 2, dtype=complex)
        a[index[q, r]] = 1.0
        return cls(modes, a)

    @classmethod
    def from_symmetric(cls, C: np.ndarray) -> "TwoBosonState":
        C = np.asarray(C)
        q, r, _ = pair_basis(C.shape[0])
        a = C[q, r] * np.where(q == r, 1.0, _SQRT2)
        return cls(C.shape[0], a)

    def symmetric(self) -> np.ndarray:
        q, r, _ = pair_basis(self.modes)
        vals = self.amplitudes / np.where(q == r, 1.0, _SQRT2)
        C = np.zeros((self.modes, self.modes), dtype=complex)
        C[q, r] = vals
        C[r, q] = vals
        return C

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitude(self, q: int, r: int) -> complex:
        return complex(self.amplitudes[pair_basis(self.modes)[2][q, r]])

    def overlap(self, other: "TwoBosonState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def single_particle_propagator(params: ModelParams, steps=None, check_convergence: bool = True, frozen_at=None):
    """One-period propagator; column j is the evolved basis state |j>."""
    _, snaps, _ = propagate_operator(
        params, np.eye(params.dim), steps=steps, snapshots=2,
        check_convergence=check_convergence, frozen_at=frozen_at,
    )
    return snaps[-1]


def _require_unitary(U: np.ndarray, tol: float = 1e-9):
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError(f"propagator must be square, got {U.shape}")
    defect = float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))
    if defect > tol:
        raise ValueError(f"propagator is not unitary (defect {defect:.3e})")
    return U


def compose_two_boson(U, initial: TwoBosonState) -> TwoBosonState:
    """Evolve a two-boson state with the single-particle propagator ``U``."""
    U = _require_unitary(U)
    if U.shape[0] != initial.modes:
        raise ValueError(f"propagator size {U.shape[0]} != {initial.modes} modes")
    C = initial.symmetric()
    return TwoBosonState.from_symmetric(U @ C @ U.T)


def two_boson_transfer_matrix(U) -> np.ndarray:
    """Explicit symmetric-subspace matrix of ``U``, entry by entry.

    Entry ((q,r), (a,b)) is the two-path permanent
    ``U[q,a] U[r,b] + U[q,b] U[r,a]`` divided by
    ``sqrt((1 + [a == b]) (1 + [q == r]))``.
    """
    U = np.asarray(U)
    q, r, _ = pair_basis(U.shape[0])
    perm = U[q][:, q] * U[r][:, r] + U[q][:, r] * U[r][:, q]
    norm = np.sqrt(np.outer(1.0 + (q == r), 1.0 + (q == r)))
    return perm / norm


@functools.lru_cache(maxsize=8)
def _hopping_map(M: int) -> scipy.sparse.csr_matrix:
    """Sparse linear map vec(h) -> vec(H2) for H2 = sum_ij h_ij b+_i b_j.

    Matrix elements are taken from ladder-operator algebra on the
    occupation-number basis, independently of the pair-matrix picture.
    """
    q, r, index = pair_basis(M)
    D = len(q)
    rows, cols, vals = [], [], []
    for col in range(D):
        occ = {}
        for s in (q[col], r[col]):
            occ[s] = occ.get(s, 0) + 1
        for j, nj in occ.items():
            after = dict(occ)
            after[j] -= 1
            rest = [s for s, k in after.items() if k]
            for i in range(M):
                ni = after.get(i, 0)
                amp = np.sqrt(nj) * np.sqrt(ni + 1)
                a = rest[0]
                out = index[min(a, i), max(a, i)]
                rows.append(out * D + col)
                cols.append(i * M + j)
                vals.append(amp)
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(D * D, M * M))


def second_quantized_hamiltonian(h: np.ndarray) -> np.ndarray:
    """Two-boson Hamiltonian matrix on the pair basis built from ``h``."""
    M = h.shape[0]
    D = M * (M + 1) // 2
    return (_hopping_map(M) @ np.asarray(h).ravel()).reshape(D, D)


def direct_two_boson_evolution(
    params: ModelParams, initial: TwoBosonState, steps=None, frozen_at=None
) -> TwoBosonState:
    """Propagate two bosons with the full second-quantized Hamiltonian.

    Uses the same midpoint step exponential as single-particle propagation.
    Only meant for small systems as a check on :func:`compose_two_boson`.
    """
    M = params.dim
    if M > MAX_DIRECT_MODES:
        raise ValueError(
            f"{M} modes exceed the direct-evolution limit of {MAX_DIRECT_MODES}"
        )
    if initial.modes != M:
        raise ValueError(f"state has {initial.modes} modes, model has {M}")
    steps = default_steps(params.period, 2) if steps is None else int(steps)
    delta = params.period / steps
    psi = np.array(initial.amplitudes)
    for k in range(steps):
        t = frozen_at if frozen_at is not None else (k + 0.5) * delta
        e, V = np.linalg.eigh(second_quantized_hamiltonian(build_hamiltonian(params, t)))
        psi = V @ (np.exp(-1j * delta * e) * (V.conj().T @ psi))
    return TwoBosonState(M, psi)


def correlation(state: TwoBosonState) -> np.ndarray:
    """``Gamma[q, r] = <b+_q b+_r b_r b_q>``; entries sum to 2."""
    return 2.0 * np.abs(state.symmetric()) ** 2


def two_boson_density(state: TwoBosonState) -> np.ndarray:
    return correlation(state).sum(axis=1)


def _ends(params: ModelParams, chain):
    return site_index(chain, 1, params), site_index(chain, params.L, params)


def noon_state(params: ModelParams, chain) -> TwoBosonState:
    """(|2 on left end> + |2 on right end>)/sqrt(2) on ``chain``."""
    left, right = _ends(params, chain)
    a = TwoBosonState.from_sites(params.dim, left, left).amplitudes
    b = TwoBosonState.from_sites(params.dim, right, right).amplitudes
    return TwoBosonState(params.dim, (a + b) / _SQRT2)


def noon_fidelity(state: TwoBosonState, params: ModelParams, chain) -> float:
    return float(min(1.0, abs(noon_state(params, chain).overlap(state))))


def antibunching_weight(state: TwoBosonState, params: ModelParams, chain) -> float:
    """``Gamma[left, right]`` for the two ends of ``chain``."""
    left, right = _ends(params, chain)
    return float(correlation(state)[left, right])


def bunching_weight(state: TwoBosonState, params: ModelParams, chain) -> float:
    """Share of the correlation sum on the two doubly-occupied ends."""
    left, right = _ends(params, chain)
    G = correlation(state)
    return float((G[left, left] + G[right, right]) / G.sum())
