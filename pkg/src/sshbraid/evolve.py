"""Time-ordered propagation of single-particle states.

Every step applies exp(-i H(t_k + delta/2) delta), computed from an
eigendecomposition. The interchain and intrachain parts of H act on
different tensor factors and commute at equal times, so the step
exponential factors exactly into a small interchain unitary times an
L x L chain unitary. ``propagate_dense`` exponentiates the full matrix
instead and serves as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .model import (
    CHAIN_NAMES,
    Chains,
    ModelParams,
    build_parity,
    build_symmetry,
    schedule_arrays,
    site_index,
)

__all__ = [
    "DEFAULT_STEP",
    "DEFAULT_SNAPSHOTS",
    "default_steps",
    "EvolutionRecord",
    "propagate",
    "propagate_operator",
    "propagate_dense",
    "parity_series",
    "projected_parity_series",
    "destination_chain",
    "predict_final",
    "fidelity",
    "site_state",
    "end_state",
    "end_weights",
]

DEFAULT_STEP = 0.025
DEFAULT_SNAPSHOTS = 400
CONVERGENCE_TOL = 1e-8
_CHUNK = 2048


def default_steps(period: float, snapshots: int = DEFAULT_SNAPSHOTS, step: float = DEFAULT_STEP) -> int:
    """Smallest multiple of ``snapshots - 1`` with step size <= ``step``."""
    intervals = max(snapshots - 1, 1)
    n = math.ceil(period / step - 1e-9)
    return intervals * max(1, math.ceil(n / intervals))


def _ssh_stack(L: int, v: np.ndarray, w: float) -> np.ndarray:
    H = np.zeros(v.shape + (L, L))
    i = np.arange(0, L, 2)
    H[:, i, i + 1] = H[:, i + 1, i] = v[:, None]
    j = np.arange(1, L - 1, 2)
    H[:, j, j + 1] = H[:, j + 1, j] = w
    return H


def _chain_unitaries(L: int, v: np.ndarray, w: float, delta: float) -> np.ndarray:
    """exp(-i H_ssh delta) for a stack of hopping values ``v``.

    The chain is bipartite, H = [[0, C], [C^T, 0]] between odd and even
    sites, so the exponential only needs the eigendecomposition of the
    half-size matrix C^T C. Both blocks are entire functions of C^T C and
    nothing is divided by a singular value, which matters at v = 0.
    """
    m = L // 2
    C = np.zeros(v.shape + (m, m))
    C[:, np.arange(m), np.arange(m)] = v[:, None]
    C[:, np.arange(1, m), np.arange(m - 1)] = w
    Ct = np.swapaxes(C, -1, -2)
    lam, W = np.linalg.eigh(Ct @ C)
    y = np.sqrt(np.clip(lam, 0.0, None)) * delta
    Wt = np.swapaxes(W, -1, -2)
    cos_ = (W * np.cos(y)[:, None, :]) @ Wt
    sinc_ = (W * (delta * np.sinc(y / np.pi))[:, None, :]) @ Wt
    vers_ = (W * (0.5 * delta**2 * np.sinc(y / (2 * np.pi)) ** 2)[:, None, :]) @ Wt
    U = np.empty(v.shape + (L, L), dtype=complex)
    odd, even = np.arange(0, L, 2), np.arange(1, L, 2)
    U[:, odd[:, None], odd] = np.eye(m) - C @ vers_ @ Ct
    U[:, odd[:, None], even] = -1j * (C @ sinc_)
    U[:, even[:, None], odd] = -1j * (sinc_ @ Ct)
    U[:, even[:, None], even] = cos_
    return U


def _expm_stack(H: np.ndarray, delta: float) -> np.ndarray:
    e, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * delta * e)[:, None, :]) @ np.swapaxes(V, -1, -2)


def _step_factors(params: ModelParams, t_mid: np.ndarray, delta: float, frozen_at=None):
    ts = t_mid if frozen_at is None else np.full_like(t_mid, frozen_at)
    h, v = schedule_arrays(params, ts)
    return _expm_stack(h, delta), _chain_unitaries(params.L, v, params.w, delta)


def _ordered_product(M: np.ndarray) -> np.ndarray:
    """``M[..., K-1, :, :] @ ... @ M[..., 0, :, :]`` by pairwise reduction."""
    while M.shape[-3] > 1:
        if M.shape[-3] % 2:
            eye = np.broadcast_to(np.eye(M.shape[-1]), M.shape[:-3] + (1,) + M.shape[-2:])
            M = np.concatenate([M, eye], axis=-3)
        M = M[..., 1::2, :, :] @ M[..., 0::2, :, :]
    return M[..., 0, :, :]


def _segment_factors(params: ModelParams, steps: int, stride: int, frozen_at=None):
    """Interchain and chain propagators after every ``stride`` steps.

    A product of Kronecker factors is again a Kronecker factor, so the
    interchain and chain evolutions are accumulated separately; each
    segment is reduced in one vectorized pass.
    """
    delta = params.period / steps
    groups = steps // stride
    per_chunk = max(1, _CHUNK // stride)
    seg_a, seg_b = [], []
    for g0 in range(0, groups, per_chunk):
        g1 = min(g0 + per_chunk, groups)
        k = np.arange(g0 * stride, g1 * stride)
        A, B = _step_factors(params, (k + 0.5) * delta, delta, frozen_at)
        seg_a.append(_ordered_product(A.reshape(g1 - g0, stride, *A.shape[1:])))
        seg_b.append(_ordered_product(B.reshape(g1 - g0, stride, *B.shape[1:])))
    seg_a, seg_b = np.concatenate(seg_a), np.concatenate(seg_b)
    cum_a = [np.eye(params.n_chains, dtype=complex)]
    cum_b = [np.eye(params.L, dtype=complex)]
    for a, b in zip(seg_a, seg_b):
        cum_a.append(a @ cum_a[-1])
        cum_b.append(b @ cum_b[-1])
    return np.array(cum_a), np.array(cum_b)


def _evolve(params: ModelParams, X: np.ndarray, steps: int, stride: int, frozen_at=None):
    """Propagate columns of ``X`` (dim x m) over [0, T] in ``steps`` steps.

    Returns the state after every ``stride`` steps, starting with t = 0.
    """
    n, L = params.n_chains, params.L
    m = X.shape[1]
    cum_a, cum_b = _segment_factors(params, steps, stride, frozen_at)
    # (m, n, L) layout: the propagator acts as A @ Y @ B^T
    Y = X.T.reshape(m, n, L)
    out = np.einsum("sij,mjl,skl->smik", cum_a, Y, cum_b)
    return np.swapaxes(out.reshape(len(cum_a), m, n * L), 1, 2)


def _column_defect(a: np.ndarray, b: np.ndarray) -> float:
    overlaps = np.abs(np.einsum("ij,ij->j", a.conj(), b))
    return max(0.0, float(np.max(1.0 - overlaps)))


def _checked_steps(period: float, steps, snapshots: int) -> int:
    if snapshots < 2:
        raise ValueError(f"need at least 2 snapshots, got {snapshots}")
    if steps is None:
        return default_steps(period, snapshots)
    if steps < 1 or steps % (snapshots - 1):
        raise ValueError(f"steps ({steps}) must be a positive multiple of snapshots - 1 ({snapshots - 1})")
    return int(steps)


def propagate_operator(
    params: ModelParams,
    X: np.ndarray,
    steps=None,
    snapshots: int = 2,
    check_convergence: bool = True,
    frozen_at=None,
):
    """Propagate every column of ``X``; returns ``(times, snapshots, defect)``.

    ``snapshots`` has shape ``(snapshots, dim, m)``. With
    ``check_convergence`` the run is repeated with twice the steps and the
    worst final-column fidelity change must stay below 1e-8.
    """
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != params.dim:
        raise ValueError(f"state dimension {X.shape[0]} does not match model dimension {params.dim}")
    steps = _checked_steps(params.period, steps, snapshots)
    stride = steps // (snapshots - 1)
    snaps = _evolve(params, X, steps, stride, frozen_at)
    defect = None
    if check_convergence:
        fine = _evolve(params, X, 2 * steps, 2 * steps, frozen_at)[-1]
        defect = _column_defect(snaps[-1], fine)
        if defect > CONVERGENCE_TOL:
            raise ConvergenceError(
                f"step doubling changed the final state by {defect:.3e} "
                f"(limit {CONVERGENCE_TOL:g}); use more steps than {steps}",
                defect=defect,
            )
    times = np.linspace(0.0, params.period, snapshots)
    return times, snaps, defect


def propagate_dense(hamiltonian, psi0, t0: float, t1: float, steps: int) -> np.ndarray:
    """Midpoint exponential propagation for an arbitrary ``hamiltonian(t)``."""
    psi = np.asarray(psi0, dtype=complex).copy()
    delta = (t1 - t0) / steps
    for k in range(steps):
        e, V = np.linalg.eigh(hamiltonian(t0 + (k + 0.5) * delta))
        psi = V @ (np.exp(-1j * delta * e) * (V.conj().T @ psi))
    return psi


@dataclass(frozen=True)
class EvolutionRecord:
    params: ModelParams
    times: np.ndarray
    states: np.ndarray = field(repr=False)  # (snapshots, dim)
    density: np.ndarray = field(repr=False)
    parity: np.ndarray  # p(t) = <P>^2
    parity_expect: np.ndarray
    symmetry: np.ndarray  # <S>(t)
    steps: int
    convergence_defect: float = None

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(np.sum(self.density, axis=1) - 1.0)))


def propagate(
    params: ModelParams,
    initial,
    steps=None,
    snapshots: int = DEFAULT_SNAPSHOTS,
    check_convergence: bool = True,
    frozen_at=None,
) -> EvolutionRecord:
    """Evolve a normalized single-particle state over one period.

    ``steps`` defaults to the smallest multiple of ``snapshots - 1`` giving a
    step of at most 0.025. ``frozen_at`` holds every schedule at that time,
    which turns the run into a time-independent evolution.
    """
    psi0 = np.asarray(initial, dtype=complex)
    if psi0.shape != (params.dim,):
        raise ValueError(f"initial state must have shape ({params.dim},), got {psi0.shape}")
    norm = np.linalg.norm(psi0)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"initial state is not normalized (norm {norm:.12g})")
    times, snaps, defect = propagate_operator(
        params, psi0, steps, snapshots, check_convergence, frozen_at
    )
    states = snaps[:, :, 0]
    P = build_parity(params)
    p_exp = np.real(np.einsum("ti,ij,tj->t", states.conj(), P, states))
    s_exp = np.array(
        [np.vdot(psi, build_symmetry(params, float(t)) @ psi) for t, psi in zip(times, states)]
    )
    for a in (states, p_exp, s_exp, times):
        a.setflags(write=False)
    density = np.abs(states) ** 2
    density.setflags(write=False)
    parity = p_exp**2
    parity.setflags(write=False)
    return EvolutionRecord(
        params=params,
        times=times,
        states=states,
        density=density,
        parity=parity,
        parity_expect=p_exp,
        symmetry=s_exp,
        steps=_checked_steps(params.period, steps, snapshots),
        convergence_defect=defect,
    )


def parity_series(record: EvolutionRecord, P=None) -> np.ndarray:
    """``p(t) = <phi(t)|P|phi(t)>^2``."""
    if P is None:
        return record.parity
    st = record.states
    return np.real(np.einsum("ti,ij,tj->t", st.conj(), P, st)) ** 2


def projected_parity_series(record: EvolutionRecord, branches) -> dict:
    """Signed branch projections ``{(branch, parity): series}``.

    The even member gives ``+|<psi_+|phi>|^2`` and the odd member
    ``-|<psi_-|phi>|^2``. Branch traces must be sampled exactly at the
    snapshot times; nothing is interpolated.
    """
    grid = np.asarray(branches.grid)
    if len(grid) != len(record.times) or not np.allclose(
        grid, record.times, rtol=0, atol=1e-9 * record.params.period
    ):
        raise ValueError(
            "branch grid does not match snapshot times; track the branches on record.times"
        )
    out = {}
    for col, (b, sign) in enumerate(branches.labels):
        amp = np.einsum("ti,ti->t", branches.states[:, :, col].conj(), record.states)
        out[(b, sign)] = sign * np.abs(amp) ** 2
    return out


def destination_chain(params: ModelParams, chain) -> int:
    if isinstance(chain, str):
        chain = CHAIN_NAMES.index(chain.upper())
    n = params.n_chains
    if not 0 <= chain < n:
        raise ValueError(f"chain {chain} out of range for {n} chains")
    if params.chains is Chains.DOUBLE:
        return 1 - chain
    step = -1 if params.reversed else 1
    return (chain + step) % 3


def site_state(params: ModelParams, chain, l: int) -> np.ndarray:
    psi = np.zeros(params.dim, dtype=complex)
    psi[site_index(chain, l, params)] = 1.0
    return psi


def end_state(params: ModelParams, chain, end: str) -> np.ndarray:
    if end not in ("left", "right"):
        raise ValueError(f"end must be 'left' or 'right', got {end!r}")
    return site_state(params, chain, 1 if end == "left" else params.L)


def predict_final(params: ModelParams, chain, end: str, phase: float) -> np.ndarray:
    """Closed-form adiabatic endpoint for a particle starting at one chain end.

    The particle moves to the destination chain; the two ends there carry
    amplitudes cos(phase/2) (same end) and -i sin(phase/2) (opposite end).
    Global phase is dropped.
    """
    dest = destination_chain(params, chain)
    same = end_state(params, dest, end)
    other = end_state(params, dest, "right" if end == "left" else "left")
    return math.cos(phase / 2) * same - 1j * math.sin(phase / 2) * other


def fidelity(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(min(1.0, abs(np.vdot(a, b))))


def end_weights(params: ModelParams, state, chain) -> tuple:
    """Probability on the left and right end sites of ``chain``."""
    state = np.asarray(state)
    left = abs(state[site_index(chain, 1, params)]) ** 2
    right = abs(state[site_index(chain, params.L, params)]) ** 2
    return float(left), float(right)
