"""Instantaneous eigenanalysis of the driven chains.

Edge states are picked by end weight, labeled by their parity and by the
interchain-symmetry eigenvalue they carry, and tracked over one period.
The tracked strands give the braid word and the parity splitting gives the
dynamical phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .errors import BraidError, ConvergenceError, EdgeSetError, LabelingError, TrackingError
from .model import (
    BRANCH_NAMES,
    ModelParams,
    build_hamiltonian,
    build_parity,
    build_symmetry,
    hermiticity_defect,
    symmetry_eigenvalues,
)

__all__ = [
    "eigensolve",
    "end_weight",
    "EdgeStates",
    "find_edge_states",
    "LabeledEdges",
    "label_branches",
    "edge_states_at",
    "BranchSet",
    "track_branches",
    "overlap_matrix",
    "BraidWord",
    "extract_braid",
    "dynamical_phase",
    "period_for_phase",
]

EDGE_THRESHOLD = 0.5
LABEL_TOLERANCE = 0.2
CONTINUITY = 0.9


def eigensolve(H: np.ndarray):
    """Full spectrum of a Hermitian matrix, ascending.

    Returns ``(energies, states)`` with states as columns.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    defect = hermiticity_defect(H)
    if defect > 1e-14 * max(1.0, float(np.max(np.abs(H)))):
        raise ValueError(f"matrix is not Hermitian (defect {defect:.3e})")
    return np.linalg.eigh(H)


def _end_sites(params: ModelParams) -> np.ndarray:
    L = params.L
    ends = np.array([0, 1, L - 2, L - 1])
    return np.concatenate([c * L + ends for c in range(params.n_chains)])


def end_weight(states: np.ndarray, params: ModelParams) -> np.ndarray:
    """Probability on the two outermost sites at each end of every chain."""
    states = np.asarray(states)
    if states.ndim == 1:
        states = states[:, None]
    return np.sum(np.abs(states[_end_sites(params)]) ** 2, axis=0)


@dataclass(frozen=True)
class EdgeStates:
    energies: np.ndarray
    states: np.ndarray
    weights: np.ndarray
    indices: np.ndarray  # positions in the full spectrum


def find_edge_states(energies, states, params: ModelParams) -> EdgeStates:
    n_edge = 2 * params.n_chains
    W = end_weight(states, params)
    order = np.argsort(-W, kind="stable")[:n_edge]
    if np.count_nonzero(W[order] > EDGE_THRESHOLD) < n_edge:
        raise EdgeSetError(
            f"edge set not resolved: only {np.count_nonzero(W > EDGE_THRESHOLD)} "
            f"states exceed end weight {EDGE_THRESHOLD}, need {n_edge}"
        )
    order = np.sort(order)
    return EdgeStates(np.asarray(energies)[order], np.asarray(states)[:, order], W[order], order)


@dataclass(frozen=True)
class LabeledEdges:
    """Edge states in canonical order ``(I,+), (I,-), (II,+), ...``."""

    t: float
    labels: tuple
    energies: np.ndarray
    states: np.ndarray
    s_expect: np.ndarray
    parity: np.ndarray


def canonical_labels(n: int) -> tuple:
    return tuple((b, p) for b in range(n) for p in (1, -1))


def label_branches(edge: EdgeStates, S, P, t: float, params: ModelParams) -> LabeledEdges:
    """Attach (branch, parity) labels to the edge states.

    P and S are diagonalized jointly on the edge subspace first. This fixes
    the arbitrary mixing the eigensolver returns inside degenerate pairs,
    which occur wherever the parity splitting vanishes or two branches cross.
    """
    n = params.n_chains
    B = edge.states
    pe, pv = np.linalg.eigh(B.conj().T @ P @ B)
    if np.max(np.abs(np.abs(pe) - 1.0)) > 1e-6:
        raise LabelingError(f"parity not resolved on edge subspace at t={t}: {pe}")
    lam = symmetry_eigenvalues(params, t)
    states, energies, s_exp, parity, labels = [], [], [], [], []
    for sign in (1, -1):
        cols = np.flatnonzero(np.sign(pe) == sign)
        if len(cols) != n:
            raise LabelingError(f"expected {n} states of parity {sign:+d}, found {len(cols)}")
        Bs = B @ pv[:, cols]
        T_, Z = scipy.linalg.schur(Bs.conj().T @ S @ Bs, output="complex")
        psi = Bs @ Z
        coeff = B.conj().T @ psi
        for k in range(n):
            v = psi[:, k]
            s_val = complex(v.conj() @ S @ v)
            dist = np.abs(s_val - lam)
            b = int(np.argmin(dist))
            if dist[b] > LABEL_TOLERANCE:
                raise LabelingError(
                    f"<S>={s_val:.4f} at t={t} is {dist[b]:.3f} from every branch eigenvalue"
                )
            states.append(v)
            energies.append(float(np.sum(np.abs(coeff[:, k]) ** 2 * edge.energies)))
            s_exp.append(s_val)
            parity.append(float(np.real(v.conj() @ P @ v)))
            labels.append((b, sign))
    want = canonical_labels(n)
    if sorted(labels) != sorted(want):
        raise LabelingError(f"duplicate branch labels at t={t}: {labels}")
    idx = [labels.index(lab) for lab in want]
    return LabeledEdges(
        t=t,
        labels=want,
        energies=np.array(energies)[idx],
        states=np.array(states).T[:, idx],
        s_expect=np.array(s_exp)[idx],
        parity=np.array(parity)[idx],
    )


def edge_states_at(params: ModelParams, t: float) -> LabeledEdges:
    """Eigensolve, select and label the edge states at a single time."""
    H = build_hamiltonian(params, t)
    e, V = eigensolve(H)
    edge = find_edge_states(e, V, params)
    return label_branches(edge, build_symmetry(params, t), build_parity(params), t, params)


@dataclass(frozen=True)
class BranchSet:
    params: ModelParams
    grid: np.ndarray
    labels: tuple
    energies: np.ndarray  # (N, 2n)
    s_expect: np.ndarray  # (N, 2n) complex
    parity: np.ndarray  # (N, 2n)
    states: np.ndarray = field(repr=False)  # (N, dim, 2n)

    def column(self, branch, parity: int) -> int:
        if isinstance(branch, str):
            branch = BRANCH_NAMES.index(branch)
        return self.labels.index((branch, parity))

    def energy(self, branch, parity: int) -> np.ndarray:
        return self.energies[:, self.column(branch, parity)]

    def state(self, branch, parity: int, index: int) -> np.ndarray:
        return self.states[index, :, self.column(branch, parity)]

    @property
    def n_branches(self) -> int:
        return self.params.n_chains


def _track_once(params: ModelParams, grid: np.ndarray):
    members = [edge_states_at(params, float(t)) for t in grid]
    states = np.array([m.states for m in members])
    # Parallel-transport gauge so consecutive states along a trace have real
    # positive overlap; also the continuity check.
    worst = 1.0
    for i in range(1, len(grid)):
        O = states[i - 1].conj().T @ states[i]
        rows, cols = linear_sum_assignment(-np.abs(O))
        if not np.array_equal(cols[np.argsort(rows)], np.arange(O.shape[0])):
            return None, 0.0
        d = np.diag(O)
        worst = min(worst, float(np.min(np.abs(d))))
        states[i] *= np.exp(-1j * np.angle(d))
    if worst <= CONTINUITY:
        return None, worst
    labels = members[0].labels
    return (
        BranchSet(
            params=params,
            grid=grid,
            labels=labels,
            energies=np.array([m.energies for m in members]),
            s_expect=np.array([m.s_expect for m in members]),
            parity=np.array([m.parity for m in members]),
            states=states,
        ),
        worst,
    )


def track_branches(
    params: ModelParams, grid_size: int = 401, max_refinements: int = 3, grid=None
) -> BranchSet:
    """Label and follow every edge branch over one period.

    The grid is uniform on [0, T] with an odd number of points so that the
    half-resolution subgrid shares both endpoints. Continuity is verified by
    maximal-overlap assignment between neighbours; if it fails the grid is
    doubled, up to ``max_refinements`` times.

    An explicit ``grid`` (e.g. snapshot times of a propagation) is used as
    given and is never refined.
    """
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be a strictly increasing 1-d sequence of times")
        branches, worst = _track_once(params, grid)
        if branches is None:
            raise TrackingError(
                f"branch continuity lost on the supplied {len(grid)}-point grid", defect=worst
            )
        return branches
    if grid_size < 200:
        raise ValueError(f"grid_size must be >= 200, got {grid_size}")
    size = grid_size + (1 - grid_size % 2)
    worst = 0.0
    for _ in range(max_refinements + 1):
        grid = np.linspace(0.0, params.period, size)
        branches, worst = _track_once(params, grid)
        if branches is not None:
            return branches
        size = 2 * size - 1
    raise TrackingError(
        f"branch continuity not reached with {len(grid)} grid points", defect=worst
    )


def overlap_matrix(branches: BranchSet, parity: int = 1) -> np.ndarray:
    """``M[b, b'] = |<psi_b(T) | psi_b'(0)>|`` over branches of one parity."""
    n = branches.n_branches
    M = np.empty((n, n))
    for b in range(n):
        end = branches.state(b, parity, -1)
        for bp in range(n):
            M[b, bp] = abs(np.vdot(end, branches.state(bp, parity, 0)))
    return M


def _endpoint_permutation(branches: BranchSet, tol: float = 0.02) -> list:
    """``perm[b0] = bT`` with ``psi_b0(0) = psi_bT(T)`` for both parities."""
    perms = []
    for parity in (1, -1):
        M = overlap_matrix(branches, parity)
        rounded = np.rint(M)
        if np.max(np.abs(M - rounded)) > tol or not np.array_equal(
            np.sort(rounded.sum(axis=0)), np.ones(len(M))
        ) or not np.array_equal(rounded.sum(axis=1), np.ones(len(M))):
            raise BraidError(f"endpoint overlaps are not a permutation matrix:\n{M}")
        perms.append([int(np.argmax(rounded[:, b0])) for b0 in range(len(M))])
    if perms[0] != perms[1]:
        raise BraidError(f"parity sectors permute differently: {perms}")
    return perms[0]


@dataclass(frozen=True)
class BraidWord:
    generators: tuple  # ((n, sign), ...), n is 1-based
    permutation: dict  # branch name at t=0 -> branch name at t=T
    crossing_times: tuple = ()
    projection: str = "energy"

    def __str__(self):
        return " ".join(
            f"t{n}" if s > 0 else f"t{n}^-1" for n, s in self.generators
        ) or "e"

    def permutation_matrix(self) -> np.ndarray:
        n = len(self.permutation)
        M = np.zeros((n, n), dtype=int)
        for b0, bT in self.permutation.items():
            M[BRANCH_NAMES.index(bT), BRANCH_NAMES.index(b0)] = 1
        return M


def _strand_coordinates(branches: BranchSet):
    n = branches.n_branches
    cols = [(branches.column(b, 1), branches.column(b, -1)) for b in range(n)]
    E = np.stack([branches.energies[:, list(c)].mean(axis=1) for c in cols], axis=1)
    im = np.stack([branches.s_expect[:, list(c)].imag.mean(axis=1) for c in cols], axis=1)
    return E, im


def extract_braid(branches: BranchSet, projection: str = "energy", tie_tol: float = 1e-11) -> BraidWord:
    """Read the braid word of the edge strands over one period.

    Parity partners share a strand. With ``projection="energy"`` strands are
    ordered by energy and the over/under information comes from Im<S>, seen
    from the +Im side. ``projection="imag"`` orders by Im<S> and takes the
    depth from energy, seen from the -E side. Both views belong to the same
    rigid frame (t, Im<S>, E) rotated about the time axis, so the two words
    differ at most by conjugation. A generator is inverse when the lower
    strand of the pair passes over the upper one.
    """
    if projection not in ("energy", "imag"):
        raise ValueError(f"unknown projection {projection!r}")
    perm = _endpoint_permutation(branches)
    inv = [perm.index(b) for b in range(len(perm))]
    E, im = _strand_coordinates(branches)
    if projection == "energy":
        x, y = E, im
    else:
        x, y = im, -E

    # Close the period: strand b at T carries psi_b(T) = psi_inv[b](0) and so
    # continues on the trace labeled inv[b].
    t = branches.grid
    T = branches.params.period
    tx = np.concatenate([t[1:], [T + t[1]]])
    xs = np.vstack([x[1:], x[1, inv]])
    ys = np.vstack([y[1:], y[1, inv]])

    keep = [k for k in range(len(tx)) if np.min(np.abs(np.diff(np.sort(xs[k])))) > tie_tol]
    n = x.shape[1]
    gens, times = [], []
    sigma = list(range(n))  # sigma[start position] -> current position
    order = list(np.argsort(xs[keep[0]], kind="stable"))
    start_pos = {b: i for i, b in enumerate(order)}
    for k0, k1 in zip(keep[:-1], keep[1:]):
        new = list(np.argsort(xs[k1], kind="stable"))
        if new == order:
            continue
        moved = [i for i in range(n) if new[i] != order[i]]
        if len(moved) != 2 or moved[1] != moved[0] + 1 or new[moved[0]] != order[moved[1]]:
            raise BraidError(
                f"unresolved crossing between t={tx[k0]:.6g} and t={tx[k1]:.6g}; refine the grid"
            )
        pos = moved[0]
        a, b = order[pos], order[pos + 1]
        d0 = xs[k0, a] - xs[k0, b]
        d1 = xs[k1, a] - xs[k1, b]
        if abs(d1 - d0) / (tx[k1] - tx[k0]) < 1e-8:
            raise BraidError(f"non-transversal crossing near t={tx[k0]:.6g}")
        frac = -d0 / (d1 - d0)
        t_c = tx[k0] + frac * (tx[k1] - tx[k0])
        ya = ys[k0, a] + frac * (ys[k1, a] - ys[k0, a])
        yb = ys[k0, b] + frac * (ys[k1, b] - ys[k0, b])
        gens.append((pos + 1, -1 if ya > yb else 1))
        times.append(float(t_c))
        for s in range(n):
            if sigma[s] == pos:
                sigma[s] = pos + 1
            elif sigma[s] == pos + 1:
                sigma[s] = pos
        order = new

    # The composed transpositions must reproduce the endpoint permutation.
    for b, p0 in start_pos.items():
        if sigma[p0] != start_pos[inv[b]]:
            raise BraidError("braid generators disagree with endpoint permutation")
    return BraidWord(
        generators=tuple(gens),
        permutation={BRANCH_NAMES[b0]: BRANCH_NAMES[bT] for b0, bT in enumerate(perm)},
        crossing_times=tuple(times),
        projection=projection,
    )


def _splitting(branches: BranchSet, branch) -> np.ndarray:
    return branches.energy(branch, 1) - branches.energy(branch, -1)


def dynamical_phase(branches: BranchSet, branch="I", rtol: float = 1e-4, max_refinements: int = 4) -> float:
    """Period integral of E_plus - E_minus for one branch (trapezoid rule).

    The value is compared against the half-resolution subgrid; the branch
    set is re-tracked on a doubled grid until the two agree to ``rtol``.
    """
    for _ in range(max_refinements + 1):
        d = _splitting(branches, branch)
        full = float(np.trapezoid(d, branches.grid))
        half = float(np.trapezoid(d[::2], branches.grid[::2]))
        if abs(full - half) <= rtol * abs(full):
            return full
        branches = track_branches(branches.params, 2 * len(branches.grid) - 1)
    raise ConvergenceError(
        f"dynamical phase not converged to {rtol} relative", defect=abs(full - half) / abs(full)
    )


def period_for_phase(params: ModelParams, target_phase: float, branch="I", grid_size: int = 401) -> float:
    """Period T whose dynamical phase equals ``target_phase``.

    Both schedules depend on t/T only, so the phase is T times the
    integral of the splitting over the unit period.
    """
    if not target_phase > 0:
        raise ValueError(f"target phase must be positive, got {target_phase}")
    ref = track_branches(params.replace(period=1.0), grid_size)
    unit = dynamical_phase(ref, branch)
    if not abs(unit) > 1e-300:
        raise ValueError("parity splitting integrates to zero; no period reaches the phase")
    return target_phase / unit
