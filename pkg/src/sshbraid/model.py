"""Coupled SSH chains: parameter schedules, Hamiltonians and symmetry operators.

Sites are flattened chain-major, ``index = chain * L + (l - 1)`` with chains
ordered A=0, B=1, C=2, so every full-lattice operator is a Kronecker
combination of an ``n x n`` interchain factor and an ``L x L`` intrachain
factor::

    H(t) = h(t) (x) 1_L + 1_n (x) H_ssh(t)
    P    = 1_n (x) J_L             (J_L the exchange matrix, l -> L+1-l)
    S(t) = s(t) (x) 1_L

All builders are pure functions of ``(params, t)``; returned arrays are
marked read-only.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, TrackingError, VerificationError

__all__ = [
    "Chains",
    "Orientation",
    "ModelParams",
    "ScheduleSample",
    "site_index",
    "sample_schedule",
    "interchain_block",
    "intrachain_block",
    "build_hamiltonian",
    "build_parity",
    "build_symmetry",
    "symmetry_block",
    "symmetry_eigenvalues",
    "reflection_matrix",
    "interchain_frame",
    "hermiticity_defect",
    "unitarity_defect",
    "commutator_defect",
    "CHAIN_NAMES",
    "BRANCH_NAMES",
    "schedule_arrays",
]

CHAIN_NAMES = ("A", "B", "C")
BRANCH_NAMES = ("I", "II", "III")

# Amplitude of the sinusoidal part of the triple-chain schedules.
_TRIPLE_AMP = 2.0 * math.sqrt(3.0) / 9.0


class Chains(str, enum.Enum):
    DOUBLE = "double"
    TRIPLE = "triple"

    @property
    def count(self) -> int:
        return 2 if self is Chains.DOUBLE else 3


class Orientation(str, enum.Enum):
    FORWARD = "forward"
    REVERSED = "reversed"


@dataclass(frozen=True)
class ModelParams:
    """Complete description of one simulation instance.

    ``coupling`` is kappa for the double chain and eta for the triple chain.
    ``period`` is T in units of 1/w; the drive frequency is ``pi / T``.

    ``triple_bonds`` selects how the two independent interchain hoppings of
    the triple chain are attached to bonds. ``"cyclic"`` (default) places
    the independent hopping on the B-C bond, which makes the interchain
    eigenframe rotate A -> B -> C over one period. ``"noncyclic"`` places it
    on the A-C bond; that layout has no eigenvalue crossings and does not
    braid. It only exists so the difference can be reproduced.
    """

    chains: Chains = Chains.DOUBLE
    L: int = 14
    w: float = 1.0
    v0: float = 0.5
    coupling: float = 0.2
    period: float = 1332.0
    orientation: Orientation = Orientation.FORWARD
    triple_bonds: str = "cyclic"

    def __post_init__(self):
        try:
            object.__setattr__(self, "chains", Chains(self.chains))
            object.__setattr__(self, "orientation", Orientation(self.orientation))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if isinstance(self.L, bool) or int(self.L) != self.L:
            raise ConfigError(f"L must be an integer, got {self.L!r}")
        object.__setattr__(self, "L", int(self.L))
        if self.L < 4 or self.L % 2:
            raise ConfigError(f"L must be even and >= 4, got {self.L}")
        if not self.v0 >= 0:
            raise ConfigError(f"v0 must be >= 0, got {self.v0}")
        if not self.coupling > 0:
            raise ConfigError(f"coupling must be > 0, got {self.coupling}")
        if not self.period > 0:
            raise ConfigError(f"period must be > 0, got {self.period}")
        if not self.w > 0:
            raise ConfigError(f"w must be > 0, got {self.w}")
        if self.triple_bonds not in ("cyclic", "noncyclic"):
            raise ConfigError(f"unknown triple_bonds {self.triple_bonds!r}")

    @property
    def n_chains(self) -> int:
        return self.chains.count

    @property
    def dim(self) -> int:
        return self.n_chains * self.L

    @property
    def omega(self) -> float:
        return math.pi / self.period

    @property
    def reversed(self) -> bool:
        return self.orientation is Orientation.REVERSED

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["chains"] = self.chains.value
        d["orientation"] = self.orientation.value
        return d


@dataclass(frozen=True)
class ScheduleSample:
    t: float
    v: float
    w: float
    interchain: dict = field(default_factory=dict)


def site_index(chain: int, l: int, params: ModelParams) -> int:
    """Flat index of site ``l`` (1-based) on ``chain`` (0-based)."""
    n = params.n_chains
    if isinstance(chain, str):
        chain = CHAIN_NAMES.index(chain.upper())
    if not 0 <= chain < n:
        raise ValueError(f"chain {chain} out of range for {n} chains")
    if not 1 <= l <= params.L:
        raise ValueError(f"site {l} out of range 1..{params.L}")
    return chain * params.L + (l - 1)


def _fold(T: float, t: float) -> float:
    if 0.0 <= t <= T:
        return t
    t = math.fmod(t, T)
    return t + T if t < 0 else t


def _forward_time(params: ModelParams, t: float) -> float:
    """Fold ``t`` into [0, T] and undo the orientation reflection."""
    t = _fold(params.period, t)
    return params.period - t if params.reversed else t


def _schedule_values(params: ModelParams, tf) -> dict:
    # Works elementwise on arrays of forward times as well as on scalars.
    a = params.omega * tf
    c = params.coupling
    if params.chains is Chains.DOUBLE:
        return {"J": c * np.sin(2 * a), "Delta": c * (1.0 + np.cos(2 * a))}
    x = 2 * a
    j_ab = c * (1.0 / 3.0 - _TRIPLE_AMP * np.sin(x + 2 * math.pi / 3))
    j_free = c * (1.0 / 3.0 - _TRIPLE_AMP * np.sin(x + math.pi / 3))
    if params.triple_bonds == "noncyclic":
        j_ac = j_free
    else:
        j_ac = j_ab - j_free
    j_bc = j_ab - j_ac
    d_a = c * (2.0 / 3.0 + _TRIPLE_AMP * np.sin(x + math.pi / 3))
    d_c = c * (-2.0 / 3.0 - _TRIPLE_AMP * np.sin(x + 2 * math.pi / 3))
    d_b = -d_a - d_c
    return {
        "J_AB": j_ab,
        "J_AC": j_ac,
        "J_BC": j_bc,
        "Delta_A": d_a,
        "Delta_B": d_b,
        "Delta_C": d_c,
    }


def sample_schedule(params: ModelParams, t: float) -> ScheduleSample:
    tf = _forward_time(params, t)
    v = params.v0 * abs(math.sin(params.omega * tf))
    iv = {k: float(x) for k, x in _schedule_values(params, tf).items()}
    return ScheduleSample(t=t, v=v, w=params.w, interchain=iv)


def _forward_times(params: ModelParams, times) -> np.ndarray:
    t = np.mod(np.asarray(times, dtype=float), params.period)
    # keep t = T itself rather than folding it to 0
    t = np.where((t == 0) & (np.asarray(times) > 0), params.period, t)
    return params.period - t if params.reversed else t


def schedule_arrays(params: ModelParams, times):
    """Vectorized schedules: interchain blocks ``(N, n, n)`` and ``v(t)``."""
    tf = _forward_times(params, times)
    iv = _schedule_values(params, tf)
    n = params.n_chains
    h = np.empty(tf.shape + (n, n))
    if params.chains is Chains.DOUBLE:
        h[..., 0, 0], h[..., 1, 1] = iv["Delta"], -iv["Delta"]
        h[..., 0, 1] = h[..., 1, 0] = iv["J"]
    else:
        for k, name in enumerate("ABC"):
            h[..., k, k] = iv["Delta_" + name]
        for (i, j), key in {(0, 1): "J_AB", (0, 2): "J_AC", (1, 2): "J_BC"}.items():
            h[..., i, j] = h[..., j, i] = iv[key]
    v = params.v0 * np.abs(np.sin(params.omega * tf))
    return h, v


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _block_from_values(chains: Chains, iv: dict) -> np.ndarray:
    if chains is Chains.DOUBLE:
        d, j = iv["Delta"], iv["J"]
        return np.array([[d, j], [j, -d]])
    return np.array(
        [
            [iv["Delta_A"], iv["J_AB"], iv["J_AC"]],
            [iv["J_AB"], iv["Delta_B"], iv["J_BC"]],
            [iv["J_AC"], iv["J_BC"], iv["Delta_C"]],
        ]
    )


def interchain_block(params: ModelParams, t: float) -> np.ndarray:
    """The ``n x n`` matrix applied identically on every rung."""
    sample = sample_schedule(params, t)
    return _block_from_values(params.chains, sample.interchain)


def _ssh_matrix(L: int, v: float, w: float) -> np.ndarray:
    H = np.zeros((L, L))
    i = np.arange(0, L, 2)
    H[i, i + 1] = H[i + 1, i] = v
    j = np.arange(1, L - 1, 2)
    H[j, j + 1] = H[j + 1, j] = w
    return H


def intrachain_block(params: ModelParams, t: float) -> np.ndarray:
    """Open-boundary SSH matrix for a single chain at time ``t``."""
    sample = sample_schedule(params, t)
    return _ssh_matrix(params.L, sample.v, sample.w)


def build_hamiltonian(params: ModelParams, t: float) -> np.ndarray:
    sample = sample_schedule(params, t)
    h = _block_from_values(params.chains, sample.interchain)
    H = np.kron(h, np.eye(params.L)) + np.kron(
        np.eye(params.n_chains), _ssh_matrix(params.L, sample.v, sample.w)
    )
    return _readonly(H)


@functools.lru_cache(maxsize=32)
def _parity(n: int, L: int) -> np.ndarray:
    return _readonly(np.kron(np.eye(n), np.eye(L)[::-1]))


def build_parity(params: ModelParams) -> np.ndarray:
    return _parity(params.n_chains, params.L)


def reflection_matrix(params: ModelParams, t: float) -> np.ndarray:
    """Reflection part of the double-chain symmetry at (forward) time ``t``."""
    a = params.omega * _forward_time(params, t)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, s], [s, -c]])


def _rotation_phase(chains: Chains, omega: float, t: float) -> complex:
    """Common phase factor carried by all symmetry eigenvalues."""
    if chains is Chains.DOUBLE:
        return complex(np.exp(-1j * omega * t))
    return complex(np.exp(-2j * omega * t / 3))


def _branch_constants(chains: Chains) -> np.ndarray:
    if chains is Chains.DOUBLE:
        return np.array([1.0, -1.0], dtype=complex)
    return np.exp(-2j * np.pi / 3 * np.array([0, 1, -1]))


def symmetry_eigenvalues(params: ModelParams, t: float) -> np.ndarray:
    """Eigenvalues of the interchain symmetry, ordered by branch I, II, III.

    Branch ``k`` is the one whose edge states sit on chain ``k`` at t = 0.
    Under reversal the operator is the conjugate of the forward operator at
    T - t; its eigenvalue constants are conjugated while the common phase
    keeps rotating in the same sense.
    """
    consts = _branch_constants(params.chains)
    if params.reversed:
        consts = consts.conj()
    return consts * _rotation_phase(params.chains, params.omega, _fold(params.period, t))


# Symmetry matrices --------------------------------------------------------

_W3 = np.exp(2j * np.pi / 3)
_W6 = np.exp(1j * np.pi / 3)
_TRIPLE_PRINTED_ROTATING = np.array(
    [[1, _W3, _W6], [_W3, -_W6, -1], [_W6, -1, _W3]], dtype=complex
)
_TRIPLE_PRINTED_STATIC = np.array(
    [[2, -_W3, -_W6], [-_W3, 2 * _W6, 1], [-_W6, 1, -2 * _W3]], dtype=complex
)


def _printed_block_forward(params: ModelParams, tf: float) -> np.ndarray:
    a = params.omega * tf
    if params.chains is Chains.DOUBLE:
        return np.exp(-1j * a) * np.array(
            [[math.cos(a), math.sin(a)], [math.sin(a), -math.cos(a)]]
        )
    return (np.exp(-2j * a) * _TRIPLE_PRINTED_ROTATING + _TRIPLE_PRINTED_STATIC) / 3.0


# Eigenframe continuation ---------------------------------------------------
#
# The spectral symmetry needs eigenvectors of h(s) continued smoothly in
# s = t_forward / T from the chain basis at s = 0. Eigenvalues of h cross,
# so energy ordering is useless; vectors are followed by maximal overlap on
# a fixed grid, and any query is matched against the nearest grid frame.

_FRAME_GRID = 1025
_DEGENERACY_RTOL = 1e-10
_LOCAL_STEP = 1e-6
_MIN_OVERLAP = 0.5


def _block_at_fraction(chains, coupling, bonds, s):
    p = ModelParams(chains=chains, coupling=coupling, period=1.0, triple_bonds=bonds)
    return _block_from_values(chains, _schedule_values(p, s))


def _match_columns(ref: np.ndarray, V: np.ndarray) -> np.ndarray:
    overlap = ref.T @ V
    rows, cols = linear_sum_assignment(-np.abs(overlap))
    order = cols[np.argsort(rows)]
    V = V[:, order]
    diag = np.einsum("ij,ij->j", ref, V)
    if np.min(np.abs(diag)) < _MIN_OVERLAP:
        raise TrackingError(
            "interchain eigenframe continuation lost overlap",
            defect=float(np.min(np.abs(diag))),
        )
    return V * np.where(diag < 0, -1.0, 1.0)


def _clusters(e: np.ndarray, tol: float) -> list:
    groups = [[0]]
    for k in range(1, len(e)):
        if e[k] - e[k - 1] < tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def _frame_at(chains, coupling, bonds, s, ref):
    h = _block_at_fraction(chains, coupling, bonds, s)
    e, V = np.linalg.eigh(h)
    tol = _DEGENERACY_RTOL * coupling
    groups = _clusters(e, tol)
    if all(len(g) == 1 for g in groups):
        return _match_columns(ref, V)
    # Exact degeneracy: the frame is the limit of the smooth frame from
    # either side. Average the two neighbours (or extrapolate at the ends of
    # the period) for an O(step^2) estimate, then project it back onto the
    # eigenspaces.
    def near(x):
        _, Vx = np.linalg.eigh(_block_at_fraction(chains, coupling, bonds, x))
        return _match_columns(ref, Vx)

    eps = _LOCAL_STEP
    if eps <= s <= 1.0 - eps:
        X = 0.5 * (near(s - eps) + near(s + eps))
    else:
        d = eps if s < eps else -eps
        X = 2.0 * near(s + d) - near(s + 2 * d)
    W2, _, Z2t = np.linalg.svd(X)
    U2 = W2 @ Z2t
    U = np.empty_like(U2)
    rayleigh = np.einsum("ij,ik,kj->j", U2, h, U2)
    for g in groups:
        members = [k for k in range(len(e)) if np.argmin(np.abs(e - rayleigh[k])) in g]
        if len(members) != len(g):
            raise TrackingError("ambiguous eigenframe at an interchain degeneracy")
        Vg = V[:, g]
        X = Vg @ (Vg.T @ U2[:, members])
        W, _, Zt = np.linalg.svd(X, full_matrices=False)
        U[:, members] = W @ Zt
    return _match_columns(ref, U)


@functools.lru_cache(maxsize=16)
def _frame_grid(chains: Chains, coupling: float, bonds: str) -> np.ndarray:
    n = chains.count
    grid = np.empty((_FRAME_GRID, n, n))
    ref = np.eye(n)
    for j, s in enumerate(np.linspace(0.0, 1.0, _FRAME_GRID)):
        ref = _frame_at(chains, coupling, bonds, float(s), ref)
        grid[j] = ref
    return _readonly(grid)


def interchain_frame(params: ModelParams, t: float) -> np.ndarray:
    """Smoothly continued eigenvectors of the forward interchain block.

    Column ``k`` starts as chain ``k`` at forward time 0. ``t`` is a
    forward time; callers handle reversal.
    """
    s = min(max(t / params.period, 0.0), 1.0)
    grid = _frame_grid(params.chains, params.coupling, params.triple_bonds)
    ref = grid[int(round(s * (_FRAME_GRID - 1)))]
    return _frame_at(params.chains, params.coupling, params.triple_bonds, s, ref)


def _spectral_block_forward(params: ModelParams, tf: float) -> np.ndarray:
    U = interchain_frame(params, tf)
    lam = _branch_constants(params.chains) * _rotation_phase(params.chains, params.omega, tf)
    return (U * lam) @ U.T


def hermiticity_defect(A: np.ndarray) -> float:
    return float(np.max(np.abs(A - A.conj().T)))


def unitarity_defect(A: np.ndarray) -> float:
    return float(np.max(np.abs(A @ A.conj().T - np.eye(A.shape[0]))))


def commutator_defect(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.max(np.abs(A @ B - B @ A)))


def symmetry_block(params: ModelParams, t: float, method: str = "spectral") -> np.ndarray:
    """The ``n x n`` interchain symmetry matrix s(t) for the given orientation."""
    if method not in ("spectral", "printed"):
        raise ValueError(f"unknown symmetry method {method!r}")
    build = _spectral_block_forward if method == "spectral" else _printed_block_forward
    tf = _forward_time(params, t)
    s = build(params, tf)
    return s.conj() if params.reversed else s


def build_symmetry(
    params: ModelParams, t: float, method: str = "spectral", verify: bool = True
) -> np.ndarray:
    """Site-tensored interchain symmetry S(t).

    With ``verify`` the interchain factor is checked for unitarity (1e-12)
    and for commuting with the interchain block (1e-10); a failure raises
    :class:`VerificationError` carrying the measured defect.
    """
    s = symmetry_block(params, t, method)
    if verify:
        u_def = unitarity_defect(s)
        c_def = commutator_defect(s, interchain_block(params, t))
        if u_def > 1e-12 or c_def > 1e-10:
            raise VerificationError(
                f"{method} symmetry at t={t}: unitarity defect {u_def:.3e}, "
                f"commutator defect {c_def:.3e}",
                defect={"unitarity": u_def, "commutator": c_def},
            )
    return _readonly(np.kron(s, np.eye(params.L)))
