import math

import numpy as np
import pytest

from helpers import branches, double, triple
from sshbraid.errors import EdgeSetError
from sshbraid.model import build_hamiltonian, site_index, symmetry_eigenvalues
from sshbraid.spectral import (
    BraidWord,
    dynamical_phase,
    edge_states_at,
    eigensolve,
    end_weight,
    extract_braid,
    find_edge_states,
    overlap_matrix,
    period_for_phase,
    track_branches,
)


def test_eigensolve_matches_characteristic_polynomial():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = A + A.conj().T
    e, V = eigensolve(H)
    roots = np.sort(np.roots(np.poly(H)).real)
    np.testing.assert_allclose(e, roots, atol=1e-10)
    np.testing.assert_allclose(V.conj().T @ V, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(H @ V, V * e, atol=1e-12)


def test_eigensolve_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eigensolve(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        eigensolve(np.ones((2, 3)))


def test_end_weight_of_end_and_bulk_sites():
    p = double()
    psi = np.zeros(p.dim)
    psi[site_index("B", p.L, p)] = 1
    assert end_weight(psi, p)[0] == 1
    psi = np.zeros(p.dim)
    psi[site_index("A", 5, p)] = 1
    assert end_weight(psi, p)[0] == 0


def test_dimerized_edge_states_are_end_sites():
    # At t = 0 the hopping v vanishes and the edge states are exactly the
    # even and odd combinations of the two end sites of each chain.
    p = double()
    lab = edge_states_at(p, 0.0)
    s = 1 / math.sqrt(2)
    for (b, sign), col in zip(lab.labels, range(4)):
        want = np.zeros(p.dim)
        want[site_index(b, 1, p)] = s
        want[site_index(b, p.L, p)] = s * sign
        assert abs(np.vdot(want, lab.states[:, col])) == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(lab.energies, [0.4, 0.4, -0.4, -0.4], atol=1e-12)


def test_missing_edge_states_raise():
    p = double(v0=1.5)
    e, V = eigensolve(build_hamiltonian(p, p.period / 2))
    with pytest.raises(EdgeSetError):
        find_edge_states(e, V, p)


def test_grid_size_lower_bound():
    with pytest.raises(ValueError):
        track_branches(double(), grid_size=100)


@pytest.mark.parametrize("chains", ["double", "triple"])
@pytest.mark.parametrize("orientation", ["forward", "reversed"])
def test_branch_labels_are_consistent(chains, orientation):
    p = double(orientation=orientation) if chains == "double" else triple(orientation=orientation)
    br = branches(p)
    assert len(br.grid) % 2 == 1
    for col, (b, sign) in enumerate(br.labels):
        np.testing.assert_allclose(br.parity[:, col], sign, atol=1e-6)
        lam = np.array([symmetry_eigenvalues(p, t)[b] for t in br.grid])
        assert np.max(np.abs(br.s_expect[:, col] - lam)) < 1e-6
    # consecutive states along a trace stay close
    ov = np.abs(np.einsum("tic,tic->tc", br.states[:-1].conj(), br.states[1:]))
    assert ov.min() > 0.9


def test_double_twisted_spectrum():
    br = branches(double())
    d = [br.energy(b, 1) - br.energy(b, -1) for b in (0, 1)]
    assert np.max(np.abs(d[0] - d[1])) < 1e-10
    assert abs(d[0][0]) < 1e-12 and abs(d[0][-1]) < 1e-12
    for s in (1, -1):
        assert br.energy("I", s)[-1] == pytest.approx(br.energy("II", s)[0], abs=1e-8)
        assert br.energy("II", s)[-1] == pytest.approx(br.energy("I", s)[0], abs=1e-8)


CASES = [
    ("double", "forward", ((1, -1),), {"I": "II", "II": "I"}),
    ("double", "reversed", ((1, -1),), {"I": "II", "II": "I"}),
    ("triple", "forward", ((1, -1), (2, -1)), {"I": "III", "II": "I", "III": "II"}),
    ("triple", "reversed", ((2, -1), (1, -1)), {"I": "II", "II": "III", "III": "I"}),
]


@pytest.mark.parametrize("chains,orientation,word,perm", CASES)
def test_braid_words(chains, orientation, word, perm):
    p = double(orientation=orientation) if chains == "double" else triple(orientation=orientation)
    bw = extract_braid(branches(p))
    assert bw.generators == word
    assert bw.permutation == perm
    for parity in (1, -1):
        M = overlap_matrix(branches(p), parity)
        np.testing.assert_allclose(M, bw.permutation_matrix(), atol=0.02)


def test_braid_crossing_times():
    T = 1332.0
    assert extract_braid(branches(double())).crossing_times == pytest.approx((T / 2,), abs=1e-6)
    times = extract_braid(branches(triple())).crossing_times
    assert times == pytest.approx((T / 4, 3 * T / 4), abs=1e-6)


def test_imag_projection_gives_conjugate_words():
    # The Im<S> view cannot tell the two triple orientations apart; its words
    # are conjugate to the energy-view words in B3.
    fwd = extract_braid(branches(triple()), projection="imag")
    rev = extract_braid(branches(triple(orientation="reversed")), projection="imag")
    assert fwd.generators == rev.generators == ((1, -1), (2, -1))
    assert extract_braid(branches(double()), projection="imag").generators == ((1, -1),)
    with pytest.raises(ValueError):
        extract_braid(branches(double()), projection="depth")


def test_braid_word_string():
    bw = BraidWord(((1, -1), (2, 1)), {"I": "I", "II": "II", "III": "III"})
    assert str(bw) == "t1^-1 t2"
    assert str(BraidWord((), {"I": "I"})) == "e"


def test_triple_phases_agree_across_branches():
    br = branches(triple())
    ph = [dynamical_phase(br, b) for b in range(3)]
    assert max(ph) - min(ph) < 1e-8 * abs(ph[0])


def test_phase_quadrature_converged():
    br = branches(double())
    full = dynamical_phase(br)
    coarse = track_branches(double(), grid_size=201)
    d = br.energy(0, 1) - br.energy(0, -1)
    half = np.trapezoid(d[::2], br.grid[::2])
    assert abs(full - half) < 1e-4 * full
    assert dynamical_phase(coarse) == pytest.approx(full, rel=1e-4)


def test_phase_scales_linearly_with_period():
    a = dynamical_phase(track_branches(double(period=1.0)))
    b = dynamical_phase(branches(double()))
    assert b == pytest.approx(1332.0 * a, rel=1e-10)
    assert period_for_phase(double(), 1.5 * math.pi) == pytest.approx(1.5 * math.pi / a, rel=1e-10)


def test_period_for_phase_rejects_nonpositive_target():
    with pytest.raises(ValueError):
        period_for_phase(double(), 0.0)
