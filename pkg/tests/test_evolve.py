import math

import numpy as np
import pytest
import scipy.linalg

from helpers import double, transfer_record, triple
from sshbraid.errors import ConvergenceError
from sshbraid.evolve import (
    DEFAULT_STEP,
    default_steps,
    destination_chain,
    end_state,
    fidelity,
    predict_final,
    projected_parity_series,
    propagate,
    propagate_dense,
    propagate_operator,
    site_state,
)
from sshbraid.model import build_hamiltonian, site_index, symmetry_eigenvalues
from sshbraid.spectral import edge_states_at, track_branches


@pytest.mark.parametrize("period", [1332.0, 10.0, 2663.0, 50.0])
def test_default_steps(period):
    n = default_steps(period, 400)
    assert n % 399 == 0
    assert period / n <= DEFAULT_STEP + 1e-15


@pytest.mark.parametrize("p", [double(L=6, period=50.0), triple(L=4, period=30.0, orientation="reversed")])
def test_frozen_schedule_is_plain_exponential(p):
    t0 = 0.3 * p.period
    psi0 = site_state(p, 0, 1)
    rec = propagate(p, psi0, snapshots=2, frozen_at=t0)
    want = scipy.linalg.expm(-1j * p.period * build_hamiltonian(p, t0)) @ psi0
    np.testing.assert_allclose(rec.final_state, want, atol=1e-10)


@pytest.mark.parametrize("p", [double(L=4, period=20.0), triple(L=4, period=20.0)])
def test_factored_steps_match_dense_steps(p):
    psi0 = (site_state(p, 0, 1) + 1j * site_state(p, 1, p.L)) / math.sqrt(2)
    steps = 800
    _, snaps, _ = propagate_operator(p, psi0, steps=steps, check_convergence=False)
    dense = propagate_dense(lambda t: build_hamiltonian(p, t), psi0, 0.0, p.period, steps)
    np.testing.assert_allclose(snaps[-1][:, 0], dense, atol=1e-12)


def test_second_order_convergence():
    p = double(L=6, period=50.0)
    psi0 = site_state(p, "A", 1)

    def final(n):
        _, s, _ = propagate_operator(p, psi0, steps=n, check_convergence=False)
        return s[-1][:, 0]

    ref = final(6400)
    errs = [np.linalg.norm(final(n) - ref) for n in (100, 200, 400)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 < r < 4.6 for r in ratios), ratios


def test_coarse_steps_raise_convergence_error():
    p = double(L=6, period=200.0)
    with pytest.raises(ConvergenceError) as info:
        propagate(p, site_state(p, 0, 1), steps=20, snapshots=2)
    assert info.value.defect > 1e-8
    assert info.value.exit_code == 3


def test_argument_checks():
    p = double(L=4, period=10.0)
    with pytest.raises(ValueError):
        propagate(p, np.ones(p.dim))
    with pytest.raises(ValueError):
        propagate(p, site_state(p, 0, 1), steps=7, snapshots=4)
    with pytest.raises(ValueError):
        propagate(p, np.ones(3) / math.sqrt(3))


def test_transfer_record_conservation():
    rec = transfer_record()
    assert rec.norm_drift < 1e-10
    np.testing.assert_allclose(rec.density.sum(axis=1), 1, atol=1e-10)
    assert np.ptp(rec.parity_expect) < 1e-8
    np.testing.assert_allclose(rec.parity, 0, atol=1e-12)
    assert rec.convergence_defect < 1e-8


def test_transfer_splits_over_chain_b():
    rec = transfer_record()
    p = rec.params
    final = rec.density[-1]
    assert final[site_index("B", 1, p)] == pytest.approx(0.5, abs=0.01)
    assert final[site_index("B", p.L, p)] == pytest.approx(0.5, abs=0.01)


def test_projected_parities_of_end_site_state():
    rec = transfer_record()
    br = track_branches(rec.params, grid=rec.times)
    proj = projected_parity_series(rec, br)
    np.testing.assert_allclose(proj[(0, 1)], 0.5, atol=0.01)
    np.testing.assert_allclose(proj[(0, -1)], -0.5, atol=0.01)
    # the state never leaves branch I
    assert np.min(proj[(0, 1)] - proj[(0, -1)]) > 0.99


def test_symmetry_expectation_tracks_branch_eigenvalue():
    rec = transfer_record()
    lam = np.array([symmetry_eigenvalues(rec.params, t)[0] for t in rec.times])
    assert np.max(np.abs(rec.symmetry - lam)) < 0.05


def test_projected_parity_refuses_mismatched_grid():
    rec = transfer_record()
    br = track_branches(rec.params, grid=np.linspace(0, rec.params.period, 300))
    with pytest.raises(ValueError):
        projected_parity_series(rec, br)


def test_even_edge_state_keeps_parity():
    p = double(period=300.0)
    lab = edge_states_at(p, 0.0)
    rec = propagate(p, lab.states[:, lab.labels.index((0, 1))], snapshots=50, steps=12005)
    np.testing.assert_allclose(rec.parity, 1, atol=1e-10)


def test_destination_chains():
    assert destination_chain(double(), "A") == 1 and destination_chain(double(), 1) == 0
    fwd, rev = triple(), triple(orientation="reversed")
    assert [destination_chain(fwd, c) for c in range(3)] == [1, 2, 0]
    assert [destination_chain(rev, c) for c in range(3)] == [2, 0, 1]
    with pytest.raises(ValueError):
        destination_chain(double(), "C")


def test_predicted_states():
    p = double()
    want = -(site_state(p, "B", 1) + 1j * site_state(p, "B", p.L)) / math.sqrt(2)
    assert fidelity(predict_final(p, "A", "left", 1.5 * math.pi), want) == pytest.approx(1)
    f, r = triple(), triple(orientation="reversed")
    assert fidelity(predict_final(f, "B", "left", 3 * math.pi), site_state(f, "C", f.L)) == pytest.approx(1)
    assert fidelity(predict_final(r, "B", "left", 3 * math.pi), site_state(r, "A", r.L)) == pytest.approx(1)
    assert fidelity(predict_final(p, "A", "right", 2 * math.pi), site_state(p, "B", p.L)) == pytest.approx(1)


def test_fidelity_basics():
    p = double(L=4)
    a, b = site_state(p, 0, 1), site_state(p, 0, 2)
    assert fidelity(a, a) == 1
    assert fidelity(a, b) == 0
    assert fidelity(a, 1j * a) == 1
    with pytest.raises(ValueError):
        fidelity(a, np.ones(3))


def test_end_state_validation():
    with pytest.raises(ValueError):
        end_state(double(), "A", "middle")
