"""Cached expensive computations shared by several test modules."""

import functools

import numpy as np

from sshbraid.evolve import end_state, propagate, propagate_operator
from sshbraid.model import ModelParams, site_index
from sshbraid.spectral import dynamical_phase, track_branches
from sshbraid.twobody import TwoBosonState, compose_two_boson

TRANSFER_T = 1332.0
TRANSPORT_T = 2663.0
HOM_T = 2220.0


def double(**kw):
    return ModelParams(chains="double", **kw)


def triple(**kw):
    return ModelParams(chains="triple", **kw)


@functools.lru_cache(maxsize=None)
def branches(params: ModelParams, grid_size: int = 401):
    return track_branches(params, grid_size)


@functools.lru_cache(maxsize=None)
def phase(params: ModelParams) -> float:
    return dynamical_phase(branches(params))


@functools.lru_cache(maxsize=None)
def transfer_record():
    p = double(period=TRANSFER_T)
    return propagate(p, end_state(p, "A", "left"))


@functools.lru_cache(maxsize=None)
def transport_record(orientation: str, steps=None):
    p = triple(period=TRANSPORT_T, orientation=orientation)
    return propagate(p, end_state(p, "B", "left"), steps=steps, snapshots=2 if steps else 400)


@functools.lru_cache(maxsize=None)
def hom_propagator(orientation: str, steps=None):
    p = triple(period=HOM_T, orientation=orientation)
    _, snaps, defect = propagate_operator(p, np.eye(p.dim), steps=steps, snapshots=2)
    return snaps[0], snaps[-1], defect


def hom_states(orientation: str, steps=None):
    p = triple(period=HOM_T, orientation=orientation)
    q, r = site_index("B", 1, p), site_index("B", p.L, p)
    initial = TwoBosonState.from_sites(p.dim, q, r)
    _, U, _ = hom_propagator(orientation, steps)
    return p, initial, compose_two_boson(U, initial)
