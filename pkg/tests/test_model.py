import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dtc4t.model import (
    DisorderSpec, DisorderedParams, SiteIndex, b_sites, bond_sites, clean, hamiltonian_terms,
    make_params, params_from_pi, realizations, rung_sites, sample_disorder,
)
from oracles import embed, embed_2q, ladder_hamiltonian


def test_params_from_pi_and_back():
    p = params_from_pi(0.9, 0.16, 0.98, T=2.0, N0=3)
    assert math.isclose(p.h * p.T, 0.9 * math.pi)
    assert p.N == 6 and math.isclose(p.omega, math.pi)
    u = p.to_pi_units()
    assert math.isclose(u["JT_over_pi"], 0.16) and u["N0"] == 3


@pytest.mark.parametrize("kw", [dict(T=0), dict(T=-1), dict(N0=1), dict(N0=2.5), dict(h=math.inf)])
def test_make_params_rejects(kw):
    args = dict(h=1.0, J=0.1, M=1.0, T=1.0, N0=4) | kw
    with pytest.raises(ValueError):
        make_params(**args)


@given(st.integers(0, 40))
def test_chain_mapping_roundtrip(q):
    s = SiteIndex.from_chain(q)
    assert s.chain_index == q
    assert s.ladder == ("a" if q % 2 == 0 else "b")


def test_site_index_validation():
    with pytest.raises(ValueError):
        SiteIndex("c", 0)
    with pytest.raises(ValueError):
        SiteIndex("a", -1)


def test_geometry():
    assert rung_sites(3) == [(0, 1), (2, 3), (4, 5)]
    assert bond_sites(3) == [(0, 2), (2, 4)]
    assert b_sites(3) == [1, 3, 5]


@given(st.floats(0, 0.99), st.floats(0, 0.99), st.floats(0, 0.99), st.integers(0, 1000), st.integers(0, 9))
def test_disorder_bounds_and_determinism(dh, dJ, dM, seed, k):
    p = params_from_pi(0.9, 0.16, 0.98, N0=4)
    spec = DisorderSpec(dh, dJ, dM, 10, seed)
    a, b = sample_disorder(p, spec, k), sample_disorder(p, spec, k)
    assert a == b
    for arr, base, d in ((a.h, p.h, dh), (a.J, p.J, dJ), (a.M, p.M, dM)):
        assert np.all(np.abs(arr - base) <= d * abs(base) + 1e-12)


def test_disorder_streams_are_independent():
    p = params_from_pi(0.9, 0.16, 0.98, N0=5)
    x = sample_disorder(p, DisorderSpec(dh=0.1, dM=0.05, n_realizations=3, seed=4), 1)
    y = sample_disorder(p, DisorderSpec(dh=0.3, dM=0.05, n_realizations=3, seed=4), 1)
    assert np.array_equal(x.M, y.M) and not np.array_equal(x.h, y.h)
    zero = sample_disorder(p, DisorderSpec(n_realizations=2, seed=4), 1)
    assert zero == clean(p)
    assert len(list(realizations(p, DisorderSpec(dh=0.1, n_realizations=3)))) == 3
    with pytest.raises(IndexError):
        sample_disorder(p, DisorderSpec(n_realizations=2), 2)
    with pytest.raises(ValueError):
        DisorderSpec(dh=1.0)
    with pytest.raises(ValueError):
        DisorderSpec(n_realizations=0)


def test_disordered_params_immutable_and_checked():
    dp = clean(params_from_pi(1, 0.1, 1, N0=3))
    with pytest.raises(ValueError):
        dp.h[0] = 3.0
    with pytest.raises(ValueError):
        DisorderedParams(np.ones(3), np.ones(3), np.ones(3))


@pytest.mark.parametrize("t", [0.0, 0.13, 0.37])
def test_hamiltonian_terms_sum_to_full_hamiltonian(t):
    p = params_from_pi(0.9, 0.16, 0.98, N0=3)
    dp = sample_disorder(p, DisorderSpec(0.1, 0.1, 0.1, 1, 5), 0)
    n = dp.N
    total = np.zeros((2**n, 2**n), dtype=complex)
    for sup, mat in hamiltonian_terms(dp, "first", t):
        assert np.allclose(mat, mat.conj().T)
        total += embed_2q(mat, sup[0], sup[1], n)
    assert np.allclose(total, ladder_hamiltonian(dp.h, dp.J, dp.M, 3, t))
    second = sum(embed({sup[0]: mat}, n) for sup, mat in hamiltonian_terms(dp, "second"))
    assert np.allclose(second, ladder_hamiltonian(dp.h, dp.J, dp.M, 3, t, half="second"))
    with pytest.raises(ValueError):
        hamiltonian_terms(dp, "third")
