import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from rabisim import oracles
from rabisim.bloch import (BlochDisorder, BlochParams, BlochState, bloch_ensemble, bloch_solve,
                           bloch_step, free_solution, rotation_matrix, step_map)
from rabisim.geometry import LorentzianSpec

FR = 55.96
T = np.arange(501) * 1e-3


def test_pure_rotation_exact_for_any_tau():
    p = BlochParams(h_p=1.0)
    for tau in (1e-3, 1e-4):
        tr = bloch_solve(p, T[::10], "z+", tau=tau)
        assert np.allclose(tr.mz, np.cos(2 * math.pi * FR * tr.times) / 2, atol=1e-11)


def test_half_turn_about_x():
    p = BlochParams(h_p=0.6)
    s = bloch_step(BlochState(0.1, 0.2, 0.3), p, tau=math.pi / p.b)
    assert (s.sx, s.sy, s.sz) == pytest.approx((0.1, -0.2, -0.3), abs=1e-14)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-6, 1e-2))
def test_rotation_matches_matrix_exponential(a, b, tau):
    A2 = np.array([[0, a, 0], [-a, 0, b], [0, -b, 0]])
    R = rotation_matrix(a, b, tau)
    assert np.allclose(R, expm(tau * A2), atol=1e-12)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-13)


@given(st.floats(-0.01, 0.01), st.floats(-0.05, 0.05), st.floats(0.0, 5.0))
def test_length_conserved_without_relaxation(xi_z, zeta, h_p):
    p = BlochParams(h_p=h_p, xi_z=xi_z, zeta=zeta)
    M, c = step_map(p, 1e-5)
    s = np.array([0.3, -0.1, 0.35])
    for _ in range(100):
        s = M @ s + c
    assert np.linalg.norm(s) == pytest.approx(np.linalg.norm([0.3, -0.1, 0.35]), abs=1e-12)


def test_closed_form_pointwise():
    p = BlochParams(T2=3.0, h_p=1.0)
    t = np.arange(2001) * 1e-3
    for init in ("z+", "x+", "y+"):
        tr = bloch_solve(p, t, init, tau=1e-5)
        sx, sy, sz = free_solution(t, 3.0, 1.0, init=init)
        for got, ref in ((tr.mx, sx), (tr.my, sy), (tr.mz, sz)):
            assert np.max(np.abs(got - ref)) <= 1e-8


def test_second_order_splitting():
    p = BlochParams(T1=0.7, T2=0.4, h_p=0.8, xi_x=0.01, xi_y=-0.02, xi_z=0.001, zeta=0.05,
                    s_eq=(0.1, 0.05, 0.5))
    A = np.array([[-1 / p.T2, p.a, 0], [-p.a, -1 / p.T2, p.b], [0, -p.b, -1 / p.T1]])
    b = np.array(p.s_eq) / p.T1
    s0 = np.array([0, 0, 0.5])
    Tend = 0.5
    E = expm(Tend * A)
    exact = E @ s0 + np.linalg.solve(A, (E - np.eye(3)) @ b)
    errs = []
    for tau in (1e-4, 5e-5):
        tr = bloch_solve(p, np.array([0.0, Tend]), "z+", tau=tau)
        errs.append(np.max(np.abs([tr.mx[-1] - exact[0], tr.my[-1] - exact[1], tr.mz[-1] - exact[2]])))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)


def test_envelope_rates():
    t = np.arange(200_001) * 1e-5
    tr = bloch_solve(BlochParams(T2=0.5, h_p=1.0), t, "z+")
    w = 2 * math.pi * FR * math.sqrt(1 - (1 / (4 * math.pi * FR * 0.5)) ** 2)
    # at zeros of sin(w t) the z+ solution is exactly the envelope
    tn = np.arange(1, 40) * math.pi / w
    sz = np.interp(tn, t, tr.mz)
    ref = 0.5 * np.exp(-tn / 1.0) * np.cos(w * tn)
    assert np.max(np.abs(sz - ref)) < 1e-5
    tx = bloch_solve(BlochParams(T2=0.5, h_p=0.0), t, "x+")
    assert np.allclose(tx.mx, 0.5 * np.exp(-t / 0.5), atol=1e-12)


def test_stationary_point():
    p = BlochParams(T1=0.3, T2=0.2, h_p=0.0, xi_z=0.002)
    tr = bloch_solve(p, np.linspace(0, 10, 11), "x+", tau=1e-3)
    assert (tr.mx[-1], tr.my[-1], tr.mz[-1]) == pytest.approx((0, 0, 0.5), abs=1e-12)


def test_zero_disorder_ensemble_independent_of_size():
    dist = BlochDisorder(T2=2.0)
    a = bloch_ensemble(dist, 1, T[:101], seed=1)
    b = bloch_ensemble(dist, 100, T[:101], seed=5)
    assert np.allclose(a.mz, b.mz, atol=1e-14)


def test_ensemble_deterministic():
    dist = BlochDisorder(LorentzianSpec(0.001), LorentzianSpec(0.01), T2=3.0)
    a = bloch_ensemble(dist, 50, T[:101], seed=3)
    b = bloch_ensemble(dist, 50, T[:101], seed=3)
    assert np.array_equal(a.mz, b.mz)


def test_ensemble_matches_mw_oracle():
    n = 20_000
    spec = LorentzianSpec(0.01)
    tr = bloch_ensemble(BlochDisorder(mw_spec=spec), n, T[::10], seed=7, tau=1e-4)
    ref = oracles.rabi_mw_disorder(tr.times, 0.01, 1.0, cutoff=spec.cutoff)
    sem = np.sqrt(np.maximum(0.25 - tr.mz**2, 0) / n)
    assert np.all(np.abs(tr.mz - ref)[1:] <= 3 * sem[1:] + 1e-9)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        BlochParams(T1=0.0)
    with pytest.raises(ValueError):
        bloch_step(BlochState(0, 0, 0.5), BlochParams(), tau=0.0)
    with pytest.raises(ValueError):
        bloch_solve(BlochParams(), np.array([0.0, 1e-3, 3e-3]))
    with pytest.raises(ValueError):
        bloch_ensemble(BlochDisorder(), 0, T[:3])
