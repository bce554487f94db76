"""Phenomenological Bloch model with per-sample g-factor and drive disorder.

The rotating-frame equation of motion for the spin expectation values is

    dS/dt = A S + s_eq / T1

with A the sum of a diagonal relaxation part (1/T2, 1/T2, 1/T1) and the
precession generator

    [[0,  a, 0],
     [-a, 0, b],
     [0, -b, 0]],   a = 2 pi xi_z F0,  b = pi h_p (1+zeta)(2+xi_x+xi_y) FR.

Integration uses the symmetric splitting relax(tau/2) . rotate(tau) . relax(tau/2).
The relaxation half steps are exact affine maps that also carry the source
term, so the scheme stays well defined when either rate vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .engine import Trace
from .geometry import LorentzianSpec, make_rng, sample_lorentzian
from .hamiltonian import F0_MHZ, FR_MHZ

DEFAULT_TAU = 1e-5  # us


@dataclass(frozen=True)
class BlochParams:
    """Relaxation times in us (``math.inf`` disables a channel) and one
    disorder sample.  ``s_eq`` is the stationary magnetization reached
    through T1."""

    T1: float = math.inf
    T2: float = math.inf
    F0: float = F0_MHZ
    FR: float = FR_MHZ
    h_p: float = 1.0
    xi_x: float = 0.0
    xi_y: float = 0.0
    xi_z: float = 0.0
    zeta: float = 0.0
    s_eq: tuple[float, float, float] = (0.0, 0.0, 0.5)

    def __post_init__(self):
        if not (self.T1 > 0 and self.T2 > 0):
            raise ValueError("T1 and T2 must be > 0 (math.inf allowed)")

    @property
    def a(self) -> float:
        return 2.0 * math.pi * self.xi_z * self.F0

    @property
    def b(self) -> float:
        return math.pi * self.h_p * (1.0 + self.zeta) * (2.0 + self.xi_x + self.xi_y) * self.FR

    @property
    def rates(self) -> np.ndarray:
        return np.array([1.0 / self.T2, 1.0 / self.T2, 1.0 / self.T1])


@dataclass(frozen=True)
class BlochState:
    sx: float
    sy: float
    sz: float

    @classmethod
    def from_label(cls, label: str) -> "BlochState":
        try:
            return cls(*{"z+": (0.0, 0.0, 0.5), "x+": (0.5, 0.0, 0.0),
                         "y+": (0.0, 0.5, 0.0)}[label])
        except KeyError:
            raise ValueError(f"unknown initial state {label!r}") from None

    def as_array(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz])


def rotation_matrix(a: float, b: float, tau: float) -> np.ndarray:
    """exp(tau * A2) for the precession generator, via Rodrigues' formula.

    The generator acts as the cross product with w = (-b, 0, -a).
    """
    om = math.hypot(a, b)
    if om == 0.0:
        return np.eye(3)
    n = np.array([-b, 0.0, -a]) / om
    K = np.array([[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]])
    return np.eye(3) + math.sin(tau * om) * K + (1.0 - math.cos(tau * om)) * (K @ K)


def _relax_half(rates, source, h):
    """Exact flow of ds/dt = -r s + source over time h: s -> d*s + e."""
    d = np.exp(-rates * h)
    # (1 - e^{-r h}) / r, with the r -> 0 limit h
    w = np.where(rates > 0, -np.expm1(-rates * h) / np.where(rates > 0, rates, 1.0), h)
    return d, w * source


def step_map(params: BlochParams, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Affine one-step map s -> M s + c of the symmetric splitting."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    source = np.asarray(params.s_eq, float) / params.T1
    d, e = _relax_half(params.rates, source, 0.5 * tau)
    R = rotation_matrix(params.a, params.b, tau)
    M = d[:, None] * R * d[None, :]
    c = d * (R @ e) + e
    return M, c


def bloch_step(state: BlochState, params: BlochParams, tau: float = DEFAULT_TAU) -> BlochState:
    M, c = step_map(params, tau)
    return BlochState(*(M @ state.as_array() + c))


@nb.njit(cache=True)
def _iterate(M, c, s0, n_steps, stride, out):
    # M: (R, 3, 3), c: (R, 3), s0: (3,); out (n_rec, 3) accumulates the sum over samples
    n_samples = M.shape[0]
    for r in range(n_samples):
        x, y, z = s0[0], s0[1], s0[2]
        m = M[r]
        out[0, 0] += x
        out[0, 1] += y
        out[0, 2] += z
        rec = 1
        for k in range(1, n_steps + 1):
            x, y, z = (m[0, 0] * x + m[0, 1] * y + m[0, 2] * z + c[r, 0],
                       m[1, 0] * x + m[1, 1] * y + m[1, 2] * z + c[r, 1],
                       m[2, 0] * x + m[2, 1] * y + m[2, 2] * z + c[r, 2])
            if k % stride == 0:
                out[rec, 0] += x
                out[rec, 1] += y
                out[rec, 2] += z
                rec += 1


def _grid_steps(t_grid, tau):
    t = np.asarray(t_grid, float)
    if t.ndim != 1 or len(t) < 1 or t[0] != 0.0:
        raise ValueError("t_grid must be 1-D and start at 0")
    if len(t) > 1:
        if np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must be strictly increasing")
        stride = int(round((t[1] - t[0]) / tau))
        ok = stride >= 1 and np.allclose(t, np.arange(len(t)) * stride * tau, rtol=1e-9, atol=1e-12)
        if not ok:
            raise ValueError("t_grid must be uniform with spacing a multiple of tau")
    else:
        stride = 1
    return stride, (len(t) - 1) * stride


def _solve_many(params_list, t_grid, init, tau):
    stride, n_steps = _grid_steps(t_grid, tau)
    maps = [step_map(p, tau) for p in params_list]
    M = np.ascontiguousarray([m for m, _ in maps])
    c = np.ascontiguousarray([v for _, v in maps])
    out = np.zeros((len(t_grid), 3))
    _iterate(M, c, init.as_array(), n_steps, stride, out)
    out /= len(params_list)
    t = np.asarray(t_grid, float)
    return Trace(t, out[:, 0], out[:, 1], out[:, 2], np.zeros(len(t)))


def bloch_solve(params: BlochParams, t_grid, init: BlochState | str = "z+",
                tau: float = DEFAULT_TAU) -> Trace:
    """Integrate one sample on a uniform grid starting at t = 0.

    The returned Trace holds per-spin components; the energy column is zero.
    """
    if isinstance(init, str):
        init = BlochState.from_label(init)
    return _solve_many([params], t_grid, init, tau)


@dataclass(frozen=True)
class BlochDisorder:
    """Distribution of the per-sample parameters of the ensemble model.

    ``g_spec`` is shared by the three g components or given as (x, y, z).
    """

    g_spec: LorentzianSpec | tuple[LorentzianSpec, LorentzianSpec, LorentzianSpec] = LorentzianSpec(0.0)
    mw_spec: LorentzianSpec = LorentzianSpec(0.0)
    T1: float = math.inf
    T2: float = math.inf
    h_p: float = 1.0
    F0: float = F0_MHZ
    FR: float = FR_MHZ
    s_eq: tuple[float, float, float] = (0.0, 0.0, 0.5)

    def draw(self, n_samples: int, seed: int) -> list[BlochParams]:
        specs = self.g_spec if isinstance(self.g_spec, tuple) else (self.g_spec,) * 3
        rng = make_rng(seed)
        xi = [sample_lorentzian(rng.random(n_samples), spec) for spec in specs]
        zeta = sample_lorentzian(rng.random(n_samples), self.mw_spec)
        return [BlochParams(self.T1, self.T2, self.F0, self.FR, self.h_p, xi[0][i], xi[1][i],
                            xi[2][i], zeta[i], self.s_eq) for i in range(n_samples)]


def bloch_ensemble(dist: BlochDisorder, n_samples: int, t_grid, seed: int = 0,
                   init: BlochState | str = "z+", tau: float = DEFAULT_TAU) -> Trace:
    """Sample-averaged Bloch trace; samples are summed in index order."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if isinstance(init, str):
        init = BlochState.from_label(init)
    return _solve_many(dist.draw(n_samples, seed), t_grid, init, tau)


def free_solution(t, T2: float, h_p: float = 1.0, FR: float = FR_MHZ,
                  init: BlochState | str = "z+") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact (sx, sy, sz) without disorder, with 1/T1 = 0 and T2 finite.

    The y-z block is a damped oscillator with rate 1/(2 T2) and frequency
    2 pi h_p FR sqrt(1 - (1 / (4 pi h_p FR T2))^2) (underdamped case only).
    """
    if isinstance(init, str):
        init = BlochState.from_label(init)
    t = np.asarray(t, float)
    b = 2.0 * math.pi * h_p * FR
    g = 0.5 / T2
    if b <= g:
        raise ValueError("closed form requires the underdamped regime")
    w = math.sqrt(b * b - g * g)
    env = np.exp(-g * t)
    cs, sn = np.cos(w * t), np.sin(w * t)
    y0, z0 = init.sy, init.sz
    sx = init.sx * np.exp(-t / T2)
    sy = env * (y0 * (cs - g / w * sn) + z0 * b / w * sn)
    sz = env * (z0 * (cs + g / w * sn) - y0 * b / w * sn)
    return sx, sy, sz
