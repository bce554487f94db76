"""State-vector evolution under a CouplingTable.

Second-order product formula per step of length dt::

    exp(-i dt A/2) exp(-i dt B/2) exp(-i dt C) exp(-i dt B/2) exp(-i dt A/2)

A holds the single-spin terms (exact 2x2 rotation per spin), B the zz terms
(a diagonal phase), C the flip-flop terms.  exp(-i dt C) is itself the
palindrome of exact two-spin rotations over the pair list, so the whole step
is symmetric.  Inside ``Propagator.advance`` consecutive steps alternate
forward and backward pair orderings, which pairs every step with its adjoint
and keeps the scheme symmetric at half the pair cost.  Adjacent A half steps are merged; without a drive A is
diagonal and is folded into B.

Basis convention: spin j is bit j of the amplitude index, bit 0 = spin up.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .hamiltonian import CouplingTable

TWO_PI = 2.0 * math.pi
MAX_SPINS = 30
SOFT_MAX_SPINS = 24


class ResourceExceededError(RuntimeError):
    pass


def check_size(n_spins: int, allow_large: bool = False) -> None:
    if n_spins > MAX_SPINS:
        raise ResourceExceededError(f"L={n_spins} exceeds the hard cap of {MAX_SPINS}")
    if n_spins > SOFT_MAX_SPINS and not allow_large:
        raise ResourceExceededError(
            f"L={n_spins} needs {16 * 2**n_spins / 2**30:.1f} GiB per state; pass allow_large")


def init_product_state(n_spins: int, axis: str = "z+") -> np.ndarray:
    if n_spins < 1:
        raise ValueError("need at least one spin")
    dim = 1 << n_spins
    if axis == "z+":
        psi = np.zeros(dim, dtype=np.complex128)
        psi[0] = 1.0
    elif axis == "x+":
        psi = np.full(dim, 2.0 ** (-n_spins / 2.0), dtype=np.complex128)
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return psi


# ---------------------------------------------------------------- kernels

@nb.njit(cache=True, fastmath=True)
def _apply_singles(psi, n_spins, u):
    # u[j] = (u00, u01, u10, u11) in the (up, down) basis
    dim = psi.shape[0]
    for j in range(n_spins):
        bit = 1 << j
        a, b, c, d = u[j, 0], u[j, 1], u[j, 2], u[j, 3]
        for h in range(0, dim, 2 * bit):
            for i0 in range(h, h + bit):
                x0 = psi[i0]
                x1 = psi[i0 + bit]
                psi[i0] = a * x0 + b * x1
                psi[i0 + bit] = c * x0 + d * x1


@nb.njit(cache=True, fastmath=True)
def _apply_flipflop(psi, j, k, cs, sn):
    # cos(phi) - i sin(phi) sigma_x on the {up-down, down-up} subspace, j < k
    bj = 1 << j
    bk = 1 << k
    dim = psi.shape[0]
    for h in range(0, dim, 2 * bk):
        for m in range(h, h + bk, 2 * bj):
            for lo in range(m, m + bj):
                xa = psi[lo + bk]
                xb = psi[lo + bj]
                psi[lo + bk] = complex(cs * xa.real + sn * xb.imag, cs * xa.imag - sn * xb.real)
                psi[lo + bj] = complex(cs * xb.real + sn * xa.imag, cs * xb.imag - sn * xa.real)


@nb.njit(cache=True)
def _apply_pairs(psi, pairs, cs_half, sn_half, cs_full, sn_full, order):
    # order 0: palindrome with half angles; 1: forward, full angles; -1: backward
    m = pairs.shape[0]
    if m == 0:
        return
    if order == 1:
        for p in range(m):
            _apply_flipflop(psi, pairs[p, 0], pairs[p, 1], cs_full[p], sn_full[p])
    elif order == -1:
        for p in range(m - 1, -1, -1):
            _apply_flipflop(psi, pairs[p, 0], pairs[p, 1], cs_full[p], sn_full[p])
    else:
        for p in range(m - 1):
            _apply_flipflop(psi, pairs[p, 0], pairs[p, 1], cs_half[p], sn_half[p])
        _apply_flipflop(psi, pairs[m - 1, 0], pairs[m - 1, 1], cs_full[m - 1], sn_full[m - 1])
        for p in range(m - 2, -1, -1):
            _apply_flipflop(psi, pairs[p, 0], pairs[p, 1], cs_half[p], sn_half[p])


@nb.njit(cache=True)
def _pair_order(step, n_steps):
    # consecutive forward/backward steps form a symmetric composition; a
    # trailing unpaired step uses the full palindrome
    if n_steps % 2 == 1 and step == n_steps - 1:
        return 0
    return 1 if step % 2 == 0 else -1


@nb.njit(cache=True)
def _run_driven(psi, n_steps, n_spins, u_half, u_full, phase_half, pairs,
                cs_half, sn_half, cs_full, sn_full):
    _apply_singles(psi, n_spins, u_half)
    for step in range(n_steps):
        psi *= phase_half
        _apply_pairs(psi, pairs, cs_half, sn_half, cs_full, sn_full, _pair_order(step, n_steps))
        psi *= phase_half
        if step == n_steps - 1:
            _apply_singles(psi, n_spins, u_half)
        else:
            _apply_singles(psi, n_spins, u_full)


@nb.njit(cache=True)
def _run_undriven(psi, n_steps, phase_half, phase_full, pairs,
                  cs_half, sn_half, cs_full, sn_full):
    psi *= phase_half
    for step in range(n_steps):
        _apply_pairs(psi, pairs, cs_half, sn_half, cs_full, sn_full, _pair_order(step, n_steps))
        if step == n_steps - 1:
            psi *= phase_half
        else:
            psi *= phase_full


@nb.njit(cache=True)
def _observables(psi, mz_diag, e_diag, drive_x, pairs, xy):
    dim = psi.shape[0]
    n_spins = drive_x.shape[0]
    mz = 0.0
    ed = 0.0
    for i in range(dim):
        p = psi[i].real ** 2 + psi[i].imag ** 2
        mz += p * mz_diag[i]
        ed += p * e_diag[i]
    mx = 0.0
    my = 0.0
    e_drive = 0.0
    for j in range(n_spins):
        bit = 1 << j
        sx = 0.0
        sy = 0.0
        for h in range(0, dim, 2 * bit):
            for i0 in range(h, h + bit):
                v = psi[i0].conjugate() * psi[i0 + bit]
                sx += v.real
                sy += v.imag
        mx += sx
        my += sy
        e_drive += drive_x[j] * sx
    e_ff = 0.0
    for q in range(pairs.shape[0]):
        if xy[q] == 0.0:
            continue
        bj = 1 << pairs[q, 0]
        bk = 1 << pairs[q, 1]
        acc = 0.0
        for h in range(0, dim, 2 * bk):
            for m in range(h, h + bk, 2 * bj):
                for lo in range(m, m + bj):
                    acc += (psi[lo + bk].conjugate() * psi[lo + bj]).real
        e_ff += xy[q] * acc
    return mx, my, mz, ed + e_drive + e_ff


# ---------------------------------------------------------------- wrappers

def _single_spin_unitaries(local_z, drive_x, tau):
    """exp(-i 2 pi tau (a Sz + b Sx)) per spin, flattened to (L, 4)."""
    a = np.asarray(local_z, float)
    b = np.asarray(drive_x, float)
    w = np.hypot(a, b)
    phi = math.pi * tau * w
    c = np.cos(phi)
    s = np.sin(phi)
    with np.errstate(invalid="ignore", divide="ignore"):
        na = np.where(w > 0, a / w, 0.0)
        nb_ = np.where(w > 0, b / w, 0.0)
    u = np.empty((len(a), 4), dtype=np.complex128)
    u[:, 0] = c - 1j * s * na
    u[:, 1] = -1j * s * nb_
    u[:, 2] = -1j * s * nb_
    u[:, 3] = c + 1j * s * na
    return u


def _mz_diag(n_spins: int) -> np.ndarray:
    idx = np.arange(1 << n_spins)
    pop = ((idx[:, None] >> np.arange(n_spins)[None, :]) & 1).sum(axis=1)
    return 0.5 * n_spins - pop


def _diag_energies(table: CouplingTable, include_local: bool) -> np.ndarray:
    L = table.n_spins
    idx = np.arange(1 << L)
    sz = 0.5 - ((idx[:, None] >> np.arange(L)[None, :]) & 1)
    e = np.zeros(1 << L)
    if include_local:
        e += sz @ table.local_z
    for j, k in table.pairs:
        e += table.pair_zz[j, k] * sz[:, j] * sz[:, k]
    return e


@dataclass
class Propagator:
    """Precomputed sub-step factors for one (table, dt)."""

    table: CouplingTable
    dt: float
    driven: bool = field(init=False)

    def __post_init__(self):
        t = self.table
        check_size(t.n_spins, allow_large=True)
        self.driven = t.driven
        e = _diag_energies(t, include_local=not self.driven)
        self.phase_half = np.exp(-1j * TWO_PI * (self.dt / 2) * e)
        self.phase_full = self.phase_half * self.phase_half
        self.pairs = np.ascontiguousarray(t.pairs, dtype=np.int64)
        xy = t.pair_xxyy[self.pairs[:, 0], self.pairs[:, 1]] if len(self.pairs) else np.zeros(0)
        # H_pair = xy (SxSx + SySy) = (xy/2) sigma_x on {ud, du}
        self.cs_half = np.cos(math.pi * xy * self.dt / 2)
        self.sn_half = np.sin(math.pi * xy * self.dt / 2)
        self.cs_full = np.cos(math.pi * xy * self.dt)
        self.sn_full = np.sin(math.pi * xy * self.dt)
        self.u_half = _single_spin_unitaries(t.local_z, t.drive_x, self.dt / 2)
        self.u_full = _single_spin_unitaries(t.local_z, t.drive_x, self.dt)
        self._xy = xy
        self._e_diag = e if not self.driven else _diag_energies(t, include_local=True)
        self._mz_diag = _mz_diag(t.n_spins)

    def advance(self, psi: np.ndarray, n_steps: int = 1) -> np.ndarray:
        """Apply ``n_steps`` product-formula steps to ``psi`` in place."""
        if n_steps <= 0:
            return psi
        if self.driven:
            _run_driven(psi, n_steps, self.table.n_spins, self.u_half, self.u_full,
                        self.phase_half, self.pairs, self.cs_half, self.sn_half,
                        self.cs_full, self.sn_full)
        else:
            _run_undriven(psi, n_steps, self.phase_half, self.phase_full, self.pairs,
                          self.cs_half, self.sn_half, self.cs_full, self.sn_full)
        return psi

    def observables(self, psi: np.ndarray) -> tuple[float, float, float, float]:
        return _observables(psi, self._mz_diag, self._e_diag, self.table.drive_x, self.pairs, self._xy)


def step(psi: np.ndarray, table: CouplingTable, dt: float) -> np.ndarray:
    """One product-formula step; returns a new array."""
    out = np.array(psi, dtype=np.complex128, copy=True)
    return Propagator(table, dt).advance(out, 1)


def measure(psi: np.ndarray) -> tuple[float, float, float]:
    """Total magnetization (Mx, My, Mz) of a normalized state."""
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    L = int(round(math.log2(psi.shape[0])))
    z = np.zeros(L)
    mx, my, mz, _ = _observables(psi, _mz_diag(L), np.zeros(1 << L), z,
                                 np.zeros((0, 2), np.int64), np.zeros(0))
    return mx, my, mz


def energy(psi: np.ndarray, table: CouplingTable) -> float:
    """<H>/(2 pi hbar) in MHz."""
    return Propagator(table, 1.0).observables(np.ascontiguousarray(psi, np.complex128))[3]


@dataclass(frozen=True)
class EvolutionPlan:
    dt: float = 1e-5
    n_steps: int = 50_000
    record_every: int = 100

    def __post_init__(self):
        if not self.dt > 0 or self.n_steps < 0 or self.record_every < 1:
            raise ValueError("invalid evolution plan")

    @classmethod
    def from_times(cls, t_max: float, dt: float = 1e-5, sample_stride: float = 1e-3) -> "EvolutionPlan":
        every = max(1, int(round(sample_stride / dt)))
        n = int(round(t_max / dt))
        n -= n % every
        return cls(dt, n, every)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps // self.record_every + 1) * self.record_every * self.dt


@dataclass
class Trace:
    times: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    mz: np.ndarray
    energy: np.ndarray
    norm: np.ndarray | None = None

    COLUMNS = ("t_us", "mx", "my", "mz", "energy")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in zip(self.times, self.mx, self.my, self.mz, self.energy):
                w.writerow([f"{float(v):.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != cls.COLUMNS:
            raise ValueError(f"unexpected trace header {rows[0]}")
        data = np.array(rows[1:], dtype=float).reshape(-1, 5)
        return cls(*(data[:, i].copy() for i in range(5)))

    def component(self, name: str) -> np.ndarray:
        return {"mx": self.mx, "my": self.my, "mz": self.mz}[name]


def evolve_and_record(psi: np.ndarray, table: CouplingTable, plan: EvolutionPlan,
                      track_norm: bool = False) -> Trace:
    """Evolve ``psi`` in place, sampling exact expectation values."""
    prop = Propagator(table, plan.dt)
    n_rec = plan.n_steps // plan.record_every
    out = np.empty((n_rec + 1, 4))
    norms = np.empty(n_rec + 1) if track_norm else None
    out[0] = prop.observables(psi)
    if track_norm:
        norms[0] = np.vdot(psi, psi).real
    for r in range(1, n_rec + 1):
        prop.advance(psi, plan.record_every)
        out[r] = prop.observables(psi)
        if track_norm:
            norms[r] = np.vdot(psi, psi).real
    return Trace(plan.times, out[:, 0], out[:, 1], out[:, 2], out[:, 3], norms)


# ------------------------------------------------- non-interacting fast path

@nb.njit(cache=True)
def _single_spin_traces(local_z, drive_x, dt, n_rec, every, up0, dn0, out):
    # out[r, :] accumulates (sx, sy, sz) summed over spins
    for j in range(local_z.shape[0]):
        a = local_z[j]
        b = drive_x[j]
        w = math.sqrt(a * a + b * b)
        phi = math.pi * dt * every * w
        c = math.cos(phi)
        s = math.sin(phi)
        na = a / w if w > 0 else 0.0
        nb_ = b / w if w > 0 else 0.0
        u00 = c - 1j * s * na
        u01 = -1j * s * nb_
        u11 = c + 1j * s * na
        x0 = up0
        x1 = dn0
        for r in range(n_rec + 1):
            v = x0.conjugate() * x1
            out[r, 0] += v.real
            out[r, 1] += v.imag
            out[r, 2] += 0.5 * (x0.real ** 2 + x0.imag ** 2 - x1.real ** 2 - x1.imag ** 2)
            y0 = u00 * x0 + u01 * x1
            x1 = u01 * x0 + u11 * x1
            x0 = y0


def evolve_independent_spins(local_z, drive_x, plan: EvolutionPlan, axis: str = "z+") -> Trace:
    """Summed magnetization of uncoupled spins.

    Without pair terms the state stays a product state and every single-spin
    factor is an exact rotation, so each spin is propagated on its own.
    """
    local_z = np.ascontiguousarray(local_z, float)
    drive_x = np.ascontiguousarray(drive_x, float)
    up0, dn0 = (1.0 + 0j, 0j) if axis == "z+" else (2**-0.5 + 0j, 2**-0.5 + 0j)
    n_rec = plan.n_steps // plan.record_every
    out = np.zeros((n_rec + 1, 3))
    _single_spin_traces(local_z, drive_x, plan.dt, n_rec, plan.record_every, up0, dn0, out)
    # each spin's energy is conserved by its exact rotation
    e0 = 0.5 * (local_z.sum() if axis == "z+" else drive_x.sum())
    return Trace(plan.times, out[:, 0], out[:, 1], out[:, 2], np.full(n_rec + 1, e0))
