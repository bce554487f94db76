"""Rotating-frame secular Hamiltonian as a table of coefficients.

Units: frequencies in MHz, time in microseconds, distances in Angstrom.  The
table stores linear frequencies; the engine multiplies by 2*pi.

    H/(2 pi hbar) = sum_j local_z[j] Sz_j + drive_x[j] Sx_j
                  + sum_{j<k} pair_zz[j,k] Sz_j Sz_k
                  + pair_xxyy[j,k] (Sx_j Sx_k + Sy_j Sy_k)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Realization

F0_MHZ = 9700.0
FR_MHZ = 55.96
D0_MHZ_A3 = 51880.0  # 51.88 GHz * A^3


class CoincidentSpinsError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    F0: float = F0_MHZ
    FR: float = FR_MHZ
    D0: float = D0_MHZ_A3
    h_p: float = 1.0
    dipolar_enabled: bool = True

    def __post_init__(self):
        if min(self.F0, self.FR, self.D0, self.h_p) < 0:
            raise ValueError("F0, FR, D0 and h_p must be nonnegative")


@dataclass(frozen=True)
class CouplingTable:
    local_z: np.ndarray
    drive_x: np.ndarray
    pair_zz: np.ndarray
    pair_xxyy: np.ndarray
    pairs: np.ndarray = field(repr=False)  # (M, 2) int, j < k, only nonzero pairs

    @property
    def n_spins(self) -> int:
        return len(self.local_z)

    @property
    def driven(self) -> bool:
        return bool(np.any(self.drive_x != 0))

    def dump(self) -> str:
        lines = ["# spin local_z_MHz drive_x_MHz"]
        lines += [f"{j} {self.local_z[j]!r} {self.drive_x[j]!r}" for j in range(self.n_spins)]
        lines.append("# j k pair_zz_MHz pair_xxyy_MHz")
        lines += [f"{j} {k} {self.pair_zz[j, k]!r} {self.pair_xxyy[j, k]!r}" for j, k in self.pairs]
        return "\n".join(lines) + "\n"


def build_couplings(real: Realization, params: ModelParams) -> CouplingTable:
    L = real.n_spins
    local_z = -params.F0 * real.xi_z
    drive_x = -params.h_p * params.FR * (1.0 + real.zeta) * (2.0 + real.xi_x + real.xi_y) / 2.0
    zz = np.zeros((L, L))
    xy = np.zeros((L, L))
    if params.dipolar_enabled and L > 1 and params.D0 != 0:
        d = real.positions[:, None, :] - real.positions[None, :, :]
        r2 = np.sum(d**2, axis=-1)
        iu = np.triu_indices(L, 1)
        if np.any(r2[iu] == 0):
            raise CoincidentSpinsError("two spins share a position")
        np.fill_diagonal(r2, 1.0)
        r3 = r2**1.5
        ang = 1.0 - 3.0 * d**2 / r2[..., None]
        gx, gy, gz = 1.0 + real.xi_x, 1.0 + real.xi_y, 1.0 + real.xi_z
        zz = params.D0 * np.outer(gz, gz) * ang[..., 2] / r3
        xy = params.D0 * (np.outer(gx, gx) * ang[..., 0] + np.outer(gy, gy) * ang[..., 1]) / (2.0 * r3)
        np.fill_diagonal(zz, 0.0)
        np.fill_diagonal(xy, 0.0)
        # exact symmetry regardless of rounding in the outer products
        zz = np.triu(zz, 1) + np.triu(zz, 1).T
        xy = np.triu(xy, 1) + np.triu(xy, 1).T
    j, k = np.triu_indices(L, 1)
    keep = (zz[j, k] != 0) | (xy[j, k] != 0)
    pairs = np.stack([j[keep], k[keep]], axis=1).astype(np.int64)
    return CouplingTable(local_z, drive_x, zz, xy, pairs)


def consistency_check(table: CouplingTable, no_disorder: bool = False, rtol: float = 1e-12) -> list[str]:
    """Return a list of violated structural properties (empty when clean).

    With ``no_disorder`` the flip-flop coefficient must equal minus one half
    of the zz coefficient for every pair.
    """
    problems = []
    for name in ("local_z", "drive_x", "pair_zz", "pair_xxyy"):
        arr = getattr(table, name)
        if not np.all(np.isreal(arr)) or not np.all(np.isfinite(arr)):
            problems.append(f"{name} not real and finite")
    for name in ("pair_zz", "pair_xxyy"):
        arr = getattr(table, name)
        if not np.array_equal(arr, arr.T):
            problems.append(f"{name} not symmetric")
        if np.any(np.diag(arr) != 0):
            problems.append(f"{name} has self-coupling")
    if no_disorder:
        scale = np.max(np.abs(table.pair_zz), initial=0.0)
        dev = np.abs(table.pair_xxyy + 0.5 * table.pair_zz)
        if np.any(dev > rtol * max(scale, 1e-300)):
            problems.append("pair_xxyy != -pair_zz/2 without disorder")
    return problems


_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2


def spin_operator(op: np.ndarray, j: int, L: int) -> np.ndarray:
    """Dense 2^L operator acting with ``op`` on spin ``j``.

    Spin j is bit j of the basis index; bit value 0 is spin up.
    """
    out = np.ones((1, 1), dtype=complex)
    for site in reversed(range(L)):
        out = np.kron(out, op if site == j else np.eye(2))
    return out


def dense_hamiltonian(table: CouplingTable) -> np.ndarray:
    """Dense H/(2 pi hbar) in MHz.  Exponential cost: for small L checks only."""
    L = table.n_spins
    if L > 12:
        raise ValueError("dense Hamiltonian limited to L <= 12")
    sx = [spin_operator(_SX, j, L) for j in range(L)]
    sy = [spin_operator(_SY, j, L) for j in range(L)]
    sz = [spin_operator(_SZ, j, L) for j in range(L)]
    H = np.zeros((2**L, 2**L), dtype=complex)
    for j in range(L):
        H += table.local_z[j] * sz[j] + table.drive_x[j] * sx[j]
    for j, k in table.pairs:
        H += table.pair_zz[j, k] * sz[j] @ sz[k]
        H += table.pair_xxyy[j, k] * (sx[j] @ sx[k] + sy[j] @ sy[k])
    return H
