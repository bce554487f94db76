"""Disorder realizations: spin placement on a diluted diamond lattice and
Lorentzian g-factor / microwave-amplitude fluctuations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SI_LATTICE_PARAMETER = 5.43  # Angstrom

# conventional cubic cell of the diamond structure, fractional coordinates
_FCC = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
DIAMOND_BASIS = np.vstack([_FCC, _FCC + 0.25])


class BoxTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class LorentzianSpec:
    """Truncated Lorentzian of half width ``width`` on [-cutoff, cutoff].

    ``cutoff=None`` selects the default of ten widths; ``math.inf`` gives the
    untruncated distribution.
    """

    width: float
    cutoff: float | None = None

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("width must be >= 0")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", 10.0 * self.width if self.width > 0 else math.inf)
        if not self.cutoff > 0:
            raise ValueError("cutoff must be > 0")

    @property
    def half_angle(self) -> float:
        """arctan(cutoff / width), the normalization angle."""
        if self.width == 0:
            return math.pi / 2
        return math.atan(self.cutoff / self.width)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.width == 0:
            raise ValueError("point mass has no density")
        dens = self.width / (x**2 + self.width**2) / (2.0 * self.half_angle)
        return np.where(np.abs(x) <= self.cutoff, dens, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), -self.cutoff, self.cutoff)
        if self.width == 0:
            return np.where(x >= 0, 1.0, 0.0)
        return np.arctan(x / self.width) / (2.0 * self.half_angle) + 0.5


def sample_lorentzian(u, spec: LorentzianSpec):
    """Inverse-transform map from uniforms ``u`` in (0, 1) to ``spec``."""
    u = np.asarray(u, dtype=float)
    if spec.width == 0:
        return np.zeros_like(u)
    out = spec.width * np.tan((2.0 * u - 1.0) * spec.half_angle)
    # tan(arctan(c/w)) can overshoot c by one ulp
    return np.clip(out, -spec.cutoff, spec.cutoff)


@dataclass(frozen=True)
class LatticeSpec:
    lattice_parameter: float = SI_LATTICE_PARAMETER
    box_side: float = 0.0
    n_cells: int = 0

    @classmethod
    def for_density(cls, n_spins: int, concentration: float,
                    lattice_parameter: float = SI_LATTICE_PARAMETER) -> "LatticeSpec":
        if lattice_parameter <= 0:
            raise ValueError("lattice_parameter must be > 0")
        if n_spins < 1 or concentration <= 0:
            raise ValueError("need n_spins >= 1 and concentration > 0")
        side = (n_spins / concentration) ** (1.0 / 3.0)
        return cls(lattice_parameter, side, int(math.floor(side / lattice_parameter)))

    @property
    def nearest_neighbor(self) -> float:
        return self.lattice_parameter * math.sqrt(3.0) / 4.0

    def candidate_sites(self) -> np.ndarray:
        """All diamond sites with every coordinate in [0, box_side)."""
        m = int(math.ceil(self.box_side / self.lattice_parameter)) + 1
        cells = np.stack(np.meshgrid(*(np.arange(m),) * 3, indexing="ij"), -1).reshape(-1, 1, 3)
        sites = ((cells + DIAMOND_BASIS[None]) * self.lattice_parameter).reshape(-1, 3)
        inside = np.all(sites < self.box_side * (1 - 1e-12), axis=1)
        return sites[inside]


def subseed(master_seed: int, index: int) -> int:
    """64-bit seed of realization ``index``; a pure function of both inputs
    (SeedSequence hash of the pair)."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def place_spins(n_spins: int, concentration: float, lattice: LatticeSpec | None = None,
                seed: int | np.random.Generator = 0) -> np.ndarray:
    """Pick ``n_spins`` distinct diamond sites uniformly from a cubic box of
    volume ``n_spins / concentration`` (open boundaries)."""
    if lattice is None:
        lattice = LatticeSpec.for_density(n_spins, concentration)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    sites = lattice.candidate_sites()
    if len(sites) < n_spins:
        raise BoxTooSmallError(
            f"box of side {lattice.box_side:.3f} A holds {len(sites)} sites < {n_spins} spins")
    idx = rng.choice(len(sites), size=n_spins, replace=False)
    return sites[idx]


@dataclass
class Realization:
    positions: np.ndarray
    xi_x: np.ndarray
    xi_y: np.ndarray
    xi_z: np.ndarray
    zeta: np.ndarray
    seed: int = 0
    box_side: float = field(default=0.0)

    @property
    def n_spins(self) -> int:
        return len(self.xi_z)

    def to_record(self) -> str:
        """Plain-text replay record: one header block, one line per spin."""
        lines = [f"seed {self.seed}", f"n_spins {self.n_spins}", f"box_side {self.box_side!r}",
                 "# x_A y_A z_A xi_x xi_y xi_z zeta"]
        for j in range(self.n_spins):
            vals = (*self.positions[j], self.xi_x[j], self.xi_y[j], self.xi_z[j], self.zeta[j])
            lines.append(" ".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "Realization":
        header, rows = {}, []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] in ("seed", "n_spins", "box_side"):
                header[parts[0]] = parts[1]
            else:
                rows.append([float(p) for p in parts])
        arr = np.array(rows, dtype=float).reshape(-1, 7)
        if len(arr) != int(header["n_spins"]):
            raise ValueError("record spin count mismatch")
        return cls(arr[:, :3].copy(), arr[:, 3].copy(), arr[:, 4].copy(), arr[:, 5].copy(),
                   arr[:, 6].copy(), int(header["seed"]), float(header["box_side"]))


def draw_realization(n_spins: int, concentration: float,
                     g_spec: LorentzianSpec | tuple[LorentzianSpec, LorentzianSpec, LorentzianSpec],
                     mw_spec: LorentzianSpec, seed: int,
                     lattice_parameter: float = SI_LATTICE_PARAMETER) -> Realization:
    """One disorder sample. Equal seeds give bit-identical realizations.

    ``g_spec`` is either shared by xi_x, xi_y, xi_z or given per component.
    The uniform stream is consumed in the same order in both cases.
    """
    specs = g_spec if isinstance(g_spec, tuple) else (g_spec,) * 3
    if len(specs) != 3:
        raise ValueError("g_spec must be one LorentzianSpec or three")
    lattice = LatticeSpec.for_density(n_spins, concentration, lattice_parameter)
    rng = make_rng(seed)
    pos = place_spins(n_spins, concentration, lattice, rng)
    xi = [sample_lorentzian(rng.random(n_spins), spec) for spec in specs]
    zeta = sample_lorentzian(rng.random(n_spins), mw_spec)
    return Realization(pos, xi[0], xi[1], xi[2], zeta, int(seed), lattice.box_side)
