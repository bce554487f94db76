"""Closed-form and quadrature disorder averages for uncoupled spins.

All functions return per-spin expectation values (range [-1/2, 1/2]) at
times ``t`` in microseconds.  Sign conventions follow the Hamiltonian used by
the engine: from the z+ state a positive drive rotates the spin towards +y.

Default evaluation is adaptive quadrature over the (possibly truncated)
Lorentzian, after the substitution xi = width * tan(theta) which turns the
Lorentzian weight into a uniform one.  The Bessel-kernel closed forms hold
only without cutoff and for h_p*FR > Gamma*F0.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .hamiltonian import F0_MHZ, FR_MHZ

QUAD_TOL = 1e-8
QUAD_BUDGET = 1_000_000  # kernel evaluations


class QuadratureError(RuntimeError):
    pass


def omega_rabi(h_p: float, FR: float = FR_MHZ) -> float:
    """Rabi angular frequency in rad/us."""
    return 2.0 * math.pi * h_p * FR


def bessel_j0(x):
    return special.j0(x)


def _half_angle(width, cutoff):
    if cutoff is None or math.isinf(cutoff):
        return math.pi / 2
    return math.atan(cutoff / width)


def _lorentz_average(kernel, t, width, cutoff):
    """E[kernel(xi, t)] for an even kernel and a symmetric truncated Lorentzian."""
    t = np.atleast_1d(np.asarray(t, float))
    theta0 = _half_angle(width, cutoff)

    def integrand(theta):
        return kernel(width * math.tan(theta), t)

    # quad_vec uses 21-point Gauss-Kronrod rules
    limit = max(QUAD_BUDGET // 21, 1)
    val, err, info = integrate.quad_vec(integrand, 0.0, theta0, epsabs=QUAD_TOL * theta0,
                                        epsrel=0.0, limit=limit, norm="max", full_output=True)
    if not info.success:
        raise QuadratureError(f"quadrature did not reach {QUAD_TOL} within budget: {info.message}")
    return val / theta0


def lorentzian_charfn(s, width: float, cutoff: float | None = math.inf):
    """E[cos(s*x)] for a Lorentzian of half width ``width`` cut at ``cutoff``."""
    s = np.asarray(s, float)
    if width == 0:
        return np.ones_like(s)
    if cutoff is None or math.isinf(cutoff):
        return np.exp(-width * np.abs(s))
    out = _lorentz_average(lambda x, ss: np.cos(ss * x), s.ravel(), width, cutoff)
    return out.reshape(s.shape)


def rabi_ideal(t, h_p: float = 1.0, FR: float = FR_MHZ):
    return 0.5 * np.cos(omega_rabi(h_p, FR) * np.asarray(t, float))


def rabi_mw_disorder(t, gamma: float, h_p: float = 1.0, cutoff: float | None = math.inf,
                     FR: float = FR_MHZ):
    """<Sz> averaged over microwave-amplitude disorder, z+ start."""
    om = omega_rabi(h_p, FR)
    t = np.asarray(t, float)
    return 0.5 * np.cos(om * t) * lorentzian_charfn(om * t, gamma, cutoff)


def rabi_gxy_disorder(t, Gamma: float, h_p: float = 1.0, cutoff: float | None = math.inf,
                      FR: float = FR_MHZ):
    """<Sz> averaged over independent xi_x, xi_y; the drive carries (2+xi_x+xi_y)/2."""
    om = omega_rabi(h_p, FR)
    t = np.asarray(t, float)
    return 0.5 * np.cos(om * t) * lorentzian_charfn(0.5 * om * t, Gamma, cutoff) ** 2


def mw_decay_rate(gamma: float, h_p: float, FR: float = FR_MHZ) -> float:
    return gamma * omega_rabi(h_p, FR)


# ------------------------------------------------------------- g_z disorder

def _gz_kernel(component, A, F0):
    # rotation about (A, 0, F0*xi)/W at angular rate 2*pi*W, W = |(A, F0*xi)|
    def k_sz(xi, t):
        z2 = (F0 * xi) ** 2
        w2 = z2 + A * A
        if w2 == 0:
            return np.full_like(t, 1.0) * 0.5
        return 0.5 * (z2 + A * A * np.cos(2 * np.pi * t * math.sqrt(w2))) / w2

    def k_sy(xi, t):
        w = math.hypot(F0 * xi, A)
        if w == 0:
            return np.zeros_like(t)
        return 0.5 * A * np.sin(2 * np.pi * t * w) / w

    def k_sx(xi, t):
        z2 = (F0 * xi) ** 2
        w2 = z2 + A * A
        if w2 == 0:
            return np.full_like(t, 0.5)
        return 0.5 * (A * A + z2 * np.cos(2 * np.pi * t * math.sqrt(w2))) / w2

    return {"sz": k_sz, "sy": k_sy, "sx": k_sx}[component]


def _gz_average(component, t, Gamma, h_p, cutoff, F0, FR, method):
    A = h_p * FR
    t_arr = np.asarray(t, float)
    if Gamma == 0:
        return _gz_kernel(component, A, F0)(0.0, np.atleast_1d(t_arr)).reshape(t_arr.shape)
    if method == "bessel":
        return _gz_bessel(component, t_arr, Gamma, h_p, F0, FR)
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    if cutoff is None:
        cutoff = 10.0 * Gamma
    kernel = _gz_kernel(component, A, F0)
    if component == "sx" and math.isinf(cutoff):
        # the x-start kernel tends to cos(2 pi t F0 xi) with unit amplitude;
        # integrate the decaying remainder and add the exact Lorentzian
        # transform of that limit
        base = kernel

        def kernel(xi, t):
            return base(xi, t) - 0.5 * np.cos(2 * np.pi * t * F0 * xi)

        out = _lorentz_average(kernel, t_arr.ravel(), Gamma, cutoff)
        out += 0.5 * np.exp(-2 * np.pi * Gamma * F0 * np.abs(t_arr.ravel()))
    else:
        out = _lorentz_average(kernel, t_arr.ravel(), Gamma, cutoff)
    return out.reshape(t_arr.shape)


def sz_gz_disorder(t, Gamma: float, h_p: float = 1.0, cutoff: float | None = None,
                   method: str = "quad", F0: float = F0_MHZ, FR: float = FR_MHZ):
    """<Sz> from the z+ start with Lorentzian g_z disorder of width Gamma.

    ``cutoff=None`` means ten widths, ``math.inf`` no truncation.  ``method``
    "bessel" evaluates the untruncated closed form instead.
    """
    return _gz_average("sz", t, Gamma, h_p, cutoff, F0, FR, method)


def sy_gz_disorder(t, Gamma: float, h_p: float = 1.0, cutoff: float | None = None,
                   method: str = "quad", F0: float = F0_MHZ, FR: float = FR_MHZ):
    """<Sy> from the z+ start; <Sx> vanishes identically there."""
    return _gz_average("sy", t, Gamma, h_p, cutoff, F0, FR, method)


def sx_gz_disorder(t, Gamma: float, h_p: float = 1.0, cutoff: float | None = None,
                   method: str = "quad", F0: float = F0_MHZ, FR: float = FR_MHZ):
    """<Sx> from the x+ start."""
    return _gz_average("sx", t, Gamma, h_p, cutoff, F0, FR, method)


def _j0_convolution(t, A, kernel):
    """int_0^t J0(2 pi A u) kernel(t - u) du for each t."""
    out = np.empty(len(t))
    for i, ti in enumerate(t):
        if ti == 0:
            out[i] = 0.0
            continue
        val, _ = integrate.quad(lambda u: special.j0(2 * np.pi * A * u) * kernel(ti - u), 0.0, ti,
                                epsabs=1e-13, epsrel=1e-12, limit=2000)
        out[i] = val
    return out


def _gz_bessel(component, t, Gamma, h_p, F0, FR):
    A = h_p * FR
    G = Gamma * F0
    if A <= G:
        raise ValueError("closed forms need h_p*FR > Gamma*F0")
    V2 = A * A - G * G
    V = math.sqrt(V2)
    shape = t.shape
    t = np.atleast_1d(t).ravel()
    tp = 2 * np.pi
    if component == "sz":
        conv = _j0_convolution(t, A, lambda s: (1 - math.cos(tp * s * V)) / V2)
        out = 0.5 * ((-G * G + A * A * np.cos(tp * t * V)) / V2 + tp * G * A * A * conv)
    elif component == "sy":
        conv = _j0_convolution(t, A, lambda s: math.sin(tp * s * V) / V)
        out = 0.5 * A * (np.sin(tp * t * V) / V - tp * G * conv)
    elif component == "sx":
        j0_int = _j0_convolution(t, A, lambda s: 1.0)
        conv = _j0_convolution(t, A, lambda s: math.cos(tp * s * V))
        out = 0.5 * ((A * A - G * G * np.cos(tp * t * V)) / V2
                     - tp * G * A * A / V2 * j0_int + tp * G**3 / V2 * conv)
    else:
        raise ValueError(component)
    return out.reshape(shape)


def longtime_averages(Gamma: float, h_p: float, start: str = "z+", F0: float = F0_MHZ,
                      FR: float = FR_MHZ) -> tuple[float, float, float]:
    """Infinite-time averages (Sx, Sy, Sz) for untruncated g_z disorder."""
    A = h_p * FR
    G = Gamma * F0
    if A + G <= 0:
        raise ValueError("need h_p*FR + Gamma*F0 > 0")
    if start == "z+":
        return 0.0, 0.0, 0.5 * G / (A + G)
    if start == "x+":
        return 0.5 * A / (A + G), 0.0, 0.0
    raise ValueError(f"unknown start {start!r}")


def t2_gz_rate(Gamma: float, F0: float = F0_MHZ) -> float:
    """Transverse decay rate 2 pi Gamma F0 at zero drive."""
    return 2 * math.pi * Gamma * F0
