"""Least-squares extraction of decay rates and frequencies.

Models, per spin (magnetization divided by L):

    damped-cosine   (a + b exp(-c t) cos(2 pi f t)) / 2
    exponential     (a + b exp(-c t)) / 2
    sine-offset     A0 sin(Omega t + phi) exp(-c t) + m_inf      (c = 1/T_R)

The optimizer is a Levenberg-Marquardt loop with analytic Jacobians and
Marquardt diagonal scaling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("damped-cosine", "exponential", "sine-offset")
PARAM_NAMES = {
    "damped-cosine": ("a", "b", "c", "f"),
    "exponential": ("a", "b", "c"),
    "sine-offset": ("A0", "Omega", "phi", "c", "m_inf"),
}
RATE_INDEX = {"damped-cosine": 2, "exponential": 2, "sine-offset": 3}


class DegenerateWindowError(ValueError):
    pass


class DegenerateSweepError(ValueError):
    pass


@dataclass
class FitResult:
    kind: str
    params: dict[str, float]
    stderr: dict[str, float]
    residual_rms: float
    converged: bool
    n_iter: int = 0
    window: tuple[float, float] = (0.0, 0.0)
    low_confidence: bool = False

    @property
    def rate(self) -> float:
        return self.params["c"]

    @property
    def rate_stderr(self) -> float:
        return self.stderr["c"]

    def evaluate(self, t):
        p = np.array([self.params[n] for n in PARAM_NAMES[self.kind]])
        return model(self.kind, np.asarray(t, float), p)

    def to_record(self) -> str:
        lines = [f"kind {self.kind}"]
        for n in PARAM_NAMES[self.kind]:
            lines.append(f"param {n} {self.params[n]!r} {self.stderr[n]!r}")
        lines += [f"residual_rms {self.residual_rms!r}",
                  f"window {self.window[0]!r} {self.window[1]!r}",
                  f"converged {int(self.converged)}",
                  f"low_confidence {int(self.low_confidence)}",
                  f"n_iter {self.n_iter}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "FitResult":
        params, errs, kw = {}, {}, {}
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            key = parts[0]
            if key == "kind":
                kw["kind"] = parts[1]
            elif key == "param":
                params[parts[1]] = float(parts[2])
                errs[parts[1]] = float(parts[3])
            elif key == "residual_rms":
                kw["residual_rms"] = float(parts[1])
            elif key == "window":
                kw["window"] = (float(parts[1]), float(parts[2]))
            elif key in ("converged", "low_confidence"):
                kw[key] = bool(int(parts[1]))
            elif key == "n_iter":
                kw["n_iter"] = int(parts[1])
        return cls(params=params, stderr=errs, **kw)


def model(kind: str, t: np.ndarray, p: np.ndarray) -> np.ndarray:
    return _model_and_jac(kind, t, p, jac=False)[0]


def _model_and_jac(kind, t, p, jac=True):
    if kind == "damped-cosine":
        a, b, c, f = p
        e = np.exp(-c * t)
        cs = np.cos(2 * np.pi * f * t)
        y = 0.5 * (a + b * e * cs)
        if not jac:
            return y, None
        J = np.empty((len(t), 4))
        J[:, 0] = 0.5
        J[:, 1] = 0.5 * e * cs
        J[:, 2] = -0.5 * b * t * e * cs
        J[:, 3] = -0.5 * b * e * np.sin(2 * np.pi * f * t) * 2 * np.pi * t
        return y, J
    if kind == "exponential":
        a, b, c = p
        e = np.exp(-c * t)
        y = 0.5 * (a + b * e)
        if not jac:
            return y, None
        J = np.empty((len(t), 3))
        J[:, 0] = 0.5
        J[:, 1] = 0.5 * e
        J[:, 2] = -0.5 * b * t * e
        return y, J
    if kind == "sine-offset":
        A0, om, phi, c, m_inf = p
        e = np.exp(-c * t)
        s = np.sin(om * t + phi)
        y = A0 * s * e + m_inf
        if not jac:
            return y, None
        co = np.cos(om * t + phi)
        J = np.empty((len(t), 5))
        J[:, 0] = s * e
        J[:, 1] = A0 * co * t * e
        J[:, 2] = A0 * co * e
        J[:, 3] = -A0 * s * t * e
        J[:, 4] = 1.0
        return y, J
    raise ValueError(f"unknown model kind {kind!r}")


# ------------------------------------------------------------ initialization

def dominant_frequency(t: np.ndarray, y: np.ndarray, f_hint: float | None = None) -> float:
    """Peak of the zero-padded discrete spectrum of the mean-removed data,
    refined by parabolic interpolation.  With ``f_hint`` the peak is unfolded
    to the alias branch closest to the hint."""
    dt = float(np.median(np.diff(t)))
    n = len(y)
    nfft = 1 << int(math.ceil(math.log2(8 * n)))
    spec = np.abs(np.fft.rfft((y - y.mean()) * np.hanning(n), nfft))
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if 0 < k < len(spec) - 1:
        l, m, r = np.log(spec[k - 1:k + 2] + 1e-300)
        denom = l - 2 * m + r
        k = k + (0.5 * (l - r) / denom if denom != 0 else 0.0)
    f = k / (nfft * dt)
    if f_hint is not None and f_hint > 0:
        fs = 1.0 / dt
        cands = [abs(m * fs + s * f) for m in range(0, int(f_hint / fs) + 3) for s in (1, -1)]
        f = min(cands, key=lambda x: abs(x - f_hint))
    return f


def _log_envelope_rate(t, dev, period):
    """Decay rate from a line through log of the per-window maxima of |dev|."""
    if period is None or period <= 0:
        width = max(len(t) // 20, 1)
        edges = np.arange(0, len(t), width)
    else:
        dt = float(np.median(np.diff(t)))
        width = max(int(round(period / dt)), 1)
        edges = np.arange(0, len(t), width)
    tt, ee = [], []
    for s in edges:
        seg = np.abs(dev[s:s + width])
        if len(seg) == 0:
            continue
        i = int(np.argmax(seg))
        if seg[i] > 0:
            tt.append(t[s + i])
            ee.append(seg[i])
    tt, ee = np.array(tt), np.array(ee)
    if len(tt) < 2:
        return 1.0 / max(t[-1] - t[0], 1e-12)
    # ignore the noise floor once the envelope has collapsed
    keep = ee > 0.05 * ee[0]
    if keep.sum() >= 2:
        tt, ee = tt[keep], ee[keep]
    slope = np.polyfit(tt, np.log(ee), 1)[0]
    return max(-slope, 0.0)


def initial_guess(kind: str, t: np.ndarray, y: np.ndarray, f_hint: float | None = None) -> np.ndarray:
    span = t[-1] - t[0]
    if kind == "exponential":
        tail = y[-max(len(y) // 10, 1):].mean()
        c = _log_envelope_rate(t, y - tail, None)
        c = c if c > 0 else 1.0 / span
        a = 2 * tail
        b = 2 * y[0] - a
        # shift so the exponential is anchored at the window start
        return np.array([a, b * math.exp(c * t[0]), c])
    f = dominant_frequency(t, y, f_hint)
    mean = y.mean()
    c = _log_envelope_rate(t, y - mean, 1.0 / f if f > 0 else None)
    if kind == "damped-cosine":
        a = 2 * mean
        b = 2 * y[0] - a
        if t[0] != 0:
            # amplitude referenced to t = 0 through the estimated envelope
            b = 2 * np.max(np.abs(y[: max(int(1 / (f * (t[1] - t[0]))), 2)] - mean)) * math.exp(c * t[0])
        return np.array([a, b, c, f])
    # sine-offset
    amp = np.max(np.abs(y - mean))
    om = 2 * np.pi * f
    phi = math.atan2(y[0] - mean, 0.0) if amp > 0 else 0.0
    return np.array([amp, om, phi, c, mean])


# ------------------------------------------------------------ optimizer

def _project(kind, p):
    i = RATE_INDEX[kind]
    if p[i] < 0:
        p[i] = 0.0
    if kind == "damped-cosine":
        p[3] = abs(p[3])
    elif kind == "sine-offset" and p[1] < 0:
        p[1], p[2] = -p[1], math.pi - p[2]
    return p


def levenberg_marquardt(kind, t, y, p0, max_iter=200, rtol=1e-9):
    p = _project(kind, np.array(p0, float))
    f, J = _model_and_jac(kind, t, p)
    r = y - f
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        JtJ = J.T @ J
        g = J.T @ r
        d = np.diag(JtJ).copy()
        d[d == 0] = 1.0
        improved = False
        for _ in range(40):
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = _project(kind, p + step)
            f_new, J_new = _model_and_jac(kind, t, p_new)
            r_new = y - f_new
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                improved = True
                break
            lam *= 4
        if not improved:
            converged = True  # no descent direction left at machine precision
            break
        rel = np.max(np.abs(p_new - p) / np.maximum(np.abs(p_new), 1e-300))
        p, f, J, r, cost = p_new, f_new, J_new, r_new, cost_new
        lam = max(lam / 3, 1e-12)
        if rel < rtol:
            converged = True
            break
    return p, J, r, converged, it


def fit(t, y, kind: str = "damped-cosine", t_window: tuple[float, float] | None = None,
        f_hint: float | None = None, p0=None, max_iter: int = 200) -> FitResult:
    """Fit ``kind`` to samples ``y(t)`` inside ``t_window`` (whole trace by default)."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t_window is not None:
        sel = (t >= t_window[0]) & (t <= t_window[1])
        t, y = t[sel], y[sel]
    npar = len(PARAM_NAMES[kind])
    if len(t) < max(8, npar + 1):
        raise DegenerateWindowError(f"{len(t)} samples in window; need at least 8")
    guess = initial_guess(kind, t, y, f_hint) if p0 is None else np.asarray(p0, float)
    p, J, r, converged, it = levenberg_marquardt(kind, t, y, guess, max_iter=max_iter)
    n = len(t)
    ssr = float(r @ r)
    try:
        cov = np.linalg.inv(J.T @ J) * (ssr / max(n - npar, 1))
        err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        err = np.full(npar, np.inf)
    names = PARAM_NAMES[kind]
    low = False
    if kind == "damped-cosine":
        low = p[3] * (t[-1] - t[0]) < 2
    elif kind == "sine-offset":
        low = p[1] / (2 * np.pi) * (t[-1] - t[0]) < 2
    return FitResult(kind, {k: float(v) for k, v in zip(names, p)},
                     {k: float(v) for k, v in zip(names, err)},
                     math.sqrt(ssr / n), converged, it, (float(t[0]), float(t[-1])), bool(low))


def fit_trace(trace, kind: str = "damped-cosine", component: str | None = None,
              n_spins: int = 1, **kw) -> FitResult:
    """Fit a Trace after dividing the chosen magnetization by ``n_spins``."""
    if component is None:
        component = "mx" if kind == "exponential" else "mz"
    return fit(trace.times, trace.component(component) / n_spins, kind, **kw)


@dataclass
class RateSweep:
    h_p: np.ndarray
    rates: np.ndarray
    stderr: np.ndarray
    fits: list[FitResult] = field(repr=False)
    slope: float = math.nan
    intercept: float = math.nan
    slope_stderr: float = math.nan
    intercept_stderr: float = math.nan
    r_squared: float = math.nan


def linear_rate_fit(h_p, rates, stderr=None):
    """Weighted straight line through (h_p, rate); returns slope, intercept,
    their standard errors and the (unweighted) coefficient of determination."""
    x = np.asarray(h_p, float)
    y = np.asarray(rates, float)
    if len(x) < 2:
        raise DegenerateSweepError("need at least two amplitudes for a rate sweep")
    w = np.ones_like(y)
    if stderr is not None:
        s = np.asarray(stderr, float)
        if np.all(np.isfinite(s)) and np.all(s > 0):
            w = 1.0 / s**2
    X = np.stack([x, np.ones_like(x)], axis=1)
    A = X.T @ (w[:, None] * X)
    beta = np.linalg.solve(A, X.T @ (w * y))
    resid = y - X @ beta
    dof = len(x) - 2
    if dof > 0:
        chi2 = float(np.sum(w * resid**2)) / dof
        cov = np.linalg.inv(A) * chi2
        se = np.sqrt(np.diag(cov))
    else:
        se = np.array([math.nan, math.nan])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(beta[0]), float(beta[1]), float(se[0]), float(se[1]), r2


def sweep_rates(traces: dict, n_spins: int = 1, FR: float = 55.96, **fit_kw) -> RateSweep:
    """Damped-cosine fit per amplitude plus a weighted line c_R(h_p).

    ``traces`` maps h_p to a Trace (longitudinal magnetization).
    """
    if len(traces) < 2:
        raise DegenerateSweepError("need at least two amplitudes for a rate sweep")
    hps = sorted(traces)
    fits = [fit_trace(traces[h], "damped-cosine", "mz", n_spins, f_hint=h * FR, **fit_kw) for h in hps]
    rates = np.array([f.rate for f in fits])
    errs = np.array([f.rate_stderr for f in fits])
    slope, icpt, s_se, i_se, r2 = linear_rate_fit(hps, rates, errs)
    return RateSweep(np.array(hps, float), rates, errs, fits, slope, icpt, s_se, i_se, r2)
