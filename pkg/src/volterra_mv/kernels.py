"""Volterra kernels on the triangle 0 <= s <= t <= T.

Kernel variants are frozen dataclasses.  All of them share a small protocol:

``value(s, t)``
    vectorized evaluation without domain checks,
``singular_exponent``
    the ``a >= 0`` with ``K(s, t) ~ (t - s)**-a`` as ``s -> t``,
``power_integral(u0, u1, q)`` / ``signed_integral(u0, u1)``
    closed forms of the integrals of ``|K|**q`` resp. ``K`` over
    ``s in [t - u1, t - u0]`` for convolution kernels, or ``None``.

The public operations (:func:`evaluate`, :func:`integrate_abs_power`,
:func:`integrate_increment`, :func:`certify`) work on any variant.
"""

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate as _integrate
from scipy import special

from .errors import DivergenceError, DomainError

__all__ = [
    "Constant",
    "Fractional",
    "Gamma",
    "ExpSum",
    "LipschitzConvolution",
    "Tabulated",
    "QuadratureConfig",
    "KernelCertificate",
    "evaluate",
    "integrate",
    "integrate_abs_power",
    "integrate_increment",
    "interval_integrals",
    "default_pair_grid",
    "default_gamma_grid",
    "certify",
    "certify_role",
    "kernel_from_dict",
]


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-10
    max_subdivisions: int = 200
    substitution: bool = True

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")


class _Kernel:
    kind = "abstract"
    convolution = True
    singular_exponent = 0.0
    horizon = math.inf

    def value(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return self.lag_value(t - s)

    def lag_value(self, u):
        raise NotImplementedError

    def power_integral(self, u0, u1, q):
        return None

    def signed_integral(self, u0, u1):
        return None

    def to_dict(self):
        d = {"kind": self.kind}
        d.update(asdict(self))
        return d


@dataclass(frozen=True)
class Constant(_Kernel):
    c: float = 1.0
    kind = "constant"

    def lag_value(self, u):
        return np.full(np.shape(u), float(self.c))

    def power_integral(self, u0, u1, q):
        return abs(self.c) ** q * (np.asarray(u1, dtype=float) - u0)

    def signed_integral(self, u0, u1):
        return self.c * (np.asarray(u1, dtype=float) - u0)


@dataclass(frozen=True)
class Fractional(_Kernel):
    """Riemann-Liouville kernel ``c (t - s)**-alpha``."""

    c: float = 1.0
    alpha: float = 0.25
    kind = "fractional"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError(f"Fractional kernel needs alpha in (0,1), got {self.alpha}")

    @property
    def singular_exponent(self):
        return self.alpha

    def lag_value(self, u):
        with np.errstate(divide="ignore"):
            return self.c * np.asarray(u, dtype=float) ** -self.alpha

    def _power_antiderivative(self, u0, u1, e):
        # integral of u**-e over [u0, u1]
        u0 = np.asarray(u0, dtype=float)
        u1 = np.asarray(u1, dtype=float)
        if e == 1.0:
            with np.errstate(divide="ignore"):
                return np.log(u1) - np.log(u0)
        k = 1.0 - e
        with np.errstate(divide="ignore"):
            return (u1**k - u0**k) / k

    def power_integral(self, u0, u1, q):
        e = self.alpha * q
        if e >= 1.0 and np.any(np.asarray(u0) == 0):
            raise DivergenceError(f"integral of |K|^{q} diverges at the diagonal (1 - alpha*q = {1 - e:g} <= 0)")
        return abs(self.c) ** q * self._power_antiderivative(u0, u1, e)

    def signed_integral(self, u0, u1):
        return self.c * self._power_antiderivative(u0, u1, self.alpha)


@dataclass(frozen=True)
class Gamma(_Kernel):
    """Gamma kernel ``scale * exp(-beta u) u**(alpha - 1)`` with ``u = t - s``.

    ``scale=None`` selects the usual ``1 / Gamma(alpha)`` normalisation.
    """

    alpha: float = 0.75
    beta: float = 1.0
    scale: float = None
    kind = "gamma"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError(f"Gamma kernel needs alpha in (0,1), got {self.alpha}")
        if self.beta < 0:
            raise DomainError("Gamma kernel needs beta >= 0")

    @property
    def factor(self):
        return 1.0 / special.gamma(self.alpha) if self.scale is None else float(self.scale)

    @property
    def singular_exponent(self):
        return 1.0 - self.alpha

    def lag_value(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return self.factor * np.exp(-self.beta * u) * u ** (self.alpha - 1.0)

    def _integral(self, u0, u1, q):
        # integral over [u0, u1] of exp(-beta q u) u**(q(alpha-1))
        nu = q * (self.alpha - 1.0) + 1.0
        u0 = np.asarray(u0, dtype=float)
        u1 = np.asarray(u1, dtype=float)
        if nu <= 0:
            if np.any(u0 == 0):
                raise DivergenceError(f"integral of |K|^{q} diverges at the diagonal (exponent {nu - 1:g})")
            return None
        if self.beta == 0:
            return (u1**nu - u0**nu) / nu
        rate = self.beta * q
        full = special.gamma(nu) / rate**nu
        return full * (special.gammainc(nu, rate * u1) - special.gammainc(nu, rate * u0))

    def power_integral(self, u0, u1, q):
        r = self._integral(u0, u1, q)
        return None if r is None else abs(self.factor) ** q * r

    def signed_integral(self, u0, u1):
        r = self._integral(u0, u1, 1.0)
        return None if r is None else self.factor * r


@dataclass(frozen=True)
class ExpSum(_Kernel):
    """Finite sum of exponentials ``sum_i c_i exp(-theta_i (t - s))``."""

    terms: tuple = ((1.0, 1.0),)
    kind = "expsum"

    def __post_init__(self):
        terms = tuple((float(c), float(th)) for c, th in self.terms)
        if not terms:
            raise DomainError("ExpSum needs at least one term")
        if any(c <= 0 for c, _ in terms):
            raise DomainError("ExpSum needs all c_i > 0")
        if any(th < 0 for _, th in terms):
            raise DomainError("ExpSum needs all theta_i >= 0")
        object.__setattr__(self, "terms", terms)

    def lag_value(self, u):
        u = np.asarray(u, dtype=float)
        return sum(c * np.exp(-th * u) for c, th in self.terms)

    @staticmethod
    def _exp_integral(rate, u0, u1):
        u0 = np.asarray(u0, dtype=float)
        u1 = np.asarray(u1, dtype=float)
        if rate == 0:
            return u1 - u0
        return (np.exp(-rate * u0) - np.exp(-rate * u1)) / rate

    def signed_integral(self, u0, u1):
        return sum(c * self._exp_integral(th, u0, u1) for c, th in self.terms)

    def power_integral(self, u0, u1, q):
        if q == 1:
            return self.signed_integral(u0, u1)
        if q == 2:
            return sum(
                ci * cj * self._exp_integral(ti + tj, u0, u1)
                for ci, ti in self.terms
                for cj, tj in self.terms
            )
        return None

    def to_dict(self):
        return {"kind": self.kind, "terms": [list(t) for t in self.terms]}


@dataclass(frozen=True)
class LipschitzConvolution(_Kernel):
    """``K(s, t) = k(t - s)`` with ``k`` sampled on a uniform grid of ``[0, horizon]``.

    Linear interpolation between samples; the declared Lipschitz bound is
    checked against the table.
    """

    values: tuple = (1.0, 1.0)
    horizon: float = 1.0
    lipschitz: float = None
    kind = "lipschitz"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2 or not np.all(np.isfinite(vals)):
            raise DomainError("LipschitzConvolution needs >= 2 finite samples")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        slope = np.max(np.abs(np.diff(vals))) * (vals.size - 1) / self.horizon
        if self.lipschitz is None:
            object.__setattr__(self, "lipschitz", float(slope))
        elif slope > self.lipschitz * (1 + 1e-12):
            raise DomainError(f"table slope {slope:g} exceeds declared Lipschitz bound {self.lipschitz:g}")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))

    def lag_value(self, u):
        grid = np.linspace(0.0, self.horizon, len(self.values))
        return np.interp(u, grid, np.asarray(self.values))

    def to_dict(self):
        return {"kind": self.kind, "values": list(self.values), "horizon": self.horizon, "lipschitz": self.lipschitz}


@dataclass(frozen=True)
class Tabulated(_Kernel):
    """Kernel given by samples ``table[i, j] = K(times[i], times[j])`` for ``i <= j``.

    Entries with ``i > j`` are ignored.  For fixed column ``t_j`` the kernel
    is linear in ``s`` between samples and constant (diagonal value) beyond
    ``t_j``; between columns it is linear in ``t``.
    """

    times: tuple = (0.0, 1.0)
    table: tuple = ((1.0, 1.0), (1.0, 1.0))
    kind = "tabulated"
    convolution = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        table = np.asarray(self.table, dtype=float)
        if times.ndim != 1 or times.size < 2 or times[0] != 0 or np.any(np.diff(times) <= 0):
            raise DomainError("Tabulated times must start at 0 and be strictly increasing")
        if table.shape != (times.size, times.size):
            raise DomainError("Tabulated table must be square over the time grid")
        if not np.all(np.isfinite(np.triu(table))):
            raise DomainError("Tabulated table must be finite on the triangle")
        object.__setattr__(self, "times", tuple(times.tolist()))
        object.__setattr__(self, "table", tuple(tuple(r) for r in np.triu(table).tolist()))

    @property
    def horizon(self):
        return self.times[-1]

    def value(self, s, t):
        times = np.asarray(self.times)
        table = np.asarray(self.table)
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        j = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
        lam = (t - times[j]) / (times[j + 1] - times[j])

        def column(jj):
            # linear in s up to the diagonal sample, constant beyond it
            sc = np.minimum(s, times[jj])
            i = np.clip(np.searchsorted(times, sc, side="right") - 1, 0, times.size - 2)
            i = np.minimum(i, np.maximum(jj - 1, 0))
            w = np.where(jj > 0, (sc - times[i]) / (times[i + 1] - times[i]), 0.0)
            w = np.clip(w, 0.0, 1.0)
            return (1 - w) * table[i, jj] + w * table[np.minimum(i + 1, jj), jj]

        return (1 - lam) * column(j) + lam * column(j + 1)

    def to_dict(self):
        return {"kind": self.kind, "times": list(self.times), "table": [list(r) for r in self.table]}


_KINDS = {
    "constant": Constant,
    "fractional": Fractional,
    "gamma": Gamma,
    "expsum": ExpSum,
    "lipschitz": LipschitzConvolution,
    "tabulated": Tabulated,
}


def kernel_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise DomainError(f"unknown kernel kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls = _KINDS[kind]
    if cls is ExpSum and "terms" in d:
        d["terms"] = tuple(tuple(t) for t in d["terms"])
    if cls is LipschitzConvolution and "values" in d:
        d["values"] = tuple(d["values"])
    if cls is Tabulated:
        d["times"] = tuple(d.get("times", ()))
        d["table"] = tuple(tuple(r) for r in d.get("table", ()))
    try:
        return cls(**d)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {kind} kernel: {exc}") from None


def _check_horizon(kernel, horizon):
    return kernel.horizon if horizon is None else horizon


def evaluate(kernel, s, t, horizon=None):
    """Return ``K(s, t)`` for ``0 <= s < t <= T``."""
    T = _check_horizon(kernel, horizon)
    if not (0 <= s < t <= T):
        raise DomainError(f"kernel evaluation needs 0 <= s < t <= T, got s={s}, t={t}, T={T}")
    return float(kernel.value(s, t))


# -- quadrature ---------------------------------------------------------------

def _quad(fun, lo, hi, cfg, singular_weight=None):
    """scipy QUADPACK wrapper; ``singular_weight=e`` integrates ``fun(u) * u**-e``."""
    if hi <= lo:
        return 0.0, True
    kwargs = dict(epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_subdivisions)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", _integrate.IntegrationWarning)
        if singular_weight:
            val, _ = _integrate.quad(fun, lo, hi, weight="alg", wvar=(-singular_weight, 0.0), **kwargs)
        else:
            val, _ = _integrate.quad(fun, lo, hi, **kwargs)
    ok = not any(issubclass(w.category, _integrate.IntegrationWarning) for w in caught)
    return val, ok


def _geometric_breaks(lo, hi, scale):
    """Breakpoints lo < lo+scale*2^k < hi used to resolve a near-singularity at lo."""
    pts = [lo]
    width = scale
    while lo + width < hi:
        pts.append(lo + width)
        width *= 4.0
    pts.append(hi)
    return pts


def _at_lag(kernel, t, u):
    """``K(t - u, t)`` evaluated without forming ``t - u`` for convolution kernels."""
    if kernel.convolution:
        return float(kernel.lag_value(u))
    return float(kernel.value(t - u, t))


def _abs_power_quad(kernel, a, b, t, q, cfg):
    """Quadrature of ``|K(s,t)|**q`` over ``[a, b]`` in the lag variable ``u = t - s``."""
    u0, u1 = t - b, t - a
    e = kernel.singular_exponent * q
    if u0 == 0 and e > 0 and cfg.substitution:
        # peel the algebraic singularity off into the quadrature weight
        head = min(u1, max(u1 * 1e-3, 1e-12))

        def fun_head(u):
            u = max(u, 1e-300)
            return abs(_at_lag(kernel, t, u)) ** q * u**e

        v1, ok1 = _quad(fun_head, 0.0, head, cfg, singular_weight=e)
        v2, ok2 = _quad(lambda u: abs(_at_lag(kernel, t, u)) ** q, head, u1, cfg)
        return v1 + v2, ok1 and ok2
    pts = _geometric_breaks(u0, u1, max((u1 - u0) * 1e-6, 1e-14)) if u0 == 0 else [u0, u1]
    total, ok = 0.0, True
    for lo, hi in zip(pts[:-1], pts[1:]):
        v, good = _quad(lambda u: abs(_at_lag(kernel, t, u)) ** q, lo, hi, cfg)
        total += v
        ok = ok and good
    return total, ok


def integrate_abs_power(kernel, a, b, t, q, cfg=None):
    """Return the integral of ``|K(s, t)|**q`` over ``s in [a, b]``."""
    cfg = cfg or QuadratureConfig()
    if not (0 <= a <= b <= t) or t > kernel.horizon:
        raise DomainError(f"need 0 <= a <= b <= t <= T, got a={a}, b={b}, t={t}")
    if q < 1:
        raise DomainError(f"q must be >= 1, got {q}")
    if a == b:
        return 0.0
    exponent_diverges = b == t and kernel.singular_exponent * q >= 1.0
    if exponent_diverges:
        raise DivergenceError(
            f"{kernel.kind} kernel: |K(s,t)|^{q:g} not integrable at s = t "
            f"(1 - a*q = {1 - kernel.singular_exponent * q:g} <= 0)"
        )
    if kernel.convolution:
        closed = kernel.power_integral(t - b, t - a, q)
        if closed is not None:
            return float(closed)
    val, ok = _abs_power_quad(kernel, a, b, t, q, cfg)
    if not ok and not np.isfinite(val):
        raise DivergenceError(f"adaptive quadrature of |K|^{q:g} on [{a}, {b}] failed to converge")
    return float(val)


def integrate(kernel, a, b, t, cfg=None):
    """Signed integral of ``K(s, t)`` over ``s in [a, b]``."""
    cfg = cfg or QuadratureConfig()
    if not (0 <= a <= b <= t):
        raise DomainError(f"need 0 <= a <= b <= t, got a={a}, b={b}, t={t}")
    if a == b:
        return 0.0
    if b == t and kernel.singular_exponent >= 1.0:
        raise DivergenceError("kernel not integrable at the diagonal")
    if kernel.convolution:
        closed = kernel.signed_integral(t - b, t - a)
        if closed is not None:
            return float(closed)
    u0, u1 = t - b, t - a
    e = kernel.singular_exponent if (u0 == 0 and cfg.substitution) else 0.0

    def fun(u):
        u = max(u, 1e-300)
        return _at_lag(kernel, t, u) * u**e

    val, _ = _quad(fun, u0, u1, cfg, singular_weight=e or None)
    return float(val)


def integrate_increment(kernel, t, t_prime, q, cfg=None):
    """Return the integral of ``|K(s, t') - K(s, t)|**q`` over ``s in [0, t]``."""
    cfg = cfg or QuadratureConfig()
    if not (0 <= t <= t_prime) or t_prime > kernel.horizon:
        raise DomainError(f"need 0 <= t <= t' <= T, got t={t}, t'={t_prime}")
    if q < 1:
        raise DomainError(f"q must be >= 1, got {q}")
    if t == t_prime or t == 0:
        return 0.0
    e = kernel.singular_exponent * q
    if e >= 1.0:
        raise DivergenceError(
            f"{kernel.kind} kernel: increment integral of order {q:g} diverges at s = t "
            f"(1 - a*q = {1 - e:g} <= 0)"
        )
    h = t_prime - t

    def diff(u):
        return abs(_at_lag(kernel, t_prime, u + h) - _at_lag(kernel, t, u)) ** q

    total, ok = 0.0, True
    head = min(t, h)
    if e > 0 and cfg.substitution:
        def fun_head(u):
            u = max(u, 1e-300)
            return diff(u) * u**e

        v, good = _quad(fun_head, 0.0, head, cfg, singular_weight=e)
    else:
        v, good = _quad(diff, 0.0, head, cfg)
    total += v
    ok = ok and good
    if head < t:
        pts = _geometric_breaks(head, t, head)
        for lo, hi in zip(pts[:-1], pts[1:]):
            v, good = _quad(diff, lo, hi, cfg)
            total += v
            ok = ok and good
    if not np.isfinite(total):
        raise DivergenceError("increment integral failed to converge")
    return float(total)


# -- weight tables for the particle solver ------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _gauss_legendre(fun, lo, hi):
    """Fixed-order Gauss-Legendre on each row of ``lo``/``hi`` arrays."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    s = mid[..., None] + half[..., None] * _GL_NODES
    return half * np.sum(fun(s) * _GL_WEIGHTS, axis=-1)


def interval_integrals(kernel, times, power, cfg=None):
    """Table ``W[i, j] = int_{t_i}^{t_{i+1}} K(s, t_j)**power ds`` for ``j > i``.

    ``power`` is 1 (signed) or 2.  Entries with ``j <= i`` are zero.
    """
    cfg = cfg or QuadratureConfig()
    times = np.asarray(times, dtype=float)
    M = times.size - 1
    W = np.zeros((M, M + 1))
    ii, jj = np.nonzero(np.arange(M)[:, None] < np.arange(M + 1)[None, :])
    dt = np.diff(times)
    if isinstance(kernel, Constant):
        W[ii, jj] = (kernel.c if power == 1 else kernel.c**2) * dt[ii]
        return W
    if kernel.convolution:
        u0 = times[jj] - times[ii + 1]
        u1 = times[jj] - times[ii]
        closed = kernel.signed_integral(u0, u1) if power == 1 else kernel.power_integral(u0, u1, power)
        if closed is not None:
            W[ii, jj] = closed
            return W
    # smooth part by Gauss-Legendre, touching-diagonal cells by adaptive quadrature
    off = jj > ii + 1
    io, jo = ii[off], jj[off]
    tj = times[jo]
    W[io, jo] = _gauss_legendre(lambda s: kernel.value(s, tj[:, None]) ** power, times[io], times[io + 1])
    for i in range(M):
        if power == 1:
            W[i, i + 1] = integrate(kernel, times[i], times[i + 1], times[i + 1], cfg)
        else:
            W[i, i + 1] = integrate_abs_power(kernel, times[i], times[i + 1], times[i + 1], power, cfg)
    return W


# -- certification ------------------------------------------------------------

@dataclass
class KernelCertificate:
    role: str
    eta: float
    verdict: str
    gamma: float = None
    epsilon: float = None
    L: float = None
    p_min: float = None
    grid: list = field(default_factory=list)
    worst_residual: float = None
    blowup_factor: float = 10.0
    slope_tolerance: float = 0.01
    reasons: list = field(default_factory=list)
    kernel: dict = None

    @property
    def certified(self):
        return self.verdict == "certified"

    def to_dict(self, version=None):
        d = asdict(self)
        d["grid"] = [list(p) for p in self.grid]
        if version is not None:
            d["tool_version"] = version
        d["grid_hash"] = hashlib.sha256(json.dumps(d["grid"]).encode()).hexdigest()
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k not in ("tool_version", "grid_hash")}
        d["grid"] = [tuple(p) for p in d.get("grid", [])]
        return cls(**d)


def default_gamma_grid():
    return sorted({1.0 / k for k in range(2, 49)} | {0.4, 0.3, 0.2, 0.15, 0.1, 0.05}, reverse=True)


def default_pair_grid(T=1.0, finest=14):
    """Dyadic gaps ``T 2**-k``, k = 0..finest, each anchored at several t."""
    pairs = []
    for k in range(finest + 1):
        h = T * 2.0**-k
        anchors = {0.0, 0.25 * T, 0.5 * T, T - h}
        for t in sorted(anchors):
            if t >= 0 and t + h <= T * (1 + 1e-15):
                pairs.append((t, min(t + h, T)))
    return pairs


def p_min_for(gamma, epsilon, eta):
    return max((2 * eta + 1) / gamma, (4 + 2 * epsilon) / epsilon)


def _increment_sums(kernel, q_total, pairs, cfg):
    out = np.empty(len(pairs))
    for k, (t, tp) in enumerate(pairs):
        out[k] = integrate_increment(kernel, t, tp, q_total, cfg) + integrate_abs_power(kernel, t, tp, tp, q_total, cfg)
    return out


def _bounded_ratio(gaps, ratio, factor, slope_tol):
    """Return (passes, reason): uniform boundedness of ratio as the gap shrinks."""
    order = np.argsort(gaps)
    n_dec = max(1, len(gaps) // 10)
    small = np.median(ratio[order[:n_dec]])
    med = np.median(ratio)
    if med > 0 and small > factor * med:
        return False, f"smallest-gap decile ratio {small:.3g} exceeds {factor:g} x median {med:.3g}"
    ug = np.unique(gaps)
    per_gap = np.array([ratio[gaps == g].max() for g in ug])
    half = ug <= np.median(ug)
    if half.sum() >= 3 and np.all(per_gap[half] > 0):
        slope = np.polyfit(np.log(ug[half]), np.log(per_gap[half]), 1)[0]
        if slope < -slope_tol:
            return False, f"ratio grows as gap -> 0 (log-log slope {slope:.4f} < -{slope_tol:g})"
    return True, ""


def certify_role(kernel, role, eta, epsilon_grid, gamma_grid, pair_grid=None, cfg=None,
                 blowup_factor=10.0, slope_tolerance=0.01):
    """Certify one kernel in the ``"drift"`` (q = 1) or ``"diffusion"`` (q = 2) role."""
    if role not in ("drift", "diffusion"):
        raise DomainError(f"role must be 'drift' or 'diffusion', got {role!r}")
    if not epsilon_grid or not gamma_grid:
        raise DomainError("epsilon_grid and gamma_grid must be non-empty")
    if any(not 0 < g <= 0.5 for g in gamma_grid):
        raise DomainError("gamma_grid must lie in (0, 1/2]")
    if any(e <= 0 for e in epsilon_grid):
        raise DomainError("epsilon_grid entries must be positive")
    cfg = cfg or QuadratureConfig()
    T = kernel.horizon if np.isfinite(kernel.horizon) else 1.0
    pairs = list(pair_grid) if pair_grid is not None else default_pair_grid(T)
    gaps = np.array([tp - t for t, tp in pairs])
    if np.any(gaps <= 0):
        raise DomainError("pair_grid must contain pairs with t < t'")
    q = 1.0 if role == "drift" else 2.0
    cert = KernelCertificate(role=role, eta=eta, verdict="rejected", grid=pairs,
                             blowup_factor=blowup_factor, slope_tolerance=slope_tolerance,
                             kernel=kernel.to_dict())
    sums = {}
    for eps in sorted(set(epsilon_grid)):
        try:
            sums[eps] = _increment_sums(kernel, q + eps, pairs, cfg)
        except DivergenceError as exc:
            cert.reasons.append(f"epsilon={eps:g}: {exc}")
    for gamma in sorted(set(gamma_grid), reverse=True):
        for eps in sorted(sums):
            s = sums[eps]
            ratio = s / gaps ** (gamma * (q + eps))
            ok, why = _bounded_ratio(gaps, ratio, blowup_factor, slope_tolerance)
            if not ok:
                continue
            L = float(ratio.max())
            cert.verdict = "certified"
            cert.gamma, cert.epsilon, cert.L = float(gamma), float(eps), L
            cert.p_min = p_min_for(gamma, eps, eta)
            cert.worst_residual = float(np.max(s - L * gaps ** (gamma * (q + eps))))
            return cert
    if sums:
        cert.reasons.append("no (gamma, epsilon) candidate gives a bounded ratio over the pair grid")
    return cert


def certify(kernel_b, kernel_sigma, eta, epsilon_grid, gamma_grid, pair_grid=None, cfg=None, **kw):
    """Certify a drift/diffusion kernel pair; returns ``(drift_cert, diffusion_cert)``."""
    return (
        certify_role(kernel_b, "drift", eta, epsilon_grid, gamma_grid, pair_grid, cfg, **kw),
        certify_role(kernel_sigma, "diffusion", eta, epsilon_grid, gamma_grid, pair_grid, cfg, **kw),
    )
