"""Law-dependent coefficient pairs (b, sigma) and numerical checks of their growth and continuity.

Coefficients are vectorized over particles: ``drift(t, x, mu)`` takes
``x`` of shape ``(N, d)`` and returns ``(N, d)``; ``diffusion`` returns
``(N, d, m)``.  ``mu`` is the :class:`~volterra_mv.measures.EmpiricalMeasure`
standing in for the law of the state.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DomainError, NonFiniteOutput
from .measures import EmpiricalMeasure, moment


@dataclass(frozen=True)
class CoefficientModel:
    drift: object
    diffusion: object
    d: int = 1
    m: int = 1
    eta: float = 2.0
    growth_constant: float = 1.0
    label: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.growth_constant <= 0:
            raise DomainError("declared growth constant must be positive")
        if self.eta < 1:
            raise DomainError("eta must be >= 1")

    def with_drift_scale(self, factor):
        """Copy of the model with the drift multiplied by ``factor``."""
        base = self.drift

        def drift(t, x, mu):
            return factor * base(t, x, mu)

        return CoefficientModel(drift, self.diffusion, self.d, self.m, self.eta,
                                self.growth_constant * max(1.0, abs(factor)),
                                f"{self.label}*drift{factor:g}", dict(self.params))

    def describe(self):
        return {"name": self.label, "params": dict(self.params), "d": self.d, "m": self.m, "eta": self.eta}


def _batch(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    return np.reshape(x, (1, d)) if single else x, single


def eval_drift(model, t, x, mu):
    x2, single = _batch(x, model.d)
    out = np.asarray(model.drift(t, x2, mu), dtype=float)
    if out.shape != (x2.shape[0], model.d):
        raise DomainError(f"drift returned shape {out.shape}, expected {(x2.shape[0], model.d)}")
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0][0]
        raise NonFiniteOutput(f"drift not finite at t={t}, x={x2[bad]}", t, x2[bad])
    return out[0] if single else out


def eval_diffusion(model, t, x, mu):
    x2, single = _batch(x, model.d)
    out = np.asarray(model.diffusion(t, x2, mu), dtype=float)
    if out.shape != (x2.shape[0], model.d, model.m):
        raise DomainError(f"diffusion returned shape {out.shape}, expected {(x2.shape[0], model.d, model.m)}")
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0][0]
        raise NonFiniteOutput(f"diffusion not finite at t={t}, x={x2[bad]}", t, x2[bad])
    return out[0] if single else out


# -- catalog ------------------------------------------------------------------

def pure_noise(sigma=1.0, d=1, eta=2.0):
    """``b = 0``, ``sigma = sigma * I``."""
    eye = np.eye(d)

    def drift(t, x, mu):
        return np.zeros_like(x)

    def diffusion(t, x, mu):
        return np.broadcast_to(sigma * eye, (x.shape[0], d, d)).copy()

    C = float(max(abs(sigma) * np.sqrt(d), 1e-12))
    return CoefficientModel(drift, diffusion, d, d, eta, C, "pure_noise", {"sigma": sigma})


def mean_field_ou(theta=1.0, sigma0=1.0, d=1, eta=2.0):
    """``b = -theta (x - mean(mu))``, ``sigma = sigma0 * I``."""
    eye = np.eye(d)

    def drift(t, x, mu):
        return -theta * (x - mu.mean)

    def diffusion(t, x, mu):
        return np.broadcast_to(sigma0 * eye, (x.shape[0], d, d)).copy()

    C = float(max(abs(theta), abs(sigma0) * np.sqrt(d)))
    return CoefficientModel(drift, diffusion, d, d, eta, C, "mean_field_ou", {"theta": theta, "sigma0": sigma0})


def scalar_interaction(beta=-0.5, a=1.0, b=0.0, truncation=10.0, d=1, eta=2.0):
    """``b = beta (x - mean(mu))``, ``sigma = (a + b min(|x|, truncation)) I``."""
    eye = np.eye(d)

    def drift(t, x, mu):
        return beta * (x - mu.mean)

    def diffusion(t, x, mu):
        r = np.minimum(np.linalg.norm(x, axis=1), truncation)
        return (a + b * r)[:, None, None] * eye

    C = float(max(abs(a) * np.sqrt(d), abs(beta) + abs(b) * np.sqrt(d)))
    return CoefficientModel(drift, diffusion, d, d, eta, C, "scalar_interaction",
                            {"beta": beta, "a": a, "b": b, "truncation": truncation})


CATALOG = {
    "pure_noise": pure_noise,
    "mean_field_ou": mean_field_ou,
    "scalar_interaction": scalar_interaction,
}


def from_catalog(name, params=None, d=1, eta=2.0):
    if name not in CATALOG:
        raise DomainError(f"unknown model {name!r}; catalog has {sorted(CATALOG)}")
    try:
        return CATALOG[name](**(params or {}), d=d, eta=eta)
    except TypeError as exc:
        raise DomainError(f"bad parameters for model {name!r}: {exc}") from None


# -- assumption checks --------------------------------------------------------

def _sample_ball(n, d, radius, seed, slot, multiscale=False, floor=1e-8):
    u = rng.uniforms(seed, rng.SAMPLING, np.arange(n), slot, 0, d + 2)
    z = rng.normals(seed, rng.SAMPLING, np.arange(n), slot, 1, d)
    direction = z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-300)
    if multiscale:
        # log-uniform radii resolve behaviour near the origin
        r = np.exp(np.log(floor) + u[:, 0] * (np.log(radius) - np.log(floor)))
    else:
        r = radius * u[:, 0] ** (1.0 / d)
    return direction * r[:, None], u[:, 1]


def _coefficient_norm(model, t, x, mu):
    b = eval_drift(model, t, x, mu)
    s = eval_diffusion(model, t, x, mu)
    return np.linalg.norm(b, axis=-1) + np.linalg.norm(s.reshape(s.shape[0], -1), axis=-1)


@dataclass
class GrowthReport:
    max_ratio: float
    declared: float
    worst_t: float
    worst_x: np.ndarray
    samples: int

    @property
    def passed(self):
        return self.max_ratio <= self.declared * (1 + 1e-12)


def growth_check(model, sample_count=1000, radius=10.0, seed=0, horizon=1.0, atoms=16):
    """Largest observed ``(|b| + |sigma|_F) / (1 + |x| + W_eta(delta_0, mu))`` over random inputs."""
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    d = model.d
    best, worst_t, worst_x = -np.inf, 0.0, None
    # always include mu = delta_0 at the edge of the ball
    probes = [(0.0, np.full((1, d), radius / np.sqrt(d)), EmpiricalMeasure.zero(d))]
    xs, ts = _sample_ball(sample_count, d, radius, seed, 0)
    all_atoms = _sample_ball(sample_count * atoms, d, radius, seed, 1)[0].reshape(sample_count, atoms, d)
    for k in range(sample_count):
        probes.append((horizon * ts[k], xs[k:k + 1], EmpiricalMeasure(all_atoms[k])))
    for t, x, mu in probes:
        num = _coefficient_norm(model, t, x, mu)[0]
        ratio = num / (1.0 + np.linalg.norm(x) + moment(mu, model.eta))
        if ratio > best:
            best, worst_t, worst_x = ratio, float(t), x[0]
    return GrowthReport(float(best), model.growth_constant, worst_t, worst_x, sample_count + 1)


@dataclass
class ModulusReport:
    deltas: np.ndarray
    omega: np.ndarray
    slope: float

    @property
    def monotone_to_zero(self):
        om = self.omega
        return bool(np.all(np.diff(om) >= -1e-12 * max(1.0, om.max())) and om[0] <= om[-1] * 0.5 + 1e-14)


def modulus_check(model, compact_radius=10.0, delta_grid=None, seed=0, samples=2000, horizon=1.0,
                  atoms=8, n_times=4):
    """Empirical modulus of continuity of ``(x, mu) -> (b, sigma)`` on a ball.

    Pairs ``(x, mu)``/``(y, nu)`` are drawn with ``|x - y| <= delta`` and
    ``nu`` obtained by moving each atom of ``mu`` by at most ``delta`` (so
    ``W_eta(mu, nu) <= delta``).  Half of the base points have log-uniform
    radii so that behaviour near the origin is seen.  Heuristic only.
    """
    if compact_radius <= 0:
        raise DomainError("compact_radius must be positive")
    deltas = np.sort(np.asarray(delta_grid if delta_grid is not None else np.logspace(-4, -1, 7), dtype=float))
    d = model.d
    half = samples // 2
    x_uni, _ = _sample_ball(samples - half, d, compact_radius, seed, 0)
    x_log, _ = _sample_ball(half, d, compact_radius, seed, 1, multiscale=True, floor=deltas[0] * 1e-2)
    x_base = np.vstack([x_uni, x_log])
    mu_atoms, _ = _sample_ball(atoms, d, compact_radius, seed, 2)
    mu = EmpiricalMeasure(mu_atoms)
    times = horizon * np.linspace(0.0, 1.0, n_times)
    omega = np.zeros(deltas.size)
    for k, delta in enumerate(deltas):
        step, _ = _sample_ball(samples, d, delta, seed, 10 + k)
        y = x_base + step
        jitter, _ = _sample_ball(atoms, d, delta, seed, 1000 + k)
        nu = EmpiricalMeasure(mu_atoms + jitter)
        for t in times:
            db = eval_drift(model, t, x_base, mu) - eval_drift(model, t, y, nu)
            ds = eval_diffusion(model, t, x_base, mu) - eval_diffusion(model, t, y, nu)
            gap = np.linalg.norm(db, axis=1) + np.linalg.norm(ds.reshape(samples, -1), axis=1)
            omega[k] = max(omega[k], gap.max())
    pos = omega > 0
    slope = float(np.polyfit(np.log(deltas[pos]), np.log(omega[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    return ModulusReport(deltas, omega, slope)
