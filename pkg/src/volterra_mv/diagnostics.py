"""Empirical checks of the provable properties of the particle scheme.

Every check reads an ensemble (or a ladder of them) and returns a small
report object carrying the numbers, the thresholds used and a verdict.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (DomainError, GridMismatch, InsufficientLags, LadderTooShort,
                     MissingAccumulators)
from .kernels import Constant
from .measures import EmpiricalMeasure, wasserstein
from .models import eval_diffusion, eval_drift
from .solver import Partition, simulate
from .testfunctions import default_test_functions


def _path(ensemble, path):
    if path == "X":
        return ensemble.X
    if path in ("A", "Mart"):
        arr = getattr(ensemble, path)
        if arr is None:
            raise MissingAccumulators(f"ensemble has no {path} accumulator")
        return arr
    if path == "Z":
        return ensemble.Z
    raise DomainError(f"unknown path {path!r}")


def jackknife_mean(values):
    """Mean over axis 0 and its delete-one jackknife standard error."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    total = v.sum(axis=0)
    loo = (total - v) / (n - 1)
    centred = loo - loo.mean(axis=0)
    se = np.sqrt((n - 1) / n * np.sum(centred * centred, axis=0))
    return total / n, se


# -- moments ------------------------------------------------------------------

@dataclass
class MomentReport:
    times: np.ndarray
    q_list: list
    estimate: np.ndarray  # (len(q_list), M+1)
    se: np.ndarray
    N: int

    def rows(self):
        return [
            {"t": float(t), "q": float(q), "estimate": float(self.estimate[k, j]), "se": float(self.se[k, j])}
            for k, q in enumerate(self.q_list)
            for j, t in enumerate(self.times)
        ]

    def sup(self, k):
        j = int(np.argmax(self.estimate[k]))
        return float(self.estimate[k, j]), float(self.se[k, j])


def moment_report(ensemble, q_list, path="X", p_min=None):
    """Monte Carlo ``E|X_t|^q`` per grid time with jackknife standard errors."""
    q_list = [float(q) for q in q_list]
    if any(q < 1 for q in q_list) or (p_min is not None and any(q > p_min for q in q_list)):
        raise DomainError(f"moment orders must lie in [1, p_min={p_min}]")
    norms = np.linalg.norm(_path(ensemble, path), axis=2)  # (N, M+1)
    est = np.empty((len(q_list), norms.shape[1]))
    se = np.empty_like(est)
    for k, q in enumerate(q_list):
        est[k], se[k] = jackknife_mean(norms**q)
    return MomentReport(np.asarray(ensemble.times), q_list, est, se, ensemble.N)


@dataclass
class MomentComparison:
    q_list: list
    sups: list  # per report: list of (estimate, se) per q
    max_z: float
    threshold: float = 3.0

    @property
    def passed(self):
        return self.max_z <= self.threshold


def compare_moment_levels(reports, threshold=3.0):
    """Pairwise check that the sup-over-grid moments agree within ``threshold`` SE."""
    if len(reports) < 2:
        raise DomainError("need at least two moment reports")
    q_list = reports[0].q_list
    sups = [[r.sup(k) for k in range(len(q_list))] for r in reports]
    worst = 0.0
    for a in range(len(reports)):
        for b in range(a + 1, len(reports)):
            for k in range(len(q_list)):
                (ea, sa), (eb, sb) = sups[a][k], sups[b][k]
                s = np.hypot(sa, sb)
                z = abs(ea - eb) / s if s > 0 else (0.0 if ea == eb else np.inf)
                worst = max(worst, z)
    return MomentComparison(q_list, sups, float(worst), threshold)


# -- increments ---------------------------------------------------------------

@dataclass
class IncrementFit:
    p: float
    slope: float
    intercept: float
    r2: float
    lags: list
    lag_times: list
    mean_increments: list
    degenerate: bool = False
    gamma: float = None
    tolerance: float = 0.1

    @property
    def threshold(self):
        return None if self.gamma is None else self.gamma * self.p - self.tolerance

    @property
    def passed(self):
        if self.degenerate:
            return True
        return True if self.gamma is None else self.slope >= self.threshold

    def to_dict(self):
        d = asdict(self)
        d["threshold"] = self.threshold
        d["passed"] = self.passed
        return d


def default_lags(M):
    lags = [1]
    while lags[-1] * 2 <= M // 2:
        lags.append(lags[-1] * 2)
    return lags


def increment_scaling(ensemble, p=2.0, lags=None, path="X", max_anchors=32, gamma=None, tolerance=0.1,
                      min_decades=1.5):
    """Fit ``log E|X_{t+h} - X_t|^p`` against ``log h`` over grid-aligned lags.

    Anchors ``t`` are up to ``max_anchors`` equally spaced grid points.
    """
    x = _path(ensemble, path)
    M = x.shape[1] - 1
    lags = sorted(set(int(h) for h in (lags or default_lags(M))))
    if lags[0] < 1 or lags[-1] > M:
        raise InsufficientLags("lags must lie in [1, M]")
    if len(lags) < 2 or np.log10(lags[-1] / lags[0]) < min_decades - 1e-12:
        raise InsufficientLags(f"lags {lags} span less than {min_decades} decades")
    times = np.asarray(ensemble.times)
    h_times, means = [], []
    for h in lags:
        anchors = np.unique(np.round(np.linspace(0, M - h, min(max_anchors, M - h + 1))).astype(int))
        inc = np.linalg.norm(x[:, anchors + h] - x[:, anchors], axis=2) ** p
        means.append(float(inc.mean()))
        h_times.append(float(np.mean(times[anchors + h] - times[anchors])))
    means = np.asarray(means)
    if np.all(means == 0):
        return IncrementFit(p, float("nan"), float("nan"), 0.0, lags, h_times, means.tolist(), True, gamma, tolerance)
    lh, lm = np.log(h_times), np.log(means)
    slope, intercept = np.polyfit(lh, lm, 1)
    resid = lm - (slope * lh + intercept)
    ss = np.sum((lm - lm.mean()) ** 2)
    r2 = float(1 - np.sum(resid**2) / ss) if ss > 0 else 1.0
    return IncrementFit(p, float(slope), float(intercept), min(max(r2, 0.0), 1.0), lags, h_times,
                        means.tolist(), False, gamma, tolerance)


# -- Hoelder regularity ---------------------------------------------------------

@dataclass
class HolderReport:
    exponent: float
    method: str
    quartiles: list
    lags: list
    threshold: float = None

    @property
    def passed(self):
        return True if self.threshold is None else self.exponent >= self.threshold

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def holder_threshold(gamma, p):
    """Verdict threshold for a certified ``gamma`` and moment order ``p``."""
    return (gamma * p - 1.0) / p - 0.1


def holder_estimate(ensemble, path="X", method="max", max_lag_fraction=0.125, gamma=None, p=None):
    """Per-path regularity exponent across dyadic lags; median over particles.

    ``variogram`` regresses the log of the mean squared increment of one path
    on the log lag and halves the slope.  ``max`` regresses the log of the
    largest increment instead; it is biased low for rough paths by the
    ``sqrt(log(1/h))`` factor in Levy's modulus.
    """
    x = _path(ensemble, path)
    M = x.shape[1] - 1
    if M < 64:
        raise DomainError("Hoelder estimation needs at least 64 grid intervals")
    if method not in ("variogram", "max"):
        raise DomainError("method must be 'variogram' or 'max'")
    lags = [1]
    while lags[-1] * 2 <= max(2, int(M * max_lag_fraction)):
        lags.append(lags[-1] * 2)
    times = np.asarray(ensemble.times)
    h = np.array([np.mean(times[k:] - times[:-k]) for k in lags])
    stats = []
    for k in lags:
        inc = np.linalg.norm(x[:, k:] - x[:, :-k], axis=2)
        stats.append(np.mean(inc**2, axis=1) if method == "variogram" else inc.max(axis=1))
    stats = np.stack(stats, axis=1)  # (N, n_lags)
    degenerate = np.all(stats == 0, axis=1)
    lh = np.log(h)
    with np.errstate(divide="ignore"):
        ls = np.log(stats[~degenerate])
    if ls.shape[0] == 0:
        est = np.array([np.inf])
    else:
        centred = lh - lh.mean()
        slopes = (ls - ls.mean(axis=1, keepdims=True)) @ centred / np.sum(centred**2)
        est = slopes / 2.0 if method == "variogram" else slopes
    thr = holder_threshold(gamma, p) if gamma is not None and p is not None else None
    q = np.percentile(est, [25, 50, 75]) if np.all(np.isfinite(est)) else [np.inf] * 3
    return HolderReport(float(np.median(est)), method, [float(v) for v in q], lags, thr)


# -- martingale problem -----------------------------------------------------------

@dataclass
class MartingaleReport:
    rows: list
    threshold: float = 3.0

    @property
    def max_abs_z(self):
        return max((abs(r["z"]) for r in self.rows), default=0.0)

    @property
    def passed(self):
        return self.max_abs_z <= self.threshold


def default_time_pairs(M):
    q = max(1, M // 4)
    return [(0, q), (q, 2 * q), (2 * q, M), (0, M)]


def _coefficient_history(ensemble, model):
    X = ensemble.X
    M = X.shape[1] - 1
    b = np.empty((X.shape[0], M, X.shape[2]))
    a = np.empty((X.shape[0], M, X.shape[2], X.shape[2]))
    for i in range(M):
        mu = EmpiricalMeasure(X[:, i])
        b[:, i] = eval_drift(model, ensemble.times[i], X[:, i], mu)
        s = eval_diffusion(model, ensemble.times[i], X[:, i], mu)
        a[:, i] = np.einsum("ndm,nem->nde", s, s)
    return b, a


def martingale_defect(ensemble, model, functions=None, time_pairs=None, threshold=3.0):
    """z-scores of ``E[D g(Z_s)]`` for the compensated increments

    ``D = f(Z_t) - f(Z_s) - sum_{s <= t_i < t} dt_i A^f(t_i, X_i, mu_i, Z_i)``

    with adapted weights ``g`` in ``{1, Z_s components, f(Z_s)}``; ``model``
    supplies the generator.
    """
    if ensemble.A is None or ensemble.Mart is None:
        raise MissingAccumulators("martingale test needs the A and Mart accumulators")
    Z = ensemble.Z
    N, M1, d = Z.shape
    M = M1 - 1
    if functions is None:
        zt = Z[:, -1]
        functions = default_test_functions(zt.mean(axis=0), float(np.sqrt(np.mean(zt.var(axis=0))) or 1.0), d)
    time_pairs = time_pairs or default_time_pairs(M)
    for s, t in time_pairs:
        if not 0 <= s < t <= M:
            raise DomainError(f"time pair {(s, t)} must satisfy 0 <= s < t <= M")
    b, a = _coefficient_history(ensemble, model)
    dt = ensemble.partition.dt
    rows = []
    for f in functions:
        fz = f(Z)  # (N, M+1)
        grad = f.gradient(Z[:, :-1])
        hess = f.hessian(Z[:, :-1])
        gen = np.sum(b * grad, axis=2) + 0.5 * np.einsum("nide,nide->ni", a, hess)
        comp = np.concatenate([np.zeros((N, 1)), np.cumsum(gen * dt, axis=1)], axis=1)
        for s, t in time_pairs:
            D = fz[:, t] - fz[:, s] - (comp[:, t] - comp[:, s])
            weights = [("1", np.ones(N))] + [(f"z{c}", Z[:, s, c]) for c in range(d)] + [("f", fz[:, s])]
            for wname, g in weights:
                v = D * g
                mean = float(v.mean())
                se = float(v.std(ddof=1) / np.sqrt(N))
                z = mean / se if se > 0 else (0.0 if mean == 0 else float(np.sign(mean) * np.inf))
                rows.append({"function": f.id, "s": float(ensemble.times[s]), "t": float(ensemble.times[t]),
                             "weight": wname, "statistic": mean, "se": se, "z": z})
    return MartingaleReport(rows, threshold)


# -- refinement -----------------------------------------------------------------

def _strictly_decreasing(values, floor):
    v = np.asarray(values)
    if np.all(v <= floor):
        return True
    return bool(np.all(np.diff(v) < 0))


@dataclass
class RefinementReport:
    mesh_pairs: list
    mesh_distances: list
    particle_pairs: list
    particle_distances: list
    eta: float
    noise_floor: float
    exact: bool = True
    ensembles: list = field(default_factory=list, repr=False)

    @property
    def mesh_decreasing(self):
        return _strictly_decreasing(self.mesh_distances, self.noise_floor)

    @property
    def particles_decreasing(self):
        return _strictly_decreasing(self.particle_distances, self.noise_floor)

    @property
    def passed(self):
        return self.mesh_decreasing and self.particles_decreasing

    def to_dict(self):
        return {
            "eta": self.eta,
            "mesh": [{"levels": list(p), "distance": d} for p, d in zip(self.mesh_pairs, self.mesh_distances)],
            "particles": [{"levels": list(p), "distance": d}
                          for p, d in zip(self.particle_pairs, self.particle_distances)],
            "noise_floor": self.noise_floor,
            "exact_distances": self.exact,
            "mesh_decreasing": self.mesh_decreasing,
            "particles_decreasing": self.particles_decreasing,
            "passed": self.passed,
        }


def _check_ladders(mesh_ladder, n_ladder):
    if len(mesh_ladder) < 3:
        raise LadderTooShort(f"mesh ladder needs >= 3 levels, got {len(mesh_ladder)}")
    if len(n_ladder) < 2:
        raise LadderTooShort(f"particle ladder needs >= 2 levels, got {len(n_ladder)}")
    for a, b in zip(mesh_ladder[:-1], mesh_ladder[1:]):
        r = b // a
        if b % a or r < 2 or r & (r - 1):
            raise DomainError(f"mesh ladder must refine dyadically, got {a} -> {b}")
    for a, b in zip(n_ladder[:-1], n_ladder[1:]):
        if b <= a or b % a:
            raise DomainError(f"particle ladder must increase by integer factors, got {a} -> {b}")


def refinement_study(model, kernel_b, kernel_sigma, mesh_ladder, n_ladder, seed=0, T=1.0, initial=None,
                     mode="integrated-kernel", eta=2.0, threads=1, mesh_particles=None, keep_ensembles=False):
    """Wasserstein distances between terminal laws along mesh and particle ladders.

    All levels are driven by one Brownian path generated on the finest mesh
    (coarse increments are sums of fine ones), and particle ``n`` uses the
    same stream in every ensemble.
    """
    mesh_ladder = [int(m) for m in mesh_ladder]
    n_ladder = [int(n) for n in n_ladder]
    _check_ladders(mesh_ladder, n_ladder)
    finest = Partition.uniform(mesh_ladder[-1], T)
    n_mesh = int(mesh_particles or n_ladder[0])
    runs = []
    for M in mesh_ladder:
        runs.append(simulate(model, kernel_b, kernel_sigma, Partition.uniform(M, T), n_mesh, seed, mode, initial,
                             threads, noise_partition=finest))
    exact = True
    mesh_d = []
    for e0, e1 in zip(runs[:-1], runs[1:]):
        w, ex = wasserstein(EmpiricalMeasure(e0.X[:, -1]), EmpiricalMeasure(e1.X[:, -1]), eta, return_exact=True)
        mesh_d.append(w)
        exact &= ex
    particle_runs = []
    for N in n_ladder:
        if N == n_mesh:
            particle_runs.append(runs[-1])
        else:
            particle_runs.append(simulate(model, kernel_b, kernel_sigma, finest, N, seed, mode, initial, threads,
                                          noise_partition=finest))
    part_d = []
    for e0, e1 in zip(particle_runs[:-1], particle_runs[1:]):
        w, ex = wasserstein(EmpiricalMeasure(e0.X[:, -1]), EmpiricalMeasure(e1.X[:, -1]), eta, return_exact=True)
        part_d.append(w)
        exact &= ex
    scale = max(1.0, float(np.max(np.abs(runs[-1].X[:, -1]))))
    return RefinementReport(
        [(a, b) for a, b in zip(mesh_ladder[:-1], mesh_ladder[1:])], [float(v) for v in mesh_d],
        [(a, b) for a, b in zip(n_ladder[:-1], n_ladder[1:])], [float(v) for v in part_d],
        eta, 1e-10 * scale, exact, runs if keep_ensembles else [],
    )


@dataclass
class FrozenIntegralReport:
    levels: list
    sup_differences: list
    noise_floor: float = 1e-12

    @property
    def decreasing(self):
        return _strictly_decreasing(self.sup_differences, self.noise_floor)

    def to_dict(self):
        return {"levels": self.levels, "sup_differences": self.sup_differences, "decreasing": self.decreasing}


def _frozen_weights(kernel, coarse, t_eval):
    """``w[i, k] = int_{t_i}^{min(t_{i+1}, t_k)} K(s, t_k) ds`` (zero when ``t_k <= t_i``)."""
    lo = coarse[:-1, None]
    hi = np.minimum(coarse[1:, None], t_eval[None, :])
    active = t_eval[None, :] > lo
    W = np.zeros((coarse.size - 1, t_eval.size))
    if isinstance(kernel, Constant):
        W = np.where(active, kernel.c * (hi - lo), 0.0)
        return W
    tt = np.broadcast_to(t_eval[None, :], W.shape)
    u0 = np.where(active, tt - hi, 0.0)
    u1 = np.where(active, tt - lo, 0.0)
    closed = kernel.signed_integral(u0, u1) if kernel.convolution else None
    if closed is not None:
        return np.where(active, closed, 0.0)
    from .kernels import integrate
    for i, k in zip(*np.nonzero(active)):
        W[i, k] = integrate(kernel, float(lo[i, 0]), float(hi[i, k]), float(t_eval[k]))
    return W


def frozen_integral_convergence(ensembles, kernel, f):
    """Sup-in-time distance of frozen-coefficient Volterra integrals to the finest level.

    ``I_k(t) = sum_i w_k(i, t) f(t_i, X^k_i, mu^k_i)`` evaluated at the
    finest grid's times; ``f(t, x, mu)`` returns one value (or a vector) per
    particle.  Reports ``sup_t mean_n |I_k(t) - I_finest(t)|`` per level.
    """
    ensembles = sorted(ensembles, key=lambda e: e.partition.M)
    fine_t = np.asarray(ensembles[-1].times)
    for e in ensembles[:-1]:
        idx = np.searchsorted(fine_t, e.times)
        if np.any(idx >= fine_t.size) or not np.allclose(fine_t[np.minimum(idx, fine_t.size - 1)], e.times,
                                                         rtol=0, atol=1e-12):
            raise GridMismatch("ensemble grids are not nested in the finest grid")
        if e.N != ensembles[-1].N:
            raise GridMismatch("ladder ensembles must have the same particle count")
    integrals = []
    for e in ensembles:
        times = np.asarray(e.times)
        vals = np.stack([np.asarray(f(times[i], e.X[:, i], EmpiricalMeasure(e.X[:, i])), dtype=float)
                         .reshape(e.N, -1) for i in range(e.partition.M)], axis=1)  # (N, M, k)
        W = _frozen_weights(kernel, times, fine_t)
        integrals.append(np.einsum("it,nik->ntk", W, vals))
    ref = integrals[-1]
    sups = [float(np.max(np.mean(np.linalg.norm(I - ref, axis=2), axis=0))) for I in integrals[:-1]]
    return FrozenIntegralReport([e.partition.M for e in ensembles], sups)


# -- aggregate report --------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    sections: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    plot_data: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self):
        return all(self.verdicts.values())

    def to_dict(self):
        return {"sections": self.sections, "verdicts": self.verdicts, "thresholds": self.thresholds,
                "passed": self.passed}

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)

    def to_text(self):
        lines = ["section              verdict   thresholds"]
        for name in sorted(self.verdicts):
            thr = self.thresholds.get(name, "")
            lines.append(f"{name:<20} {'pass' if self.verdicts[name] else 'FAIL':<9} {thr}")
        if not self.verdicts:
            lines.append("(no diagnostics requested)")
        return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
