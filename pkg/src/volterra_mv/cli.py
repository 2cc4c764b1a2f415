"""Command-line front end: ``volterra-mv {certify,simulate,diagnose,convergence,report}``.

Exit codes: 0 all verdicts pass, 1 usage/config/IO error, 2 a verdict
failed, 3 numerical blow-up.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import load_config
from .diagnostics import (DiagnosticsReport, compare_moment_levels, frozen_integral_convergence,
                          holder_estimate, increment_scaling, martingale_defect, moment_report,
                          refinement_study, _jsonable)
from .errors import ConfigError, DivergenceError, NonFiniteState, VolterraError
from .io import read_ensemble, write_ensemble, write_json
from .kernels import KernelCertificate, certify, default_gamma_grid, default_pair_grid, kernel_from_dict
from .measures import EmpiricalMeasure, moment
from .models import eval_diffusion
from .solver import precompute_weights, reconstruct, simulate

EXIT_OK, EXIT_USAGE, EXIT_VERDICT, EXIT_BLOWUP = 0, 1, 2, 3
CERT_FILES = {"drift": "certificate_drift.json", "diffusion": "certificate_diffusion.json"}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for verdict failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="volterra-mv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in (("certify", "certify both kernels"), ("simulate", "run the particle scheme"),
                           ("diagnose", "run diagnostics on a stored ensemble"),
                           ("convergence", "mesh and particle refinement ladders"),
                           ("report", "summarize prior outputs in --out")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=name != "report", help="experiment YAML file")
        s.add_argument("--out", help="output directory (default: output.directory of the config)")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--format", choices=("csv", "bin"), help="ensemble file layout")
        s.add_argument("--force", action="store_true", help="simulate without valid certificates")
        if name == "diagnose":
            s.add_argument("--ensemble", help="ensemble sidecar or directory (default: --out)")
    return p


def _setup(args):
    cfg = load_config(args.config) if args.config else None
    if cfg is not None:
        if args.seed is not None:
            cfg.seed = args.seed
        if args.format:
            cfg.output.format = args.format
    out = args.out or (cfg._resolve(cfg.output.directory) if cfg else None)
    if out is None:
        raise ConfigError("--out is required without --config")
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    os.makedirs(out, exist_ok=True)
    return cfg, out


def _certificates(cfg):
    kb, ks = cfg.build_kernels()
    gamma_grid = cfg.certify.gamma_grid or default_gamma_grid()
    pairs = default_pair_grid(cfg.horizon, cfg.certify.finest)
    return certify(kb, ks, cfg.eta, list(cfg.certify.epsilon_grid), list(gamma_grid), pairs)


def _load_certificates(out):
    certs = {}
    for role, name in CERT_FILES.items():
        path = os.path.join(out, name)
        if os.path.isfile(path):
            with open(path) as fh:
                certs[role] = json.load(fh)
    return certs


def _cert_summary(certs):
    """Certified gamma (the smaller of both roles) and the larger p_min, or ``(None, None)``."""
    if len(certs) < 2 or not all(c.get("verdict") == "certified" for c in certs.values()):
        return None, None
    return min(c["gamma"] for c in certs.values()), max(c["p_min"] for c in certs.values())


def cmd_certify(args):
    cfg, out = _setup(args)
    drift, diffusion = _certificates(cfg)
    lines = []
    for cert in (drift, diffusion):
        write_json(os.path.join(out, CERT_FILES[cert.role]), _jsonable(cert.to_dict(__version__)))
        if cert.certified:
            lines.append(f"{cert.role}: certified gamma={cert.gamma:.6g} epsilon={cert.epsilon:g} "
                         f"L={cert.L:.6g} p_min={cert.p_min:.6g}")
        else:
            lines.append(f"{cert.role}: rejected; " + "; ".join(cert.reasons))
    print("\n".join(lines))
    return EXIT_OK if drift.certified and diffusion.certified else EXIT_VERDICT


def _certificate_hashes(out):
    from .io import file_digest
    return {role: file_digest(os.path.join(out, name)) for role, name in CERT_FILES.items()
            if os.path.isfile(os.path.join(out, name))}


def cmd_simulate(args):
    cfg, out = _setup(args)
    kb, ks = cfg.build_kernels()
    certs = _load_certificates(out)
    if not args.force:
        if len(certs) < 2:
            raise ConfigError(f"no certificates in {out}; run 'certify' first or pass --force")
        for role, kernel in (("drift", kb), ("diffusion", ks)):
            c = certs[role]
            if c.get("verdict") != "certified":
                raise ConfigError(f"{role} kernel was rejected; pass --force to simulate anyway")
            if kernel_from_dict(c["kernel"]) != kernel:
                raise ConfigError(f"{role} certificate is for a different kernel; re-run 'certify'")
    model = cfg.build_model()
    ens = simulate(model, kb, ks, cfg.build_partition(), cfg.particles, cfg.seed, cfg.mode, cfg.build_initial(),
                   threads=args.threads)
    extra = {"initial": cfg.build_initial().to_dict(), "certificate_sha256": _certificate_hashes(out),
             "forced": bool(args.force), "config": cfg.to_dict()}
    path = write_ensemble(ens, out, cfg.output.format, extra)
    print(f"wrote {ens.N} particles x {ens.partition.M + 1} times to {path}")
    return EXIT_OK


def _replay_sigma(ensemble, model):
    sig = np.empty((ensemble.N, ensemble.partition.M, model.d, model.m))
    for i in range(ensemble.partition.M):
        x = ensemble.X[:, i]
        sig[:, i] = eval_diffusion(model, ensemble.times[i], x, EmpiricalMeasure(x))
    return sig


def run_diagnostics(cfg, ensemble, certs=None, threads=1):
    """All toggled diagnostics for one ensemble; returns a :class:`DiagnosticsReport`."""
    dg = cfg.diagnostics
    gamma, p_min = _cert_summary(certs or {})
    model = cfg.build_model()
    kb, ks = cfg.build_kernels()
    rep = DiagnosticsReport()
    rep.sections["ensemble"] = {"N": ensemble.N, "M": ensemble.partition.M, "mode": ensemble.mode,
                                "law_approximation": ensemble.metadata.get("law_approximation")}
    if dg.moments:
        mr = moment_report(ensemble, dg.q_list, p_min=p_min)
        sec = {"table": mr.rows()}
        M = ensemble.partition.M
        if ensemble.partition.is_uniform and M % 2 == 0 and M >= 2:
            coarse = simulate(model, kb, ks, cfg.build_partition(M // 2), ensemble.N, ensemble.seed, ensemble.mode,
                              cfg.build_initial(), threads=threads,
                              noise_partition=None if ensemble.mode == "variance-matched" else ensemble.partition,
                              labels=ensemble.labels)
            cmp = compare_moment_levels([mr, moment_report(coarse, dg.q_list, p_min=p_min)])
            sec["comparison"] = {"levels": [M, M // 2], "sups": cmp.sups, "max_z": cmp.max_z}
            rep.verdicts["moments"] = cmp.passed
            rep.thresholds["moments"] = f"|sup_M - sup_M/2| <= {cmp.threshold:g} SE"
        else:
            rep.verdicts["moments"] = bool(np.all(np.isfinite(mr.estimate)))
            rep.thresholds["moments"] = "finite (no uniform even grid for a level comparison)"
        rep.sections["moments"] = sec
        rep.plot_data["moments"] = (["t"] + [f"q={q:g}" for q in mr.q_list],
                                    np.column_stack([mr.times, mr.estimate.T]))
    if dg.increments:
        fit = increment_scaling(ensemble, dg.p, gamma=gamma, min_decades=dg.lag_decades)
        rep.sections["increment_fit"] = fit.to_dict()
        obs = {}
        for name in ("A", "Mart"):
            f2 = increment_scaling(ensemble, dg.p, path=name, min_decades=dg.lag_decades)
            obs[name] = {"slope": f2.slope, "r2": f2.r2, "degenerate": f2.degenerate}
        rep.sections["increment_fit_accumulators"] = obs
        rep.verdicts["increments"] = fit.passed
        rep.thresholds["increments"] = ("slope >= gamma*p - 0.1" if fit.threshold is not None
                                        else "no certificate: observation only")
        if not fit.degenerate:
            rep.plot_data["increments"] = (["log_h", "log_mean_increment"],
                                           np.column_stack([np.log(fit.lag_times), np.log(fit.mean_increments)]))
    if dg.holder:
        hr = holder_estimate(ensemble, gamma=gamma, p=p_min)
        rep.sections["holder"] = hr.to_dict()
        rep.verdicts["holder"] = hr.passed
        rep.thresholds["holder"] = ("exponent >= (gamma*p_min - 1)/p_min - 0.1" if hr.threshold is not None
                                    else "no certificate: observation only")
    if dg.martingale:
        gen = cfg.build_model(dg.generator_drift_scale)
        mr2 = martingale_defect(ensemble, gen)
        rep.sections["martingale"] = {"rows": mr2.rows, "max_abs_z": mr2.max_abs_z,
                                      "generator_drift_scale": dg.generator_drift_scale}
        rep.verdicts["martingale"] = mr2.passed
        rep.thresholds["martingale"] = f"all |z| <= {mr2.threshold:g}"
    if dg.reconstruction:
        weights = precompute_weights(kb, ks, ensemble.partition)
        if ensemble.sigma is None and (ensemble.mode == "variance-matched" or ensemble.noise_partition is not None):
            ensemble.sigma = _replay_sigma(ensemble, model)
        rr = reconstruct(ensemble, weights)
        rep.sections["reconstruction"] = {"max_residual": rr.max_residual, "worst_index": list(rr.worst_index)}
        rep.verdicts["reconstruction"] = rr.passed
        rep.thresholds["reconstruction"] = f"max relative residual <= {rr.tolerance:g}"
    return rep


def write_plot_data(directory, plot_data):
    """Two-column (or wider) whitespace .dat files plus a gnuplot script."""
    script = ["set terminal pngcairo size 800,600", "set key left top"]
    for name, (cols, arr) in sorted(plot_data.items()):
        fname = f"{name}.dat"
        np.savetxt(os.path.join(directory, fname), arr, fmt="%.17g", header=" ".join(cols))
        script.append(f"set output '{name}.png'")
        using = ", ".join(f"'{fname}' using 1:{k + 2} with linespoints title '{c}'" for k, c in enumerate(cols[1:]))
        script.append(f"plot {using}")
    with open(os.path.join(directory, "plots.gp"), "w") as fh:
        fh.write("\n".join(script) + "\n")


def _emit(rep, out, stem, plot):
    with open(os.path.join(out, f"{stem}.json"), "w") as fh:
        fh.write(rep.to_json() + "\n")
    with open(os.path.join(out, f"{stem}.txt"), "w") as fh:
        fh.write(rep.to_text())
    if plot and rep.plot_data:
        write_plot_data(out, rep.plot_data)
    print(rep.to_text(), end="")


def cmd_diagnose(args):
    cfg, out = _setup(args)
    ensemble, _ = read_ensemble(args.ensemble or out)
    rep = run_diagnostics(cfg, ensemble, _load_certificates(out), args.threads)
    _emit(rep, out, "diagnostics", cfg.output.plot_data)
    return EXIT_OK if rep.passed else EXIT_VERDICT


def cmd_convergence(args):
    cfg, out = _setup(args)
    dg = cfg.diagnostics
    kb, ks = cfg.build_kernels()
    mode = "integrated-kernel" if cfg.mode == "variance-matched" else cfg.mode
    study = refinement_study(cfg.build_model(), kb, ks, dg.mesh_ladder, dg.particle_ladder, cfg.seed, cfg.horizon,
                             cfg.build_initial(), mode, cfg.eta, args.threads,
                             mesh_particles=dg.particle_ladder[0], keep_ensembles=True)
    rep = DiagnosticsReport()
    rep.sections["refinement"] = study.to_dict()
    if mode != cfg.mode:
        rep.sections["refinement"]["note"] = "variance-matched mode has no nested noise grid; ladders use integrated-kernel"
    rep.verdicts["refinement_mesh"] = study.mesh_decreasing
    rep.verdicts["refinement_particles"] = study.particles_decreasing
    rep.thresholds["refinement_mesh"] = "strictly decreasing W_eta (or all below the noise floor)"
    rep.thresholds["refinement_particles"] = "strictly decreasing W_eta (or all below the noise floor)"
    eta = cfg.eta
    frozen = frozen_integral_convergence(study.ensembles, kb, lambda t, x, mu: np.full(x.shape[0], moment(mu, eta) ** 2))
    rep.sections["frozen_integral"] = frozen.to_dict()
    rep.verdicts["frozen_integral"] = frozen.decreasing
    rep.thresholds["frozen_integral"] = "sup-differences decreasing along the mesh ladder"
    rep.plot_data["mesh_ladder"] = (["M_coarse", "W"], np.column_stack([[p[0] for p in study.mesh_pairs],
                                                                        study.mesh_distances]))
    rep.plot_data["particle_ladder"] = (["N_coarse", "W"], np.column_stack([[p[0] for p in study.particle_pairs],
                                                                            study.particle_distances]))
    _emit(rep, out, "convergence", cfg.output.plot_data)
    return EXIT_OK if rep.passed else EXIT_VERDICT


def cmd_report(args):
    cfg, out = _setup(args)
    summary, verdicts = {}, {}
    for role, c in _load_certificates(out).items():
        summary[f"certificate_{role}"] = {k: c.get(k) for k in ("verdict", "gamma", "epsilon", "L", "p_min")}
        verdicts[f"certificate_{role}"] = c.get("verdict") == "certified"
    side = os.path.join(out, "ensemble.json")
    if os.path.isfile(side):
        with open(side) as fh:
            meta = json.load(fh)
        summary["ensemble"] = {k: meta.get(k) for k in ("N", "M", "d", "seed", "mode", "data_file", "data_sha256")}
    for stem in ("diagnostics", "convergence"):
        path = os.path.join(out, f"{stem}.json")
        if os.path.isfile(path):
            with open(path) as fh:
                rep = json.load(fh)
            summary[stem] = rep["verdicts"]
            verdicts.update({f"{stem}.{k}": v for k, v in rep["verdicts"].items()})
    if not summary:
        raise ConfigError(f"nothing to report in {out}")
    write_json(os.path.join(out, "summary.json"), {"summary": summary, "verdicts": verdicts,
                                                   "passed": all(verdicts.values())})
    lines = [f"{k:<40} {'pass' if v else 'FAIL'}" for k, v in sorted(verdicts.items())]
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK if all(verdicts.values()) else EXIT_VERDICT


COMMANDS = {"certify": cmd_certify, "simulate": cmd_simulate, "diagnose": cmd_diagnose,
            "convergence": cmd_convergence, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (NonFiniteState, DivergenceError) as exc:
        print(f"error: numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (VolterraError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
