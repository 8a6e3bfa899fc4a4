"""Command line entry point: nslab {generate,norm,solve,picard,verify,experiment}.

Exit codes: 0 success, 1 a verdict or hypothesis check failed, 2 usage or
configuration error, 3 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

import numpy as np

from nslab import __version__, io
from nslab.errors import BadConfig, ConditionViolated, ConfigError, NSLabError

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, header, rows, digest=""):
    if getattr(args, "out", None):
        io.write_csv(args.out, header, rows, digest)
    else:
        sys.stdout.write(f"# nslab {__version__} config_hash={digest or 'none'}\n")
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([io._cell(x) for x in r])


# -- generate

def cmd_generate(args):
    from nslab.beltrami import admissibility, beltrami_field, beltrami_from_potential

    if args.admissibility:
        rep = admissibility(args.admissibility, args.b, args.epsilon)
        _emit(args, rep.header, [rep.csv_row()])
        return EXIT_OK if rep.admissible else EXIT_VERDICT
    if args.output is None:
        raise BadConfig("--output is required unless --admissibility is given")
    if args.potential:
        # a shell potential mixing both helicities; the construction keeps the + part only
        seed = 0 if args.seed is None else args.seed
        u3 = beltrami_field(args.shell, args.N, sign=1, seed=seed) + beltrami_field(args.shell, args.N, sign=-1, seed=seed + 1)
        phi = beltrami_from_potential(u3)
    else:
        phi = beltrami_field(args.shell, args.N, sign=args.sign, seed=args.seed)
    phi = phi * args.amplitude
    io.write_snapshot(phi.with_coeffs(phi.coeffs, label=f"beltrami l2={args.shell}"), args.output)
    return EXIT_OK


# -- norm

def cmd_norm(args):
    from nslab import spaces

    f = io.read_snapshot(args.snapshot)
    grid = None
    if args.norm in ("bmo_minus1", "bmo", "bmo_minus2"):
        grid = spaces.CylinderGrid.default(f.N, r_max=args.r_max, r_min=args.r_min, center_stride=args.stride)
    if args.norm == "bmo_minus1":
        rep = spaces.bmo_minus1_norm(f, grid)
    elif args.norm == "bmo":
        rep = spaces.bmo_norm(f, grid)
    elif args.norm == "bmo_minus2":
        rep = spaces.bmo_minus2_upper(f, grid)
    else:
        q = math.inf if args.q == "inf" else 2
        rep = spaces.besov_norm(f, args.s, q)
    row = rep.csv_row()
    _emit(args, list(row), [list(row.values())])
    return EXIT_OK


# -- solve / picard

def _initial(cfg):
    from nslab.beltrami import beltrami_field

    if cfg["input"]:
        return io.read_snapshot(cfg["input"])
    return beltrami_field(cfg["lambda_sq"], cfg["N"], seed=cfg["seed"] or None) * cfg["amplitude"]


def cmd_solve(args):
    from nslab.solver import SolverConfig, solve

    cfg = io.parse_config(args.config, "solve")
    u0 = _initial(cfg)
    if u0.N != cfg["N"]:
        raise BadConfig(f"snapshot grid {u0.N} differs from N={cfg['N']}")
    traj = solve(u0, SolverConfig(dt=cfg["dt"], T=cfg["T"], record_every=cfg["record_every"]))
    out = _out_dir(args.output or cfg["output_dir"])
    cols = ("t", "energy", "enstrophy", "sup_norm", "div_residual", "analyticity_rate")
    io.write_csv(out / "diagnostics.csv", cols, zip(*(traj.diagnostics[c] for c in cols)), cfg.digest())
    names = []
    for i, f in enumerate(traj.fields):
        name = f"u_{i:05d}.nslb"
        io.write_snapshot(f.with_coeffs(f.coeffs, label=f"t={traj.times[i]!r}"), out / name)
        names.append(name)
    (out / "manifest.txt").write_text("\n".join(["diagnostics.csv"] + names) + "\n")
    return EXIT_OK


def cmd_picard(args):
    from nslab.beltrami import band_split, beltrami_field
    from nslab.solver import picard_solve, t1_horizon
    from nslab.spectral import heat_flow, random_field

    cfg = io.parse_config(args.config, "picard")
    N = cfg["N"]
    if cfg["input"]:
        u0 = io.read_snapshot(cfg["input"])
    else:
        u0 = beltrami_field(cfg["lambda_sq"], N) + random_field(N, cfg["seed"], kmax=max(1, N // 4 - 1)) * cfg["perturbation"]
    lam = math.sqrt(cfg["lambda_sq"])
    u1p, u2p, minus = band_split(u0, lam)
    T1 = t1_horizon(cfg["M0"], cfg["epsilon"], lam, cfg["b"], cfg["C"])
    mesh = np.linspace(0, T1, cfg["steps"] + 1)
    v, rep = picard_solve(u1p + minus, heat_flow(u2p, mesh), T1, cfg["tol"], cfg["max_iter"])
    out = _out_dir(args.output or cfg["output_dir"])
    rows = [(k + 1, d, rep.ratios[k - 1] if k > 0 else "") for k, d in enumerate(rep.differences)]
    io.write_csv(out / "picard.csv", ("iterate", "difference", "ratio"), rows, cfg.digest())
    io.write_snapshot(v.fields[-1], out / "v_T1.nslb")
    (out / "manifest.txt").write_text("picard.csv\nv_T1.nslb\n")
    print(f"T1={T1!r} iterates={rep.iterates} converged={str(rep.converged).lower()}")
    return EXIT_OK if rep.converged else EXIT_VERDICT


# -- verify

def _verify_rows(N):
    from nslab.beltrami import beltrami_field, eigen_residuals, split_pm, split_pm_eigen
    from nslab.spaces import bilinear_symbol_op
    from nslab.spectral import SpectralField, random_field, rotation_form_identity
    from nslab.solver import t1_horizon

    rows = []
    for m in (1, 2, 3, 5, 6):
        phi = beltrami_field(m, N, seed=m)
        r1, r2 = eigen_residuals(phi, math.sqrt(m))
        rows.append((f"curl_eigen(l2={m})", r1, 1e-12 * math.sqrt(m)))
        rows.append((f"laplace_eigen(l2={m})", r2, 1e-11 * m))
    u = random_field(N, 1)
    p, q = split_pm(u)
    pe, qe = split_pm_eigen(u)
    scale = np.max(np.abs(u.coeffs))
    rows.append(("split_resum", np.max(np.abs((p + q - u).coeffs)) / scale, 1e-13))
    rows.append(("split_two_paths", max(np.max(np.abs((p - pe).coeffs)), np.max(np.abs((q - qe).coeffs))) / scale, 1e-12))
    b, h = random_field(N, 2), random_field(N, 3)
    rows.append(("rotation_identity", rotation_form_identity(b, h) / (b.l2_coeff() * h.l2_coeff()), 1e-11))
    c1 = np.zeros((1, 8, 8, 8), complex)
    c2 = np.zeros((1, 8, 8, 8), complex)
    c1[0, 1, 0, 0] = 1
    c2[0, 0, 1, 0] = 1
    F = bilinear_symbol_op(SpectralField(c1, False), SpectralField(c2, False))
    want = np.zeros_like(c1)
    want[0, 1, 1, 0] = 0.5
    rows.append(("bilinear_single_mode", np.max(np.abs(F.coeffs - want)), 1e-13))
    rows.append(("t1_horizon", abs(t1_horizon(1, 0.1, math.sqrt(3), 0.5, 1) - 3.125e-4), 1e-15))
    return rows


def cmd_verify(args):
    rows = [(n, m, b, bool(m <= b)) for n, m, b in _verify_rows(args.N)]
    _emit(args, ("check", "measured", "bound", "pass"), rows)
    return EXIT_OK if all(r[3] for r in rows) else EXIT_VERDICT


# -- experiment

def cmd_experiment(args):
    from nslab import experiments

    cfg = io.parse_config(args.config, args.scenario)
    ecfg = experiments.ExperimentConfig.from_config(cfg)
    if args.output:
        ecfg.output_dir = args.output
    out = Path(ecfg.output_dir)
    try:
        report, elapsed = experiments.run(ecfg)
    except ConditionViolated as exc:
        out.mkdir(parents=True, exist_ok=True)
        io.write_csv(out / "report.csv", experiments.ExperimentReport.header,
                     [(exc.check, exc.measured, exc.bound, False, "hypothesis violated; not solved")], ecfg.digest())
        (out / "manifest.txt").write_text("report.csv\nmanifest.txt\n")
        print(f"FAIL {exc}", file=sys.stderr)
        return EXIT_VERDICT
    report.write(out)
    for name, measured, bound, ok, _ in report.rows():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {measured:.6g} <= {bound:.6g}")
    print(f"{args.scenario}: {'pass' if report.passed else 'fail'} in {elapsed:.1f}s -> {out}")
    return EXIT_OK if report.passed else EXIT_VERDICT


def build_parser():
    p = argparse.ArgumentParser(prog="nslab", description="Periodic Navier-Stokes lab on [-pi, pi]^3.")
    p.add_argument("--version", action="version", version=f"nslab {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on FFT worker threads (overrides the NSLB_THREADS environment variable)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a Beltrami snapshot or an admissibility CSV row")
    g.add_argument("--N", type=int, default=32, help="grid size")
    g.add_argument("--shell", type=int, default=1, help="|n|^2 of the lattice shell")
    g.add_argument("--sign", type=int, choices=(1, -1), default=1, help="helicity of the eigenfield")
    g.add_argument("--seed", type=int, default=None, help="seed for complex Gaussian amplitudes (default: unit amplitudes)")
    g.add_argument("--amplitude", type=float, default=1.0, help="overall scale factor")
    g.add_argument("--potential", action="store_true", help="build as curl u3 + (-Delta)^(1/2) u3 from a shell potential")
    g.add_argument("--admissibility", type=int, nargs="+", metavar="L2", help="shell |n|^2 list; emit the admissibility row instead")
    g.add_argument("--b", type=float, default=0.5, help="exponent b for --admissibility")
    g.add_argument("--epsilon", type=float, default=0.5, help="epsilon for --admissibility")
    g.add_argument("--out", help="CSV output path (default stdout)")
    g.add_argument("--output", "-o", help="snapshot output path")
    g.set_defaults(func=cmd_generate)

    n = sub.add_parser("norm", help="evaluate a norm of a snapshot")
    n.add_argument("snapshot")
    n.add_argument("--norm", choices=("bmo_minus1", "bmo", "bmo_minus2", "besov"), default="bmo_minus1")
    n.add_argument("--r-max", type=float, default=math.pi, help="largest cylinder radius")
    n.add_argument("--r-min", type=float, default=None, help="smallest cylinder radius (default 2 pi / N)")
    n.add_argument("--stride", type=int, default=1, help="center subsampling stride")
    n.add_argument("--s", type=float, default=-1.0, help="Besov smoothness")
    n.add_argument("--q", choices=("inf", "2"), default="inf", help="Besov summability")
    n.add_argument("--out", help="CSV output path (default stdout)")
    n.set_defaults(func=cmd_norm)

    s = sub.add_parser("solve", help="direct pseudospectral solve from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--output", "-o", help="output directory (default: output_dir from the config)")
    s.set_defaults(func=cmd_solve)

    pc = sub.add_parser("picard", help="Picard iteration for the perturbation around the band heat flow")
    pc.add_argument("--config", required=True)
    pc.add_argument("--output", "-o", help="output directory (default: output_dir from the config)")
    pc.set_defaults(func=cmd_picard)

    v = sub.add_parser("verify", help="fast identity checks; exit 1 if any fails")
    v.add_argument("--N", type=int, default=16)
    v.add_argument("--out", help="CSV output path (default stdout)")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("experiment", help="run a scenario from a flat key=value config")
    e.add_argument("scenario", choices=("theorem13", "corollary18", "estimate_suite", "beltrami_exactness"))
    e.add_argument("--config", required=True)
    e.add_argument("--output", "-o", help="output directory (default: output_dir from the config)")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        os.environ["NSLB_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except (ConfigError, BadConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConditionViolated as exc:
        print(f"FAIL {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except (NSLabError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
