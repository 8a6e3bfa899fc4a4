"""Scenario runner: data construction, hypothesis checks, Picard + direct solve, verdict rows."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from nslab import io
from nslab.beltrami import band_split, beltrami_field, corollary18_data
from nslab.errors import BadConfig, ConditionViolated, DegenerateFit
from nslab.spaces import (
    besov_norm,
    besov_product_check,
    bmo_minus1_norm,
    bmo_minus2_upper,
    bmo_norm,
    heat_sup_l2_in_time,
    riesz_representatives,
    x_norm,
    xmk_norm,
    y_norm,
    z_norm,
)
from nslab.solver import (
    SolverConfig,
    analyticity_radius,
    energy_report,
    picard_solve,
    solve,
    stokes_duhamel,
    t1_horizon,
)
from nslab.spectral import (
    SpectralField,
    Trajectory,
    curl,
    dyadic_times,
    fractional_laplacian,
    heat_flow,
    heat_semigroup,
    random_field,
)

SCENARIOS = ("theorem13", "corollary18", "estimate_suite", "beltrami_exactness")


@dataclass
class ExperimentConfig:
    scenario: str
    N: int
    seed: int = 0
    output_dir: str = ""
    # data
    lambda_sq: int = 1
    shells: tuple = (1, 2, 3)
    amplitudes: tuple | None = None
    M0: float = 1.0
    epsilon: float = 0.01
    epsilon1: float = 0.0
    b: float = 0.5
    epsilon_threshold: float = 0.05
    C: float = 0.1
    remainder_kmax: int = 3
    bernstein_c: float = 4.0
    # dynamics
    dt: float = 0.01
    record_every: int = 10
    horizon_extra: float = 5.0
    picard_steps: int = 16
    picard_tol: float = 1e-10
    eps_scaling: bool = False
    # ensembles
    ensemble: int = 20
    grids: tuple = (16, 32)
    kmax: int = 4
    T: float = 1.0
    t_min: float = 1e-4
    drift_bound: float = 0.25
    zero_data: bool = False
    # beltrami exactness
    error_bound: float = 1e-8
    order_gain: float = 8.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise BadConfig(f"unknown scenario {self.scenario!r}")
        if self.scenario in ("theorem13", "corollary18"):
            if not 0 < self.b < 1:
                raise BadConfig(f"need 0 < b < 1, got {self.b}")
            if self.epsilon <= 0:
                raise BadConfig("epsilon must be positive (it sets T1)")
        if self.scenario == "estimate_suite" and self.ensemble < 20:
            raise BadConfig("ensemble size must be >= 20")

    @classmethod
    def from_config(cls, cfg):
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in cfg.values.items() if k in names and v is not None}
        return cls(scenario=cfg.schema, **kw)

    def digest(self):
        vals = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "output_dir"}
        return io.config_hash(vals)


@dataclass
class Check:
    name: str
    measured: float
    bound: float
    detail: str = ""

    @property
    def passed(self):
        return bool(self.measured <= self.bound)


@dataclass
class ExperimentReport:
    scenario: str
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)
    config_hash: str = ""

    header = ("check", "measured", "bound", "pass", "detail")

    def add(self, name, measured, bound, detail=""):
        if any(c.name == name for c in self.checks):
            raise ValueError(f"duplicate check {name}")
        c = Check(name, float(measured), float(bound), detail)
        self.checks.append(c)
        return c

    def check(self, name):
        return next(c for c in self.checks if c.name == name)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def rows(self):
        for c in self.checks:
            yield (c.name, c.measured, c.bound, c.passed, c.detail)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        io.write_csv(out / "report.csv", self.header, self.rows(), self.config_hash)
        io.write_csv(
            out / "summary.csv", ("key", "value"), sorted(self.summary.items()), self.config_hash
        )
        files = sorted(set(self.manifest) | {"report.csv", "summary.csv", "manifest.txt"})
        (out / "manifest.txt").write_text("\n".join(files) + "\n")
        return out


def bracket(lam):
    return math.sqrt(1 + lam * lam)


# -- data

def _remainder(cfg, lam, N):
    """Seeded random field with the + helicity band around lam removed."""
    w = random_field(N, cfg.seed, kmax=cfg.remainder_kmax)
    if lam > 0:
        u1p, _, minus = band_split(w, lam)
        w = u1p + minus
    return w


def _curl_defect(u, lam):
    return bmo_minus2_upper(curl(u) - lam * u).value


def _target_m0(phi, rest, M0, max_iter=20):
    """Scale s with bmo_minus1(s phi + rest) in [0.95, 1] M0 by bisection."""
    norm = lambda s: bmo_minus1_norm(s * phi + rest).value  # noqa: E731
    lo, hi = 0.0, 1.0
    while norm(hi) < M0:
        hi *= 2
        if hi > 1e6:
            raise BadConfig("cannot reach M0 target")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        v = norm(mid)
        if 0.95 * M0 <= v <= M0:
            return mid, v
        if v > M0:
            hi = mid
        else:
            lo = mid
    return lo, norm(lo)


def build_band_data(cfg, epsilon=None):
    """u0 = u2+ + u01 with u2+ a + Beltrami field on |n|^2 = lambda_sq.

    u01 is scaled so that |curl u0 - lam u0|_{BMO^-2} (canonical upper bound) = eps <lam>^-b.
    """
    eps = cfg.epsilon if epsilon is None else epsilon
    lam = math.sqrt(cfg.lambda_sq)
    N = cfg.N
    w = _remainder(cfg, lam, N)
    unit = _curl_defect(w, lam)
    u01 = w * (eps * bracket(lam) ** (-cfg.b) / unit) if unit > 0 else w * 0.0
    if cfg.lambda_sq == 0:
        return u01, SpectralField.zeros(N), u01, lam
    phi = beltrami_field(cfg.lambda_sq, N)
    s, _ = _target_m0(phi, u01, cfg.M0)
    u2p = s * phi
    return u2p + u01, u2p, u01, lam


# -- dynamics

def _dynamics(cfg, report, u0, lam, epsilon, prefix=""):
    """Picard on [0, T1] from the band split at lam, then direct solve to T1 + 1 + horizon_extra."""
    u1p, u2p, minus = band_split(u0, lam)
    u01 = u1p + minus
    T1 = t1_horizon(cfg.M0, epsilon, lam, cfg.b, cfg.C)
    mesh = np.linspace(0.0, T1, cfg.picard_steps + 1)
    u_traj = heat_flow(u2p, mesh)
    v, prep = picard_solve(u01, u_traj, T1, tol=cfg.picard_tol)
    U1 = u_traj.fields[-1] + v.fields[-1]

    T2 = T1 + 1.0
    span = T2 + cfg.horizon_extra - T1
    nsteps = math.ceil(span / cfg.dt - 1e-9)
    scfg = SolverConfig(dt=span / nsteps, T=span, record_every=cfg.record_every)
    traj = solve(U1.with_coeffs(U1.coeffs), scfg, t0=T1)

    u_late = heat_flow(u2p, traj.times)
    v_late = Trajectory(traj.times, [U - u for U, u in zip(traj.fields, u_late.fields)])
    a = 1 - cfg.b / (cfg.b + 2)
    step2 = float(max((t - T1) ** (a / 2) * f.sup_norm() for t, f in zip(v_late.times, v_late.fields)))
    en = energy_report(Trajectory(traj.times, v_late.fields, traj.diagnostics))
    sup = traj.diagnostics["sup_norm"]
    growth = float(np.max(sup) / sup[0]) if sup[0] > 0 else 0.0
    rates = np.array(traj.diagnostics["analyticity_rate"])
    window = (traj.times > T1) & (traj.times <= T2 + 1e-12) & np.isfinite(rates)
    r = rates[window]
    drops = int(np.sum(np.diff(r) < -1e-9)) if len(r) > 1 else 0

    p = prefix
    report.summary.update({
        f"{p}T1": T1,
        f"{p}T2": T2,
        f"{p}horizon": float(traj.times[-1]),
        f"{p}picard_iterates": prep.iterates,
        f"{p}picard_max_ratio": max(prep.ratios) if prep.ratios else 0.0,
        f"{p}v_step2_sup": step2,
        f"{p}a": a,
        f"{p}grad_v_sq_max": float(np.max(en.grad_sq)),
        f"{p}lap_v_integral": float(en.lap_integral[-1]),
        f"{p}energy_identity_max": float(np.max(en.identity_residual)) if len(en.identity_residual) else 0.0,
        f"{p}sup_growth": growth,
        f"{p}v_sup_final": v_late.fields[-1].sup_norm(),
        f"{p}rate_onset_first": float(r[0]) if len(r) else float("nan"),
        f"{p}rate_onset_last": float(r[-1]) if len(r) else float("nan"),
    })
    return {"T1": T1, "picard": prep, "traj": traj, "v": v, "step2": step2,
            "growth": growth, "drops": drops, "onset_len": int(len(r)),
            "rate_min": float(np.min(r)) if len(r) else -math.inf, "energy": en}


def _solve_checks(report, dyn, cfg):
    prep = dyn["picard"]
    report.add("picard_converged", 0.0 if prep.converged else 1.0, 0.0, f"iterates={prep.iterates}")
    report.add("horizon_reached", dyn["T1"] + 1 + cfg.horizon_extra - dyn["traj"].times[-1], 1e-9)
    report.add("sup_norm_growth", dyn["growth"], 10.0)
    report.add("analyticity_onset_drops", dyn["drops"], 0.0, f"samples={dyn['onset_len']}")
    report.add("analyticity_rate_positive", -dyn["rate_min"], 0.0, "minus the smallest fitted rate on (T1, T2]")


def _hypothesis(report, name, measured, bound, detail=""):
    c = report.add(name, measured, bound, detail)
    if not c.passed:
        raise ConditionViolated(name, measured, bound)


def _eps_scaling(cfg, report, scales=(1.0, 0.5, 0.25)):
    vals = []
    for s in scales:
        u0, _, _, lam = build_band_data(cfg, cfg.epsilon * s)
        sub = ExperimentReport(cfg.scenario)
        d = _dynamics(cfg, sub, u0, lam, cfg.epsilon * s)
        vals.append(d["step2"])
    x = np.log(np.array(scales) * cfg.epsilon)
    y = np.log(np.maximum(vals, 1e-300))
    slope = float(np.polyfit(x, y, 1)[0])
    report.summary["eps_scaling_exponent"] = slope
    for s, v in zip(scales, vals):
        report.summary[f"eps_scaling_step2_{s:g}"] = v


def run_theorem13(cfg, report=None):
    """Hypotheses (mean zero, BMO^-1 bound, curl defect bound) then Picard and direct solve."""
    report = report or ExperimentReport("theorem13", config_hash=cfg.digest())
    u0, u2p, u01, lam = build_band_data(cfg)
    scale = max(float(np.max(np.abs(u0.coeffs))), 1e-300)
    _hypothesis(report, "mean_zero", float(np.max(np.abs(u0.mean))) / scale, 1e-12)
    m = bmo_minus1_norm(u0).value
    _hypothesis(report, "bmo_minus1_bound", m, cfg.M0)
    defect = _curl_defect(u0, lam)
    _hypothesis(report, "curl_defect_bmo_minus2", defect, cfg.epsilon_threshold * bracket(lam) ** (-cfg.b))
    report.summary.update({"lambda": lam, "bmo_minus1_u0": m, "curl_defect": defect,
                           "u2p_sup": u2p.sup_norm(), "u01_sup": u01.sup_norm()})
    dyn = _dynamics(cfg, report, u0, lam, cfg.epsilon)
    _solve_checks(report, dyn, cfg)
    if cfg.eps_scaling:
        _eps_scaling(cfg, report)
    _finish(cfg, report, u0, dyn)
    return report


def run_corollary18(cfg, report=None):
    report = report or ExperimentReport("corollary18", config_hash=cfg.digest())
    shells = [int(m) for m in cfg.shells]
    N = cfg.N
    raw, adm = corollary18_data(shells, N, cfg.amplitudes, cfg.b, cfg.epsilon)
    lam1 = adm.radii[0]
    s, _ = _target_m0(raw, SpectralField.zeros(N), cfg.M0)
    u01 = s * raw
    w = random_field(N, cfg.seed, kmax=cfg.remainder_kmax)
    wn = bmo_minus1_norm(w).value
    u02 = w * (cfg.epsilon1 / wn)
    u0 = u01 + u02

    scale = max(float(np.max(np.abs(u0.coeffs))), 1e-300)
    for nm, f in (("u01", u01), ("u02", u02)):
        _hypothesis(report, f"mean_zero_{nm}", float(np.max(np.abs(f.mean))) / scale, 1e-12)
        _hypothesis(report, f"div_free_{nm}", f.div_residual(), 1e-10)
    m01 = bmo_minus1_norm(u01).value
    _hypothesis(report, "bmo_minus1_u01", m01, cfg.M0)
    m02 = bmo_minus1_norm(u02).value
    _hypothesis(report, "bmo_minus1_u02", m02, cfg.epsilon1 * (1 + 1e-9))
    _hypothesis(report, "radii_ordered", 0.0 if adm.ordered else 1.0, 0.0, "1 <= lambda_1 < ... < lambda_N")
    _hypothesis(report, "radii_spread", adm.closeness_lhs, adm.closeness_rhs)
    _hypothesis(report, "epsilon_small", cfg.epsilon, cfg.epsilon_threshold)
    _hypothesis(report, "epsilon1_small", cfg.epsilon1,
                cfg.epsilon_threshold * lam1 ** (-cfg.b) / (1 + lam1))

    total = _curl_defect(u0, lam1)
    d01 = _curl_defect(u01, lam1)
    d02 = _curl_defect(u02, lam1)
    report.add("defect_triangle", total, (d01 + d02) * (1 + 1e-9), "total <= part01 + part02")
    lhs1 = bmo_minus1_norm(curl(u01) - lam1 * u01).value
    bern = d01 * lam1 / lhs1 if lhs1 > 0 else 0.0
    report.add("bernstein_ratio", bern, cfg.bernstein_c, "lambda_1 |.|_BMO^-2 / |.|_BMO^-1 for u01")
    report.summary.update({"lambda_1": lam1, "curl_defect": total, "defect_u01": d01,
                           "defect_u02": d02, "bmo_minus1_u01": m01, "bmo_minus1_u02": m02})
    dyn = _dynamics(cfg, report, u0, lam1, cfg.epsilon)
    _solve_checks(report, dyn, cfg)
    _finish(cfg, report, u0, dyn)
    return report


def _finish(cfg, report, u0, dyn):
    if not cfg.output_dir:
        return
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_snapshot(u0, out / "u0.nslb")
    io.write_snapshot(dyn["traj"].fields[-1], out / "u_final.nslb")
    traj = dyn["traj"]
    cols = ("t", "energy", "enstrophy", "sup_norm", "div_residual", "analyticity_rate")
    rows = zip(*(traj.diagnostics[c] for c in cols))
    io.write_csv(out / "diagnostics.csv", cols, rows, report.config_hash)
    report.manifest += ["u0.nslb", "u_final.nslb", "diagnostics.csv"]
    report.write(out)


# -- estimate suite

def _times(cfg):
    return dyadic_times(cfg.T, cfg.t_min, per_level=8)


def _ratio(num, den):
    if num == 0:
        return 0.0
    return num / den if den > 0 else math.inf


def _member_ratios(cfg, N, seed):
    """All inequality ratios LHS / RHS for one ensemble member on an N grid."""
    scale = 0.0 if cfg.zero_data else 1.0
    u0 = random_field(N, seed, kmax=cfg.kmax) * scale
    s0 = random_field(N, seed, kmax=cfg.kmax, components=1) * scale
    g = random_field(N, seed + 10_000, kmax=cfg.kmax, components=1) * scale
    times = _times(cfg)
    T = cfg.T
    bm1 = bmo_minus1_norm(u0).value
    out = {}
    s0_heat = bmo_minus1_norm(s0).value
    out["bmo2_over_bmo1"] = _ratio(bmo_minus2_upper(s0).value, s0_heat)
    # the divergence-form BMO^-1 value (sum of BMO norms of Riesz representatives) against
    # the heat-extension value, both ways round, to check two-sided comparability
    s0_div = sum(bmo_norm(g).value for g in riesz_representatives(s0)) if scale else 0.0
    out["bmo1_divergence_over_heat"] = _ratio(s0_div, s0_heat)
    out["bmo1_heat_over_divergence"] = _ratio(s0_heat, s0_div)
    out["paraproduct_besov"] = besov_product_check(g, s0, 0.75, 0.1).ratio
    W = heat_flow(u0, times)
    out["heat_x_over_bmo1"] = _ratio(x_norm(W, T).value, bm1)
    out["heat_l2linf_over_besov"] = _ratio(heat_sup_l2_in_time(u0, T), besov_norm(u0, -1.0, 2).value)
    for d in (0.25, 0.5, 0.75):
        Wd = heat_flow(fractional_laplacian(u0, -d), times)
        out[f"heat_z(d={d:g})_over_bmo1"] = _ratio(z_norm(Wd, T, d).value, bm1)
    G0 = random_field(N, seed + 20_000, kmax=cfg.kmax, components=9, solenoidal=False) * scale
    G = heat_flow(G0, times)
    V = stokes_duhamel(G)
    yG = y_norm(G, T).value
    out["stokes_x_over_y"] = _ratio(x_norm(V, T).value, yG)
    a = 0.5
    lhs36 = max(t ** ((1 - a) / 2) * fractional_laplacian(v, -a).sup_norm() for t, v in zip(V.times, V.fields))
    out["stokes_smoothing_over_y"] = _ratio(lhs36, yG)
    out["riesz_curl_bmo1"] = _ratio(bmo_minus1_norm(fractional_laplacian(curl(u0), -(2 - 0.5))).value, bm1)
    out["heat_xmk_over_bmo1"] = _ratio(xmk_norm(W, T, 1, 1).value, bm1)
    for lam in (2, 4):
        f = _shell_band(N, lam, seed) * scale
        out[f"bernstein(lambda={lam})"] = _ratio(lam * bmo_minus2_upper(f).value, bmo_minus1_norm(f).value)
    return out


def _shell_band(N, lam, seed):
    """Random real field supported on lam - 1/2 < |n| < lam + 1/2."""
    from nslab.spectral import wavenumber_sq

    rng = np.random.default_rng(seed + 30_000)
    k = np.sqrt(wavenumber_sq(N))
    c = rng.standard_normal((1, N, N, N)) + 1j * rng.standard_normal((1, N, N, N))
    c = np.where((np.abs(k - lam) < 0.5)[None], c, 0)
    return SpectralField(c, real=False).symmetrized()


def run_estimate_suite(cfg, report=None):
    """Ensemble ratio statistics on each grid; pass = relative drift of the max below drift_bound."""
    report = report or ExperimentReport("estimate_suite", config_hash=cfg.digest())
    per_grid = {}
    for N in cfg.grids:
        rows = [_member_ratios(cfg, N, cfg.seed + i) for i in range(cfg.ensemble)]
        per_grid[N] = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    names = list(per_grid[cfg.grids[0]])
    lo, hi = cfg.grids[0], cfg.grids[-1]
    for name in names:
        mx = {N: float(np.max(per_grid[N][name])) for N in cfg.grids}
        mean = {N: float(np.mean(per_grid[N][name])) for N in cfg.grids}
        finite = all(math.isfinite(v) for v in mx.values())
        if mx[lo] == 0 and mx[hi] == 0:
            drift = 0.0
        elif not finite or mx[lo] == 0:
            drift = math.inf
        else:
            drift = abs(mx[hi] - mx[lo]) / mx[lo]
        detail = ";".join(f"N={N}:max={mx[N]:.6g},mean={mean[N]:.6g}" for N in cfg.grids)
        report.add(f"{name}:drift", drift, cfg.drift_bound, detail)
        for N in cfg.grids:
            report.summary[f"{name}:max:N={N}"] = mx[N]
            report.summary[f"{name}:mean:N={N}"] = mean[N]
    if cfg.output_dir:
        report.write(cfg.output_dir)
    return report


# -- solver exactness

def run_beltrami_exactness(cfg, report=None):
    """Direct solve of Beltrami data against exp(-lam^2 t) phi at t = 1/lam^2, at dt and dt/2."""
    report = report or ExperimentReport("beltrami_exactness", config_hash=cfg.digest())
    for m in cfg.shells:
        phi = beltrami_field(int(m), cfg.N)
        T = 1.0 / m
        errs = []
        for dt in (cfg.dt, cfg.dt / 2):
            n = math.ceil(T / dt - 1e-9)
            tr = solve(phi, SolverConfig(dt=T / n, T=T, record_every=n))
            exact = heat_semigroup(phi, tr.times[-1])
            errs.append((tr.fields[-1] - exact).l2() / exact.l2())
        report.add(f"error(lambda_sq={m})", errs[0], cfg.error_bound, f"dt={cfg.dt:g}")
        shrink = errs[1] / errs[0] if errs[0] > 0 else math.inf
        report.add(f"halving_ratio(lambda_sq={m})", shrink, 1.0 / cfg.order_gain,
                   f"error(dt)={errs[0]:.3e},error(dt/2)={errs[1]:.3e}")
        report.summary[f"error_half(lambda_sq={m})"] = errs[1]
    if cfg.output_dir:
        report.write(cfg.output_dir)
    return report


RUNNERS = {
    "theorem13": run_theorem13,
    "corollary18": run_corollary18,
    "estimate_suite": run_estimate_suite,
    "beltrami_exactness": run_beltrami_exactness,
}


def run(cfg):
    t = time.perf_counter()
    report = RUNNERS[cfg.scenario](cfg)
    return report, time.perf_counter() - t
