"""Direct pseudospectral Navier-Stokes stepper and the Duhamel / Picard mild-solution route.

Velocity obeys u_t = Delta u + P(u x curl u) (nu = 1). The nonlinearity is
assembled in rotation form, so a Beltrami field sees exactly zero forcing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nslab.errors import (
    BadConfig,
    BadExponent,
    DegenerateFit,
    EmptyTrajectory,
    Instability,
    MeshMismatch,
    NoConvergence,
)
from nslab.spaces import x_norm
from nslab.spectral import (
    SpectralField,
    Trajectory,
    advect,
    cross,
    curl,
    dealias_mask,
    divergence,
    heat_semigroup,
    leray_project,
    product,
    require_div_free,
    require_mean_zero,
    tensor_divergence,
    wavenumber_sq,
    wavenumbers,
)


def stability_bound(N):
    """Largest accepted dt: 0.5 (N/3)^-2."""
    return 0.5 * (N / 3) ** -2


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    record_every: int = 1
    integrator: str = "ifrk4"
    dealias: bool = True

    def validate(self, N):
        if self.dt <= 0 or self.T <= 0:
            raise BadConfig("dt and T must be positive")
        if self.dt > stability_bound(N) * (1 + 1e-12):
            raise BadConfig(f"dt={self.dt} exceeds stability bound {stability_bound(N):.4g} for N={N}")
        if self.integrator != "ifrk4":
            raise BadConfig(f"unknown integrator {self.integrator!r}")
        if not self.dealias:
            raise BadConfig("dealiasing cannot be disabled")
        if self.record_every < 1:
            raise BadConfig("record_every must be >= 1")


def nonlinear_term(u):
    """P(u x curl u), which equals -P((u . grad) u) for divergence-free u."""
    return leray_project(cross(u, curl(u)))


def pressure(u):
    """Mean-zero P with Delta P + div((u . grad) u) = 0."""
    require_div_free(u, what="u")
    a = advect(u, u)
    K = wavenumbers(u.N)
    k2 = wavenumber_sq(u.N)
    inv = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1, k2))
    ndota = np.einsum("ixyz,ixyz->xyz", K, a.coeffs)
    return SpectralField((1j * ndota * inv)[None], u.real)


def pressure_residual(u, P):
    """|Delta P + div((u . grad) u)|_inf relative to |div((u . grad) u)|_inf."""
    src = divergence(advect(u, u))
    lap = P.with_coeffs(-wavenumber_sq(u.N) * P.coeffs)
    scale = src.sup_norm()
    res = (lap + src).sup_norm()
    return res / scale if scale else res


def energy(u):
    """|u|^2_{L^2(T^3)}."""
    return u.l2() ** 2


def enstrophy(u):
    """|grad u|^2_{L^2(T^3)}."""
    k2 = wavenumber_sq(u.N)
    return (2 * np.pi) ** 3 * float(np.sum(k2 * np.abs(u.coeffs) ** 2))


def _record(u, t, dissipation):
    try:
        rate = analyticity_radius(u)[0]
    except DegenerateFit:
        rate = float("nan")
    return {
        "t": t,
        "energy": energy(u),
        "enstrophy": enstrophy(u),
        "sup_norm": u.sup_norm(),
        "div_residual": u.div_residual(),
        "analyticity_rate": rate,
        "dissipation": dissipation,
    }


def solve(u0, cfg, rhs=nonlinear_term, t0=0.0):
    """Integrating-factor RK4 from t0 to t0 + cfg.T.

    The dissipation integral 2 int |grad u|^2 is carried as an extra RK4
    variable, so the diagnostics support an energy-identity check.
    """
    require_mean_zero(u0, "u0")
    require_div_free(u0, what="u0")
    cfg.validate(u0.N)
    N = u0.N
    mask = dealias_mask(N)
    k2 = wavenumber_sq(N)
    dt = cfg.dt
    E = np.exp(-k2 * dt)
    Eh = np.exp(-k2 * dt / 2)
    nsteps = int(round(cfg.T / dt))
    if abs(nsteps * dt - cfg.T) > 1e-9 * max(1.0, cfg.T):
        raise BadConfig(f"T={cfg.T} is not a multiple of dt={dt}")

    u = u0.with_coeffs(np.where(mask, u0.coeffs, 0))
    e0 = energy(u)
    c = u.coeffs
    D = 0.0
    diss = lambda cc: 2 * (2 * np.pi) ** 3 * float(np.sum(k2 * np.abs(cc) ** 2))  # noqa: E731
    N_ = lambda cc: rhs(u.with_coeffs(cc)).coeffs  # noqa: E731

    times = [t0]
    fields = [u]
    diags = [_record(u, t0, 0.0)]
    for step in range(1, nsteps + 1):
        a = N_(c)
        c1 = Eh * (c + 0.5 * dt * a)
        b = N_(c1)
        c2 = Eh * c + 0.5 * dt * b
        cc = N_(c2)
        c3 = E * c + dt * Eh * cc
        d = N_(c3)
        D += dt / 6 * (diss(c) + 2 * diss(c1) + 2 * diss(c2) + diss(c3))
        c = E * c + dt / 6 * (E * a + 2 * Eh * (b + cc) + d)
        c = np.where(mask, c, 0)
        if step % cfg.record_every == 0 or step == nsteps:
            t = t0 + step * dt
            f = u.with_coeffs(c)
            rec = _record(f, t, D)
            if not math.isfinite(rec["energy"]) or rec["energy"] > 1e3 * max(e0, 1e-300):
                raise Instability(f"energy grew from {e0:.3e} to {rec['energy']:.3e} at t={t:.4g}")
            times.append(t)
            fields.append(f)
            diags.append(rec)
    diagnostics = {k: np.array([r[k] for r in diags]) for k in diags[0]}
    return Trajectory(np.array(times), fields, diagnostics)


def energy_identity_residuals(traj):
    """Per recorded interval |E(t2) + D(t2) - D(t1) - E(t1)| / E(t1), D the dissipation integral."""
    E = traj.diagnostics["energy"]
    D = traj.diagnostics["dissipation"]
    return np.abs(E[1:] + D[1:] - D[:-1] - E[:-1]) / np.maximum(E[:-1], 1e-300)


# -- mild solutions

def _phi1(z):
    out = np.empty_like(z)
    small = z < 1e-2
    zs = z[small]
    # sum_k (-z)^k / (k+1)!
    out[small] = 1 - zs / 2 + zs**2 / 6 - zs**3 / 24 + zs**4 / 120 - zs**5 / 720
    zb = z[~small]
    out[~small] = -np.expm1(-zb) / zb
    return out


def _psi(z):
    """int_0^1 exp(-z v) v dv."""
    out = np.empty_like(z)
    small = z < 1e-2
    zs = z[small]
    # sum_k (-z)^k / (k! (k+2))
    out[small] = 0.5 - zs / 3 + zs**2 / 8 - zs**3 / 30 + zs**4 / 144 - zs**5 / 840
    zb = z[~small]
    out[~small] = (-np.expm1(-zb) - zb * np.exp(-zb)) / zb**2
    return out


def _check_mesh(*trajs):
    ref = trajs[0].times
    for tr in trajs[1:]:
        if len(tr.times) != len(ref) or not np.allclose(tr.times, ref, rtol=0, atol=1e-14):
            raise MeshMismatch("trajectories are sampled on different time meshes")
    if len(ref) < 2 or ref[0] != 0:
        raise MeshMismatch("mesh must start at t=0 and have at least 2 points")


def duhamel_integral(times, sources):
    """V(t_i) = int_0^{t_i} exp((t_i - s) Delta) S(s) ds for mesh samples S(t_i) of a source.

    The source is interpolated linearly in s and the heat factor integrated
    exactly per mode; with |n|^2 h -> 0 the weights reduce to the trapezoid rule.
    """
    N = sources[0].N
    k2 = wavenumber_sq(N).astype(float)
    out = [sources[0].with_coeffs(np.zeros_like(sources[0].coeffs))]
    V = out[0].coeffs
    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        z = k2 * h
        p1 = _phi1(z)
        ps = _psi(z)
        V = np.exp(-z) * V + h * (ps * sources[i].coeffs + (p1 - ps) * sources[i + 1].coeffs)
        out.append(sources[i + 1].with_coeffs(V))
    return out


def stokes_duhamel(G):
    """Mild solution of V_t - Delta V + grad P = div G, V(0) = 0, for a 9-component tensor trajectory."""
    if G.times[0] != 0:
        raise MeshMismatch("source mesh must start at t=0")
    sources = [leray_project(tensor_divergence(g)) for g in G.fields]
    return Trajectory(G.times.copy(), duhamel_integral(G.times, sources))


def duhamel_map(v_tilde, u_traj, u01, T1=None):
    """v(t) = S(t) u01 - int_0^t S(t-s) P div((u+v~) (x) (u+v~))(s) ds on the shared mesh."""
    _check_mesh(v_tilde, u_traj)
    require_mean_zero(u01, "u01")
    require_div_free(u01, what="u01")
    times = u_traj.times
    if T1 is not None and times[-1] < T1 * (1 - 1e-12):
        raise MeshMismatch(f"mesh ends at {times[-1]} before T1={T1}")
    sources = []
    for w1, w2 in zip(u_traj.fields, v_tilde.fields):
        w = w1 + w2
        sources.append(-leray_project(tensor_divergence(product(w, w))))
    integral = duhamel_integral(times, sources)
    fields = [heat_semigroup(u01, t) + I for t, I in zip(times, integral)]
    return Trajectory(times.copy(), fields)


@dataclass
class PicardReport:
    iterates: int
    differences: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    converged: bool = False
    T1: float = 0.0


def _diff_norm(a, b, T):
    d = Trajectory(a.times, [x - y for x, y in zip(a.fields, b.fields)])
    return x_norm(d, T).value


def picard_solve(u01, u_traj, T1, tol=1e-8, max_iter=30):
    """Fixed-point iteration v^(k+1) = duhamel_map(v^(k)) from v^(0) = S(t) u01.

    Stops when the X_{T1} norm of the last difference is below ``tol``.
    Raises NoConvergence when a contraction ratio >= 1 shows up.
    """
    if tol <= 0:
        raise BadConfig("tol must be positive")
    times = u_traj.times
    v = Trajectory(times.copy(), [heat_semigroup(u01, t) for t in times])
    report = PicardReport(iterates=0, T1=T1)
    for _ in range(max_iter):
        nxt = duhamel_map(v, u_traj, u01, T1)
        report.iterates += 1
        diff = _diff_norm(nxt, v, T1)
        report.differences.append(diff)
        if len(report.differences) > 1:
            prev = report.differences[-2]
            ratio = diff / prev if prev > 0 else 0.0
            report.ratios.append(ratio)
            if ratio >= 1 and diff >= tol:
                v = nxt
                raise NoConvergence(f"contraction ratio {ratio:.3g} >= 1 at iterate {report.iterates}")
        v = nxt
        if diff < tol:
            report.converged = True
            break
    return v, report


def mild_residual(v, u_traj, u01, T1=None):
    """max over the mesh of |v - duhamel_map(v)|_inf relative to max |v|_inf."""
    w = duhamel_map(v, u_traj, u01, T1)
    num = max((a - b).sup_norm() for a, b in zip(v.fields, w.fields))
    den = max(f.sup_norm() for f in v.fields)
    return num / den if den else num


def t1_horizon(M0, epsilon, lam, b, C):
    """T1 = C eps^2 <lambda>^{-2b-4}, <lambda> = sqrt(1 + lambda^2)."""
    if not 0 < b < 1:
        raise BadExponent(f"need 0 < b < 1, got {b}")
    if M0 <= 0 or epsilon <= 0 or C <= 0 or lam < 0:
        raise BadExponent("M0, epsilon, C must be positive and lambda non-negative")
    return C * epsilon**2 * (1 + lam * lam) ** (-(2 * b + 4) / 2)


@dataclass(frozen=True)
class EnergyReport:
    times: np.ndarray
    grad_sq: np.ndarray
    lap_integral: np.ndarray
    identity_residual: np.ndarray


def energy_report(traj):
    """|grad v(t)|^2_{L^2}, cumulative int |Delta v|^2_{L^2}, and energy-identity residuals."""
    if len(traj) == 0:
        raise EmptyTrajectory("empty trajectory")
    k2 = wavenumber_sq(traj.N)
    vol = (2 * np.pi) ** 3
    g = np.array([vol * float(np.sum(k2 * np.abs(f.coeffs) ** 2)) for f in traj.fields])
    lap = np.array([vol * float(np.sum(k2**2 * np.abs(f.coeffs) ** 2)) for f in traj.fields])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (lap[1:] + lap[:-1]) * np.diff(traj.times))])
    if "dissipation" in traj.diagnostics:
        res = energy_identity_residuals(traj)
    else:
        E = np.array([energy(f) for f in traj.fields])
        D = np.concatenate([[0.0], np.cumsum((g[1:] + g[:-1]) * np.diff(traj.times))])
        res = np.abs(E[1:] + D[1:] - D[:-1] - E[:-1]) / np.maximum(E[:-1], 1e-300)
    return EnergyReport(traj.times.copy(), g, cum, res)


def analyticity_radius(f, floor=1e-14):
    """Fit log(max |u_n| on the shell k <= |n| < k+1) = c - rate |n|; returns (rate, R^2).

    Uses dealiased shells k >= 1 whose maximal amplitude exceeds ``floor``.
    """
    amp = np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0))
    kn = np.sqrt(wavenumber_sq(f.N))
    mask = dealias_mask(f.N) & (kn > 0)
    kmax = int(np.floor(kn[mask].max()))
    xs, ys = [], []
    flat_amp = np.where(mask, amp, 0.0)
    bins = np.floor(kn).astype(int)
    for k in range(1, kmax + 1):
        sel = (bins == k) & mask
        if not np.any(sel):
            continue
        a = np.where(sel, flat_amp, -1.0)
        i = np.unravel_index(int(np.argmax(a)), a.shape)
        if a[i] > floor:
            xs.append(kn[i])
            ys.append(math.log(a[i]))
    if len(xs) < 4:
        raise DegenerateFit(f"only {len(xs)} usable shells")
    xs = np.array(xs)
    ys = np.array(ys)
    slope, icpt = np.polyfit(xs, ys, 1)
    pred = slope * xs + icpt
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return -float(slope), r2
