"""Critical-space norms: Carleson-measure BMO-type norms, Besov norms, space-time X/Y/Z norms.

Cylinders are Q(y0, r) = B(y0, r) x (0, r^2] on the torus with periodic distance.
Ball integrals use the mean over grid points inside the ball times the exact
ball volume, computed for every center at once as an FFT convolution.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from nslab.errors import BadExponent, BadExponents, EmptyTrajectory, NegativeTime, NonZeroMean
from nslab.spectral import (
    SpectralField,
    Trajectory,
    dealias_mask,
    fft_workers,
    gradient,
    laplacian,
    leray_project,
    product,
    require_mean_zero,
    tensor_divergence,
    wavenumber_sq,
    wavenumbers,
)


@dataclass(frozen=True)
class NormReport:
    name: str
    value: float
    argmax: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def csv_row(self):
        y0 = self.argmax.get("y0")
        return {
            "norm": self.name,
            "value": f"{self.value:.16g}",
            "argmax_y0": "" if y0 is None else ";".join(f"{c:.12g}" for c in y0),
            "argmax_r": "" if self.argmax.get("r") is None else f"{self.argmax['r']:.12g}",
            "grid": " ".join(f"{k}={v}" for k, v in sorted(self.metadata.items())),
        }


# -- cylinder machinery

@dataclass(frozen=True)
class CylinderGrid:
    """Centers, radii and time quadrature for discrete Carleson sups.

    ``radii`` are ascending. Each cylinder height (0, r^2] is split into dyadic
    levels (r^2/2^(l+1), r^2/2^l] down to ``t_floor`` plus a bottom piece
    (0, t_floor'], each integrated by a composite midpoint rule with
    ``nodes_per_level`` nodes.
    """

    N: int
    radii: tuple
    center_stride: int = 1
    nodes_per_level: int = 4
    t_floor: float = 0.0

    def __post_init__(self):
        radii = tuple(sorted(float(r) for r in self.radii))
        object.__setattr__(self, "radii", radii)
        if not radii:
            raise ValueError("need at least one radius")
        h = 2 * math.pi / self.N
        if radii[0] < min(h, radii[-1]) * (1 - 1e-12):
            raise ValueError(f"r_min {radii[0]:.4g} below grid resolution {h:.4g}")
        if radii[-1] > math.pi * (1 + 1e-12):
            raise ValueError("radii are capped at pi")
        if self.nodes_per_level < 4:
            raise ValueError("need at least 4 time nodes per level")
        if self.N % self.center_stride:
            raise ValueError("center stride must divide N")
        if self.t_floor <= 0:
            object.__setattr__(self, "t_floor", 0.15 / self.N**2)

    @classmethod
    def default(cls, N, r_max=math.pi, r_min=None, center_stride=1, nodes_per_level=4):
        """Radii r_max / 2^k for k = 0, 1, ... while >= r_min (default 2 pi / N)."""
        r_min = 2 * math.pi / N if r_min is None else r_min
        radii = [r_max]
        while radii[-1] / 2 >= r_min * (1 - 1e-12):
            radii.append(radii[-1] / 2)
        return cls(N, tuple(radii), center_stride, nodes_per_level)

    @property
    def r_min(self):
        return self.radii[0]

    @property
    def r_max(self):
        return self.radii[-1]

    def time_nodes(self, r):
        top = r * r
        levels = max(1, math.ceil(math.log2(top / self.t_floor))) if top > self.t_floor else 0
        p = self.nodes_per_level
        nodes, weights = [], []
        for lev in range(levels):
            hi = top / 2.0**lev
            lo = hi / 2
            w = (hi - lo) / p
            nodes.extend(lo + w * (np.arange(p) + 0.5))
            weights.extend([w] * p)
        lo = top / 2.0**levels
        w = lo / p
        nodes.extend(w * (np.arange(p) + 0.5))
        weights.extend([w] * p)
        return np.array(nodes), np.array(weights)

    def metadata(self):
        return {
            "N": self.N,
            "r_min": f"{self.r_min:.6g}",
            "r_max": f"{self.r_max:.6g}",
            "n_radii": len(self.radii),
            "stride": self.center_stride,
            "nodes_per_level": self.nodes_per_level,
        }


@functools.lru_cache(maxsize=64)
def _ball_kernel_hat(N, r):
    """rFFT of (ball indicator / grid points in ball) * ball volume."""
    x = 2 * np.pi * np.arange(N) / N
    d = np.minimum(x, 2 * np.pi - x)
    dist2 = d[:, None, None] ** 2 + d[None, :, None] ** 2 + d[None, None, :] ** 2
    ind = (dist2 <= r * r * (1 + 1e-12)).astype(float)
    kern = ind / ind.sum() * (4.0 / 3.0) * np.pi * r**3
    out = sfft.rfftn(kern, workers=fft_workers())
    out.setflags(write=False)
    return out


def ball_integrals(density, r):
    """int_{B(y0, r)} density dy for every grid point y0."""
    N = density.shape[-1]
    kh = _ball_kernel_hat(N, float(r))
    dh = sfft.rfftn(density, workers=fft_workers())
    return sfft.irfftn(dh * kh, s=density.shape, workers=fft_workers())


def _sup_over_centers(vals, stride):
    sub = vals[::stride, ::stride, ::stride]
    idx = np.unravel_index(int(np.argmax(sub)), sub.shape)
    return float(sub[idx]), tuple(int(i) * stride for i in idx)


def _y0(idx, N):
    return tuple(2 * np.pi * i / N for i in idx)


def _pointwise_sq(f):
    vals = f.to_physical()
    return np.sum(np.abs(vals) ** 2, axis=0)


def _carleson_heat(f, grid, density_of, r_exponent=3.0):
    """sup over (y0, r) of (r^-p int_Q density(W))^{1/2} for the heat extension W of f."""
    k2 = wavenumber_sq(f.N)
    cache = {}
    best = (-1.0, None, None)
    for r in grid.radii:
        nodes, weights = grid.time_nodes(r)
        acc = np.zeros((f.N,) * 3)
        for t, w in zip(nodes, weights):
            key = float(t)
            if key not in cache:
                cache[key] = density_of(f.with_coeffs(f.coeffs * np.exp(-k2 * t)))
            acc += w * cache[key]
        vals = np.maximum(ball_integrals(acc, r), 0.0) / r**r_exponent
        v, idx = _sup_over_centers(vals, grid.center_stride)
        if v > best[0]:
            best = (v, idx, r)
    return math.sqrt(best[0]), best[1], best[2]


def heat_extension(f, times):
    """W(t) = exp(t Delta) f at each requested time."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise NegativeTime("negative time in heat extension")
    if len(times) > 1 and np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted")
    k2 = wavenumber_sq(f.N)
    return Trajectory(times, [f.with_coeffs(f.coeffs * np.exp(-k2 * t)) for t in times])


def _grid_for(f, grid):
    return CylinderGrid.default(f.N) if grid is None else grid


def _require_mean_zero_norm(f):
    try:
        require_mean_zero(f)
    except NonZeroMean as exc:
        raise NonZeroMean(f"norm is infinite on the torus for nonzero mean: {exc}") from None


def bmo_minus1_norm(f, grid=None):
    """sup_{y0, r} (r^-3 int_Q |W|^2)^{1/2}, W the heat extension of f."""
    _require_mean_zero_norm(f)
    grid = _grid_for(f, grid)
    if not np.any(f.coeffs):
        return NormReport("bmo_minus1", 0.0, {"y0": None, "r": None}, grid.metadata())
    v, idx, r = _carleson_heat(f, grid, _pointwise_sq)
    return NormReport("bmo_minus1", v, {"y0": _y0(idx, f.N), "index": idx, "r": r}, grid.metadata())


def bmo_norm(f, grid=None):
    """sup_{y0, r} (r^-3 int_Q |grad W|^2)^{1/2}."""
    _require_mean_zero_norm(f)
    grid = _grid_for(f, grid)
    if not np.any(f.coeffs):
        return NormReport("bmo", 0.0, {"y0": None, "r": None}, grid.metadata())
    v, idx, r = _carleson_heat(f, grid, lambda w: _pointwise_sq(gradient(w)))
    return NormReport("bmo", v, {"y0": _y0(idx, f.N), "index": idx, "r": r}, grid.metadata())


def cylinder_value(f, index, r, grid, derivative=False):
    """Re-evaluate one cylinder (center grid index, radius); used to audit reported argmaxes."""
    k2 = wavenumber_sq(f.N)
    nodes, weights = grid.time_nodes(r)
    acc = np.zeros((f.N,) * 3)
    for t, w in zip(nodes, weights):
        g = f.with_coeffs(f.coeffs * np.exp(-k2 * t))
        acc += w * _pointwise_sq(gradient(g) if derivative else g)
    return math.sqrt(max(ball_integrals(acc, r)[tuple(index)], 0.0) / r**3)


def riesz_representatives(f):
    """g_i = -d_i (-Delta)^{-1} f, so that f = sum_i d_i g_i."""
    require_mean_zero(f)
    K = wavenumbers(f.N)
    k2 = wavenumber_sq(f.N)
    inv = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1, k2))
    return [f.with_coeffs(-1j * K[i] * inv * f.coeffs) for i in range(3)]


def bmo_minus2_upper(f, grid=None):
    """Upper bound for the BMO^-2 norm: sum_i bmo_minus1(g_i) over the Riesz representatives."""
    _require_mean_zero_norm(f)
    grid = _grid_for(f, grid)
    reps = riesz_representatives(f)
    parts = [bmo_minus1_norm(g, grid).value for g in reps]
    meta = dict(grid.metadata(), bound="upper", representative="riesz")
    return NormReport("bmo_minus2_upper", float(sum(parts)), {"parts": parts}, meta)


# -- Littlewood-Paley

def _bump(s):
    """C-infinity step: 1 for s <= 1/2, 0 for s >= 2, exp-smoothstep in between."""
    s = np.asarray(s, dtype=float)
    a = 2.0 - s
    b = s - 0.5
    fa = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
    fb = np.where(b > 0, np.exp(-1.0 / np.where(b > 0, b, 1.0)), 0.0)
    return fa / (fa + fb)


def lp_profile(xi):
    """psi(xi) = bump(|xi|/2) - bump(|xi|), supported in 1/2 < |xi| < 4."""
    xi = np.abs(np.asarray(xi, dtype=float))
    return _bump(xi / 2) - _bump(xi)


@dataclass(frozen=True)
class LPFilter:
    """Dyadic blocks psi(2^-j |n|) for j in ``levels`` covering every resolvable |n| >= 1."""

    N: int
    levels: tuple

    @classmethod
    def for_grid(cls, N):
        kmax = math.sqrt(3) * (N / 2)
        j_hi = math.ceil(math.log2(kmax))
        return cls(N, tuple(range(-1, j_hi + 1)))

    def weights(self, j):
        return _lp_weights(self.N, j)


@functools.lru_cache(maxsize=128)
def _lp_weights(N, j):
    w = lp_profile(np.sqrt(wavenumber_sq(N)) * 2.0 ** (-j))
    w.setflags(write=False)
    return w


def lp_block(f, j, filt=None):
    filt = LPFilter.for_grid(f.N) if filt is None else filt
    return f.with_coeffs(f.coeffs * filt.weights(j))


def besov_norm(f, s, q=math.inf, filt=None):
    """B^s_{inf,q}: ell^q over dyadic levels of 2^{js} |P_j f|_inf, q in {inf, 2}."""
    if q not in (math.inf, 2):
        raise ValueError("q must be inf or 2")
    filt = LPFilter.for_grid(f.N) if filt is None else filt
    terms = np.array([2.0 ** (j * s) * lp_block(f, j, filt).sup_norm() for j in filt.levels])
    if q == math.inf:
        i = int(np.argmax(terms))
        value = float(terms[i])
    else:
        i = int(np.argmax(terms))
        value = float(np.sqrt(np.sum(terms**2)))
    return NormReport(
        f"besov(s={s:g},q={'inf' if q == math.inf else 2})",
        value,
        {"level": filt.levels[i]},
        {"N": f.N, "levels": f"{filt.levels[0]}..{filt.levels[-1]}"},
    )


# -- bilinear symbol operator

def bilinear_symbol_op(g, h):
    """C_n = sum_{j+k=n} a_j b_k / (|j| + |k|), kept on the dealiased mode set.

    Scalars, or fields with matching component counts (applied componentwise).
    """
    if g.N != h.N:
        raise ValueError("grid mismatch")
    if g.components != h.components:
        raise ValueError("component mismatch")
    require_mean_zero(g, "g")
    require_mean_zero(h, "h")
    N = g.N
    K = wavenumbers(N).reshape(3, -1)
    kn = np.sqrt(wavenumber_sq(N).reshape(-1).astype(float))
    keep = dealias_mask(N).reshape(-1)
    out = np.zeros((g.components, N**3), dtype=complex)
    for c in range(g.components):
        a = g.coeffs[c].reshape(-1)
        b = h.coeffs[c].reshape(-1)
        ja = np.flatnonzero(a)
        kb = np.flatnonzero(b)
        if ja.size == 0 or kb.size == 0:
            continue
        Kb = K[:, kb]
        nb = kn[kb]
        bb = b[kb]
        acc = out[c]
        for j in ja:
            tgt = K[:, j : j + 1] + Kb
            inside = np.all(np.abs(tgt) <= N / 3, axis=0)
            if not np.any(inside):
                continue
            t = tgt[:, inside] % N
            flat = (t[0] * N + t[1]) * N + t[2]
            vals = a[j] * bb[inside] / (kn[j] + nb[inside])
            np.add.at(acc, flat, vals)
        out[c] = np.where(keep, acc, 0)
    real = g.real and h.real
    return SpectralField(out.reshape(g.components, N, N, N), real)


@dataclass(frozen=True)
class RatioReport:
    numerator: float
    denominator: float

    @property
    def ratio(self):
        if self.numerator == 0:
            return 0.0
        if self.denominator == 0:
            return math.inf
        return self.numerator / self.denominator


def besov_product_check(g, h, a, kappa, filt=None):
    """|F|_{B^kappa} / (|g|_{B^{kappa-1+a}} |h|_{B^{-a}}) with F the bilinear symbol product."""
    if not (0.5 < a < 1 and 0 < kappa < 1 - a):
        raise BadExponents(f"need 1/2 < a < 1 and 0 < kappa < 1 - a, got a={a}, kappa={kappa}")
    F = bilinear_symbol_op(g, h)
    num = besov_norm(F, kappa, filt=filt).value
    den = besov_norm(g, kappa - 1 + a, filt=filt).value * besov_norm(h, -a, filt=filt).value
    return RatioReport(num, den)


# -- space-time norms on trajectories

def _check_traj(traj):
    if len(traj) == 0:
        raise EmptyTrajectory("empty trajectory")


def interval_weights(times, upper):
    """Weights w_i with sum w_i g(t_i) = int_0^upper of the piecewise-linear interpolant.

    Below the first sample the interpolant is held constant.
    """
    times = np.asarray(times, dtype=float)
    w = np.zeros(len(times))
    if upper <= 0:
        return w
    t0 = times[0]
    if t0 > 0:
        w[0] += min(t0, upper)
    for i in range(len(times) - 1):
        a, b = times[i], times[i + 1]
        if a >= upper:
            break
        hi = min(b, upper)
        L = b - a
        # integrate the two hat functions over [a, hi]
        s = (hi - a) / L
        w[i] += L * (s - s * s / 2)
        w[i + 1] += L * (s * s / 2)
    return w


def _radii_for_horizon(N, T):
    top = min(math.sqrt(T), math.pi)
    h = 2 * math.pi / N
    radii = [top]
    while radii[-1] / 2 >= h * (1 - 1e-12):
        radii.append(radii[-1] / 2)
    return radii


def _carleson_traj(dens, times, radii, r_exponent, power, stride=1):
    best = (-1.0, None, None)
    for r in radii:
        w = interval_weights(times, r * r)
        acc = np.zeros(dens[0].shape)
        for wi, d in zip(w, dens):
            if wi:
                acc += wi * d
        vals = np.maximum(ball_integrals(acc, r), 0.0) / r**r_exponent
        v, idx = _sup_over_centers(vals, stride)
        if v > best[0]:
            best = (v, idx, r)
    return best[0] ** power, best[1], best[2]


def _space_time_norm(name, traj, T, sup_weight, dens_fn, r_exponent, power, extra=None):
    _check_traj(traj)
    if T <= 0:
        raise BadExponent("horizon must be positive")
    traj = traj.restrict(T)
    _check_traj(traj)
    times = traj.times
    sup_vals = []
    dens = []
    for t, f in zip(times, traj.fields):
        d = dens_fn(f)
        dens.append(d)
        pw = np.sqrt(d) if power == 0.5 else d
        sup_vals.append(sup_weight(t) * float(np.max(pw)) if t > 0 else 0.0)
    sup_part = float(max(sup_vals))
    radii = _radii_for_horizon(traj.N, T)
    carl, idx, r = _carleson_traj(dens, times, radii, r_exponent, power)
    meta = {"N": traj.N, "T": f"{T:.6g}", "samples": len(times), "n_radii": len(radii)}
    if extra:
        meta.update(extra)
    return NormReport(
        name,
        sup_part + carl,
        {"t": float(times[int(np.argmax(sup_vals))]), "y0": _y0(idx, traj.N), "r": r},
        dict(meta, sup_part=f"{sup_part:.10g}", carleson_part=f"{carl:.10g}"),
    )


def x_norm(traj, T):
    """sup t^{1/2} |g|_inf + sup_{r <= sqrt T} (r^-3 int_Q |g|^2)^{1/2}."""
    return _space_time_norm("X", traj, T, lambda t: math.sqrt(t), _pointwise_sq, 3.0, 0.5)


def y_norm(traj, T):
    """sup t |g|_inf + sup_{r <= sqrt T} r^-3 int_Q |g|."""
    dens = lambda f: np.sqrt(_pointwise_sq(f))  # noqa: E731
    return _space_time_norm("Y", traj, T, lambda t: t, dens, 3.0, 1.0)


def z_norm(traj, T, d):
    """sup t^{(1-d)/2} |g|_inf + sup_{r <= sqrt T} (r^-(1+2d) int_Q |g|^2)^{1/2}, 0 < d < 1."""
    if not 0 < d < 1:
        raise BadExponent(f"need 0 < d < 1, got {d}")
    return _space_time_norm(
        f"Z(d={d:g})", traj, T, lambda t: t ** ((1 - d) / 2), _pointwise_sq, 1 + 2 * d, 0.5
    )


def heat_time_derivative(f):
    return laplacian(f)


def ns_time_derivative(f):
    """du/dt = Delta u - P div(u (x) u) for a velocity field u."""
    return laplacian(f) - leray_project(tensor_divergence(product(f, f)))


def _time_derivatives(traj, m, mode):
    if m == 0:
        return list(traj.fields)
    if mode == "heat":
        out = list(traj.fields)
        for _ in range(m):
            out = [heat_time_derivative(f) for f in out]
        return out
    if mode == "navier_stokes":
        if m > 1:
            return _divided(traj, _time_derivatives(traj, 1, mode), m - 1)
        return [ns_time_derivative(f) for f in traj.fields]
    if mode == "divided":
        return _divided(traj, list(traj.fields), m)
    raise ValueError(f"unknown time-derivative mode {mode!r}")


def _divided(traj, fields, m):
    t = traj.times
    for _ in range(m):
        if len(t) < 3:
            raise EmptyTrajectory("need >= 3 samples for divided differences")
        coeffs = np.gradient(np.stack([f.coeffs for f in fields]), t, axis=0, edge_order=2)
        fields = [traj.fields[0].with_coeffs(c) for c in coeffs]
    return fields


def xmk_norm(traj, T, M, K, time_derivative="heat"):
    """Sum over m <= M, k <= K of the weighted sup part and Carleson part of d_t^m grad^k g."""
    _check_traj(traj)
    if M < 0 or K < 0 or M > 2 or K > 2:
        raise BadExponent("need 0 <= M, K <= 2")
    traj = traj.restrict(T)
    _check_traj(traj)
    total = 0.0
    parts = {}
    radii = _radii_for_horizon(traj.N, T)
    for m in range(M + 1):
        dt_fields = _time_derivatives(traj, m, time_derivative)
        for k in range(K + 1):
            dens = []
            sup_vals = []
            for t, f in zip(traj.times, dt_fields):
                g = f
                for _ in range(k):
                    g = gradient(g)
                d = _pointwise_sq(g)
                dens.append(d * t ** (k + 2 * m))
                sup_vals.append(t ** ((k + 1) / 2 + m) * math.sqrt(float(np.max(d))))
            sup_part = max(sup_vals)
            carl, _, _ = _carleson_traj(dens, traj.times, radii, 3.0, 0.5)
            parts[(m, k)] = (sup_part, carl)
            total += sup_part + carl
    meta = {"N": traj.N, "T": f"{T:.6g}", "M": M, "K": K, "mode": time_derivative}
    return NormReport(f"X^(M={M},K={K})", total, {"parts": parts}, meta)


def heat_sup_l2_in_time(f, T, n_nodes=256):
    """(int_0^T |exp(t Delta) f|_inf^2 dt)^{1/2} by the midpoint rule on a geometric mesh."""
    k2 = wavenumber_sq(f.N)
    t_lo = min(T, 1e-4 / max(1, k2.max()))
    edges = np.concatenate([[0.0], np.geomspace(t_lo, T, n_nodes)])
    mids = 0.5 * (edges[1:] + edges[:-1])
    widths = np.diff(edges)
    total = 0.0
    for t, w in zip(mids, widths):
        total += w * f.with_coeffs(f.coeffs * np.exp(-k2 * t)).sup_norm() ** 2
    return math.sqrt(total)
