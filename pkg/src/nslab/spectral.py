"""Fourier representation of periodic fields on the torus and the linear operators on it.

A field is stored as its Fourier coefficients ``coeffs[c, i, j, k]`` with
``u_c(x) = sum_n coeffs[c, n] exp(i n.x)`` on the periodic box of side 2*pi.
Axis index ``i`` maps to wavenumber ``i`` for ``i <= N/2`` and ``i - N`` above,
so the resolved modes are ``-N/2+1 .. N/2`` in every direction.
"""

from __future__ import annotations

import functools
import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from numpy.polynomial import hermite as _herm

from nslab.errors import (
    EmptyTrajectory,
    NegativeTime,
    NonPositiveTime,
    NonZeroMean,
    NotDivergenceFree,
)

MEAN_TOL = 1e-12
DIV_TOL = 1e-10


def fft_workers():
    """Worker count for scipy.fft, capped by NSLB_THREADS."""
    value = os.environ.get("NSLB_THREADS")
    if not value:
        return 1
    return max(1, int(value))


def _fftn(a):
    return sfft.fftn(a, axes=(-3, -2, -1), workers=fft_workers())


def _ifftn(a):
    return sfft.ifftn(a, axes=(-3, -2, -1), workers=fft_workers())


@functools.lru_cache(maxsize=16)
def wavenumbers_1d(N):
    k = np.fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        k[N // 2] = N // 2
    return k.astype(np.int64)


@functools.lru_cache(maxsize=16)
def wavenumbers(N):
    """Integer wavevector grid, shape (3, N, N, N)."""
    k = wavenumbers_1d(N)
    K = np.array(np.meshgrid(k, k, k, indexing="ij"))
    K.setflags(write=False)
    return K


@functools.lru_cache(maxsize=16)
def wavenumber_sq(N):
    K = wavenumbers(N)
    k2 = (K * K).sum(axis=0)
    k2.setflags(write=False)
    return k2


@functools.lru_cache(maxsize=16)
def dealias_mask(N):
    k = np.abs(wavenumbers_1d(N))
    keep = k <= N / 3
    mask = keep[:, None, None] & keep[None, :, None] & keep[None, None, :]
    mask.setflags(write=False)
    return mask


def physical_grid(N):
    """Grid points x_j = 2*pi*j/N, shape (3, N, N, N)."""
    x = 2 * np.pi * np.arange(N) / N
    return np.array(np.meshgrid(x, x, x, indexing="ij"))


def reflect(arr):
    """Return a with a[..., n] -> a[..., -n] on the last three axes."""
    out = np.flip(arr, axis=(-3, -2, -1))
    return np.roll(out, 1, axis=(-3, -2, -1))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Truncated Fourier representation of a scalar, vector or tensor field.

    ``coeffs`` has shape ``(components, N, N, N)``. Operations never mutate it.
    """

    coeffs: np.ndarray
    real: bool = True
    label: str = ""

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim == 3:
            c = c[None]
        if c.ndim != 4 or not (c.shape[1] == c.shape[2] == c.shape[3]):
            raise ValueError(f"coeffs must have shape (C, N, N, N), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    # -- construction

    @classmethod
    def zeros(cls, N, components=3, real=True, label=""):
        return cls(np.zeros((components, N, N, N), dtype=np.complex128), real, label)

    @classmethod
    def from_physical(cls, values, label=""):
        values = np.asarray(values)
        if values.ndim == 3:
            values = values[None]
        N = values.shape[-1]
        real = not np.iscomplexobj(values)
        return cls(_fftn(values) / N**3, real=real, label=label)

    # -- shape

    @property
    def N(self):
        return self.coeffs.shape[-1]

    @property
    def components(self):
        return self.coeffs.shape[0]

    @property
    def mean(self):
        return self.coeffs[:, 0, 0, 0]

    def to_physical(self):
        vals = _ifftn(self.coeffs) * self.N**3
        return vals.real if self.real else vals

    def with_coeffs(self, coeffs, real=None, label=None):
        return SpectralField(
            coeffs,
            self.real if real is None else real,
            self.label if label is None else label,
        )

    # -- arithmetic

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs, real=self.real and other.real)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs, real=self.real and other.real)

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, c):
        real = self.real and np.isrealobj(c)
        return self.with_coeffs(self.coeffs * c, real=real)

    __rmul__ = __mul__

    def component(self, i):
        return self.with_coeffs(self.coeffs[i : i + 1])

    # -- diagnostics

    def l2_coeff(self):
        """ell^2 norm of the coefficient array."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def l2(self):
        """L^2 norm over the torus, (2 pi)^{3/2} times the coefficient norm."""
        return (2 * np.pi) ** 1.5 * self.l2_coeff()

    def sup_norm(self):
        """Max over grid points of the pointwise Euclidean magnitude."""
        vals = self.to_physical()
        return float(np.sqrt(np.max(np.sum(np.abs(vals) ** 2, axis=0))))

    def hermitian_residual(self):
        c = self.coeffs
        scale = max(np.max(np.abs(c)), 1e-300)
        return float(np.max(np.abs(c - np.conj(reflect(c)))) / scale)

    def div_residual(self):
        """max |n . u_n| relative to max |n| |u_n|; 0 for the zero field."""
        if self.components != 3:
            raise ValueError("divergence needs 3 components")
        K = wavenumbers(self.N)
        div = np.abs(np.einsum("ixyz,ixyz->xyz", K, self.coeffs))
        scale = np.max(np.sqrt(wavenumber_sq(self.N)) * np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0)))
        if scale == 0:
            return 0.0
        return float(np.max(div) / scale)

    def is_mean_zero(self, tol=MEAN_TOL):
        scale = np.max(np.abs(self.coeffs))
        return bool(np.all(np.abs(self.mean) <= tol * max(scale, 1e-300)))

    def symmetrized(self):
        """Closest Hermitian-symmetric field (the real part in physical space)."""
        c = 0.5 * (self.coeffs + np.conj(reflect(self.coeffs)))
        return self.with_coeffs(c, real=True)


def require_mean_zero(f, what="field"):
    if not f.is_mean_zero():
        raise NonZeroMean(f"{what} has nonzero mean {np.abs(f.mean).max():.3e}")


def require_div_free(f, tol=DIV_TOL, what="field"):
    r = f.div_residual()
    if r > tol:
        raise NotDivergenceFree(f"{what} divergence residual {r:.3e} > {tol:.1e}")


def _require3(f):
    if f.components != 3:
        raise ValueError(f"expected 3 components, got {f.components}")


# -- linear operators

def leray_project(f):
    """Apply delta_ij - n_i n_j / |n|^2 mode by mode; the n=0 mode passes through."""
    _require3(f)
    K = wavenumbers(f.N)
    k2 = wavenumber_sq(f.N)
    inv = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1, k2))
    ndotu = np.einsum("ixyz,ixyz->xyz", K, f.coeffs)
    return f.with_coeffs(f.coeffs - K * (ndotu * inv))


def divergence(f):
    _require3(f)
    K = wavenumbers(f.N)
    return f.with_coeffs(1j * np.einsum("ixyz,ixyz->xyz", K, f.coeffs)[None])


def gradient(f):
    """Gradient of each component; a scalar gives 3 components, a vector 9 (row-major i, j -> d_j f_i)."""
    K = wavenumbers(f.N)
    out = 1j * f.coeffs[:, None] * K[None]
    return f.with_coeffs(out.reshape(-1, f.N, f.N, f.N))


def curl(f):
    _require3(f)
    K = wavenumbers(f.N)
    c = f.coeffs
    out = np.empty_like(c)
    out[0] = 1j * (K[1] * c[2] - K[2] * c[1])
    out[1] = 1j * (K[2] * c[0] - K[0] * c[2])
    out[2] = 1j * (K[0] * c[1] - K[1] * c[0])
    return f.with_coeffs(out)


def laplacian(f):
    return f.with_coeffs(-wavenumber_sq(f.N) * f.coeffs)


def inverse_laplacian(f):
    """(-Delta)^{-1} on mean-zero fields."""
    require_mean_zero(f)
    k2 = wavenumber_sq(f.N)
    inv = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1, k2))
    return f.with_coeffs(f.coeffs * inv)


def inverse_curl(f):
    """(-Delta)^{-1} curl, the inverse of curl on divergence-free mean-zero fields."""
    _require3(f)
    require_mean_zero(f)
    require_div_free(f)
    return inverse_laplacian(curl(f))


def heat_semigroup(f, t):
    """exp(t Delta): multiply mode n by exp(-|n|^2 t)."""
    if t < 0:
        raise NegativeTime(f"t = {t} < 0")
    if t == 0:
        return f
    return f.with_coeffs(f.coeffs * np.exp(-wavenumber_sq(f.N) * t))


def fractional_laplacian(f, s):
    """(-Delta)^{s/2}: multiply mode n by |n|^s; mode 0 is zeroed for s<0, kept for s>=0."""
    k2 = wavenumber_sq(f.N).astype(float)
    if s < 0:
        require_mean_zero(f)
        mult = np.where(k2 == 0, 0.0, np.where(k2 == 0, 1.0, k2) ** (s / 2))
    elif s == 0:
        return f
    else:
        mult = k2 ** (s / 2)
        mult[0, 0, 0] = 1.0
    return f.with_coeffs(f.coeffs * mult)


def dealias(f):
    """Zero every mode with some |n_i| > N/3."""
    return f.with_coeffs(np.where(dealias_mask(f.N), f.coeffs, 0))


# -- products

def _phys(f):
    c = np.where(dealias_mask(f.N), f.coeffs, 0)
    if f.real:
        h = f.N // 2 + 1
        return sfft.irfftn(c[..., :h], s=(f.N,) * 3, axes=(-3, -2, -1), workers=fft_workers()) * f.N**3
    return _ifftn(c) * f.N**3


@functools.lru_cache(maxsize=16)
def _mirror_index(N):
    r = (-np.arange(N)) % N
    return r[:, None, None], r[None, :, None], r[None, None, N // 2 + 1:]


def _spec(values, real):
    N = values.shape[-1]
    if real:
        half = sfft.rfftn(values, axes=(-3, -2, -1), workers=fft_workers()) / N**3
        h = N // 2 + 1
        c = np.empty(values.shape[:-1] + (N,), dtype=complex)
        c[..., :h] = half
        i, j, k = _mirror_index(N)
        c[..., h:] = np.conj(half[..., i, j, k])
    else:
        c = _fftn(values) / N**3
    return np.where(dealias_mask(N), c, 0)


def product(f, g):
    """Dealiased componentwise product f_i g_j, shape (Cf*Cg), row-major in (i, j)."""
    a, b = _phys(f), _phys(g)
    vals = (a[:, None] * b[None]).reshape(-1, f.N, f.N, f.N)
    real = f.real and g.real
    return SpectralField(_spec(vals.real if real else vals, real), real)


def dot(f, g):
    a, b = _phys(f), _phys(g)
    vals = np.sum(a * b, axis=0)
    real = f.real and g.real
    return SpectralField(_spec(vals.real if real else vals, real), real)


def cross(f, g):
    _require3(f)
    _require3(g)
    a, b = _phys(f), _phys(g)
    vals = np.cross(a, b, axis=0)
    real = f.real and g.real
    return SpectralField(_spec(vals.real if real else vals, real), real)


def advect(b, h):
    """(b . grad) h, dealiased."""
    _require3(b)
    _require3(h)
    a = _phys(b)
    gh = _phys(gradient(h)).reshape(3, 3, b.N, b.N, b.N)
    vals = np.einsum("jxyz,ijxyz->ixyz", a, gh)
    real = b.real and h.real
    return SpectralField(_spec(vals.real if real else vals, real), real)


def tensor_divergence(G):
    """Row divergence (div G)_i = d_j G_ij of a 9-component tensor."""
    if G.components != 9:
        raise ValueError("tensor must have 9 components")
    K = wavenumbers(G.N)
    c = G.coeffs.reshape(3, 3, G.N, G.N, G.N)
    return G.with_coeffs(1j * np.einsum("jxyz,ijxyz->ixyz", K, c))


def rotation_form_identity(b, h):
    """Sup-norm of (b.grad h + h.grad b) - (-b x curl h - h x curl b + grad(b.h)).

    Every product is dealiased, so both sides are truncations of the same exact
    products and the residual sits at rounding level.
    """
    require_div_free(b, what="b")
    require_div_free(h, what="h")
    lhs = advect(b, h) + advect(h, b)
    rhs = -cross(b, curl(h)) - cross(h, curl(b)) + gradient(dot(b, h))
    return (lhs - rhs).sup_norm()


# -- heat kernel derivatives

@dataclass(frozen=True)
class HeatKernelValue:
    """Derivatives d_t^m d^alpha of the 3-D heat kernel keyed by multi-index alpha."""

    values: dict
    discrepancy: float


def multi_indices(k, dim=3):
    return [a for a in itertools.product(range(k + 1), repeat=dim) if sum(a) == k]


def _gauss_deriv_1d(a, x, t):
    # d^a/dx^a exp(-x^2/4t) = (-1)^a (4t)^{-a/2} H_a(x / 2 sqrt t) exp(-x^2/4t)
    y = x / (2 * math.sqrt(t))
    coef = np.zeros(a + 1)
    coef[a] = 1.0
    return (-1) ** a * (4 * t) ** (-a / 2) * _herm.hermval(y, coef) * math.exp(-y * y)


def _kernel_by_recursion(x, t, m, alpha):
    # d_t K = Delta K, so d_t^m d^alpha K = d^alpha Delta^m K; expand Delta^m multinomially.
    total = 0.0
    for beta in multi_indices(m):
        mult = math.factorial(m) // math.prod(math.factorial(b) for b in beta)
        orders = [alpha[i] + 2 * beta[i] for i in range(3)]
        term = t ** (-1.5)
        for i in range(3):
            term *= _gauss_deriv_1d(orders[i], x[i], t)
        total += mult * term
    return total


@functools.lru_cache(maxsize=None)
def factor_polynomial(m, alpha):
    """Polynomial J with d_t^m d^alpha K = t^{-(m+k/2)} K J(x/sqrt t), as a sympy expression in xi."""
    import sympy as sp

    t = sp.symbols("t", positive=True)
    xs = sp.symbols("x1:4", real=True)
    xis = sp.symbols("xi1:4", real=True)
    K = t ** sp.Rational(-3, 2) * sp.exp(-(xs[0] ** 2 + xs[1] ** 2 + xs[2] ** 2) / (4 * t))
    d = K
    for _ in range(m):
        d = sp.diff(d, t)
    for i, a in enumerate(alpha):
        if a:
            d = sp.diff(d, xs[i], a)
    k = sum(alpha)
    J = sp.simplify(d / K * t ** (m + sp.Rational(k, 2)))
    J = sp.expand(J.subs({xs[i]: xis[i] * sp.sqrt(t) for i in range(3)}))
    if t in J.free_symbols:
        raise AssertionError("factor polynomial depends on t")
    return J, xis


def heat_kernel_eval(x, t, m, k):
    """Evaluate d_t^m grad^k of K(x,t) = t^{-3/2} exp(-|x|^2/4t) two ways.

    Returns the Hermite-recursion values and the max relative discrepancy
    against the factorized form t^{-(m+k/2)} K(x,t) J(x/sqrt t).
    """
    if t <= 0:
        raise NonPositiveTime(f"t = {t} must be positive")
    if m < 0 or k < 0 or m + k > 4:
        raise ValueError("need m, k >= 0 and m + k <= 4")
    x = tuple(float(v) for v in x)
    K = t ** (-1.5) * math.exp(-sum(v * v for v in x) / (4 * t))
    values = {}
    worst = 0.0
    for alpha in multi_indices(k):
        v = _kernel_by_recursion(x, t, m, alpha)
        J, xis = factor_polynomial(m, alpha)
        jv = float(J.subs({xis[i]: x[i] / math.sqrt(t) for i in range(3)}))
        w = t ** (-(m + k / 2)) * K * jv
        scale = max(abs(v), abs(w))
        if scale > 0:
            worst = max(worst, abs(v - w) / scale)
        values[alpha] = v
    return HeatKernelValue(values, worst)


# -- time series of fields

@dataclass
class Trajectory:
    """Time-stamped fields plus per-time scalar diagnostics."""

    times: np.ndarray
    fields: list
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.fields):
            raise ValueError("times and fields differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def N(self):
        if not self.fields:
            raise EmptyTrajectory("trajectory has no samples")
        return self.fields[0].N

    def map(self, fn):
        return Trajectory(self.times.copy(), [fn(f) for f in self.fields])

    def restrict(self, t_max):
        keep = self.times <= t_max * (1 + 1e-12)
        return Trajectory(self.times[keep], [f for f, k in zip(self.fields, keep) if k])


def dyadic_times(T, t_min, per_level=8, include_zero=True):
    """Geometric mesh with ``per_level`` points per factor of 2, from t_min to T."""
    if T <= 0 or t_min <= 0:
        raise NegativeTime("times must be positive")
    levels = max(1, math.ceil(math.log2(T / t_min)))
    ts = T * 2.0 ** (-np.arange(levels * per_level, -1, -1) / per_level)
    if include_zero:
        ts = np.concatenate([[0.0], ts])
    return ts


def heat_flow(f, times):
    """Trajectory of exp(t Delta) f at the given times."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise NegativeTime("negative time in heat flow")
    k2 = wavenumber_sq(f.N)
    return Trajectory(times, [f.with_coeffs(f.coeffs * np.exp(-k2 * t)) for t in times])


def random_field(N, seed, kmax=4, components=3, solenoidal=True, decay=1.0):
    """Seeded real mean-zero field on modes |n_i| <= kmax with Gaussian-damped amplitudes.

    Amplitudes are drawn on the fixed (2 kmax + 1)^3 block before embedding,
    so the same seed gives the same continuous field on every grid that fits it.
    """
    if 3 * kmax > N:
        raise ValueError(f"kmax={kmax} is not dealiased on an N={N} grid")
    rng = np.random.default_rng(seed)
    shape = (components,) + (2 * kmax + 1,) * 3
    block = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    r = np.arange(-kmax, kmax + 1)
    k2 = r[:, None, None] ** 2 + r[None, :, None] ** 2 + r[None, None, :] ** 2
    block *= np.exp(-decay * k2 / (kmax * kmax))
    coeffs = np.zeros((components, N, N, N), dtype=complex)
    idx = r % N
    coeffs[np.ix_(range(components), idx, idx, idx)] = block
    coeffs[:, 0, 0, 0] = 0
    f = SpectralField(coeffs, real=False).symmetrized()
    if solenoidal and components == 3:
        f = leray_project(f)
    return f
