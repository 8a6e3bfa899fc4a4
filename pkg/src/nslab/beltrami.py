"""Curl eigenfunctions on lattice shells and the helical splits of divergence-free fields."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from nslab.errors import EmptyShell, UnorderedRadii, ZeroWavevector
from nslab.spectral import (
    SpectralField,
    curl,
    fractional_laplacian,
    require_div_free,
    require_mean_zero,
    wavenumber_sq,
    wavenumbers,
)


def is_three_square_exception(m):
    """True when m = 4^a (8b + 7), i.e. m is not a sum of three squares."""
    if m <= 0:
        return False
    while m % 4 == 0:
        m //= 4
    return m % 8 == 7


@functools.lru_cache(maxsize=None)
def _shell(m):
    r = math.isqrt(m)
    rng = np.arange(-r, r + 1)
    a, b, c = np.meshgrid(rng, rng, rng, indexing="ij")
    hit = a * a + b * b + c * c == m
    return tuple(zip(a[hit].tolist(), b[hit].tolist(), c[hit].tolist()))


def lattice_shell(lambda_sq):
    """All n in Z^3 with |n|^2 = lambda_sq, in lexicographic order."""
    m = int(lambda_sq)
    if m != lambda_sq or m < 1:
        raise ValueError(f"lambda_sq must be a positive integer, got {lambda_sq}")
    if is_three_square_exception(m):
        raise EmptyShell(f"{m} is not a sum of three squares")
    return list(_shell(m))


def _helical_arrays(n):
    """Vectorized helical pair for wavevectors n of shape (3, ...); zero where n = 0.

    e1 = normalize(n x a) with a = e_z, or e_x when n is parallel to e_z;
    e2 = n_hat x e1; h+ = (e1 + i e2)/sqrt 2 rotated so its first nonzero
    component is real positive; h- = conj(h+).
    """
    n = np.asarray(n, dtype=float)
    shape = n.shape[1:]
    norm = np.sqrt(np.sum(n * n, axis=0))
    along_z = (n[0] == 0) & (n[1] == 0)
    a = np.zeros_like(n)
    a[2] = np.where(along_z, 0.0, 1.0)
    a[0] = np.where(along_z, 1.0, 0.0)
    e1 = np.cross(n, a, axis=0)
    e1_norm = np.sqrt(np.sum(e1 * e1, axis=0))
    safe = np.where(norm == 0, 1.0, norm)
    e1 = e1 / np.where(e1_norm == 0, 1.0, e1_norm)
    e2 = np.cross(n / safe, e1, axis=0)
    h = (e1 + 1j * e2) / math.sqrt(2)
    # phase: make the first component with |h_c| > 1e-12 real and positive
    mag = np.abs(h)
    first = np.argmax(mag > 1e-12, axis=0)
    pivot = np.take_along_axis(h, first[None], axis=0)[0]
    pm = np.abs(pivot)
    phase = np.where(pm == 0, 1.0, np.conj(pivot) / np.where(pm == 0, 1.0, pm))
    hp = h * phase
    hp = np.where(norm == 0, 0.0, hp)
    return hp.reshape((3,) + shape), np.conj(hp).reshape((3,) + shape)


def helical_basis(n):
    """Unit vectors (h+, h-) with i n x h(+/-) = +/-|n| h(+/-)."""
    n = np.asarray(n, dtype=float).reshape(3)
    if not np.any(n):
        raise ZeroWavevector("helical basis undefined at n = 0")
    hp, hm = _helical_arrays(n)
    return hp, hm


@functools.lru_cache(maxsize=16)
def helical_grid(N):
    """h+ and h- for every wavevector of an N^3 grid, shape (3, N, N, N) each."""
    hp, hm = _helical_arrays(wavenumbers(N))
    hp.setflags(write=False)
    hm.setflags(write=False)
    return hp, hm


@dataclass(frozen=True)
class ShellBasis:
    lambda_sq: int
    wavevectors: list
    helical_pairs: list

    @classmethod
    def build(cls, lambda_sq):
        vecs = lattice_shell(lambda_sq)
        return cls(int(lambda_sq), vecs, [helical_basis(n) for n in vecs])


@dataclass(frozen=True)
class HelicalDecomposition:
    """Per-mode amplitudes a+(n), a-(n) on an N^3 grid; u = sum a+ h+ e^{inx} + a- h- e^{inx}."""

    plus: np.ndarray
    minus: np.ndarray
    mean: np.ndarray
    real: bool

    @classmethod
    def of(cls, u):
        hp, hm = helical_grid(u.N)
        ap = np.einsum("ixyz,ixyz->xyz", np.conj(hp), u.coeffs)
        am = np.einsum("ixyz,ixyz->xyz", np.conj(hm), u.coeffs)
        return cls(ap, am, u.coeffs[:, 0, 0, 0].copy(), u.real)

    @property
    def N(self):
        return self.plus.shape[-1]

    def part(self, sign):
        hp, hm = helical_grid(self.N)
        c = self.plus * hp if sign > 0 else self.minus * hm
        return SpectralField(c, self.real)

    def reconstruct(self):
        hp, hm = helical_grid(self.N)
        c = self.plus * hp + self.minus * hm
        c[:, 0, 0, 0] = self.mean
        return SpectralField(c, self.real)


def _shell_fits(vecs, N):
    return max(max(abs(c) for c in n) for n in vecs) < N / 2


def _index(n, N):
    return tuple(int(c) % N for c in n)


def beltrami_field(lambda_sq, N, amplitudes=None, sign=1, seed=None, real=True, label=""):
    """Field with curl phi = sign * sqrt(lambda_sq) * phi supported on one lattice shell.

    ``amplitudes`` is a sequence aligned with ``lattice_shell(lambda_sq)`` or a
    scalar. Without amplitudes, ``seed`` draws complex standard normals from
    numpy's PCG64 generator (``default_rng``); with neither, all amplitudes are 1.
    Real fields are Hermitian-symmetrized, which keeps every mode on its helicity.
    """
    vecs = lattice_shell(lambda_sq)
    if not _shell_fits(vecs, N):
        raise ValueError(f"shell |n|^2={lambda_sq} does not fit an N={N} grid")
    if amplitudes is None:
        if seed is None:
            amps = np.ones(len(vecs), dtype=complex)
        else:
            rng = np.random.default_rng(seed)
            amps = rng.standard_normal(len(vecs)) + 1j * rng.standard_normal(len(vecs))
    else:
        amps = np.broadcast_to(np.asarray(amplitudes, dtype=complex), (len(vecs),))
    hp, hm = helical_grid(N)
    h = hp if sign > 0 else hm
    coeffs = np.zeros((3, N, N, N), dtype=complex)
    for a, n in zip(amps, vecs):
        idx = _index(n, N)
        coeffs[(slice(None),) + idx] = a * h[(slice(None),) + idx]
    f = SpectralField(coeffs, real=False, label=label or f"beltrami(l2={lambda_sq},{'+' if sign > 0 else '-'})")
    return f.symmetrized() if real else f


def beltrami_from_potential(u03):
    """curl u03 + (-Delta)^{1/2} u03, which satisfies curl u = (-Delta)^{1/2} u."""
    require_div_free(u03, what="u03")
    return curl(u03) + fractional_laplacian(u03, 1.0)


def split_pm(u0):
    """(u0+, u0-) = (u0 +/- (-Delta)^{-1/2} curl u0) / 2."""
    require_mean_zero(u0, "u0")
    require_div_free(u0, what="u0")
    r = fractional_laplacian(curl(u0), -1.0)
    return 0.5 * (u0 + r), 0.5 * (u0 - r)


def split_pm_eigen(u0):
    """Same split computed from helical amplitudes; independent of split_pm."""
    require_mean_zero(u0, "u0")
    require_div_free(u0, what="u0")
    dec = HelicalDecomposition.of(u0)
    return dec.part(+1), dec.part(-1)


def band_mask(N, lam):
    """Modes with lam/2 < |n| < 2 lam (strict on both ends)."""
    k2 = wavenumber_sq(N).astype(float)
    lam_sq = float(lam) ** 2
    slack = 1e-12 * max(lam_sq, 1.0)
    return (4 * k2 > lam_sq + slack) & (k2 < 4 * lam_sq - slack)


def band_split(u0, lam):
    """(u1+, u2+, u0-): + helicity outside / inside the open band (lam/2, 2 lam), and the - part."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    plus, minus = split_pm(u0)
    mask = band_mask(u0.N, lam)
    u2p = plus.with_coeffs(np.where(mask, plus.coeffs, 0))
    u1p = plus - u2p
    return u1p, u2p, minus


def eigen_residuals(phi, lam):
    """(|curl phi - lam phi|_inf, |-Delta phi - lam^2 phi|_inf) relative to |phi|_inf."""
    s = phi.sup_norm()
    if s == 0:
        return 0.0, 0.0
    r1 = (curl(phi) - lam * phi).sup_norm() / s
    lap = phi.with_coeffs(wavenumber_sq(phi.N) * phi.coeffs)
    r2 = (lap - lam**2 * phi).sup_norm() / s
    return r1, r2


@dataclass(frozen=True)
class AdmissibilityReport:
    """Ordering and closeness conditions on shell radii lambda_1 < ... < lambda_N."""

    radii: tuple
    b: float
    epsilon: float
    ordered: bool
    closeness_lhs: float
    closeness_rhs: float

    @property
    def admissible(self):
        return self.ordered and self.closeness_lhs <= self.closeness_rhs

    header = ("radii", "b", "epsilon", "ordered", "spread", "bound", "verdict")

    def csv_row(self):
        return (
            ";".join(f"{r:.12g}" for r in self.radii),
            f"{self.b:.12g}",
            f"{self.epsilon:.12g}",
            str(self.ordered).lower(),
            f"{self.closeness_lhs:.12g}",
            f"{self.closeness_rhs:.12g}",
            "admissible" if self.admissible else "inadmissible",
        )


def admissibility(lambda_sqs, b, epsilon):
    radii = tuple(math.sqrt(m) for m in lambda_sqs)
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise UnorderedRadii(f"radii must be strictly increasing: {radii}")
    ordered = radii[0] >= 1
    lhs = radii[-1] - radii[0]
    rhs = epsilon * radii[0] ** (1 - b)
    return AdmissibilityReport(radii, float(b), float(epsilon), ordered, lhs, rhs)


def corollary18_data(lambda_sqs, N, amplitudes=None, b=0.5, epsilon=0.5, u02=None, seed=None):
    """u0 = sum_i phi_i + u02 with phi_i Beltrami on shell lambda_sqs[i], plus the admissibility report.

    ``amplitudes`` gives one scale factor per shell (default 1).
    """
    lambda_sqs = [int(m) for m in lambda_sqs]
    report = admissibility(lambda_sqs, b, epsilon)
    scales = [1.0] * len(lambda_sqs) if amplitudes is None else list(amplitudes)
    u = SpectralField.zeros(N)
    for i, (m, s) in enumerate(zip(lambda_sqs, scales)):
        sd = None if seed is None else seed + i
        u = u + s * beltrami_field(m, N, seed=sd)
    if u02 is not None:
        require_mean_zero(u02, "u02")
        require_div_free(u02, what="u02")
        u = u + u02
    return u, report
