"""Time-step study: Beltrami data (error stays at rounding level) vs generic data (4th order).

    python scripts/beltrami_convergence.py --N 16
"""

import argparse

import numpy as np

from nslab.beltrami import beltrami_field
from nslab.solver import SolverConfig, solve
from nslab.spectral import SpectralField, heat_semigroup


def taylor_green(N, amp):
    x = 2 * np.pi * np.arange(N) / N
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    v = np.stack([np.sin(X) * np.cos(Y) * np.cos(Z), -np.cos(X) * np.sin(Y) * np.cos(Z), 0 * X])
    return SpectralField.from_physical(amp * v)


def final(u0, dt, T):
    return solve(u0, SolverConfig(dt=dt, T=T, record_every=10**9)).fields[-1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=16)
    p.add_argument("--T", type=float, default=0.2)
    p.add_argument("--shell", type=int, default=2)
    args = p.parse_args()
    dts = [0.01, 0.005, 0.0025]
    phi = beltrami_field(args.shell, args.N, seed=0)
    exact = heat_semigroup(phi, args.T)
    tg = taylor_green(args.N, 3.0)
    ref = final(tg, dts[-1] / 4, args.T)
    print("dt,beltrami_rel_error,generic_rel_error")
    for dt in dts:
        eb = (final(phi, dt, args.T) - exact).l2() / exact.l2()
        eg = (final(tg, dt, args.T) - ref).l2() / ref.l2()
        print(f"{dt!r},{eb:.3e},{eg:.3e}")


if __name__ == "__main__":
    main()
