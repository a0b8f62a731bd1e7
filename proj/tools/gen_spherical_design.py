#!/usr/bin/env python3
"""Numerically compute an equal-weight spherical t-design and write it as a point-set file.

A set {x_i} is a t-design iff sum_{i,j} P_l(x_i . x_j) = 0 for l = 1..t, so the
sum of those (non-negative) quantities is minimised from random starts. That objective is
quadratic in the design error, so the winner is then polished by Gauss-Newton on the monomial
moment equations mean(x^a y^b z^c) = sphere average, 1 <= a+b+c <= t.

    python3 tools/gen_spherical_design.py --points 25 --strength 4 -o data/sphdesign_t4_n25.txt
"""
import argparse

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import minimize


def to_xyz(angles):
    th, ph = angles[0::2], angles[1::2]
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)


def energy(angles, strength):
    x = to_xyz(angles)
    g = np.clip(x @ x.T, -1.0, 1.0)
    return sum(legendre.legval(g, [0] * l + [1]).sum() for l in range(1, strength + 1)) / len(x) ** 2


def exponents(strength):
    return [(a, b, d - a - b) for d in range(1, strength + 1) for a in range(d + 1) for b in range(d - a + 1)]


def double_factorial(n):
    return float(np.prod(np.arange(n, 0, -2))) if n > 0 else 1.0


def sphere_average(a, b, c):
    if a % 2 or b % 2 or c % 2:
        return 0.0
    return double_factorial(a - 1) * double_factorial(b - 1) * double_factorial(c - 1) / double_factorial(a + b + c + 1)


def moment_residual(angles, exps, targets):
    x = to_xyz(angles)
    return np.array([np.mean(x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c) for a, b, c in exps]) - targets


def polish(angles, strength, iterations=20):
    exps = exponents(strength)
    targets = np.array([sphere_average(*e) for e in exps])
    h = 1e-7
    for _ in range(iterations):
        r = moment_residual(angles, exps, targets)
        if np.abs(r).max() < 1e-16:
            break
        jac = np.empty((len(r), len(angles)))
        for j in range(len(angles)):
            d = np.zeros_like(angles)
            d[j] = h
            jac[:, j] = (moment_residual(angles + d, exps, targets) - moment_residual(angles - d, exps, targets)) / (2 * h)
        angles = angles - np.linalg.lstsq(jac, r, rcond=1e-8)[0]
    return angles, float(np.abs(moment_residual(angles, exps, targets)).max())


def min_separation(x):
    g = x @ x.T
    np.fill_diagonal(g, -1.0)
    return float(np.arccos(np.clip(g.max(), -1.0, 1.0)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=25)
    ap.add_argument("--strength", type=int, default=4)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--tries", type=int, default=40)
    ap.add_argument("-o", "--output", required=True)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    best, best_sep = None, -1.0
    for _ in range(args.tries):
        z = rng.uniform(-1, 1, args.points)
        x0 = np.empty(2 * args.points)
        x0[0::2] = np.arccos(z)
        x0[1::2] = rng.uniform(0, 2 * np.pi, args.points)
        res = minimize(energy, x0, args=(args.strength,), method="BFGS", options={"gtol": 1e-14, "maxiter": 20000})
        if abs(res.fun) > 1e-15:
            continue
        sep = min_separation(to_xyz(res.x))
        if sep > best_sep:
            best, best_sep = res, sep
    if best is None:
        raise SystemExit("no start converged to a design")
    angles, moment_err = polish(best.x, args.strength)
    pts = to_xyz(angles)
    best_sep = min_separation(pts)
    with open(args.output, "w") as f:
        f.write(f"# equal-weight spherical {args.strength}-design, {args.points} points\n")
        f.write(f"# max moment error {moment_err:.1e} over monomials of degree 1..{args.strength}\n")
        f.write(f"# minimum angular separation {best_sep:.6f} rad\n")
        for p in pts:
            f.write(f"{p[0]: .17f} {p[1]: .17f} {p[2]: .17f}\n")
    print(f"moment error {moment_err:.1e}, min separation {best_sep:.4f} rad")


if __name__ == "__main__":
    main()
