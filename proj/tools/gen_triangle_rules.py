#!/usr/bin/env python3
"""Solve the moment equations for fully symmetric, positive-interior triangle
rules and print them as C++ initialisers for include/dfsolve/detail/triangle_rules.hpp.

Orbit types (barycentric):
  S3   : (1/3, 1/3, 1/3)
  S21  : permutations of (a, a, 1-2a)
  S111 : permutations of (a, b, 1-a-b)

Starting guesses are the classical Dunavant values; Newton/least-squares
refinement brings them to machine precision.
"""
import itertools
import sys

import numpy as np
from mpmath import mp, mpf, factorial
from scipy.optimize import least_squares

mp.dps = 40

# degree -> (n_s3, [a guesses for S21], [(a, b) guesses for S111], weight guesses per orbit)
LAYOUTS = {
    1: (1, [], [], [1.0]),
    2: (0, [1.0 / 6.0], [], [1.0 / 3.0]),
    4: (0, [0.445948490915965, 0.091576213509771], [], [0.223381589678011, 0.109951743655322]),
    5: (1, [0.470142064105115, 0.101286507323456], [], [0.225, 0.132394152788506, 0.125939180544827]),
    6: (0, [0.249286745170910, 0.063089014491502], [(0.053145049844817, 0.310352451033784)],
        [0.116786275726379, 0.050844906370207, 0.082851075618374]),
    8: (1, [0.459292588292723, 0.170569307751760, 0.050547228317031],
        [(0.008394777409958, 0.263112829634638)],
        [0.144315607677787, 0.095091634267285, 0.103217370534718, 0.032458497623198, 0.027230314174435]),
    10: (1, [0.485577633383657, 0.109481575485037],
         [(0.141707219414880, 0.307939838764121), (0.025003534762686, 0.246672560639903),
          (0.009540815400299, 0.066803251012200)],
         [0.090817990382754, 0.036725957756467, 0.045321059435528, 0.072757916845420,
          0.028327242531057, 0.009421666963733]),
}


def points_of(layout, params):
    n_s3, s21, s111, _ = layout
    pts, orbit_index = [], []
    k = 0
    o = 0
    if n_s3:
        pts.append((1 / 3, 1 / 3, 1 / 3))
        orbit_index.append(o)
        o += 1
    for _ in s21:
        a = params[k]
        k += 1
        for p in set(itertools.permutations((a, a, 1 - 2 * a))):
            pts.append(p)
            orbit_index.append(o)
        o += 1
    for _ in s111:
        a, b = params[k], params[k + 1]
        k += 2
        for p in set(itertools.permutations((a, b, 1 - a - b))):
            pts.append(p)
            orbit_index.append(o)
        o += 1
    return pts, orbit_index


def exact_moment(i, j):
    # integral of x^i y^j over the reference triangle (0,0),(1,0),(0,1)
    return float(factorial(i) * factorial(j) / factorial(i + j + 2))


def residual(x, layout, degree):
    n_shape = len(layout[1]) + 2 * len(layout[2])
    params, weights = x[:n_shape], x[n_shape:]
    pts, orbit = points_of(layout, params)
    res = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            s = sum(weights[orbit[q]] * 0.5 * p[1] ** i * p[2] ** j for q, p in enumerate(pts))
            res.append(s - exact_moment(i, j))
    return np.array(res)


def main():
    out = sys.stdout
    for degree, layout in LAYOUTS.items():
        x0 = [*layout[1], *[c for ab in layout[2] for c in ab], *layout[3]]
        sol = least_squares(residual, x0, args=(layout, degree), xtol=3e-16, ftol=3e-16, gtol=3e-16)
        r = np.max(np.abs(residual(sol.x, layout, degree)))
        n_shape = len(layout[1]) + 2 * len(layout[2])
        pts, orbit = points_of(layout, sol.x[:n_shape])
        w = sol.x[n_shape:]
        assert r < 1e-15, (degree, r)
        assert np.all(w > 0), degree
        assert all(min(p) > 0 for p in pts), degree
        out.write(f"// degree {degree}: {len(pts)} points, max moment residual {r:.1e}\n")
        out.write(f"{{{degree}, {{\n")
        for q, p in enumerate(pts):
            out.write(f"    {{{float(p[1])!r}, {float(p[2])!r}, {float(0.5 * w[orbit[q]])!r}}},\n")
        out.write("}},\n")


if __name__ == "__main__":
    main()
