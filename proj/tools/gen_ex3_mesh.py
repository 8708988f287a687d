#!/usr/bin/env python3
"""Obstacle mesh for the filtration example.

Square (0, L)^2 with a quarter-circle inlet cut out around the origin, a
quarter-circle outlet cut out around (L, L) and seven circular obstacles.
Boundary tags: the outlet arc is GAMMA_P, everything else GAMMA_U (the inlet
flux is imposed through the flux data, not through a separate tag).

Needs the `triangle` package (pip install triangle).
"""

import argparse
import math

import numpy as np
import triangle

L = 0.1

# (x, y, radius)
CYLINDERS = [
    (0.040, 0.032, 0.0080),
    (0.030, 0.068, 0.0070),
    (0.072, 0.022, 0.0060),
    (0.062, 0.058, 0.0100),
    (0.088, 0.045, 0.0050),
    (0.048, 0.088, 0.0050),
    (0.016, 0.088, 0.0040),
]

U, P = 1, 2


def arc(cx, cy, r, a0, a1, n):
    t = np.linspace(a0, a1, n + 1)
    return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])


def segments_of(n_points, offset, closed):
    idx = np.arange(n_points) + offset
    seg = np.column_stack([idx[:-1], idx[1:]])
    if closed:
        seg = np.vstack([seg, [idx[-1], idx[0]]])
    return seg


def build(args):
    h = args.h
    r_in, r_out = args.inlet_radius, args.outlet_radius
    n_in = max(8, math.ceil(0.5 * math.pi * r_in / (0.5 * h)))
    n_out = max(8, math.ceil(0.5 * math.pi * r_out / (0.5 * h)))

    # Outer loop, counter-clockwise: inlet arc from (0, r_in) down to (r_in, 0)
    # is traversed clockwise around the origin.
    pieces = []
    pieces.append((arc(0.0, 0.0, r_in, 0.5 * math.pi, 0.0, n_in)[:-1], U))
    n_bottom = math.ceil((L - r_in) / h)
    bottom = np.column_stack([np.linspace(r_in, L, n_bottom + 1), np.zeros(n_bottom + 1)])
    pieces.append((bottom[:-1], U))
    n_side = math.ceil((L - r_out) / h)
    right = np.column_stack([np.full(n_side + 1, L), np.linspace(0.0, L - r_out, n_side + 1)])
    pieces.append((right[:-1], U))
    pieces.append((arc(L, L, r_out, -0.5 * math.pi, -math.pi, n_out)[:-1], P))
    top = np.column_stack([np.linspace(L - r_out, 0.0, n_side + 1), np.full(n_side + 1, L)])
    pieces.append((top[:-1], U))
    n_left = math.ceil((L - r_in) / h)
    left = np.column_stack([np.zeros(n_left + 1), np.linspace(L, r_in, n_left + 1)])
    pieces.append((left[:-1], U))

    points = np.vstack([p for p, _ in pieces])
    markers = np.concatenate([np.full(len(p), m) for p, m in pieces])
    segments = segments_of(len(points), 0, closed=True)
    # A segment carries the tag of the piece its first point belongs to.
    seg_markers = markers.copy()

    holes = []
    for cx, cy, r in CYLINDERS:
        n = max(12, math.ceil(2 * math.pi * r / (0.5 * h)))
        circle = arc(cx, cy, r, 0.0, 2 * math.pi, n)[:-1]
        segments = np.vstack([segments, segments_of(len(circle), len(points), closed=True)])
        seg_markers = np.concatenate([seg_markers, np.full(len(circle), U)])
        points = np.vstack([points, circle])
        holes.append((cx, cy))

    geometry = {
        "vertices": points,
        "segments": segments,
        "segment_markers": seg_markers.reshape(-1, 1),
        "holes": np.array(holes),
    }
    max_area = 0.5 * h * h
    return triangle.triangulate(geometry, f"pq30a{max_area:.12f}")


def boundary_facets(mesh):
    tags = {}
    for (a, b), m in zip(mesh["segments"], mesh["segment_markers"].ravel()):
        tags[tuple(sorted((int(a), int(b))))] = "GAMMA_P" if m == P else "GAMMA_U"
    return tags


def write(mesh, path):
    v = mesh["vertices"]
    cells = mesh["triangles"]
    tags = boundary_facets(mesh)
    with open(path, "w") as out:
        out.write("forchheimer-mesh v1\n")
        out.write("# filtration example: inlet arc at the origin, outlet arc at (0.1, 0.1), 7 cylinders\n")
        out.write(f"vertices {len(v)}\n")
        for x, y in v:
            out.write(f"{x:.17g} {y:.17g}\n")
        out.write(f"cells {len(cells)}\n")
        for a, b, c in cells:
            out.write(f"{a} {b} {c}\n")
        out.write(f"boundary {len(tags)}\n")
        for (a, b), t in sorted(tags.items()):
            out.write(f"{a} {b} {t}\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-o", "--output", default="data/ex3_obstacles.msh")
    ap.add_argument("--h", type=float, default=0.0025, help="target edge length")
    ap.add_argument("--inlet-radius", type=float, default=0.02)
    ap.add_argument("--outlet-radius", type=float, default=0.0135)
    args = ap.parse_args()
    mesh = build(args)
    write(mesh, args.output)
    print(f"{len(mesh['triangles'])} cells, {len(mesh['vertices'])} vertices -> {args.output}")


if __name__ == "__main__":
    main()
