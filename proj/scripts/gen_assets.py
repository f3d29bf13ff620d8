#!/usr/bin/env python3
"""Writes the bundled demo scenes under scenes/.

bar/      soft bar (1000 tets) with a box tool, dry and pre-saturated variants
trex/     lumpy creature surface embedded in a coarse cage
minimal/  two-tet scene
"""

import argparse
import json
import math
from pathlib import Path

EVEN = [(0, 1, 2, 4), (1, 3, 2, 7), (1, 4, 5, 7), (2, 4, 6, 7), (1, 2, 4, 7)]
ODD = [(1, 0, 3, 5), (0, 2, 3, 6), (0, 4, 5, 6), (3, 5, 6, 7), (0, 3, 5, 6)]


def box_tets(origin, size, n):
    nx, ny, nz = n
    pts = []
    for k in range(nz + 1):
        for j in range(ny + 1):
            for i in range(nx + 1):
                pts.append((origin[0] + size[0] * i / nx, origin[1] + size[1] * j / ny, origin[2] + size[2] * k / nz))

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    tets = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                corner = [vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) for c in range(8)]
                for p in EVEN if (i + j + k) % 2 == 0 else ODD:
                    tets.append(tuple(corner[q] for q in p))
    return pts, tets


def box_surface(center, size, n):
    verts, tris, index = [], [], {}
    lo = [center[a] - 0.5 * size[a] for a in range(3)]

    def add(c):
        key = tuple(c)
        if key not in index:
            index[key] = len(verts)
            verts.append(tuple(lo[a] + size[a] * c[a] / n for a in range(3)))
        return index[key]

    for ax in range(3):
        for side in range(2):
            u, v = (ax + 1) % 3, (ax + 2) % 3
            if side == 0:
                u, v = v, u
            for i in range(n):
                for j in range(n):
                    def corner(di, dj):
                        c = [0, 0, 0]
                        c[ax] = side * n
                        c[u] = i + di
                        c[v] = j + dj
                        return add(c)
                    a, b, c, d = corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)
                    tris += [(a, b, c), (a, c, d)]
    return verts, tris


def fmt(x):
    return repr(float(x))


def write_tetgen(stem, pts, tets):
    with open(f"{stem}.node", "w") as f:
        f.write(f"{len(pts)} 3\n")
        for i, p in enumerate(pts):
            f.write(f"{i} {fmt(p[0])} {fmt(p[1])} {fmt(p[2])}\n")
    with open(f"{stem}.ele", "w") as f:
        f.write(f"{len(tets)} 4\n")
        for i, t in enumerate(tets):
            f.write(f"{i} {t[0]} {t[1]} {t[2]} {t[3]}\n")


def write_obj(path, verts, tris):
    with open(path, "w") as f:
        for v in verts:
            f.write(f"v {fmt(v[0])} {fmt(v[1])} {fmt(v[2])}\n")
        for t in tris:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def write_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def bar_scene(root, contact_stiffness, dt):
    d = root / "bar"
    d.mkdir(parents=True, exist_ok=True)
    size = (0.10, 0.05, 0.04)
    pts, tets = box_tets((0.0, 0.0, 0.0), size, (10, 5, 4))
    write_tetgen(d / "bar", pts, tets)
    verts, tris = box_surface((0.05, 0.025, 0.02), size, 12)
    write_obj(d / "bar_surface.obj", verts, tris)
    tv, tt = box_surface((0.0, 0.0, 0.0), (0.02, 0.02, 0.02), 1)
    write_obj(d / "tool.obj", tv, tt)

    scene = {
        "schema_version": 1,
        "tet_mesh": {"node": "bar.node", "ele": "bar.ele"},
        "surface": "bar_surface.obj",
        "proxy": "tool.obj",
        "material": {"E": 1e4, "nu": 0.4, "density": 1000.0, "water_bulk_modulus": 2.2e9, "eps_mu": 1e-6},
        "wetting": {"diffusivity": 1e-4, "dt_diffusion": dt, "delta_s": 0.05, "porosity": 0.3,
                    "initial_saturation": 0.0},
        "simulation": {"dt": dt, "alpha": 2.0, "beta": 0.01, "yield": 0.02, "creep": 0.1, "max_plastic": 0.2,
                       "fixed_vertex_selector": {"axis": "z", "side": "min"}},
        "contact": {"stiffness": contact_stiffness, "thickness": 0.005},
        "kernel": {"k1": 5.0, "k2": 20.0, "radius": 0.03},
        "haptics": {"rate_hz": 1000.0},
    }
    write_json(d / "bar_dry.json", scene)
    wet = json.loads(json.dumps(scene))
    wet["wetting"]["initial_saturation"] = 1.0
    write_json(d / "bar_wet.json", wet)

    top = size[2]
    start = [0.05, 0.025, top + 0.011]
    low = [0.05, 0.025, top + 0.010 - 0.005]
    write_json(d / "push.json", {
        "schema_version": 1,
        "keyframes": [
            {"time": 0.0, "position": start, "mode": "push"},
            {"time": 0.6, "position": low, "mode": "push"},
            {"time": 0.8, "position": low, "mode": "push"},
            {"time": 1.4, "position": start, "mode": "push"},
        ],
    })
    write_json(d / "paint.json", {
        "schema_version": 1,
        "keyframes": [
            {"time": 0.0, "position": [0.02, 0.025, top + 0.0105], "mode": "wet"},
            {"time": 0.3, "position": [0.02, 0.025, top + 0.0095], "mode": "wet"},
            {"time": 1.3, "position": [0.08, 0.025, top + 0.0095], "mode": "wet"},
            {"time": 1.5, "position": [0.08, 0.025, top + 0.0105], "mode": "wet"},
        ],
    })
    write_json(d / "empty.json", {"schema_version": 1, "keyframes": []})


def creature_surface(n_lat=24, n_lon=48):
    """Lumpy closed surface: an elongated body with a head bump and a tail."""
    verts = []
    for i in range(n_lat + 1):
        th = math.pi * i / n_lat
        for j in range(n_lon):
            ph = 2.0 * math.pi * j / n_lon
            x, y, z = math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)
            r = 1.0 + 0.18 * math.exp(-((x - 0.8) ** 2 + (z - 0.5) ** 2) * 6.0) + 0.05 * math.sin(3 * ph) * math.sin(th)
            verts.append((0.05 * r * x * 1.6, 0.025 * r * y, 0.03 * r * z))
    tris = []
    for i in range(n_lat):
        for j in range(n_lon):
            a = i * n_lon + j
            b = i * n_lon + (j + 1) % n_lon
            c = (i + 1) * n_lon + j
            d = (i + 1) * n_lon + (j + 1) % n_lon
            if i > 0:
                tris.append((a, c, b))
            if i < n_lat - 1:
                tris.append((b, c, d))
    # Collapse the duplicated pole rings.
    remap, uniq, keys = [], [], {}
    for v in verts:
        key = tuple(round(c, 12) for c in v)
        if key not in keys:
            keys[key] = len(uniq)
            uniq.append(v)
        remap.append(keys[key])
    tris = [tuple(remap[k] for k in t) for t in tris]
    tris = [t for t in tris if len(set(t)) == 3]
    return uniq, tris


def trex_scene(root, contact_stiffness, dt):
    d = root / "trex"
    d.mkdir(parents=True, exist_ok=True)
    verts, tris = creature_surface()
    write_obj(d / "trex.obj", verts, tris)
    lo = [min(v[a] for v in verts) for a in range(3)]
    hi = [max(v[a] for v in verts) for a in range(3)]
    # The cage is trimmed at the head bump, so a few surface vertices are extrapolated.
    hi[0] -= 0.004
    pts, tets = box_tets(lo, [hi[a] - lo[a] for a in range(3)], (8, 4, 5))
    write_tetgen(d / "cage", pts, tets)
    tv, tt = box_surface((0.0, 0.0, 0.0), (0.015, 0.015, 0.015), 1)
    write_obj(d / "tool.obj", tv, tt)
    write_json(d / "trex.json", {
        "schema_version": 1,
        "tet_mesh": {"node": "cage.node", "ele": "cage.ele"},
        "surface": "trex.obj",
        "proxy": "tool.obj",
        "material": {"E": 1e4, "nu": 0.4, "density": 1000.0},
        "wetting": {"diffusivity": 1e-4, "dt_diffusion": dt, "delta_s": 0.05, "porosity": 0.3},
        "simulation": {"dt": dt, "alpha": 2.0, "beta": 0.01,
                       "fixed_vertex_selector": {"axis": "z", "side": "min"}},
        "contact": {"stiffness": contact_stiffness, "thickness": 0.005},
        "kernel": {"k1": 5.0, "k2": 20.0, "radius": 0.03},
    })
    top = hi[2]
    write_json(d / "push.json", {
        "schema_version": 1,
        "keyframes": [
            {"time": 0.0, "position": [0.0, 0.0, top + 0.0085], "mode": "push"},
            {"time": 0.6, "position": [0.0, 0.0, top + 0.0035], "mode": "push"},
            {"time": 1.2, "position": [0.0, 0.0, top + 0.0085], "mode": "push"},
        ],
    })


def minimal_scene(root):
    d = root / "minimal"
    d.mkdir(parents=True, exist_ok=True)
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)]
    tets = [(0, 1, 2, 3), (1, 2, 3, 4)]
    write_tetgen(d / "two", pts, tets)
    write_json(d / "two.json", {
        "schema_version": 1,
        "tet_mesh": {"node": "two.node", "ele": "two.ele"},
        "material": {"E": 1e4, "nu": 0.3},
    })


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "scenes"))
    ap.add_argument("--contact-stiffness", type=float, default=0.005)
    ap.add_argument("--dt", type=float, default=0.001)
    args = ap.parse_args()
    root = Path(args.out)
    bar_scene(root, args.contact_stiffness, args.dt)
    trex_scene(root, args.contact_stiffness, args.dt)
    minimal_scene(root)


if __name__ == "__main__":
    main()
