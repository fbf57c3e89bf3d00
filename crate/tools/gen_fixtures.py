#!/usr/bin/env python3
"""Regenerate the bundled fixtures: textures, materials, scenes, the viridis
table and the dependence-class golden for classroom_like.json.

Deterministic: running it twice produces identical files.
    python3 tools/gen_fixtures.py
"""

import json
import math
import os
import sys

import numpy as np

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
FIX = os.path.join(ROOT, "fixtures")


# ---------------------------------------------------------------- textures

def write_ppm(path, rgb):
    h, w, _ = rgb.shape
    data = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(data.tobytes())


def grid(n):
    y, x = np.mgrid[0:n, 0:n].astype(np.float64)
    return (x + 0.5) / n, (y + 0.5) / n


def periodic(u, v, terms):
    """Sum of integer-frequency sinusoids: tiles seamlessly."""
    out = np.zeros_like(u)
    for amp, fu, fv, ph in terms:
        out += amp * np.sin(2 * math.pi * (fu * u + fv * v) + ph)
    return out


def textures():
    tex = {}
    u, v = grid(128)
    s = periodic(u, v, [(0.05, 1, 2, 0.3), (0.04, 3, 1, 1.1), (0.02, 2, 5, 2.0)])
    tex["plaster.ppm"] = np.stack([0.78 + s, 0.74 + s, 0.68 + 0.8 * s], -1)

    rings = periodic(u, v, [(1.0, 0, 3, 0.0), (0.35, 1, 2, 0.7)])
    grain = 0.5 + 0.5 * np.sin(rings * 2.2)
    tex["wood.ppm"] = np.stack([0.45 + 0.2 * grain, 0.28 + 0.12 * grain, 0.14 + 0.06 * grain], -1)

    u, v = grid(64)
    bump = 0.5 + 0.5 * np.sin(2 * math.pi * u * 2) * np.sin(2 * math.pi * v * 2)
    tex["tiles.ppm"] = np.stack([0.55 + 0.25 * bump, 0.6 + 0.2 * bump, 0.62 + 0.18 * bump], -1)

    weave = periodic(u, v, [(0.5, 4, 0, 0.0), (0.5, 0, 4, 0.0), (0.2, 1, 1, 0.5)])
    w = 0.5 + 0.25 * weave
    tex["fabric.ppm"] = np.stack([0.25 + 0.3 * w, 0.3 + 0.25 * w, 0.55 + 0.2 * w], -1)
    return tex


# ---------------------------------------------------------------- materials

class G:
    def __init__(self, material_id):
        self.mid = material_id
        self.nodes = []

    def add(self, kind, params=None, inputs=()):
        i = len(self.nodes)
        n = {"id": i, "kind": kind}
        if params:
            n["params"] = params
        if inputs:
            n["inputs"] = list(inputs)
        self.nodes.append(n)
        return i

    def f(self, x):
        return self.add("ConstFloat", {"value": x})

    def c(self, r, g, b):
        return self.add("ConstColor", {"rgb": [r, g, b]})

    def uv(self, channel=None):
        return self.add("UV", {"channel": channel} if channel else None)

    def op(self, kind, *ins):
        return self.add(kind, None, ins)

    def tex(self, image, coord, wrap=None):
        p = {"image": image}
        if wrap:
            p["wrap"] = wrap
        return self.add("TexImage", p, [coord])

    def noise(self, coord, octaves, frequency, lacunarity=2.0, gain=0.5):
        return self.add("NoiseFBM", {"octaves": octaves, "frequency": frequency,
                                     "lacunarity": lacunarity, "gain": gain}, [coord])

    def ramp(self, x, stops):
        return self.add("ColorRamp", {"stops": [{"pos": p, "rgb": list(c)} for p, c in stops]}, [x])

    def checker(self, coord, scale):
        return self.add("Checker", {"scale": scale}, [coord])

    def scaled_uv(self, s, offset=None):
        t = self.op("Mul", self.uv(), self.f(s))
        if offset:
            t = self.op("Add", t, self.c(offset[0], offset[1], 0.0))
        return t

    def doc(self, base):
        d = self.op("BsdfDiffuse", base)
        out = self.op("BsdfOutput", d)
        return {"material_id": self.mid, "nodes": self.nodes, "output": out}


def facing(g, base, k=0.15):
    """base * (1 - k + k * dot(N, I)): a cheap view-dependent OTHER top."""
    d = g.op("Dot", g.add("Normal"), g.add("IncomingDir"))
    shade = g.op("Add", g.f(1.0 - k), g.op("Mul", d, g.f(k)))
    return g.op("Mul", base, shade)


def fold_chain():
    g = G(2)
    x = g.op("Add", g.f(0.3), g.f(0.5))
    x = g.op("Mul", x, g.f(1.5))
    x = g.op("SinWave", x)
    x = g.op("Power", x, g.f(2.0))
    x = g.op("Sub", x, g.f(0.1))
    x = g.op("Clamp", x)
    return g.doc(x)


def mix_tex_checker():
    g = G(3)
    uv = g.uv()
    m = g.op("Mix", g.tex("plaster.ppm", uv), g.checker(uv, 4.0), g.f(0.5))
    return g.doc(m)


def normal_dot_tex():
    g = G(4)
    ndl = g.op("Dot", g.add("Normal"), g.c(0.0, 1.0, 0.0))
    t = g.tex("wood.ppm", g.scaled_uv(2.0))
    return g.doc(g.op("Mul", ndl, t))


def diamond():
    g = G(5)
    u = g.uv("u")
    d = g.op("Add", g.op("SinWave", u), g.op("Clamp", u))
    return g.doc(d)


def classroom_like():
    """Layered desk/floor material, well over 100 nodes."""
    g = G(1)
    layers = []
    for i in range(5):
        coord = g.scaled_uv(1.0 + i, (0.13 * i, 0.29 * i))
        n1 = g.noise(coord, 4 + i % 3, 2.0 + i)
        n2 = g.noise(g.op("Add", coord, g.op("Mul", n1, g.f(0.25))), 3, 4.0 + i)
        wood = g.tex("wood.ppm", coord)
        grain = g.op("SinWave", g.op("Add", g.op("Mul", n2, g.f(3.0 + i)), g.uv("u")))
        tint = g.ramp(grain, [(0.0, (0.35, 0.22, 0.12)), (0.5, (0.55, 0.38, 0.22)), (1.0, (0.7, 0.52, 0.3))])
        # constant sub-expression the folding pass collapses
        w = g.op("Clamp", g.op("Mul", g.f(0.2 + 0.1 * i), g.f(1.5)))
        layer = g.op("Clamp", g.op("Mix", wood, tint, w))
        check = g.checker(coord, 2.0 + i)
        layer = g.op("Mix", layer, g.op("Mul", layer, g.f(0.9)), g.op("Mul", check, g.f(0.1)))
        layers.append(layer)
    acc = layers[0]
    for i, l in enumerate(layers[1:]):
        acc = g.op("Mix", acc, l, g.f(0.3 + 0.1 * i))
    cached_top = g.op("Clamp", acc)
    # second cacheable branch: plaster stain
    stain = g.op("Mul", g.tex("plaster.ppm", g.scaled_uv(3.0)), g.noise(g.scaled_uv(1.5), 5, 3.0))
    stain = g.op("Clamp", g.op("Add", stain, g.f(0.2)))
    # shading-point dependent dirt mask
    dirt = g.noise(g.op("Mul", g.add("Position"), g.f(0.7)), 3, 1.0)
    mask = g.op("Clamp", g.op("Sub", g.op("Mul", dirt, g.f(0.6)), g.f(0.05)))
    top = g.op("Mix", cached_top, g.op("Mul", stain, cached_top), mask)
    return g.doc(facing(g, top, 0.1))


# noise gallery: heavy procedural stacks under a view-dependent top
def marble(mid, tint):
    g = G(mid)
    uv = g.scaled_uv(1.0)
    n1 = g.noise(uv, 8, 2.0)
    warp = g.op("Add", uv, g.op("Mul", n1, g.f(0.35)))
    n2 = g.noise(warp, 8, 3.0)
    n3 = g.noise(g.op("Add", g.op("Mul", uv, g.f(2.0)), g.c(0.37, 0.11, 0.0)), 7, 2.5)
    veins = g.op("SinWave", g.op("Add", g.op("Mul", n2, g.f(4.0)), g.uv("u")))
    base = g.ramp(veins, [(0.0, (0.2 * tint[0], 0.2 * tint[1], 0.2 * tint[2])), (0.45, tint),
                          (1.0, (0.92, 0.9, 0.88))])
    cloud = g.ramp(n3, [(0.2, (0.3, 0.3, 0.32)), (0.8, (0.85, 0.83, 0.8))])
    m = g.op("Clamp", g.op("Mix", base, cloud, g.op("Clamp", g.op("Mul", n3, g.f(0.6)))))
    return g.doc(facing(g, m))


def lava(mid):
    g = G(mid)
    uv = g.scaled_uv(1.5, (0.2, 0.7))
    n1 = g.noise(uv, 8, 2.0, 2.1, 0.55)
    n2 = g.noise(g.op("Add", uv, g.op("Mul", n1, g.f(0.5))), 8, 2.0)
    n3 = g.noise(g.op("Add", g.op("Mul", uv, g.f(0.5)), g.op("Mul", n2, g.f(0.3))), 6, 3.0)
    heat = g.op("Clamp", g.op("Power", g.op("Mul", n2, g.f(1.6)), g.f(2.2)))
    col = g.ramp(heat, [(0.0, (0.05, 0.03, 0.03)), (0.5, (0.6, 0.15, 0.05)), (1.0, (0.95, 0.7, 0.2))])
    crust = g.ramp(n3, [(0.3, (0.15, 0.12, 0.1)), (0.7, (0.35, 0.3, 0.25))])
    m = g.op("Clamp", g.op("Mix", crust, col, g.op("Clamp", g.op("Mul", n1, g.f(1.2)))))
    return g.doc(facing(g, m))


def granite(mid):
    g = G(mid)
    uv = g.scaled_uv(2.0)
    specks = g.noise(uv, 8, 6.0, 2.3, 0.6)
    large = g.noise(g.op("Add", uv, g.c(3.1, 1.7, 0.0)), 6, 1.5)
    mid_n = g.noise(g.op("Mul", uv, g.f(1.7)), 7, 2.5)
    s = g.op("Clamp", g.op("Add", g.op("Mul", specks, g.f(0.5)), g.op("Mul", large, g.f(0.5))))
    col = g.ramp(s, [(0.3, (0.25, 0.24, 0.26)), (0.5, (0.55, 0.5, 0.48)), (0.7, (0.8, 0.78, 0.75))])
    m = g.op("Clamp", g.op("Mul", col, g.op("Add", g.f(0.75), g.op("Mul", mid_n, g.f(0.3)))))
    return g.doc(facing(g, m))


def cells(mid):
    g = G(mid)
    uv = g.scaled_uv(4.0)
    n1 = g.noise(uv, 7, 1.0)
    n2 = g.noise(g.op("Add", uv, g.op("Mul", n1, g.f(0.8))), 7, 2.0)
    n3 = g.noise(g.op("Mul", uv, g.f(0.25)), 8, 2.0)
    bands = g.op("SinWave", g.op("Mul", n2, g.f(5.0)))
    col = g.op("Mix", g.c(0.15, 0.35, 0.55), g.c(0.75, 0.85, 0.6), bands)
    m = g.op("Clamp", g.op("Mul", col, g.op("Add", g.f(0.6), g.op("Mul", n3, g.f(0.5)))))
    return g.doc(facing(g, m))


def ground(mid):
    g = G(mid)
    uv = g.scaled_uv(3.0)
    t = g.tex("tiles.ppm", uv)
    n = g.noise(g.scaled_uv(1.0), 6, 2.0)
    m = g.op("Clamp", g.op("Mul", t, g.op("Add", g.f(0.7), g.op("Mul", n, g.f(0.35)))))
    return g.doc(facing(g, m, 0.05))


# cornell box
def cornell_wall(mid, rgb, tex, scale):
    g = G(mid)
    uv = g.scaled_uv(scale)
    t = g.tex(tex, uv)
    n = g.noise(g.scaled_uv(2.0), 4, 2.0)
    shade = g.op("Add", g.f(0.8), g.op("Mul", n, g.f(0.25)))
    m = g.op("Clamp", g.op("Mul", g.op("Mul", t, g.c(*rgb)), shade))
    return g.doc(facing(g, m, 0.05))


def cornell_ball(mid):
    g = G(mid)
    uv = g.scaled_uv(2.0)
    n = g.noise(uv, 5, 3.0)
    col = g.ramp(n, [(0.3, (0.7, 0.65, 0.2)), (0.7, (0.9, 0.85, 0.5))])
    s = g.op("SinWave", g.op("Mul", g.uv("v"), g.f(6.0)))
    m = g.op("Clamp", g.op("Mix", col, g.op("Mul", col, g.f(0.85)), s))
    return g.doc(facing(g, m))


# texture room: image-texture heavy
def room_material(mid, main, second, scale, tint):
    g = G(mid)
    a = g.tex(main, g.scaled_uv(scale))
    b = g.tex(second, g.scaled_uv(scale * 0.5, (0.3, 0.6)))
    c = g.tex(main, g.scaled_uv(scale * 2.0, (0.7, 0.1)))
    m = g.op("Mix", a, b, g.f(0.3))
    m = g.op("Mix", m, c, g.op("Mul", g.tex(second, g.scaled_uv(1.0)), g.f(0.2)))
    m = g.op("Clamp", g.op("Mul", m, g.c(*tint)))
    return g.doc(facing(g, m, 0.08))


# cache-hostile: every heavy node depends on position
def hostile(mid, tint):
    g = G(mid)
    p = g.op("Mul", g.add("Position"), g.f(0.8))
    n1 = g.noise(p, 8, 2.0)
    n2 = g.noise(g.op("Add", p, g.op("Mul", n1, g.f(0.35))), 8, 3.0)
    n3 = g.noise(g.op("Add", g.op("Mul", p, g.f(2.0)), g.c(0.37, 0.11, 0.0)), 7, 2.5)
    veins = g.op("SinWave", g.op("Add", g.op("Mul", n2, g.f(4.0)), n3))
    col = g.ramp(veins, [(0.0, (0.1, 0.1, 0.1)), (0.5, tint), (1.0, (0.9, 0.9, 0.88))])
    return g.doc(g.op("Clamp", col))


def materials():
    m = {
        "classroom_like.json": classroom_like(),
        "fold_chain.json": fold_chain(),
        "mix_tex_checker.json": mix_tex_checker(),
        "normal_dot_tex.json": normal_dot_tex(),
        "diamond.json": diamond(),
        "gallery_marble.json": marble(10, (0.55, 0.5, 0.6)),
        "gallery_lava.json": lava(11),
        "gallery_granite.json": granite(12),
        "gallery_cells.json": cells(13),
        "gallery_marble_green.json": marble(14, (0.3, 0.55, 0.35)),
        "gallery_ground.json": ground(15),
        "cornell_white.json": cornell_wall(20, (0.95, 0.95, 0.95), "plaster.ppm", 2.0),
        "cornell_red.json": cornell_wall(21, (0.9, 0.25, 0.2), "plaster.ppm", 1.0),
        "cornell_green.json": cornell_wall(22, (0.25, 0.8, 0.3), "plaster.ppm", 1.0),
        "cornell_floor.json": cornell_wall(23, (1.0, 1.0, 1.0), "wood.ppm", 2.0),
        "cornell_ball.json": cornell_ball(24),
        "room_floor.json": room_material(30, "wood.ppm", "tiles.ppm", 3.0, (1.0, 1.0, 1.0)),
        "room_wall.json": room_material(31, "plaster.ppm", "fabric.ppm", 2.0, (1.0, 0.97, 0.92)),
        "room_cloth.json": room_material(32, "fabric.ppm", "plaster.ppm", 4.0, (1.0, 1.0, 1.0)),
        "room_tiles.json": room_material(33, "tiles.ppm", "wood.ppm", 2.0, (0.95, 0.95, 1.0)),
        "hostile_a.json": hostile(40, (0.55, 0.5, 0.6)),
        "hostile_b.json": hostile(41, (0.6, 0.35, 0.2)),
        "hostile_ground.json": hostile(42, (0.5, 0.5, 0.5)),
    }
    return m


# ---------------------------------------------------------------- scenes

def quad(p0, p1, p2, p3, material, uv_scale=1.0):
    pos = [x for p in (p0, p1, p2, p3) for x in p]
    s = uv_scale
    return {"positions": pos, "uvs": [0, 0, s, 0, s, s, 0, s], "indices": [0, 1, 2, 0, 2, 3],
            "material": material}


def box(lo, hi, material):
    """Axis-aligned box of five quads, open at the bottom."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    return [
        quad((x0, y1, z0), (x1, y1, z0), (x1, y1, z1), (x0, y1, z1), material),
        quad((x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1), material),
        quad((x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0), material),
        quad((x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0), material),
        quad((x1, y0, z0), (x1, y0, z1), (x1, y1, z1), (x1, y1, z0), material),
    ]


def mats(*names):
    return ["../materials/" + n for n in names]


def cornell():
    return {
        "camera": {"position": [0, 1, 3.4], "look_at": [0, 1, 0], "vfov": 40, "width": 256, "height": 256},
        "materials": mats("cornell_white.json", "cornell_red.json", "cornell_green.json",
                          "cornell_floor.json", "cornell_ball.json"),
        "meshes": [
            quad((-1, 0, 1), (1, 0, 1), (1, 0, -1), (-1, 0, -1), 23),
            quad((-1, 2, -1), (1, 2, -1), (1, 2, 1), (-1, 2, 1), 20),
            quad((-1, 0, -1), (1, 0, -1), (1, 2, -1), (-1, 2, -1), 20),
            quad((-1, 0, 1), (-1, 0, -1), (-1, 2, -1), (-1, 2, 1), 21),
            quad((1, 0, -1), (1, 0, 1), (1, 2, 1), (1, 2, -1), 22),
        ] + box((0.05, 0, -0.75), (0.65, 0.9, -0.15), 20),
        "spheres": [{"center": [-0.45, 0.4, 0.1], "radius": 0.4, "material": 24}],
        "lights": [
            {"type": "area", "corner": [-0.3, 1.995, -0.3], "edge_u": [0.6, 0, 0], "edge_v": [0, 0, 0.6],
             "radiance": [9, 8.5, 7.5]},
        ],
        "env": [0.02, 0.02, 0.025],
    }


def gallery(names, ground_mat, sphere_mats):
    spheres = []
    for i, m in enumerate(sphere_mats):
        x = -2.4 + 1.2 * i
        spheres.append({"center": [x, 0.5, -0.3 * (i % 2)], "radius": 0.5, "material": m,
                        "uv_scale": [2.0, 1.0]})
    return {
        "camera": {"position": [0, 1.6, 4.2], "look_at": [0, 0.4, 0], "vfov": 45, "width": 256, "height": 256},
        "materials": mats(*names),
        "meshes": [quad((-4, 0, 3), (4, 0, 3), (4, 0, -3), (-4, 0, -3), ground_mat)],
        "spheres": spheres,
        "lights": [
            {"type": "point", "position": [2, 4, 3], "intensity": [14, 13, 12]},
            {"type": "area", "corner": [-2, 3.5, -1], "edge_u": [1.5, 0, 0], "edge_v": [0, 0, 1.5],
             "radiance": [2.5, 2.5, 3]},
        ],
        "env": [0.25, 0.28, 0.35],
    }


def noise_gallery():
    return gallery(["gallery_marble.json", "gallery_lava.json", "gallery_granite.json",
                    "gallery_cells.json", "gallery_marble_green.json", "gallery_ground.json"],
                   15, [10, 11, 12, 13, 14])


def hostile_scene():
    return gallery(["hostile_a.json", "hostile_b.json", "hostile_ground.json"],
                   42, [40, 41, 40, 41, 40])


def texture_room():
    return {
        "camera": {"position": [0.2, 1.4, 3.6], "look_at": [0, 0.8, 0], "vfov": 50, "width": 256, "height": 256},
        "materials": mats("room_floor.json", "room_wall.json", "room_cloth.json", "room_tiles.json",
                          "classroom_like.json"),
        "meshes": [
            quad((-2, 0, 2), (2, 0, 2), (2, 0, -2), (-2, 0, -2), 30, 2.0),
            quad((-2, 0, -2), (2, 0, -2), (2, 2.5, -2), (-2, 2.5, -2), 31),
            quad((-2, 0, 2), (-2, 0, -2), (-2, 2.5, -2), (-2, 2.5, 2), 33),
            quad((2, 0, -2), (2, 0, 2), (2, 2.5, 2), (2, 2.5, -2), 31),
            quad((-2, 2.5, -2), (2, 2.5, -2), (2, 2.5, 2), (-2, 2.5, 2), 31),
        ] + box((-0.9, 0, -0.9), (0.9, 0.75, 0.1), 1),
        "spheres": [{"center": [1.1, 0.35, 0.7], "radius": 0.35, "material": 32, "uv_scale": [3.0, 2.0]}],
        "lights": [
            {"type": "area", "corner": [-0.6, 2.49, -0.6], "edge_u": [1.2, 0, 0], "edge_v": [0, 0, 1.2],
             "radiance": [4, 3.8, 3.5]},
            {"type": "point", "position": [1.5, 2.0, 1.5], "intensity": [3, 3, 3]},
        ],
        "env": [0.05, 0.05, 0.05],
    }


# ---------------------------------------------------------------- goldens

INTRINSIC = {
    "ConstFloat": 0, "ConstColor": 0,
    "UV": 1, "TexImage": 1, "Checker": 1, "NoiseFBM": 1,
    "Position": 2, "Normal": 2, "IncomingDir": 2, "BsdfDiffuse": 2, "BsdfOutput": 2,
}
NAMES = ["CONST", "UV", "OTHER"]


def dep_golden(doc):
    """Independent post-order walk of the raw graph."""
    nodes = {n["id"]: n for n in doc["nodes"]}
    memo = {}

    def walk(i):
        if i in memo:
            return memo[i]
        n = nodes[i]
        d = INTRINSIC.get(n["kind"], 0)
        for j in n.get("inputs", []):
            d = max(d, walk(j))
        memo[i] = d
        return d

    for i in sorted(nodes):
        walk(i)
    return {str(i): NAMES[memo[i]] for i in sorted(nodes)}


def viridis():
    from matplotlib import colormaps
    return colormaps["viridis"].colors


def dump(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def main():
    for d in ("tex", "materials", "scenes", "golden"):
        os.makedirs(os.path.join(FIX, d), exist_ok=True)
    for name, img in textures().items():
        write_ppm(os.path.join(FIX, "tex", name), img)
    # materials reference textures as ../tex/<name>
    for name, doc in materials().items():
        for n in doc["nodes"]:
            if n["kind"] == "TexImage":
                n["params"]["image"] = "../tex/" + n["params"]["image"]
        dump(os.path.join(FIX, "materials", name), doc)
    for name, doc in [("cornell_mat.json", cornell()), ("noise_gallery.json", noise_gallery()),
                      ("texture_room.json", texture_room()), ("cache_hostile.json", hostile_scene())]:
        dump(os.path.join(FIX, "scenes", name), doc)
    classroom = materials()["classroom_like.json"]
    assert len(classroom["nodes"]) >= 100, len(classroom["nodes"])
    dump(os.path.join(FIX, "golden", "classroom_like.deps.json"), dep_golden(classroom))
    with open(os.path.join(ROOT, "crates", "cli", "data", "viridis.csv"), "w") as f:
        for r, g, b in viridis():
            f.write("%r,%r,%r\n" % (r, g, b))
    print("classroom_like nodes:", len(classroom["nodes"]), file=sys.stderr)


if __name__ == "__main__":
    main()
