#!/usr/bin/env python3
"""Regenerates assets/stroke_font.json.

Glyphs are polylines on a 32x32 design grid (y down). Curves are sampled
ellipse arcs; edit the tables below and re-run to change letterforms.
"""
import json
import math
import os

GRID = 32
STROKE_WIDTH = 3.2


def arc(cx, cy, rx, ry, deg0, deg1, n=18):
    """Sample an ellipse arc; angles in degrees, 0 = +x, 90 = down (y down)."""
    pts = []
    for i in range(n + 1):
        t = math.radians(deg0 + (deg1 - deg0) * i / n)
        pts.append([round(cx + rx * math.cos(t), 2), round(cy + ry * math.sin(t), 2)])
    return pts


def ring(cx, cy, rx, ry, n=24):
    return arc(cx, cy, rx, ry, 0, 360, n)


GLYPHS = {
    "0": [ring(16, 16, 9, 12.5)],
    "1": [[[11, 7], [16, 3], [16, 29]], [[11, 29], [21, 29]]],
    "2": [arc(16, 9.5, 9, 6.5, 180, 350, 14) + [[24.5, 13], [7, 27], [7, 29], [25, 29]]],
    "3": [arc(16, 9.5, 9, 6.5, 180, 450, 20) + arc(16, 22.5, 9, 6.5, 270, 540, 20)[1:]],
    "4": [[[21, 3], [5, 21], [27, 21]], [[21, 3], [21, 29]]],
    "5": [
        [[24, 3], [8, 3], [8, 13]]
        + [[13, 12], [18, 12.5]]
        + arc(15.5, 20.5, 9.5, 8.3, 295, 475, 16)
    ],
    "6": [
        [[24, 4], [19, 3], [14, 4], [10, 7.5], [8, 12], [7, 17], [7, 22]],
        ring(16, 22, 9, 7),
    ],
    "7": [[[7, 3], [25, 3], [13, 29]], [[11, 16], [20, 16]]],
    "8": [ring(16, 9.5, 7.5, 6.5), ring(16, 22.5, 9, 6.5)],
    "9": [ring(16, 10, 9, 7), [[25, 10], [25, 16], [23, 23], [19, 27], [14, 29]]],
    "S": [
        [[24, 6.5], [20.5, 4], [15, 3], [10, 4], [8, 7], [8.5, 10.5], [12, 13],
         [18, 15.5], [22, 17.5], [24, 20.5], [24, 24], [21.5, 27.5], [16, 29],
         [10.5, 28.5], [7.5, 26]]
    ],
    "C": [arc(16, 16, 9.5, 13, 40, 320, 22)],
    "B": [
        [[8, 3], [8, 29]],
        [[8, 3], [18, 3], [22, 4.5], [23.5, 7], [23.5, 10], [22, 12.5], [18, 14], [8, 14]],
        [[8, 14], [19, 14], [23, 16], [25, 19], [25, 24], [23, 27], [19, 29], [8, 29]],
    ],
    "K": [[[8, 3], [8, 29]], [[24, 3], [8, 17]], [[13, 13], [25, 29]]],
    "Y": [[[6, 3], [16, 15]], [[26, 3], [16, 15]], [[16, 15], [16, 29]]],
    "T": [[[5, 3], [27, 3]], [[16, 3], [16, 29]]],
    "A": [[[16, 3], [5, 29]], [[16, 3], [27, 29]], [[9.2, 19], [22.8, 19]]],
}


def main():
    out = {
        "grid": GRID,
        "stroke_width": STROKE_WIDTH,
        "glyphs": {g: strokes for g, strokes in GLYPHS.items()},
    }
    here = os.path.dirname(os.path.abspath(__file__))
    path = os.path.join(here, "..", "assets", "stroke_font.json")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
