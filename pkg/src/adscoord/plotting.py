"""Static SVG output: map frames with vehicles and free space, and the speed-policy region plot."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt
from matplotlib.colors import ListedColormap

from .dynamics import (
    REGIONS,
    KinematicParams,
    braking_distance,
    firing_regions,
    min_free_space,
)
from .mapgraph import MapGraph, Route

# fixed salt and no timestamp so identical inputs give identical files
_RC = {"svg.hashsalt": "adscoord", "svg.fonttype": "none", "font.size": 8}
_META = {"Date": None, "Creator": None}

UNSAFE = "unsafe"
LABELS = (UNSAFE, *REGIONS)
JUNCTION_COLOR = "#1f5fd6"
ROAD_COLOR = "#8a8a8a"


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def _edge_polyline(m: MapGraph, eid: str, lo: float = 0.0, hi: float | None = None, step: float = 1.0) -> list[tuple[float, float]]:
    e = m.edges[eid]
    hi = e.length if hi is None else hi
    n = max(2, int(math.ceil((hi - lo) / step)) + 1)
    return [m.edge_point(eid, lo + (hi - lo) * i / (n - 1))[0] for i in range(n)]


# --- map frames -----------------------------------------------------------

@dataclass(frozen=True)
class VehicleGlyph:
    id: str
    odo: float
    limit: float | None
    route: Route


def draw_frame(m: MapGraph, vehicles: Sequence[VehicleGlyph], path: Path, title: str = "") -> None:
    """Edges (junction edges highlighted), vehicles, their limits and free-space rides."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 7))
        for eid in sorted(m.edges):
            xs, ys = zip(*_edge_polyline(m, eid))
            junction = eid in m.junction_of
            ax.plot(xs, ys, color=JUNCTION_COLOR if junction else ROAD_COLOR, lw=2.0 if junction else 1.2, zorder=1)
        cmap = plt.get_cmap("tab20")
        for k, g in enumerate(vehicles):
            color = cmap(k % 20)
            if g.limit is not None and g.limit > g.odo:
                for eid, lo, hi in g.route.ride(g.odo, g.limit).pieces:
                    xs, ys = zip(*_edge_polyline(m, eid, lo, hi, step=0.5))
                    ax.plot(xs, ys, color=color, lw=4, alpha=0.45, solid_capstyle="butt", zorder=2)
            if g.limit is not None:
                lx, ly = m.point(g.route.position(g.limit))
                ax.plot([lx], [ly], marker="|", ms=9, mew=2, color=color, zorder=3)
            x, y = m.point(g.route.position(g.odo))
            ax.plot([x], [y], marker="o", ms=6, color=color, mec="black", mew=0.6, zorder=4, gid=f"vehicle-{g.id}")
            ax.annotate(g.id, (x, y), xytext=(4, 4), textcoords="offset points", fontsize=6, zorder=5)
        ax.set_aspect("equal")
        ax.axis("off")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


# --- region decomposition -------------------------------------------------

def region_label(v: float, f: float, p: KinematicParams) -> str:
    fired = firing_regions(v, f, p)
    if len(fired) == 1:
        return fired[0]
    if not fired and f < braking_distance(v, p):
        return UNSAFE
    raise AssertionError(f"regions {fired} at v={v}, f={f}")


def region_grid(p: KinematicParams, vmax: float, fmax: float, n: int) -> dict:
    """Labels on an ``n`` x ``n`` grid including both axes' end points."""
    if n < 2 or not (vmax > 0 and fmax > 0):
        raise ValueError("grid needs n >= 2 and positive extents")
    vs = [vmax * i / (n - 1) for i in range(n)]
    fs = [fmax * j / (n - 1) for j in range(n)]
    cells = [[v, f, region_label(v, f, p)] for v in vs for f in fs]
    frontier = [[v, braking_distance(v, p)] for v in vs]
    return {
        "params": {"dt": p.dt, "a_max": p.a_max, "b_max": p.b_max, "vmax": vmax, "fmax": fmax, "grid": n},
        "f_min": min_free_space(p),
        "labels": list(LABELS),
        "cells": cells,
        "frontier": frontier,
    }


def draw_regions(data: dict, path: Path) -> None:
    n = data["params"]["grid"]
    index = {name: i for i, name in enumerate(data["labels"])}
    img = [[0] * n for _ in range(n)]
    for k, (_, _, label) in enumerate(data["cells"]):
        i, j = divmod(k, n)
        img[j][i] = index[label]
    vmax, fmax = data["params"]["vmax"], data["params"]["fmax"]
    colors = ["#d9d9d9", "#d7301f", "#fc8d59", "#fdcc8a", "#91cf60"]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        ax.imshow(img, origin="lower", aspect="auto", extent=(0, vmax, 0, fmax), cmap=ListedColormap(colors),
                  vmin=-0.5, vmax=len(colors) - 0.5, interpolation="nearest")
        vs, bs = zip(*data["frontier"])
        ax.plot(vs, bs, color="black", lw=1.2, label="B(v)")
        ax.set_ylim(0, fmax)
        ax.set_xlabel("speed v [m/s]")
        ax.set_ylabel("free space f [m]")
        handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in colors]
        ax.legend(handles + ax.get_lines(), [*data["labels"], "B(v)"], loc="upper left", fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def frame_cycles(count: int, every: int) -> Iterable[int]:
    return range(0, count, max(1, every))
