"""Text and SVG renders: per-step ASCII frames, path overlays, value maps."""

from __future__ import annotations

import io

import numpy as np

OBJECT_COLOURS = ("#d62728", "#ff7f0e", "#e5c100")
PREY_COLOURS = {"easy": "#e5c100", "hard": "#9467bd"}
AGENT_COLOURS = ("#1f77b4", "#555555", "#8c564b", "#17becf")
CELL = 40


def ascii_frame(snap: dict) -> str:
    g = snap["grid_size"]
    rows = [["." for _ in range(g)] for _ in range(g)]
    for k, r, c in snap.get("objects", []):
        rows[r][c] = "ROY"[k] if k < 3 else "?"
    for _, r, c, kind in snap.get("prey", []):
        rows[r][c] = "e" if kind == "easy" else "H"
    for i, (r, c) in enumerate(snap["agents"]):
        rows[r][c] = "L" if i == 0 else str(i)
    return "\n".join("".join(row) for row in rows)


def ascii_frames(snapshots: list) -> str:
    """One frame per step; the learner is L, teammates are digits."""
    return "\n\n".join(f"t={s['step']}\n{ascii_frame(s)}" for s in snapshots) + "\n"


def _centre(r: int, c: int) -> tuple[float, float]:
    return (c + 0.5) * CELL, (r + 0.5) * CELL


def svg_paths(snapshots: list, title: str = "") -> str:
    """Initial board with every agent's trajectory drawn on top."""
    first = snapshots[0]
    g = first["grid_size"]
    size = g * CELL
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}" '
              f'viewBox="0 0 {size} {size + 20}">\n')
    out.write(f'<rect width="{size}" height="{size}" fill="white" stroke="black"/>\n')
    for i in range(1, g):
        out.write(f'<line x1="{i * CELL}" y1="0" x2="{i * CELL}" y2="{size}" stroke="#ddd"/>\n')
        out.write(f'<line x1="0" y1="{i * CELL}" x2="{size}" y2="{i * CELL}" stroke="#ddd"/>\n')
    for k, r, c in first.get("objects", []):
        x, y = _centre(r, c)
        out.write(f'<rect x="{x - 10}" y="{y - 10}" width="20" height="20" '
                  f'fill="{OBJECT_COLOURS[k % 3]}"/>\n')
    for _, r, c, kind in first.get("prey", []):
        x, y = _centre(r, c)
        out.write(f'<polygon points="{x},{y - 12} {x + 12},{y + 10} {x - 12},{y + 10}" '
                  f'fill="{PREY_COLOURS[kind]}"/>\n')
    n_agents = len(first["agents"])
    for i in range(n_agents):
        pts = [_centre(*s["agents"][i]) for s in snapshots]
        # small per-agent offset keeps overlapping paths visible
        d = (i - (n_agents - 1) / 2) * 4
        poly = " ".join(f"{x + d:.1f},{y + d:.1f}" for x, y in pts)
        colour = AGENT_COLOURS[i % len(AGENT_COLOURS)]
        out.write(f'<polyline points="{poly}" fill="none" stroke="{colour}" stroke-width="3" '
                  f'stroke-opacity="0.8"/>\n')
        x0, y0 = pts[0]
        x1, y1 = pts[-1]
        out.write(f'<circle cx="{x0 + d:.1f}" cy="{y0 + d:.1f}" r="6" fill="{colour}"/>\n')
        out.write(f'<rect x="{x1 + d - 5:.1f}" y="{y1 + d - 5:.1f}" width="10" height="10" '
                  f'fill="none" stroke="{colour}" stroke-width="2"/>\n')
    label = title or "learner = blue"
    out.write(f'<text x="4" y="{size + 15}" font-size="12" font-family="monospace">{label}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


def value_map_csv(vmap: np.ndarray) -> str:
    lines = [",".join("" if not np.isfinite(v) else f"{v:.6f}" for v in row) for row in vmap]
    return "\n".join(lines) + "\n"


def value_map_svg(vmap: np.ndarray, title: str = "") -> str:
    """Grey-scale heat map; NaN (occupied) cells are hatched red."""
    g = vmap.shape[0]
    size = g * CELL
    finite = vmap[np.isfinite(vmap)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    span = hi - lo if hi > lo else 1.0
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}">\n')
    for r in range(g):
        for c in range(g):
            v = vmap[r, c]
            if np.isfinite(v):
                level = int(round(255 * (1.0 - (v - lo) / span)))
                fill = f"rgb({level},{level},{level})"
            else:
                fill = "#f4c7c3"
            out.write(f'<rect x="{c * CELL}" y="{r * CELL}" width="{CELL}" height="{CELL}" '
                      f'fill="{fill}" stroke="#999"/>\n')
            if np.isfinite(v):
                x, y = _centre(r, c)
                colour = "white" if (v - lo) / span > 0.5 else "black"
                out.write(f'<text x="{x}" y="{y + 4}" font-size="10" text-anchor="middle" '
                          f'fill="{colour}">{v:.2f}</text>\n')
    out.write(f'<text x="4" y="{size + 15}" font-size="12" font-family="monospace">{title}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()
