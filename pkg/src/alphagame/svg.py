"""Static SVG overlay of per-player mean trajectories."""

from __future__ import annotations

import numpy as np

COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
          "#bcbd22", "#17becf")
MARK_TIMES = (0.25, 0.5, 0.75)


def mean_trajectories(paths, n_players: int) -> np.ndarray:
    """Batch mean of the states, shape ``[P+1, N, d]``."""
    X = np.asarray(paths.X)
    M, P1, Nd = X.shape
    return X.mean(axis=0).reshape(P1, n_players, Nd // n_players)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def trajectory_svg(means, times, targets=None, size: int = 480, margin: int = 40, title: str = "") -> str:
    """SVG of the first two coordinates of each player's mean path.

    Markers labelled "1", "2", "3" sit on the grid nodes nearest to
    t = 0.25, 0.5, 0.75 (as fractions of the horizon). Output depends only on
    the inputs, so it is byte-stable.
    """
    means = np.asarray(means, dtype=float)
    times = np.asarray(times, dtype=float)
    P1, N, d = means.shape
    if d < 2:
        means = np.concatenate([means, np.zeros((P1, N, 1))], axis=-1)
    xy = means[..., :2]
    pts = xy.reshape(-1, 2)
    if targets is not None:
        targets = np.asarray(targets, dtype=float)[:, :2]
        pts = np.concatenate([pts, targets])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(np.max(hi - lo), 1e-9))
    centre = (lo + hi) / 2
    scale = (size - 2 * margin) / span

    def to_px(p):
        x = size / 2 + (p[0] - centre[0]) * scale
        y = size / 2 - (p[1] - centre[1]) * scale
        return _fmt(x), _fmt(y)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<text x="{margin}" y="{margin // 2}" font-size="14" font-family="sans-serif">{title}</text>')
    horizon = times[-1] - times[0]
    marks = [int(np.argmin(np.abs(times - (times[0] + f * horizon)))) for f in MARK_TIMES]
    for i in range(N):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(",".join(to_px(p)) for p in xy[:, i])
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        x0, y0 = to_px(xy[0, i])
        out.append(f'<circle cx="{x0}" cy="{y0}" r="3" fill="{color}"/>')
        for label, ll in enumerate(marks, start=1):
            x, y = to_px(xy[ll, i])
            out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="white" stroke="{color}"/>')
            out.append(f'<text x="{x}" y="{y}" dx="5" dy="-5" font-size="11" font-family="sans-serif" '
                       f'fill="{color}">{label}</text>')
        if targets is not None:
            tx, ty = to_px(targets[i])
            out.append(f'<path d="M {tx} {ty} m -5 -5 l 10 10 m 0 -10 l -10 10" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{margin}" y="{size - margin // 2 - 14 * (N - 1 - i)}" font-size="12" '
                   f'font-family="sans-serif" fill="{color}">player {i + 1}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, paths, n_players: int, targets=None, title: str = ""):
    text = trajectory_svg(mean_trajectories(paths, n_players), paths.grid.nodes, targets, title=title)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text
