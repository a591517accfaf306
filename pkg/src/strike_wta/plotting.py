"""Minimal SVG output for learning curves and engagement ground tracks."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN = 60
DISC_SCALE = 0.6  # px of radius per unit of target value


class PlotInputError(ValueError):
    pass


@dataclass
class Frame:
    """Maps data coordinates into the plotting rectangle."""

    x0: float
    x1: float
    y0: float
    y1: float
    equal: bool = False

    def __post_init__(self):
        if self.x1 <= self.x0:
            self.x0, self.x1 = self.x0 - 1.0, self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y0, self.y1 = self.y0 - 1.0, self.y0 + 1.0
        self.sx = (WIDTH - 2 * MARGIN) / (self.x1 - self.x0)
        self.sy = (HEIGHT - 2 * MARGIN) / (self.y1 - self.y0)
        if self.equal:
            self.sx = self.sy = min(self.sx, self.sy)

    def px(self, x, y):
        return MARGIN + (x - self.x0) * self.sx, HEIGHT - MARGIN - (y - self.y0) * self.sy


def _axes(frame: Frame, xlabel: str, ylabel: str, title: str) -> list[str]:
    L, R, T, B = MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN
    out = [
        f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{T - 20}" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="18" y="{HEIGHT / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        fx = frame.x0 + (frame.x1 - frame.x0) * k / 4
        fy = frame.y0 + (frame.y1 - frame.y0) * k / 4
        x, _ = frame.px(fx, frame.y0)
        _, y = frame.px(frame.x0, fy)
        out.append(f'<text x="{x:.1f}" y="{B + 16}" text-anchor="middle" font-size="11">{fx:.4g}</text>')
        out.append(f'<text x="{L - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{fy:.4g}</text>')
    return out


def _document(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">'
    )
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def _points(frame: Frame, xs, ys) -> str:
    return " ".join("{:.2f},{:.2f}".format(*frame.px(x, y)) for x, y in zip(xs, ys))


def _read_rows(path, required: list[str]) -> list[tuple[int, dict]]:
    """CSV rows paired with their 1-based file line numbers."""
    path = Path(path)
    if not path.is_file():
        raise PlotInputError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotInputError(f"{path}: line 1: missing header")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise PlotInputError(f"{path}: line 1: missing column(s) {', '.join(missing)}")
        return [(reader.line_num, row) for row in reader]


def _num(path, line, row, key) -> float:
    try:
        return float(row[key])
    except (TypeError, ValueError):
        raise PlotInputError(f"{path}: line {line}: bad value {row.get(key)!r} for {key}") from None


def learning_curve_svg(curve_csv, out_svg) -> None:
    """Mean rollout reward with a min-max band against iteration."""
    rows = _read_rows(curve_csv, ["iteration", "mean_reward", "min_reward", "max_reward"])
    it = np.array([_num(curve_csv, ln, r, "iteration") for ln, r in rows])
    mean = np.array([_num(curve_csv, ln, r, "mean_reward") for ln, r in rows])
    lo = np.array([_num(curve_csv, ln, r, "min_reward") for ln, r in rows])
    hi = np.array([_num(curve_csv, ln, r, "max_reward") for ln, r in rows])
    if len(it):
        frame = Frame(it.min(), it.max(), min(0.0, lo.min()), hi.max())
    else:
        frame = Frame(0.0, 1.0, 0.0, 1.0)
    body = _axes(frame, "iteration", "rollout reward", "Learning curve")
    if len(it):
        band = _points(frame, np.r_[it, it[::-1]], np.r_[hi, lo[::-1]])
        body.append(f'<polygon class="band" points="{band}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>')
        body.append(f'<polyline class="mean" points="{_points(frame, it, mean)}" fill="none" stroke="#08519c" stroke-width="2"/>')
    Path(out_svg).write_text(_document(body))


def engagement_svg(trace_csv, out_svg) -> None:
    """Ground-plane projection: one polyline per weapon, one disc per target.

    Disc radius is proportional to target value; destroyed targets are
    filled red and alive ones grey.
    """
    rows = _read_rows(trace_csv, ["time", "entity", "id", "x", "y", "status"])
    weapons: dict[int, list] = {}
    targets: dict[int, dict] = {}
    for ln, r in rows:
        kind = r["entity"]
        try:
            i = int(r["id"])
        except (TypeError, ValueError):
            raise PlotInputError(f"{trace_csv}: line {ln}: bad id {r.get('id')!r}") from None
        x, y = _num(trace_csv, ln, r, "x"), _num(trace_csv, ln, r, "y")
        if kind == "weapon":
            weapons.setdefault(i, []).append((x, y))
        elif kind == "target":
            val = r.get("value") or "1"
            try:
                v = float(val)
            except ValueError:
                raise PlotInputError(f"{trace_csv}: line {ln}: bad value {val!r} for value") from None
            t = targets.setdefault(i, {"x": x, "y": y, "value": v})
            t["status"] = r["status"]
        else:
            raise PlotInputError(f"{trace_csv}: line {ln}: unknown entity {kind!r}")
    pts = [p for track in weapons.values() for p in track] + [(t["x"], t["y"]) for t in targets.values()]
    if pts:
        a = np.array(pts)
        pad = 0.05 * max(np.ptp(a[:, 0]), np.ptp(a[:, 1]), 1.0)
        frame = Frame(a[:, 0].min() - pad, a[:, 0].max() + pad, a[:, 1].min() - pad, a[:, 1].max() + pad, equal=True)
    else:
        frame = Frame(0.0, 1.0, 0.0, 1.0)
    body = _axes(frame, "x (m)", "y (m)", "Sample engagement")
    for i in sorted(weapons):
        xs, ys = zip(*weapons[i])
        body.append(
            f'<polyline class="weapon" data-id="{i}" points="{_points(frame, xs, ys)}" '
            f'fill="none" stroke="#3182bd" stroke-width="1"/>'
        )
    for j in sorted(targets):
        t = targets[j]
        cx, cy = frame.px(t["x"], t["y"])
        fill = "#de2d26" if t["status"] == "destroyed" else "#bdbdbd"
        body.append(
            f'<circle class="target" data-id="{j}" data-value="{t["value"]:g}" cx="{cx:.2f}" cy="{cy:.2f}" '
            f'r="{DISC_SCALE * t["value"]:.3f}" fill="{fill}" stroke="black"/>'
        )
    Path(out_svg).write_text(_document(body))
