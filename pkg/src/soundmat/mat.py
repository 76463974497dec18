"""Mat coordinate system: six rectangular action zones and position lookup.

Coordinates are millimetres with the origin at the mat's top-left
corner, x growing rightward and y growing downward. The canonical mat
is A3-like (420 x 297 mm) with a 3 x 2 grid of zones assigned row-major
in label-id order, so the top row reads shake, go_forward, light_up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .actions import N_ACTIONS, Action
from .errors import MalformedJson


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rectangle: {self}")

    def contains(self, x: float, y: float) -> bool:
        """Closed containment: boundary points count as inside."""
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def interior_overlaps(self, other: "Rect") -> bool:
        return (
            min(self.x1, other.x1) > max(self.x0, other.x0)
            and min(self.y1, other.y1) > max(self.y0, other.y0)
        )


@dataclass(frozen=True)
class MatLayout:
    width_mm: float
    height_mm: float
    zones: tuple[tuple[Rect, Action], ...]

    def __post_init__(self) -> None:
        if len(self.zones) != N_ACTIONS:
            raise ValueError(f"expected {N_ACTIONS} zones, got {len(self.zones)}")
        for i, (rect, action) in enumerate(self.zones):
            if int(action) != i:
                raise ValueError("zones must be listed in label-id order")
            if not (0 <= rect.x0 and rect.x1 <= self.width_mm and 0 <= rect.y0 and rect.y1 <= self.height_mm):
                raise ValueError(f"zone {action.canonical_name} exceeds mat bounds")
        for i in range(len(self.zones)):
            for j in range(i + 1, len(self.zones)):
                if self.zones[i][0].interior_overlaps(self.zones[j][0]):
                    raise ValueError("zone interiors must be pairwise disjoint")

    def rect_for(self, action: Action) -> Rect:
        return self.zones[int(action)][0]


@dataclass(frozen=True)
class DevicePose:
    x_mm: float
    y_mm: float
    heading_deg: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading_deg", self.heading_deg % 360.0)


def canonical_layout() -> MatLayout:
    """420 x 297 mm mat, 10 mm outer margin and gutters, 3 x 2 zone grid."""
    width, height = 420.0, 297.0
    margin, gutter = 10.0, 10.0
    cols, rows = 3, 2
    zone_w = (width - 2 * margin - (cols - 1) * gutter) / cols
    zone_h = (height - 2 * margin - (rows - 1) * gutter) / rows
    zones = []
    for action in Action:
        row, col = divmod(int(action), cols)
        x0 = margin + col * (zone_w + gutter)
        y0 = margin + row * (zone_h + gutter)
        zones.append((Rect(x0, y0, x0 + zone_w, y0 + zone_h), action))
    return MatLayout(width_mm=width, height_mm=height, zones=tuple(zones))


def zone_at(layout: MatLayout, pose: DevicePose) -> Action | None:
    """Label of the zone containing the pose, or None for gutters/off-mat.

    Zones are scanned in label-id order, so a point on a shared
    boundary resolves to the lowest id.
    """
    for rect, action in layout.zones:
        if rect.contains(pose.x_mm, pose.y_mm):
            return action
    return None


def layout_to_json(layout: MatLayout) -> dict:
    return {
        "format": "soundmat-mat-layout",
        "version": 1,
        "width_mm": layout.width_mm,
        "height_mm": layout.height_mm,
        "zones": [
            {"action": int(action), "rect": [r.x0, r.y0, r.x1, r.y1]}
            for r, action in layout.zones
        ],
    }


def layout_from_json(doc: dict) -> MatLayout:
    try:
        zones = tuple(
            (Rect(*[float(v) for v in z["rect"]]), Action(int(z["action"])))
            for z in doc["zones"]
        )
        return MatLayout(
            width_mm=float(doc["width_mm"]),
            height_mm=float(doc["height_mm"]),
            zones=zones,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedJson(f"bad layout document: {exc}") from exc


def load_layout(path) -> MatLayout:
    with open(path, "r", encoding="utf-8") as fh:
        return layout_from_json(json.load(fh))


def save_layout(path, layout: MatLayout) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(layout_to_json(layout), fh, indent=2)
