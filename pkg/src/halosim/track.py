"""Track geometry: named closed paths, region polygons, radio coverage.

Coordinates are meters in a local tangent plane (x north, y east) anchored at
a geodetic origin.  The default track is a synthetic 1500 m oval with smooth
curvature transitions; it is not survey data for any real circuit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
import yaml


class AmbiguousRegion(Exception):
    """A query point fell inside two or more region polygons."""


@dataclass
class ProjectResult:
    s_m: float
    lateral_m: float
    index: int


class Path:
    """Closed waypoint loop with arclength utilities.

    Waypoints are uniformly spaced; the loop closes implicitly from the last
    waypoint back to the first.
    """

    def __init__(self, name: str, xy: np.ndarray) -> None:
        if len(xy) < 3:
            raise ValueError(f"path {name!r} needs at least 3 waypoints")
        self.name = name
        self.xy = np.asarray(xy, dtype=float)
        diffs = np.diff(np.vstack([self.xy, self.xy[:1]]), axis=0)
        seg_lengths = np.hypot(diffs[:, 0], diffs[:, 1])
        self.seg_lengths = seg_lengths
        self.cum_s = np.concatenate([[0.0], np.cumsum(seg_lengths)])
        self.total_length = float(self.cum_s[-1])

    def __len__(self) -> int:
        return len(self.xy)

    def closest_index(self, point: np.ndarray, hint: int | None = None) -> int:
        """Nearest waypoint; windowed search when a warm-start hint exists."""
        if hint is None:
            d2 = np.sum((self.xy - point) ** 2, axis=1)
            return int(np.argmin(d2))
        n = len(self.xy)
        idx = (np.arange(hint - 25, hint + 26)) % n
        d2 = np.sum((self.xy[idx] - point) ** 2, axis=1)
        return int(idx[int(np.argmin(d2))])

    def project(self, point: np.ndarray, hint: int | None = None) -> ProjectResult:
        """Arclength and unsigned lateral offset of `point` on the loop."""
        point = np.asarray(point, dtype=float)
        i = self.closest_index(point, hint)
        n = len(self.xy)
        best = None
        for a in ((i - 1) % n, i):
            b = (a + 1) % n
            p, q = self.xy[a], self.xy[b]
            seg = q - p
            seg_len2 = float(seg @ seg)
            t = float(np.clip((point - p) @ seg / seg_len2, 0.0, 1.0))
            closest = p + t * seg
            dist = float(np.hypot(*(point - closest)))
            s = float(self.cum_s[a] + t * self.seg_lengths[a])
            if best is None or dist < best[0]:
                best = (dist, s)
        return ProjectResult(best[1] % self.total_length, best[0], i)

    def point_at_s(self, s_m: float) -> np.ndarray:
        s = s_m % self.total_length
        i = int(np.searchsorted(self.cum_s, s, side="right") - 1)
        i = min(i, len(self.xy) - 1)
        t = (s - self.cum_s[i]) / self.seg_lengths[i]
        j = (i + 1) % len(self.xy)
        return self.xy[i] + t * (self.xy[j] - self.xy[i])

    def heading_at_s(self, s_m: float) -> float:
        """Tangent heading (radians, atan2(east, north)) at arclength s."""
        p = self.point_at_s(s_m)
        q = self.point_at_s(s_m + 0.5)
        return float(np.arctan2(q[1] - p[1], q[0] - p[0]))


@dataclass
class TrackModel:
    origin_lat_deg: float
    origin_lon_deg: float
    paths: dict[str, Path]
    polygons: dict[str, np.ndarray]
    # Arclength intervals (on the centerline) where a radio link is dead.
    dead_arcs: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    @property
    def centerline(self) -> Path:
        return self.paths["centerline"]

    def link_alive(self, link: str, s_m: float) -> bool:
        s = s_m % self.centerline.total_length
        for s0, s1 in self.dead_arcs.get(link, []):
            if s0 <= s <= s1:
                return False
        return True


def point_in_polygon(point: np.ndarray, polygon: np.ndarray) -> bool:
    """Even-odd rule; boundary points count as inside."""
    x, y = float(point[0]), float(point[1])
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = (x2 - x1) * (y - y1) / (y2 - y1) + x1
            if x < x_cross:
                inside = not inside
    return inside


def in_region(point: np.ndarray, polygons: dict[str, np.ndarray]) -> str | None:
    """Name of the polygon containing `point`, or None.

    Raises AmbiguousRegion when the point is inside more than one polygon:
    region polygons must not overlap.
    """
    hits = [name for name, poly in polygons.items() if point_in_polygon(point, poly)]
    if len(hits) > 1:
        raise AmbiguousRegion(f"point in {hits}")
    return hits[0] if hits else None


# -- default track ----------------------------------------------------------


def _integrate_centerline(
    segments: list[tuple[float, float, float]], ds: float = 0.25
) -> np.ndarray:
    """Integrate a curvature profile into a closed loop.

    `segments` is a list of (length, kappa_start, kappa_end); curvature ramps
    linearly inside a segment.  Residual closure error is distributed
    linearly so the loop closes exactly.
    """
    points = [np.zeros(2)]
    heading = 0.0
    for length, k0, k1 in segments:
        steps = max(1, round(length / ds))
        h = length / steps
        for j in range(steps):
            t_mid = (j + 0.5) / steps
            kappa = k0 + (k1 - k0) * t_mid
            heading_mid = heading + kappa * h / 2.0
            points.append(
                points[-1] + h * np.array([np.cos(heading_mid), np.sin(heading_mid)])
            )
            heading += kappa * h
    pts = np.array(points)
    drift = pts[-1] - pts[0]
    weights = np.linspace(0.0, 1.0, len(pts))[:, None]
    pts = pts - weights * drift
    return pts[:-1]


def _resample_uniform(xy: np.ndarray, spacing_target: float) -> np.ndarray:
    closed = np.vstack([xy, xy[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    n = max(8, round(total / spacing_target))
    samples = np.linspace(0.0, total, n, endpoint=False)
    out = np.empty((n, 2))
    out[:, 0] = np.interp(samples, cum, closed[:, 0])
    out[:, 1] = np.interp(samples, cum, closed[:, 1])
    return out


def _offset_path(xy: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Shift each waypoint along the local left normal by offsets[i]."""
    nxt = np.roll(xy, -1, axis=0)
    prv = np.roll(xy, 1, axis=0)
    tangent = nxt - prv
    heading = np.arctan2(tangent[:, 1], tangent[:, 0])
    left = np.stack([np.sin(heading), -np.cos(heading)], axis=1)
    return xy + offsets[:, None] * left


def _band_polygon(
    center: Path, s0: float, s1: float, off_lo: float, off_hi: float
) -> np.ndarray:
    """Quad spanning centerline arclength [s0, s1] at left offsets [lo, hi]."""
    corners = []
    for s, off in ((s0, off_lo), (s0, off_hi), (s1, off_hi), (s1, off_lo)):
        p = center.point_at_s(s)
        heading = center.heading_at_s(s)
        left = np.array([np.sin(heading), -np.cos(heading)])
        corners.append(p + off * left)
    return np.array(corners)


def build_default_track(
    total_length_m: float = 1500.0,
    turn_radius_m: float = 150.0,
    transition_m: float = 250.0,
    spacing_m: float = 2.0,
    origin_lat_deg: float = 36.272,
    origin_lon_deg: float = -115.011,
) -> TrackModel:
    """Synthetic oval: two straights, two 180-degree turns with linear
    curvature ramps (so steering demand is continuous), driven with left
    turns.  Raceline sits 3 m inside the centerline, the overtake lane 3 m
    outside, and the pit lane widens to 14 m inside along the front
    straight."""
    # Negative curvature: compass heading decreases, i.e. left turns, so the
    # infield sits on the +left side used by the offset paths below.
    kappa = -1.0 / turn_radius_m
    arc_len = np.pi * turn_radius_m - transition_m
    if arc_len <= 0:
        raise ValueError("transition too long for turn radius")
    turn_len = arc_len + 2 * transition_m
    straight = (total_length_m - 2 * turn_len) / 2.0
    if straight <= 0:
        raise ValueError("turn geometry exceeds total length")
    segments = [
        (straight, 0.0, 0.0),
        (transition_m, 0.0, kappa),
        (arc_len, kappa, kappa),
        (transition_m, kappa, 0.0),
        (straight, 0.0, 0.0),
        (transition_m, 0.0, kappa),
        (arc_len, kappa, kappa),
        (transition_m, kappa, 0.0),
    ]
    center_xy = _resample_uniform(_integrate_centerline(segments), spacing_m)
    center = Path("centerline", center_xy)
    n = len(center_xy)

    raceline_xy = _resample_uniform(_offset_path(center_xy, np.full(n, 3.0)), spacing_m)
    overtake_xy = _resample_uniform(
        _offset_path(center_xy, np.full(n, -3.0)), spacing_m
    )

    # Pit offsets: widen to 14 m inside across the pit zone.  The lane tapers
    # in before the pit-entry gate, holds at full width past the pit-exit
    # gate, and tapers back to the 3 m shoulder.
    s_axis = center.cum_s[:-1]
    pit_offsets = np.full(n, 3.0)
    taper = 40.0
    pit_s0 = total_length_m - 80.0 - taper
    span_len = (130.0 + taper - pit_s0) % total_length_m
    for i, s in enumerate(s_axis):
        span_pos = (s - pit_s0) % total_length_m
        if span_pos >= span_len:
            continue
        edge = min(span_pos, span_len - span_pos)
        blend = np.sin(np.pi * min(edge, taper) / (2.0 * taper)) ** 2
        pit_offsets[i] = 3.0 + 11.0 * blend
    pits_xy = _resample_uniform(_offset_path(center_xy, pit_offsets), spacing_m)

    paths = {
        "centerline": center,
        "raceline": Path("raceline", raceline_xy),
        "overtake": Path("overtake", overtake_xy),
        "pits": Path("pits", pits_xy),
    }

    back_start = straight + turn_len
    # Passing-zone gates bracket the back straight.  When the straight is too
    # short to hold both 20 m gates without overlap, push them just outside
    # it, onto the transition ends where curvature is still near zero.
    gate = 20.0
    if straight >= 2 * gate + 20.0:
        pz_start = (back_start + 5.0, back_start + 5.0 + gate)
        pz_end = (back_start + straight - 5.0 - gate, back_start + straight - 5.0)
    else:
        pz_start = (back_start - 5.0 - gate, back_start - 5.0)
        pz_end = (back_start + straight + 5.0, back_start + straight + 5.0 + gate)
    polygons = {
        "pit_entry": _band_polygon(center, total_length_m - 70.0, total_length_m - 50.0, 6.0, 18.0),
        "pit_slowdown": _band_polygon(center, 10.0, 30.0, 6.0, 18.0),
        "speed_up": _band_polygon(center, 60.0, 80.0, 6.0, 18.0),
        "pit_exit": _band_polygon(center, 100.0, 120.0, 6.0, 18.0),
        "passing_zone_start": _band_polygon(center, *pz_start, -8.0, 8.0),
        "passing_zone_end": _band_polygon(center, *pz_end, -8.0, 8.0),
    }
    return TrackModel(
        origin_lat_deg=origin_lat_deg,
        origin_lon_deg=origin_lon_deg,
        paths=paths,
        polygons=polygons,
        dead_arcs={"mylaps": [], "basestation": []},
    )


# -- file round trip ---------------------------------------------------------


def save_track(track: TrackModel, path: str | FsPath) -> None:
    doc = {
        "origin": {"lat_deg": track.origin_lat_deg, "lon_deg": track.origin_lon_deg},
        "paths": {
            name: [[float(x), float(y)] for x, y in p.xy]
            for name, p in track.paths.items()
        },
        "polygons": {
            name: [[float(x), float(y)] for x, y in poly]
            for name, poly in track.polygons.items()
        },
        "dead_arcs": {
            link: [[float(a), float(b)] for a, b in arcs]
            for link, arcs in track.dead_arcs.items()
        },
    }
    FsPath(path).write_text(yaml.safe_dump(doc, sort_keys=True))


def load_track(path: str | FsPath) -> TrackModel:
    doc = yaml.safe_load(FsPath(path).read_text())
    return TrackModel(
        origin_lat_deg=float(doc["origin"]["lat_deg"]),
        origin_lon_deg=float(doc["origin"]["lon_deg"]),
        paths={
            name: Path(name, np.array(pts, dtype=float))
            for name, pts in doc["paths"].items()
        },
        polygons={
            name: np.array(pts, dtype=float)
            for name, pts in doc["polygons"].items()
        },
        dead_arcs={
            link: [(float(a), float(b)) for a, b in arcs]
            for link, arcs in doc.get("dead_arcs", {}).items()
        },
    )
