"""Top-view occlusion geometry for an object walking through a doorway.

Frame conventions
-----------------
The walker moves along ``+x``.  The doorway aperture is the gap
``-d_door/2 <= y <= d_door/2`` in the wall plane ``x = 0``.  The reader
antenna sits on the ``-y`` jamb (or behind it) and the tag board on the
``+y`` jamb, tags spaced along ``x``.  Every antenna-tag sight line therefore
crosses the walking lane, and a walker blocks it while its footprint (a
rectangle ``l_h`` wide across the lane and ``d_h`` deep along it) overlaps
the line.

Sight-line angles are measured between the sight line and the doorway plane,
so a tag straight across from the antenna has angle 0 and the impact distance
reduces to the walker depth ``d_h``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "ClampedImpactWarning",
    "Scene",
    "MovingObject",
    "OcclusionWindow",
    "sight_angles",
    "impact_distance",
    "impact_time",
    "occlusion_windows",
]

_TOL = 1e-9

# Default layout: the antenna sits 1 m upstream of the doorway plane and the
# tag row starts 0.6 m downstream, so every sight line crosses the lane at a
# steep angle and a walker stays in it for about a second.
ANTENNA_X = -1.0
TAG_X0 = 0.6


class GeometryError(ValueError):
    """Raised for invalid scenes, objects or angle arguments."""


class ClampedImpactWarning(RuntimeWarning):
    """A negative impact distance was clamped to zero."""


@dataclass(frozen=True)
class Scene:
    """Doorway, antenna and tag-board layout (metres).

    Use :meth:`doorway` to build the usual layout; the raw constructor takes
    explicit coordinates and validates them.
    """

    d_door: float = 1.0
    d_set: float = 0.2
    tag_count: int = 5
    antenna_pos: tuple[float, float] | None = None
    tag_pos: tuple[tuple[float, float], ...] = field(default=())
    l_tag: float = 0.0

    def __post_init__(self):
        if not self.d_door > 0:
            raise GeometryError("d_door must be positive")
        if not self.d_set > 0:
            raise GeometryError("d_set must be positive")
        if int(self.tag_count) != self.tag_count or self.tag_count < 1:
            raise GeometryError("tag_count must be a positive integer")
        if self.l_tag < 0:
            raise GeometryError("l_tag must be non-negative")
        if not self.tag_pos:
            pos = tuple((TAG_X0 + i * self.d_set, self.d_door / 2.0) for i in range(self.tag_count))
            object.__setattr__(self, "tag_pos", pos)
        if self.antenna_pos is None:
            object.__setattr__(self, "antenna_pos", (ANTENNA_X, -self.d_door / 2.0))
        object.__setattr__(self, "antenna_pos", tuple(float(c) for c in self.antenna_pos))
        object.__setattr__(
            self, "tag_pos", tuple((float(x), float(y)) for x, y in self.tag_pos)
        )
        if len(self.tag_pos) != self.tag_count:
            raise GeometryError("tag_pos length must equal tag_count")
        if len(set(self.tag_pos)) != self.tag_count:
            raise GeometryError("tag positions must be distinct")
        pts = np.asarray(self.tag_pos, dtype=float)
        if self.tag_count > 1:
            gaps = np.hypot(*np.diff(pts, axis=0).T)
            if np.any(np.abs(gaps - self.d_set) > 1e-9 * max(1.0, self.d_set)):
                raise GeometryError("tags must be equally spaced by d_set")
        if self.antenna_pos[1] > -self.d_door / 2.0 + _TOL:
            raise GeometryError("antenna must sit on or behind the -y jamb")
        if np.any(pts[:, 1] < self.d_door / 2.0 - _TOL):
            raise GeometryError("tags must sit on or behind the +y jamb")

    @classmethod
    def doorway(
        cls,
        d_door: float = 1.0,
        d_set: float = 0.2,
        tag_count: int = 5,
        antenna_x: float = ANTENNA_X,
        antenna_setback: float = 0.0,
        tag_setback: float = 0.0,
        tag_x0: float | None = TAG_X0,
        l_tag: float = 0.0,
    ) -> "Scene":
        """Antenna on the -y jamb, a tag row along x on the +y jamb.

        ``tag_x0`` is the x of the first tag; ``None`` centres the row on
        ``x = 0``.
        """
        if tag_x0 is None:
            tag_x0 = -(tag_count - 1) / 2.0 * d_set
        y_t = d_door / 2.0 + tag_setback
        tags = tuple((tag_x0 + i * d_set, y_t) for i in range(tag_count))
        return cls(
            d_door=d_door,
            d_set=d_set,
            tag_count=tag_count,
            antenna_pos=(antenna_x, -d_door / 2.0 - antenna_setback),
            tag_pos=tags,
            l_tag=l_tag,
        )

    @property
    def antenna_setback(self) -> float:
        return -self.d_door / 2.0 - self.antenna_pos[1]

    def tag_endpoints(self, tag_index: int) -> tuple[tuple[float, float], tuple[float, float]]:
        self._check_index(tag_index)
        x, y = self.tag_pos[tag_index]
        h = self.l_tag / 2.0
        return (x - h, y), (x + h, y)

    def tag_distance(self, tag_index: int) -> float:
        self._check_index(tag_index)
        x, y = self.tag_pos[tag_index]
        return math.hypot(x - self.antenna_pos[0], y - self.antenna_pos[1])

    def reference_tag(self) -> int:
        """Index of the tag nearest the doorway centre (ties -> lowest index)."""
        d = [math.hypot(x, y) for x, y in self.tag_pos]
        return int(np.argmin(d))

    def _check_index(self, tag_index: int) -> None:
        if int(tag_index) != tag_index or not 0 <= tag_index < self.tag_count:
            raise GeometryError(f"tag_index {tag_index} out of range for {self.tag_count} tags")


@dataclass(frozen=True)
class MovingObject:
    """Rectangular walker footprint moving along +x at constant speed.

    At ``t_enter`` the footprint centre is at ``(start_x, path_offset)``.
    """

    l_h: float = 0.5
    d_h: float = 0.3
    v: float = 1.0
    t_enter: float = 0.0
    path_offset: float = 0.0
    start_x: float = -2.0

    def __post_init__(self):
        if self.l_h < 0 or self.d_h < 0:
            raise GeometryError("object dimensions must be non-negative")
        if not self.v > 0:
            raise GeometryError("object speed must be positive")

    def check_fits(self, scene: Scene) -> None:
        if abs(self.path_offset) + self.l_h / 2.0 > scene.d_door / 2.0 + _TOL:
            raise GeometryError("object does not fit through the doorway")

    def center_x(self, t):
        return self.start_x + self.v * (np.asarray(t, dtype=float) - self.t_enter)


@dataclass(frozen=True)
class OcclusionWindow:
    tag_index: int
    theta_a: float
    theta_b: float
    d_in: float
    t_start: float
    t_end: float
    clamped: bool = False

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def sight_angles(scene: Scene, tag_index: int) -> tuple[float, float]:
    """Angles (rad) between the doorway plane and the two antenna-tag edge lines.

    The lines run from the antenna to the two ends of the tag's effective
    reception segment (``l_tag`` long, along x).  ``theta_a`` is the
    shallower line, ``theta_b`` the steeper one; with a point tag they are
    equal.
    """
    scene._check_index(tag_index)
    xa, ya = scene.antenna_pos
    angles = []
    for x, y in scene.tag_endpoints(tag_index):
        dx, dy = x - xa, y - ya
        if math.hypot(dx, dy) < _TOL:
            raise GeometryError("antenna coincides with tag")
        angles.append(math.atan2(abs(dx), dy))
    return min(angles), max(angles)


def _lateral_spans(scene: Scene, obj: MovingObject) -> tuple[float, float]:
    # distance across the lane from the antenna to the near / far footprint edge
    shift = obj.path_offset + scene.antenna_setback
    near = 0.5 * (scene.d_door - obj.l_h) + shift
    far = 0.5 * (scene.d_door + obj.l_h) + shift
    return near, far


def impact_distance(scene: Scene, obj: MovingObject, theta_a: float, theta_b: float) -> float:
    """Along-path distance over which the walker cuts the sight wedge.

    ``far / tan(pi/2 - theta_b) - near / tan(pi/2 - theta_a) + d_h`` where
    ``near``/``far`` are the lateral distances from the antenna to the near
    and far footprint edges; for an antenna on the jamb and a walker on the
    centreline they are ``(d_door -+ l_h) / 2``.  Negative results are
    clamped to 0 with a :class:`ClampedImpactWarning`.
    """
    for th in (theta_a, theta_b):
        if not 0.0 <= th < math.pi / 2:
            raise GeometryError("sight angles must lie in [0, pi/2)")
        if math.tan(math.pi / 2 - th) < 1e-12:
            raise GeometryError("grazing sight line (tangent singularity)")
    near, far = _lateral_spans(scene, obj)
    d_in = (
        far / math.tan(math.pi / 2 - theta_b)
        - near / math.tan(math.pi / 2 - theta_a)
        + obj.d_h
    )
    if d_in < 0:
        warnings.warn(f"negative impact distance {d_in:.6g} m clamped to 0", ClampedImpactWarning)
        return 0.0
    return d_in


def impact_time(d_in: float, v: float) -> float:
    if not v > 0:
        raise GeometryError("speed must be positive")
    if d_in < 0:
        raise GeometryError("impact distance must be non-negative")
    return d_in / v


def _wedge_x_range(scene: Scene, obj: MovingObject, tag_index: int) -> tuple[float, float]:
    xa, ya = scene.antenna_pos
    near, far = _lateral_spans(scene, obj)
    xs = []
    for x, y in scene.tag_endpoints(tag_index):
        slope = (x - xa) / (y - ya)
        xs.extend((xa + near * slope, xa + far * slope))
    return min(xs), max(xs)


def occlusion_windows(scene: Scene, obj: MovingObject) -> list[OcclusionWindow]:
    """Blockage interval of every tag's sight line, ordered by tag index.

    The footprint overlaps the antenna-tag wedge exactly while its centre x
    lies in ``[x_lo - d_h/2, x_hi + d_h/2]``, where ``[x_lo, x_hi]`` is the
    x-extent of the wedge inside the footprint's lateral strip.  When both
    tag ends lie on the same side of the antenna this length equals
    :func:`impact_distance` of :func:`sight_angles`.
    """
    obj.check_fits(scene)
    out = []
    for i in range(scene.tag_count):
        theta_a, theta_b = sight_angles(scene, i)
        x_lo, x_hi = _wedge_x_range(scene, obj, i)
        d_in = x_hi - x_lo + obj.d_h
        t_start = obj.t_enter + (x_lo - obj.d_h / 2.0 - obj.start_x) / obj.v
        out.append(
            OcclusionWindow(
                tag_index=i,
                theta_a=theta_a,
                theta_b=theta_b,
                d_in=d_in,
                t_start=t_start,
                t_end=t_start + impact_time(d_in, obj.v),
            )
        )
    return out
