"""Deterministic topology builders: twisted prisms, T-bar/D-bar units and the drill rig."""
from __future__ import annotations

import math
from enum import Enum
from typing import Sequence

from .topology import Member, MemberKind, Node, Topology

BAR_MATERIAL = "aluminum"
STRING_MATERIAL = "uhmwpe"

# Terminal-to-apex string angle below which a T-bar/D-bar is considered flat.
MIN_STRING_ANGLE = 1e-3

# Middle ring inner diameter of the rig, 6 in.
RIG_MIDDLE_RING_RADIUS = 0.5 * 6 * 0.0254
RIG_RING_RADII = (RIG_MIDDLE_RING_RADIUS,) * 3
RIG_RING_HEIGHTS = (0.0, 0.25, 0.5)
RIG_STAY_ANGLE = math.pi / 4


class GeometryError(ValueError):
    pass


class BarSystem(str, Enum):
    TBAR = "tbar"
    DBAR = "dbar"


def _bar(i, j, tag=None):
    return Member(MemberKind.BAR, (i, j), BAR_MATERIAL, tag)


def _string(i, j, tag=None):
    return Member(MemberKind.STRING, (i, j), STRING_MATERIAL, tag)


def prism_equilibrium_twist(n_struts: int) -> float:
    """Twist at which the regular prism admits an all-tension prestress."""
    return math.pi / 2 + math.pi / n_struts


def build_prism(n_struts: int, radius: float, height: float, twist: float) -> Topology:
    """Twisted n-strut prism.

    Nodes 0..n-1 sit counterclockwise on the bottom circle (z = 0); nodes
    n..2n-1 sit on the top circle rotated by ``twist``.  Bar i joins bottom i
    to top i; the vertical strings join bottom i to top i-1.
    """
    if int(n_struts) != n_struts or n_struts < 3:
        raise ValueError(f"n_struts must be an integer >= 3, got {n_struts}")
    if radius <= 0 or height <= 0:
        raise ValueError("radius and height must be positive")
    n = int(n_struts)
    nodes = []
    for i in range(n):
        a = 2 * math.pi * i / n
        nodes.append(Node(i, (radius * math.cos(a), radius * math.sin(a), 0.0)))
    for i in range(n):
        a = 2 * math.pi * i / n + twist
        nodes.append(Node(n + i, (radius * math.cos(a), radius * math.sin(a), height)))

    members = [_bar(i, n + i, "strut") for i in range(n)]
    members += [_string(i, (i + 1) % n, "bottom") for i in range(n)]
    members += [_string(n + i, n + (i + 1) % n, "top") for i in range(n)]
    members += [_string(i, n + (i - 1) % n, "vertical") for i in range(n)]
    meta = {
        "name": f"prism-{n}",
        "builder": {"kind": "prism", "n_struts": n, "radius": radius, "height": height, "twist": twist},
        "groups": {"bottom": list(range(n)), "top": list(range(n, 2 * n))},
    }
    return Topology(tuple(nodes), tuple(members), meta)


def build_bar_system(kind: BarSystem | str, span: float, aspect: float) -> Topology:
    """Planar T-bar or D-bar replacing one compressive member of length ``span``.

    Terminals are nodes 0 and 1 at (-span/2, 0, 0) and (span/2, 0, 0).  The
    apex nodes sit at y = +/- aspect * span / 2.

    T-bar: the span is split into two collinear bars meeting at a centre
    node, two bars rise from the centre to the apexes, and four strings tie
    the apexes to the terminals.  D-bar: four bars form a rhombus through the
    terminals and apexes, braced by an apex-to-apex string and a
    terminal-to-terminal string.
    """
    kind = BarSystem(kind)
    if span <= 0:
        raise ValueError("span must be positive")
    if not 0 < aspect < 1:
        raise ValueError(f"aspect must lie in (0, 1), got {aspect}")
    if math.atan(aspect) < MIN_STRING_ANGLE:
        raise GeometryError(f"aspect {aspect} gives a degenerate (flat) {kind.value}")
    half = span / 2
    h = aspect * half
    left, right = Node(0, (-half, 0.0, 0.0)), Node(1, (half, 0.0, 0.0))
    if kind is BarSystem.TBAR:
        nodes = (left, right, Node(2, (0.0, 0.0, 0.0)), Node(3, (0.0, h, 0.0)), Node(4, (0.0, -h, 0.0)))
        members = (
            _bar(0, 2, "main"), _bar(2, 1, "main"), _bar(2, 3, "post"), _bar(2, 4, "post"),
            _string(0, 3), _string(3, 1), _string(1, 4), _string(4, 0),
        )
    else:
        nodes = (left, right, Node(2, (0.0, h, 0.0)), Node(3, (0.0, -h, 0.0)))
        members = (
            _bar(0, 2), _bar(2, 1), _bar(1, 3), _bar(3, 0),
            _string(2, 3, "cross"), _string(0, 1, "span"),
        )
    meta = {
        "name": kind.value,
        "builder": {"kind": kind.value, "span": span, "aspect": aspect},
        "terminals": [0, 1],
    }
    return Topology(nodes, members, meta)


def build_rig(
    ring_radii: Sequence[float] = RIG_RING_RADII,
    ring_heights: Sequence[float] = RIG_RING_HEIGHTS,
    stay_angle: float = RIG_STAY_ANGLE,
    *,
    nodes_per_ring: int = 4,
    stay_rings: Sequence[str] = ("middle", "top"),
    braces: bool = True,
) -> Topology:
    """Three-ring drill rig frame.

    Rings are regular polygons of ``nodes_per_ring`` joints joined by ring
    bars.  Connecting rods (bars) join joint i of consecutive rings.  Each
    joint of a ring listed in ``stay_rings`` sends one stay string down and
    radially outward to an anchor on the base plane, at ``stay_angle`` above
    horizontal.  With ``braces`` set, X-pattern strings tie neighbouring
    joints of consecutive rings.

    Node order: bottom joints, middle joints, top joints, then stay anchors.
    The "bottom" group (bottom joints plus stay anchors) is anchored.
    """
    radii = [float(r) for r in ring_radii]
    heights = [float(z) for z in ring_heights]
    if len(radii) != 3 or len(heights) != 3:
        raise ValueError("need exactly three ring radii and three ring heights")
    if min(radii) <= 0:
        raise ValueError("ring radii must be positive")
    if not heights[0] < heights[1] < heights[2]:
        raise ValueError("ring heights must be strictly increasing")
    if nodes_per_ring < 3:
        raise ValueError("nodes_per_ring must be >= 3")
    if not 0 < stay_angle < math.pi / 2:
        raise GeometryError(
            f"stay angle {stay_angle} rad cannot reach the base plane from above; need 0 < angle < pi/2"
        )
    ring_names = ("bottom", "middle", "top")
    unknown = set(stay_rings) - {"middle", "top"}
    if unknown:
        raise ValueError(f"stays can only leave the middle or top ring, got {sorted(unknown)}")

    m = nodes_per_ring
    nodes: list[Node] = []
    for k in range(3):
        for i in range(m):
            a = 2 * math.pi * i / m
            nodes.append(
                Node(len(nodes), (radii[k] * math.cos(a), radii[k] * math.sin(a), heights[k]), k == 0)
            )

    def joint(k, i):
        return k * m + i % m

    members: list[Member] = []
    for k in range(3):
        members += [_bar(joint(k, i), joint(k, i + 1), "ring") for i in range(m)]
    for k in range(2):
        members += [_bar(joint(k, i), joint(k + 1, i), "rod") for i in range(m)]

    anchors = []
    for name in ("middle", "top"):
        if name not in stay_rings:
            continue
        k = ring_names.index(name)
        reach = (heights[k] - heights[0]) / math.tan(stay_angle)
        r_foot = radii[k] + reach
        for i in range(m):
            a = 2 * math.pi * i / m
            foot = Node(len(nodes), (r_foot * math.cos(a), r_foot * math.sin(a), heights[0]), True)
            nodes.append(foot)
            anchors.append(foot.id)
            members.append(_string(joint(k, i), foot.id, "stay"))

    if braces:
        for k in range(2):
            for i in range(m):
                members.append(_string(joint(k, i), joint(k + 1, i + 1), "brace"))
                members.append(_string(joint(k, i + 1), joint(k + 1, i), "brace"))

    meta = {
        "name": "dreams-rig",
        "builder": {
            "kind": "rig",
            "ring_radii": radii,
            "ring_heights": heights,
            "stay_angle": stay_angle,
            "nodes_per_ring": m,
            "stay_rings": list(stay_rings),
            "braces": braces,
        },
        "groups": {
            "bottom": list(range(m)) + anchors,
            "bottom_joints": list(range(m)),
            "stay_anchors": anchors,
            "middle": list(range(m, 2 * m)),
            "top": list(range(2 * m, 3 * m)),
        },
    }
    return Topology(tuple(nodes), tuple(members), meta)
