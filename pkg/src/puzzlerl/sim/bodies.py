"""Scene description: rigid bodies, scenes, and the plain-text scene file format.

Scenes are immutable value objects. Circles may be dynamic or static; segments
are always static. Mass of a dynamic circle is proportional to its area
(density 1). A scene carries its environment kind ("griddrop" or
"timedremove"); TimedRemove scenes have an open bottom with an abyss line.
"""

import math
from dataclasses import dataclass, field, replace

ROLES = (
    "agent",
    "green-target-ball",
    "target-region",
    "red-ball",
    "removable-block",
    "static",
)

ENV_KINDS = ("griddrop", "timedremove")

SCENEFILE_VERSION = "v1"


class SceneFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Body:
    """One rigid body. Circles use pos/vel/radius; segments use a/b endpoints."""

    id: int
    role: str
    shape: str  # "circle" | "segment"
    pos: tuple = (0.0, 0.0)
    vel: tuple = (0.0, 0.0)
    radius: float = 0.0
    static: bool = False
    a: tuple = (0.0, 0.0)
    b: tuple = (0.0, 0.0)
    removable: bool = False
    remove_at: float = -1.0  # scheduled removal time in seconds, -1 = never

    @property
    def mass(self) -> float:
        if self.shape != "circle" or self.static:
            return math.inf
        return math.pi * self.radius * self.radius

    def validate(self) -> None:
        if self.id < 0:
            raise ValueError(f"body id must be non-negative, got {self.id}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.shape == "circle":
            if not self.radius > 0.0:
                raise ValueError(f"circle radius must be positive, got {self.radius}")
        elif self.shape == "segment":
            if self.a == self.b:
                raise ValueError("segment endpoints must be distinct")
        else:
            raise ValueError(f"unknown shape {self.shape!r}")


def circle(id, role, x, y, r, vx=0.0, vy=0.0, static=False, removable=False, remove_at=-1.0) -> Body:
    return Body(
        id=id, role=role, shape="circle", pos=(float(x), float(y)),
        vel=(float(vx), float(vy)), radius=float(r), static=bool(static),
        removable=bool(removable), remove_at=float(remove_at),
    )


def segment(id, role, ax, ay, bx, by, removable=False, remove_at=-1.0) -> Body:
    return Body(
        id=id, role=role, shape="segment", static=True,
        a=(float(ax), float(ay)), b=(float(bx), float(by)),
        removable=bool(removable), remove_at=float(remove_at),
    )


@dataclass(frozen=True)
class SimEvents:
    """Latched facts recorded by the simulator on a terminal scene.

    contacts holds (id_low, id_high) pairs that overlapped at any step;
    fallen holds ids whose center crossed below the abyss line.
    """

    contacts: frozenset = frozenset()
    fallen: frozenset = frozenset()
    stable: bool = False
    steps: int = 0

    def touched(self, id_a: int, id_b: int) -> bool:
        key = (id_a, id_b) if id_a < id_b else (id_b, id_a)
        return key in self.contacts


@dataclass(frozen=True)
class Scene:
    env: str = "griddrop"
    bodies: tuple = ()
    gravity: tuple = (0.0, -9.8)
    restitution: float = 0.3
    bounds: tuple = (0.0, 0.0, 8.0, 8.0)  # xmin, ymin, xmax, ymax
    abyss_y: float = -1.0  # only meaningful for timedremove
    events: SimEvents = field(default=None, compare=False)

    @property
    def open_bottom(self) -> bool:
        return self.env == "timedremove"

    def body_by_id(self, body_id: int) -> Body:
        for b in self.bodies:
            if b.id == body_id:
                return b
        raise KeyError(f"no body with id {body_id}")

    def with_bodies(self, bodies) -> "Scene":
        return replace(self, bodies=tuple(bodies), events=None)

    def validate(self) -> None:
        """Structural checks for an initial (t=0) scene."""
        if self.env not in ENV_KINDS:
            raise ValueError(f"unknown env kind {self.env!r}")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must be in [0, 1]")
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("bounds must have positive extent")
        ids = [b.id for b in self.bodies]
        if len(ids) != len(set(ids)):
            raise ValueError("body ids must be unique")
        for b in self.bodies:
            b.validate()
            if b.shape == "circle":
                x, y = b.pos
                if not (xmin <= x <= xmax and ymin <= y <= ymax):
                    raise ValueError(f"body {b.id} position outside bounds")
            else:
                for (x, y) in (b.a, b.b):
                    if not (xmin <= x <= xmax and ymin <= y <= ymax):
                        raise ValueError(f"body {b.id} endpoint outside bounds")


def _fmt(x: float) -> str:
    return repr(float(x))


def scene_to_text(scene: Scene) -> str:
    """Serialize a scene to the versioned plain-text format (round-trip exact)."""
    lines = [f"scenefile {SCENEFILE_VERSION}"]
    lines.append(f"env {scene.env}")
    lines.append(f"gravity {_fmt(scene.gravity[0])} {_fmt(scene.gravity[1])}")
    lines.append(f"restitution {_fmt(scene.restitution)}")
    lines.append("bounds " + " ".join(_fmt(v) for v in scene.bounds))
    if scene.env == "timedremove":
        lines.append(f"abyss {_fmt(scene.abyss_y)}")
    for b in scene.bodies:
        parts = [f"body {b.id} {b.role} {b.shape}"]
        if b.shape == "circle":
            parts.append(f"r={_fmt(b.radius)}")
            parts.append(f"pos={_fmt(b.pos[0])},{_fmt(b.pos[1])}")
            parts.append(f"vel={_fmt(b.vel[0])},{_fmt(b.vel[1])}")
            parts.append(f"static={int(b.static)}")
        else:
            parts.append(f"a={_fmt(b.a[0])},{_fmt(b.a[1])}")
            parts.append(f"b={_fmt(b.b[0])},{_fmt(b.b[1])}")
        parts.append(f"removable={int(b.removable)}")
        if b.remove_at >= 0.0:
            parts.append(f"remove_at={_fmt(b.remove_at)}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def _parse_pair(text: str) -> tuple:
    x, y = text.split(",")
    return (float(x), float(y))


def parse_scene(text: str) -> Scene:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("scenefile "):
        raise SceneFormatError("missing scenefile header")
    version = lines[0].split()[1]
    if version != SCENEFILE_VERSION:
        raise SceneFormatError(f"unsupported scenefile version {version!r}")

    env = "griddrop"
    gravity = (0.0, -9.8)
    restitution = 0.3
    bounds = (0.0, 0.0, 8.0, 8.0)
    abyss_y = -1.0
    bodies = []
    for ln in lines[1:]:
        fields = ln.split()
        kind = fields[0]
        if kind == "env":
            env = fields[1]
        elif kind == "gravity":
            gravity = (float(fields[1]), float(fields[2]))
        elif kind == "restitution":
            restitution = float(fields[1])
        elif kind == "bounds":
            bounds = tuple(float(v) for v in fields[1:5])
        elif kind == "abyss":
            abyss_y = float(fields[1])
        elif kind == "body":
            body_id, role, shape = int(fields[1]), fields[2], fields[3]
            kv = {}
            for item in fields[4:]:
                key, val = item.split("=", 1)
                kv[key] = val
            remove_at = float(kv.get("remove_at", -1.0))
            removable = bool(int(kv.get("removable", 0)))
            if shape == "circle":
                pos = _parse_pair(kv["pos"])
                vel = _parse_pair(kv.get("vel", "0.0,0.0"))
                bodies.append(Body(
                    id=body_id, role=role, shape="circle", pos=pos, vel=vel,
                    radius=float(kv["r"]), static=bool(int(kv.get("static", 0))),
                    removable=removable, remove_at=remove_at,
                ))
            elif shape == "segment":
                bodies.append(Body(
                    id=body_id, role=role, shape="segment", static=True,
                    a=_parse_pair(kv["a"]), b=_parse_pair(kv["b"]),
                    removable=removable, remove_at=remove_at,
                ))
            else:
                raise SceneFormatError(f"unknown shape {shape!r}")
        else:
            raise SceneFormatError(f"unknown directive {kind!r}")
    scene = Scene(
        env=env, bodies=tuple(bodies), gravity=gravity,
        restitution=restitution, bounds=bounds, abyss_y=abyss_y,
    )
    scene.validate()
    return scene


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene_to_text(scene))


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene(fh.read())
