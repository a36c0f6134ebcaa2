"""BVH motion-capture import and export.

Supported subset: HIERARCHY/MOTION sections, OFFSET, CHANNELS with 3
rotation channels (or 6 position+rotation channels on any joint), End
Sites, ``Frames:`` and ``Frame Time:``. Rotations are in degrees per the
BVH convention and are converted to quaternions honoring each joint's
channel order; antipodal continuity is fixed on load.
"""

from __future__ import annotations

import numpy as np

from .kinematics import Skeleton
from .rotmath import euler_to_quat, fix_continuity, quat_to_euler

_ROT_CHANNELS = {"Xrotation": "x", "Yrotation": "y", "Zrotation": "z"}
_POS_CHANNELS = ("Xposition", "Yposition", "Zposition")


class BvhParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnsupportedBvhFeatureError(BvhParseError):
    pass


class _Tokens:
    def __init__(self, text: str):
        self.items: list[tuple[str, int]] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, lineno))
        self.pos = 0

    @property
    def line(self) -> int:
        if self.pos < len(self.items):
            return self.items[self.pos][1]
        return self.items[-1][1] if self.items else 0

    def peek(self) -> str:
        if self.pos >= len(self.items):
            raise BvhParseError("unexpected end of file", self.line)
        return self.items[self.pos][0]

    def next(self) -> str:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, want: str) -> None:
        tok = self.next()
        if tok != want:
            raise BvhParseError(f"expected {want!r}, got {tok!r}", self.line)

    def number(self) -> float:
        tok = self.next()
        try:
            return float(tok)
        except ValueError:
            raise BvhParseError(f"expected a number, got {tok!r}", self.line) from None


def _parse_joint(tokens: _Tokens, parent: int, joints: list, channels: list) -> None:
    kind = tokens.next()
    if kind == "End":
        tokens.expect("Site")
        name = joints[parent]["name"] + "_end"
    elif kind in ("ROOT", "JOINT"):
        name = tokens.next()
    else:
        raise BvhParseError(f"expected ROOT/JOINT/End, got {kind!r}", tokens.line)
    tokens.expect("{")
    tokens.expect("OFFSET")
    offset = [tokens.number() for _ in range(3)]
    index = len(joints)
    joint = {"name": name, "parent": parent, "offset": offset, "euler_order": "zyx"}
    joints.append(joint)
    spec = None
    if kind != "End":
        tokens.expect("CHANNELS")
        n = int(tokens.number())
        names = [tokens.next() for _ in range(n)]
        if n == 3 and all(c in _ROT_CHANNELS for c in names):
            spec = {"joint": index, "position": False, "rotation": names}
        elif n == 6 and list(names[:3]) == list(_POS_CHANNELS) and all(
            c in _ROT_CHANNELS for c in names[3:]
        ):
            spec = {"joint": index, "position": True, "rotation": names[3:]}
        else:
            raise UnsupportedBvhFeatureError(
                f"unsupported channel set {names} on joint {name!r}", tokens.line
            )
        joint["euler_order"] = "".join(_ROT_CHANNELS[c] for c in spec["rotation"])
        channels.append(spec)
    while tokens.peek() != "}":
        _parse_joint(tokens, index, joints, channels)
    tokens.expect("}")


def load_bvh(path):
    """Parse a BVH file into a :class:`Skeleton` and raw motion arrays.

    Returns ``(skeleton, frame_rate, root_positions (T, 3),
    rotations (T, J, 4))``. Joints without rotation channels (End Sites)
    carry identity rotations. Root position defaults to the root OFFSET if
    the file has no position channels.
    """
    with open(path) as fh:
        text = fh.read()
    tokens = _Tokens(text)
    tokens.expect("HIERARCHY")
    joints: list = []
    channels: list = []
    _parse_joint(tokens, -1, joints, channels)

    tokens.expect("MOTION")
    tokens.expect("Frames:")
    n_frames = int(tokens.number())
    tokens.expect("Frame")
    tokens.expect("Time:")
    frame_time = tokens.number()
    if frame_time <= 0:
        raise BvhParseError("Frame Time must be positive", tokens.line)

    width = sum(6 if c["position"] else 3 for c in channels)
    values = np.empty((n_frames, width))
    for f in range(n_frames):
        for c in range(width):
            values[f, c] = tokens.number()

    n_joints = len(joints)
    skel = Skeleton.from_joints(joints)
    has_channels = {c["joint"] for c in channels}
    for j in range(n_joints):
        if j not in has_channels:
            skel.dof_active[j] = False
    rotations = np.zeros((n_frames, n_joints, 4))
    rotations[..., 0] = 1.0
    root_positions = np.tile(skel.offsets[0], (n_frames, 1))
    col = 0
    for c in channels:
        if c["position"]:
            if c["joint"] == 0:
                root_positions = values[:, col:col + 3].copy()
            col += 3
        order = skel.euler_orders[c["joint"]]
        angles = np.deg2rad(values[:, col:col + 3])
        rotations[:, c["joint"]] = euler_to_quat(angles, order)
        col += 3
    rotations = fix_continuity(rotations)
    return skel, 1.0 / frame_time, root_positions, rotations


def save_bvh(path, skel: Skeleton, frame_rate: float,
             root_positions: np.ndarray, rotations: np.ndarray) -> None:
    """Write a BVH file; rotations ``(T, J, 4)`` cover all joints.

    The root gets 6 channels, every non-End-Site joint 3 rotation channels
    in the skeleton's per-joint Euler order; ``*_end`` joints become End
    Sites.
    """
    rotations = np.asarray(rotations, dtype=float)
    root_positions = np.asarray(root_positions, dtype=float)
    n_frames = rotations.shape[0]
    children: dict[int, list[int]] = {j: [] for j in range(-1, skel.num_joints)}
    for j in range(skel.num_joints):
        children[int(skel.parents[j])].append(j)

    lines: list[str] = ["HIERARCHY"]
    columns: list[tuple[int, str]] = []

    def chan_names(order: str) -> list[str]:
        inv = {v: k for k, v in _ROT_CHANNELS.items()}
        return [inv[c] for c in order]

    def emit(j: int, indent: int) -> None:
        pad = "  " * indent
        is_end = skel.names[j].endswith("_end") and not children[j]
        if is_end:
            lines.append(f"{pad}End Site")
            lines.append(pad + "{")
            lines.append(f"{pad}  OFFSET {skel.offsets[j][0]:.6f} {skel.offsets[j][1]:.6f} {skel.offsets[j][2]:.6f}")
            lines.append(pad + "}")
            return
        kw = "ROOT" if j == 0 else "JOINT"
        lines.append(f"{pad}{kw} {skel.names[j]}")
        lines.append(pad + "{")
        lines.append(f"{pad}  OFFSET {skel.offsets[j][0]:.6f} {skel.offsets[j][1]:.6f} {skel.offsets[j][2]:.6f}")
        names = chan_names(skel.euler_orders[j])
        if j == 0:
            lines.append(f"{pad}  CHANNELS 6 Xposition Yposition Zposition " + " ".join(names))
        else:
            lines.append(f"{pad}  CHANNELS 3 " + " ".join(names))
        columns.append((j, skel.euler_orders[j]))
        kids = children[j]
        if kids:
            for k in kids:
                emit(k, indent + 1)
        else:
            lines.append(f"{pad}  End Site")
            lines.append(pad + "  {")
            lines.append(f"{pad}    OFFSET 0.000000 0.000000 0.000000")
            lines.append(pad + "  }")
        lines.append(pad + "}")

    emit(0, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {n_frames}")
    lines.append(f"Frame Time: {1.0 / frame_rate:.8f}")

    cols = []
    for j, order in columns:
        e = quat_to_euler(rotations[:, j], order)
        deg = np.rad2deg(e.angles)
        if j == 0:
            cols.append(np.concatenate([root_positions, deg], axis=1))
        else:
            cols.append(deg)
    data = np.concatenate(cols, axis=1)
    for row in data:
        lines.append(" ".join(f"{v:.6f}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
