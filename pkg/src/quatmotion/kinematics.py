"""Parameterized skeletons, quaternion-space forward kinematics, positional
error metrics, and inverse-kinematics reprojection.

FK composes world rotations with quaternion products only; bone offsets are
constant, so bone lengths are preserved structurally for any pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import AdamState, adam_step
from .rotmath import InvalidRotationError, qmul, _rotate_vector_unchecked

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass
class Skeleton:
    """Kinematic tree stored as parallel per-joint arrays.

    Joints are topologically sorted (parent index < child index) with a
    single root at index 0 (parent -1). Joints with ``dof_active = False``
    are excluded from model I/O and use ``constant_rotations`` inside FK,
    so positions stay exact after pruning.
    """

    names: list
    parents: np.ndarray
    offsets: np.ndarray
    dof_active: np.ndarray
    constant_rotations: np.ndarray
    euler_orders: list = field(default_factory=list)

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=int)
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.dof_active = np.asarray(self.dof_active, dtype=bool)
        self.constant_rotations = np.asarray(self.constant_rotations, dtype=float)
        j = len(self.names)
        if self.parents.shape != (j,) or self.offsets.shape != (j, 3):
            raise ValueError("inconsistent skeleton arrays")
        if self.parents[0] != -1 or np.any(self.parents[1:] < 0):
            raise ValueError("skeleton must have exactly one root at index 0")
        if np.any(self.parents[1:] >= np.arange(1, j)):
            raise ValueError("skeleton joints must be topologically sorted")
        if not self.euler_orders:
            self.euler_orders = ["zyx"] * j

    @classmethod
    def from_joints(cls, joints: list) -> "Skeleton":
        """Build from dicts {name, parent, offset, euler_order?}."""
        names = [j["name"] for j in joints]
        parents = [j["parent"] for j in joints]
        offsets = [j["offset"] for j in joints]
        orders = [j.get("euler_order", "zyx") for j in joints]
        n = len(joints)
        return cls(names, np.array(parents), np.array(offsets, dtype=float),
                   np.ones(n, dtype=bool), np.tile(IDENTITY_QUAT, (n, 1)), orders)

    @property
    def num_joints(self) -> int:
        return len(self.names)

    @property
    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.dof_active)

    @property
    def num_active(self) -> int:
        return int(self.dof_active.sum())

    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.offsets, axis=-1)

    def height(self) -> float:
        """Total offset span; used as a scale reference for divergence guards."""
        return float(self.bone_lengths().sum())

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "parents": self.parents.tolist(),
            "offsets": self.offsets.tolist(),
            "dof_active": self.dof_active.astype(int).tolist(),
            "constant_rotations": self.constant_rotations.tolist(),
            "euler_orders": list(self.euler_orders),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        return cls(d["names"], np.array(d["parents"]), np.array(d["offsets"]),
                   np.array(d["dof_active"], dtype=bool),
                   np.array(d["constant_rotations"]), list(d["euler_orders"]))


@dataclass
class Pose:
    root_position: np.ndarray
    joint_rotations: np.ndarray  # (num_active, 4)


@dataclass
class IkConfig:
    step_size: float = 1e-2
    tol: float = 1e-8
    patience: int = 2000
    max_steps: int = 5000
    # Constant-step Adam oscillates around ~5e-3 position error on random
    # chains; a gentle per-step decay lets it settle well below 1e-3.
    step_decay: float = 0.999


def _expand_active(skel: Skeleton, rotations: np.ndarray) -> np.ndarray:
    """Insert constant rotations for inactive joints: (..., A, 4) -> (..., J, 4)."""
    j = skel.num_joints
    if rotations.shape[-2] == j and skel.num_active == j:
        return rotations
    if rotations.shape[-2] != skel.num_active:
        raise ValueError(
            f"expected rotations for {skel.num_active} active joints, got {rotations.shape[-2]}"
        )
    full = np.broadcast_to(skel.constant_rotations, rotations.shape[:-2] + (j, 4)).copy()
    full[..., skel.active_indices, :] = rotations
    return full


def forward_kinematics(skel: Skeleton, rotations: np.ndarray,
                       root_position: np.ndarray | float = 0.0) -> np.ndarray:
    """World joint positions from active-joint rotations ``(..., A, 4)``.

    Broadcasts over leading axes (e.g. time). All rotations must be unit
    within 1e-6. Returns ``(..., J, 3)``.
    """
    rotations = np.asarray(rotations, dtype=float)
    norms = np.linalg.norm(rotations, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise InvalidRotationError("forward_kinematics requires unit rotations")
    full = _expand_active(skel, rotations)
    lead = full.shape[:-2]
    world_q = np.empty_like(full)
    positions = np.empty(lead + (skel.num_joints, 3))
    root = np.broadcast_to(np.asarray(root_position, dtype=float), lead + (3,))
    world_q[..., 0, :] = full[..., 0, :]
    positions[..., 0, :] = root
    for j in range(1, skel.num_joints):
        p = skel.parents[j]
        pq = world_q[..., p, :]
        world_q[..., j, :] = qmul(pq, full[..., j, :])
        positions[..., j, :] = positions[..., p, :] + _rotate_vector_unchecked(pq, skel.offsets[j])
    return positions


def forward_kinematics_tensor(skel: Skeleton, rotations: Tensor,
                              root_position=0.0) -> Tensor:
    """Differentiable FK over autodiff tensors; mirrors forward_kinematics."""
    lead = rotations.shape[:-2]
    if rotations.shape[-2] != skel.num_active:
        raise ValueError(
            f"expected rotations for {skel.num_active} active joints, got {rotations.shape[-2]}"
        )
    active = {int(j): i for i, j in enumerate(skel.active_indices)}
    root = Tensor(np.broadcast_to(np.asarray(root_position, dtype=float), lead + (3,)))

    def local_q(j: int):
        if j in active:
            return rotations[..., active[j], :]
        return Tensor(np.broadcast_to(skel.constant_rotations[j], lead + (4,)))

    world_q: list = [local_q(0)]
    positions: list = [root]
    for j in range(1, skel.num_joints):
        p = skel.parents[j]
        pq = world_q[p]
        world_q.append(ad.qmul(pq, local_q(j)))
        offset = Tensor(np.broadcast_to(skel.offsets[j], lead + (3,)))
        positions.append(ad.add(positions[p], ad.qrotate(pq, offset)))
    return ad.stack(positions, axis=-2)


def position_error(pred: np.ndarray, ref: np.ndarray) -> float:
    """Mean per-joint Euclidean distance over all frames and joints."""
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    return float(np.mean(np.linalg.norm(pred - ref, axis=-1)))


def position_error_tensor(pred: Tensor, ref: np.ndarray) -> Tensor:
    diff = ad.add(pred, -np.asarray(ref, dtype=float))
    return ad.tmean(ad.l2norm(diff, axis=-1))


def velocity_error(pred: np.ndarray, ref: np.ndarray) -> float:
    """Position error of frame-to-frame finite differences (time on axis 0)."""
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pred.shape[0] < 2:
        raise ValueError("velocity_error needs at least 2 frames")
    return position_error(np.diff(pred, axis=0), np.diff(ref, axis=0))


def per_frame_velocity_error(pred: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Per-difference-frame mean joint velocity error; used for histograms."""
    d = np.diff(np.asarray(pred, dtype=float), axis=0) - np.diff(np.asarray(ref, dtype=float), axis=0)
    return np.linalg.norm(d, axis=-1).mean(axis=-1)


def ik_reproject(skel: Skeleton, target: np.ndarray, init: np.ndarray,
                 cfg: IkConfig | None = None, root_position=None) -> np.ndarray:
    """Projected-gradient (Adam) inverse kinematics.

    Finds active-joint rotations minimizing the mean Euclidean distance of
    FK positions to ``target`` ``(..., J, 3)``. Each Adam step is followed by
    re-normalizing every quaternion, so the output always yields exact bone
    lengths. Leading axes solve independent problems in parallel. The root
    translation is taken from the target (or ``root_position``), never
    optimized.
    """
    cfg = cfg or IkConfig()
    target = np.asarray(target, dtype=float)
    if not np.all(np.isfinite(target)):
        raise ValueError("IK target contains non-finite values")
    if target.shape[-2] != skel.num_joints:
        raise ValueError("IK target joint count does not match skeleton")
    if root_position is None:
        root_position = target[..., 0, :]
    rots = np.asarray(init, dtype=float).copy()
    rots /= np.linalg.norm(rots, axis=-1, keepdims=True)
    rots = np.broadcast_to(rots, target.shape[:-2] + (skel.num_active, 4)).copy()

    state = AdamState()
    best = np.inf
    best_rots = rots.copy()
    stall = 0
    lr = cfg.step_size
    for _ in range(cfg.max_steps):
        var = Tensor(rots, requires_grad=True)
        pos = forward_kinematics_tensor(skel, ad.qnormalize(var), root_position)
        loss = position_error_tensor(pos, target)
        val = loss.item()
        if val < best - cfg.tol:
            best = val
            best_rots = rots.copy()
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
        loss.backward()
        params = {"rots": rots}
        adam_step(params, {"rots": var.grad}, state, lr, clip_norm=None)
        rots = params["rots"]
        rots /= np.linalg.norm(rots, axis=-1, keepdims=True)
        lr *= cfg.step_decay
    return best_rots
