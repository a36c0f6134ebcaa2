"""Losses, schedules, scheduled-sampling rollouts, and training loops.

Deterministic by construction: schedules are closed forms of the epoch
index (lr = lr0 * 0.999^E, ground-truth probability p = 0.995^E), all
randomness flows through one seeded generator whose state is stored in
checkpoints, and gradients are clipped to a 0.1 global norm before every
Adam update.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from . import rotmath as rm
from .autodiff import Tensor
from .kinematics import (Skeleton, forward_kinematics, forward_kinematics_tensor,
                         position_error, position_error_tensor, velocity_error)
from .models import PoseNetwork, PaceNetwork, encode_pose, save_checkpoint
from .optim import AdamState, adam_step, clip_global_norm, global_norm

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
_CYCLIC = {"xyz", "yzx", "zxy"}

LR_DECAY = 0.999
SAMPLING_DECAY = 0.995
CLIP_NORM = 0.1
REG_WEIGHT = 0.01


@dataclass
class TrainConfig:
    epochs: int = 100
    lr0: float = 1e-3
    lr_decay: float = LR_DECAY
    clip_norm: float = CLIP_NORM
    sampling_decay: float = SAMPLING_DECAY
    reg_weight: float = REG_WEIGHT
    conditioning_frames: int = 10
    prediction_frames: int = 4
    loss: str = "quat_dot"  # quat_dot | euler_l1 | positional
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.lr_decay < 1.0 and 0.0 < self.sampling_decay < 1.0):
            raise ValueError("decay factors must lie in (0, 1)")
        if not (1e-3 <= self.reg_weight <= 0.1):
            raise ValueError("regularizer weight outside its useful range")
        if self.loss not in ("quat_dot", "euler_l1", "positional"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.lr_decay ** epoch

    def p_at(self, epoch: int) -> float:
        return self.sampling_decay ** epoch


# -- differentiable quaternion -> Euler -------------------------------------

def _matrix_elements_t(q: Tensor) -> dict:
    q = ad.qnormalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return {
        (0, 0): 1.0 - 2.0 * (y * y + z * z),
        (0, 1): 2.0 * (x * y - w * z),
        (0, 2): 2.0 * (x * z + w * y),
        (1, 0): 2.0 * (x * y + w * z),
        (1, 1): 1.0 - 2.0 * (x * x + z * z),
        (1, 2): 2.0 * (y * z - w * x),
        (2, 0): 2.0 * (x * z - w * y),
        (2, 1): 2.0 * (y * z + w * x),
        (2, 2): 1.0 - 2.0 * (x * x + y * y),
    }


def quat_to_euler_t(q: Tensor, order: str) -> Tensor:
    """Differentiable Euler extraction (..., 4) -> (..., 3).

    Uses the non-singular branch everywhere; exact gimbal lock is a
    measure-zero event for which the numpy conversion provides the
    flagged representative instead.
    """
    i, j, k = (_AXIS_INDEX[c] for c in order)
    eps = 1.0 if order in _CYCLIC else -1.0
    m = _matrix_elements_t(q)
    a2 = ad.asin(m[(i, k)] * eps)
    a1 = ad.atan2(m[(j, k)] * (-eps), m[(k, k)])
    a3 = ad.atan2(m[(i, j)] * (-eps), m[(i, i)])
    return ad.stack([a1, a2, a3], axis=-1)


# -- losses -------------------------------------------------------------------

def loss_positional(pred_quats: Tensor, ref_positions: np.ndarray,
                    skel: Skeleton, root_positions=None) -> Tensor:
    """Mean joint distance between FK(pred) and reference positions."""
    ref_positions = np.asarray(ref_positions, dtype=float)
    if root_positions is None:
        root_positions = ref_positions[..., 0, :]
    pos = forward_kinematics_tensor(skel, pred_quats, root_positions)
    return position_error_tensor(pos, ref_positions)


def loss_euler_l1(pred_quats: Tensor, ref_euler: np.ndarray, orders) -> Tensor:
    """Mean per-component L1 distance in Euler space, each component taken
    modulo 2*pi to its nearest representative."""
    ref_euler = np.asarray(ref_euler, dtype=float)
    if isinstance(orders, str):
        orders = [orders] * pred_quats.shape[-2]
    orders = list(orders)
    if len(orders) != pred_quats.shape[-2]:
        raise ValueError("need one Euler order per joint")
    total = None
    for order in sorted(set(orders)):
        joints = np.array([a for a, o in enumerate(orders) if o == order])
        angles = quat_to_euler_t(pred_quats[..., joints, :], order)
        diff = ad.wrap_angle(angles - ref_euler[..., joints, :])
        part = ad.tsum(ad.absval(diff))
        total = part if total is None else total + part
    return total / float(ref_euler.size)


def euler_error(pred_quats: np.ndarray, ref_quats: np.ndarray, orders) -> np.ndarray:
    """Protocol metric: per-frame Euclidean norm of the vector of wrapped
    per-component Euler differences across all joints."""
    pred_quats = np.asarray(pred_quats, dtype=float)
    ref_quats = np.asarray(ref_quats, dtype=float)
    if isinstance(orders, str):
        orders = [orders] * pred_quats.shape[-2]
    orders = list(orders)
    diffs = np.empty(pred_quats.shape[:-1] + (3,))
    for order in set(orders):
        joints = np.array([a for a, o in enumerate(orders) if o == order])
        p = rm.quat_to_euler(pred_quats[..., joints, :], order).angles
        r = rm.quat_to_euler(ref_quats[..., joints, :], order).angles
        diffs[..., joints, :] = rm.wrap_angle(p - r)
    lead = diffs.shape[:-2]
    return np.linalg.norm(diffs.reshape(lead + (-1,)), axis=-1)


def loss_quat_dot(pred: Tensor, ref: np.ndarray) -> Tensor:
    """Mean of 1 - <p, q>; equals half the squared chord distance for unit
    inputs."""
    return ad.tmean(1.0 - ad.tsum(pred * Tensor(np.asarray(ref, dtype=float)),
                                  axis=-1))


def penalty_unit_norm(raw_quats: Tensor, weight: float = REG_WEIGHT) -> Tensor:
    """weight * mean((|q|^2 - 1)^2) over raw (pre-normalization) outputs."""
    sq = ad.tsum(ad.square(raw_quats), axis=-1)
    return ad.tmean(ad.square(sq - 1.0)) * weight


# -- scheduled sampling rollouts ------------------------------------------------

def _step_loss(out, target_quats, target_pos, skel, config: TrainConfig):
    if config.loss == "quat_dot":
        base = loss_quat_dot(out["quats"], target_quats)
    elif config.loss == "positional":
        base = loss_positional(out["quats"], target_pos, skel)
    else:
        orders = [skel.euler_orders[a] for a in skel.active_indices]
        ref = np.empty(target_quats.shape[:-1] + (3,))
        for col, order in enumerate(orders):
            ref[..., col, :] = rm.quat_to_euler(target_quats[..., col, :], order).angles
        base = loss_euler_l1(out["quats"], ref, orders)
    if out["raw_quats"] is not None and config.reg_weight > 0:
        base = base + penalty_unit_norm(out["raw_quats"], config.reg_weight)
    return base


def _aux_inputs(net: PoseNetwork, batch: int,
                root_positions: np.ndarray | None = None):
    """Per-frame translation/control inputs for models that expect them.

    Pose training carries no trajectory context, so translations are the
    root height (offset 0) and controls are zero; the real signals only
    exist in closed-loop generation.
    """
    from .models import CONTROL_DIM

    cfg = net.config

    def at(f: int, frames: int | None = None) -> dict:
        # frames=None gives per-step (B, .) inputs; an int gives a
        # (B, frames, .) window ending at frame f for the conv backbone
        kw = {}
        lead = (batch,) if frames is None else (batch, frames)
        if cfg.include_translations:
            trans = np.zeros(lead + (2,))
            if root_positions is not None:
                pos = np.asarray(root_positions)
                if frames is None:
                    trans[..., 0] = pos[:, min(f, pos.shape[1] - 1), 1]
                else:
                    idx = np.clip(np.arange(f - frames + 1, f + 1), 0,
                                  pos.shape[1] - 1)
                    trans[..., 0] = pos[:, idx, 1]
            kw["translations"] = Tensor(trans)
        if cfg.include_controls:
            kw["controls"] = Tensor(np.zeros(lead + (CONTROL_DIM,)))
        return kw

    return at


def scheduled_sampling_rollout(net: PoseNetwork, rotations: np.ndarray,
                               skel: Skeleton, config: TrainConfig, p: float,
                               rng: np.random.Generator,
                               root_positions: np.ndarray | None = None) -> Tensor:
    """Average step loss of an autoregressive rollout over a ground-truth
    episode (B, n+k, A, 4).

    Conditioning frames are always ground truth. During the k predicted
    steps each sequence independently feeds back ground truth with
    probability p, otherwise its own prediction. The recurrent backbone
    keeps fed-back predictions differentiable; the convolutional backbone
    detaches them.
    """
    rotations = np.asarray(rotations, dtype=float)
    n = config.conditioning_frames
    k = config.prediction_frames
    if rotations.shape[1] < n + k:
        raise ValueError(f"episode needs at least {n + k} frames")
    b = rotations.shape[0]
    param = net.config.parameterization
    enc_gt = encode_pose(rotations, param)

    need_pos = config.loss == "positional"
    target_pos = None
    if need_pos:
        if root_positions is None:
            root_positions = np.zeros(rotations.shape[:2] + (3,))
        target_pos = forward_kinematics(skel, rotations, root_positions)

    losses = []
    aux = _aux_inputs(net, b, root_positions)
    if net.config.backbone == "recurrent":
        state = net.init_state(b)
        out = None
        pose_in = Tensor(enc_gt[:, 0])
        prev_q = Tensor(rotations[:, 0])
        for f in range(n + k - 1):
            out = net.step(pose_in, state, prev_quats=prev_q, **aux(f))
            state = out["state"]
            predicting = f >= n - 1
            if predicting:
                losses.append(_step_loss(
                    out, rotations[:, f + 1],
                    target_pos[:, f + 1] if need_pos else None, skel, config))
            if f == n + k - 2:
                break
            if not predicting or p >= 1.0:
                pose_in = Tensor(enc_gt[:, f + 1])
                prev_q = Tensor(rotations[:, f + 1])
            else:
                keep = rng.random(b) < p  # per-sequence Bernoulli(p)
                mask = Tensor(keep.astype(float)[:, None])
                pose_in = mask * Tensor(enc_gt[:, f + 1]) + (1.0 - mask) * out["feedback"]
                qmask = Tensor(keep.astype(float)[:, None, None])
                prev_q = qmask * Tensor(rotations[:, f + 1]) + (1.0 - qmask) * out["quats"]
    else:
        rf = net.config.receptive_field
        if n < rf:
            raise ValueError(
                f"convolutional training needs conditioning length >= {rf}")
        window = enc_gt[:, :n].copy()
        for step in range(k):
            f = n - 1 + step
            out = net.forward_window(
                Tensor(window[:, -rf:]),
                prev_quats=Tensor(window[:, -1].reshape(b, -1, 4))
                if net.config.mode == "velocity" else None, **aux(f, rf))
            losses.append(_step_loss(
                out, rotations[:, f + 1],
                target_pos[:, f + 1] if need_pos else None, skel, config))
            if step == k - 1:
                break
            keep = rng.random(b) < p
            # fed-back conv inputs are detached: gradients stop at the window
            fb = out["feedback"].data
            nxt = np.where(keep[:, None], enc_gt[:, f + 1], fb)
            window = np.concatenate([window, nxt[:, None]], axis=1)

    total = losses[0]
    for loss in losses[1:]:
        total = total + loss
    return total / float(len(losses))


# -- free-run validation ----------------------------------------------------------

def free_run_predict(net: PoseNetwork, prefix_quats: np.ndarray, horizon: int) -> np.ndarray:
    """Condition on a (n, A, 4) prefix, then predict `horizon` frames
    autoregressively. Returns (horizon, A, 4)."""
    param = net.config.parameterization
    enc = encode_pose(prefix_quats[None], param)[0]
    preds = []
    aux = _aux_inputs(net, 1)
    if net.config.backbone == "recurrent":
        state = net.init_state(1)
        out = None
        for f in range(len(prefix_quats)):
            out = net.step(Tensor(enc[f][None]), state,
                           prev_quats=Tensor(prefix_quats[f][None]), **aux(f))
            state = [s.detach() for s in out["state"]]
        for f in range(horizon):
            preds.append(out["quats"].data[0])
            out = net.step(Tensor(out["feedback"].data), state,
                           prev_quats=Tensor(preds[-1][None]), **aux(f))
            state = [s.detach() for s in out["state"]]
    else:
        rf = net.config.receptive_field
        if len(prefix_quats) < rf:
            raise ValueError(f"prefix shorter than the receptive field ({rf})")
        window = enc.copy()
        for f in range(horizon):
            out = net.forward_window(
                Tensor(window[None, -rf:]),
                prev_quats=Tensor(window[-1].reshape(1, -1, 4))
                if net.config.mode == "velocity" else None, **aux(f, rf))
            preds.append(out["quats"].data[0])
            window = np.concatenate([window, out["feedback"].data], axis=0)
    return np.stack(preds)


def validate_pose(net: PoseNetwork, clips, skel: Skeleton, config: TrainConfig,
                  max_chunks: int = 8) -> tuple[float, float]:
    """Mean position and velocity error of free-run prediction on evenly
    spaced validation chunks."""
    n, k = config.conditioning_frames, config.prediction_frames
    pos_errs, vel_errs = [], []
    for clip in clips:
        limit = clip.num_frames - n - k
        if limit < 0:
            continue
        starts = np.unique(np.linspace(0, limit, min(max_chunks, limit + 1), dtype=int))
        rots = clip.active_rotations
        for s in starts:
            pred = free_run_predict(net, rots[s:s + n], k)
            root = np.zeros((k, 3))
            ref = forward_kinematics(skel, rots[s + n:s + n + k], root)
            got = forward_kinematics(skel, pred, root)
            pos_errs.append(position_error(got, ref))
            if k >= 2:
                vel_errs.append(velocity_error(got, ref))
    if not pos_errs:
        raise ValueError("no validation chunk is long enough")
    return float(np.mean(pos_errs)), float(np.mean(vel_errs)) if vel_errs else 0.0


# -- training loops -----------------------------------------------------------------

def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng


def train_pose(net: PoseNetwork, clips, skel: Skeleton, config: TrainConfig,
               val_clips=None, log_path=None, checkpoint_path=None,
               start_epoch: int = 0, adam: AdamState | None = None,
               rng_state: dict | None = None, validate_every: int = 10):
    """Scheduled-sampling training; returns a history of per-epoch rows.

    One epoch draws (number of sequences) episodes and consumes them in
    minibatches. Fully deterministic given the seed; pass the checkpoint's
    epoch/Adam/rng state to resume bit-exactly.
    """
    from .motiondata import EpisodeSampler

    if not clips:
        raise ValueError("empty dataset")
    episode_len = config.conditioning_frames + config.prediction_frames
    sampler = EpisodeSampler(clips, episode_len, seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)
    if rng_state is not None:
        sampler.rng.bit_generator.state = rng_state["sampler"]
        rng.bit_generator.state = rng_state["rollout"]
    adam = adam or AdamState()
    val_clips = val_clips or clips

    arrays = net.param_arrays()
    history = []
    writer = None
    log_fh = None
    if log_path is not None:
        log_fh = open(log_path, "a", newline="")
        writer = csv.writer(log_fh)
        if start_epoch == 0:
            writer.writerow(["epoch", "lr", "p", "train_loss",
                             "val_position_loss", "val_velocity_loss", "wall_seconds"])
    try:
        for epoch in range(start_epoch, config.epochs):
            t0 = time.time()
            lr = config.lr_at(epoch)
            p = config.p_at(epoch)
            epoch_losses = []
            remaining = len(clips)
            while remaining > 0:
                take = min(config.batch_size, remaining)
                remaining -= take
                batch = sampler.sample(take)
                net.zero_grad()
                loss = scheduled_sampling_rollout(
                    net, batch["rotations"], skel, config, p, rng,
                    root_positions=batch["root_positions"])
                loss.backward()
                adam_step(arrays, net.grads(), adam, lr, clip_norm=config.clip_norm)
                epoch_losses.append(loss.item())
            last = (epoch == config.epochs - 1)
            if last or epoch % validate_every == 0:
                val_pos, val_vel = validate_pose(net, val_clips, skel, config)
            else:
                val_pos = val_vel = float("nan")
            row = {"epoch": epoch, "lr": lr, "p": p,
                   "train_loss": float(np.mean(epoch_losses)),
                   "val_position_loss": val_pos, "val_velocity_loss": val_vel,
                   "wall_seconds": time.time() - t0}
            history.append(row)
            if writer is not None:
                writer.writerow([row[c] for c in
                                 ("epoch", "lr", "p", "train_loss",
                                  "val_position_loss", "val_velocity_loss",
                                  "wall_seconds")])
                log_fh.flush()
            if checkpoint_path is not None:
                save_pose_checkpoint(checkpoint_path, net, skel, config,
                                     epoch + 1, adam,
                                     {"sampler": _rng_state(sampler.rng),
                                      "rollout": _rng_state(rng)})
    finally:
        if log_fh is not None:
            log_fh.close()
    return history


def save_pose_checkpoint(path, net: PoseNetwork, skel: Skeleton,
                         config: TrainConfig, epoch: int, adam: AdamState,
                         rng_state: dict) -> None:
    arrays = dict(net.param_arrays())
    for name, m in adam.m.items():
        arrays[f"adam.m.{name}"] = m
        arrays[f"adam.v.{name}"] = adam.v[name]
    meta = {"train_config": asdict(config), "epoch": epoch,
            "adam_step": adam.step, "rng_state": rng_state,
            "skeleton": skel.to_dict()}
    save_checkpoint(path, "pose", asdict(net.config), arrays, meta)


def resume_state(ck: dict) -> dict:
    """Split a training checkpoint back into net arrays + optimizer/rng
    state for passing to train_pose."""
    arrays = {k: v for k, v in ck["arrays"].items() if not k.startswith("adam.")}
    adam = AdamState(step=int(ck["meta"]["adam_step"]))
    for k, v in ck["arrays"].items():
        if k.startswith("adam.m."):
            adam.m[k[len("adam.m."):]] = v.copy()
        elif k.startswith("adam.v."):
            adam.v[k[len("adam.v."):]] = v.copy()
    return {"arrays": arrays, "adam": adam,
            "epoch": int(ck["meta"]["epoch"]),
            "rng_state": ck["meta"]["rng_state"],
            "train_config": TrainConfig(**ck["meta"]["train_config"])}


# -- pace training -------------------------------------------------------------------

def _rotate2_inv(v: np.ndarray, by: np.ndarray) -> np.ndarray:
    """Rotate v by the inverse of the unit vector angle ``by``."""
    return np.stack([by[..., 0] * v[..., 0] + by[..., 1] * v[..., 1],
                     by[..., 0] * v[..., 1] - by[..., 1] * v[..., 0]], axis=-1)


def pace_training_example(clip, features, segment_length: float | None = None):
    """Per-segment curvature inputs and (facing, frequency, speed) targets
    for one clip. Facing targets are expressed relative to the spline
    tangent. Default segment length: one quarter of the average stride."""
    from .motiondata import fit_spline

    if segment_length is None:
        contacts = np.sort(np.concatenate([features.left_contacts,
                                           features.right_contacts]))
        if len(contacts) >= 2 and not features.degenerate:
            steps = np.diff(contacts) / clip.frame_rate
            stride = float(np.mean(steps)) * float(np.mean(features.local_speed))
            segment_length = max(stride / 4.0, 1e-3)
        else:
            segment_length = max(clip.duration * float(np.mean(features.local_speed)) / 16.0, 1e-3)
    spline = fit_spline(clip.root_positions, segment_length)

    ground = clip.root_positions[:, [0, 2]]
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(ground, axis=0), axis=1))])
    seg = np.clip((arc / segment_length).astype(int), 0, spline.num_segments - 1)

    s = spline.num_segments
    targets = np.zeros((s, 4))
    have = np.zeros(s, dtype=bool)
    for si in range(s):
        frames = np.flatnonzero(seg == si)
        if len(frames) == 0:
            continue
        have[si] = True
        rel = _rotate2_inv(features.facing[frames], spline.tangents[si][None])
        fmean = rel.mean(axis=0)
        norm = np.linalg.norm(fmean)
        targets[si, :2] = fmean / norm if norm > 1e-9 else (1.0, 0.0)
        targets[si, 2] = features.frequency[frames].mean()
        targets[si, 3] = features.local_speed[frames].mean()
    # forward-fill segments the trajectory skipped over
    last = None
    for si in range(s):
        if have[si]:
            last = targets[si]
        elif last is not None:
            targets[si] = last
    return spline.curvatures.copy(), targets, spline


def train_pace(net: PaceNetwork, examples, config: TrainConfig,
               log_path=None) -> list:
    """Minimize the mean absolute error of per-segment pace targets.

    ``examples`` is a list of (curvatures (S,), targets (S, 4)) pairs."""
    if not examples:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    adam = AdamState()
    arrays = net.param_arrays()
    history = []
    rows = []
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(len(examples))
        losses = []
        for ei in order:
            curv, targets = examples[ei][0], examples[ei][1]
            net.zero_grad()
            out = net.forward(curv)
            pred = ad.concat([out["facing"],
                              ad.reshape(out["frequency"], (len(curv), 1)),
                              ad.reshape(out["speed"], (len(curv), 1))], axis=-1)
            loss = ad.tmean(ad.absval(pred - Tensor(targets)))
            loss.backward()
            adam_step(arrays, net.grads(), adam, lr, clip_norm=config.clip_norm)
            losses.append(loss.item())
        history.append({"epoch": epoch, "lr": lr, "mae": float(np.mean(losses))})
        rows.append([epoch, lr, float(np.mean(losses))])
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "lr", "mae"])
            w.writerows(rows)
    return history
