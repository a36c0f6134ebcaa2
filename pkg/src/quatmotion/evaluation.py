"""Prediction baselines, evaluation protocols, and ablation harnesses.

The short-term protocol draws S chunk starts per test clip from one seeded
PCG64 stream (S = 4 for the conventional setting, 128 for the low-variance
one), conditions a predictor on n frames, and reports the Euler-angle
error at fixed millisecond horizons, aggregated per action. All sampling
uses numpy's PCG64 generator so seeds are portable across machines.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import rotmath as rm
from .autodiff import Tensor
from .kinematics import (Skeleton, forward_kinematics, ik_reproject,
                         per_frame_velocity_error, position_error,
                         velocity_error)
from .models import (PoseNetwork, PoseNetworkConfig, _gru_step, _init_gru,
                     _init_linear, _linear)
from .optim import AdamState, adam_step
from .training import (TrainConfig, euler_error, free_run_predict, train_pose,
                       validate_pose)


# -- baselines -----------------------------------------------------------------

def baseline_zero_velocity(prefix: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last observed frame for every predicted frame."""
    prefix = np.asarray(prefix, dtype=float)
    if prefix.shape[0] == 0:
        raise ValueError("empty prefix")
    return np.repeat(prefix[-1][None], horizon, axis=0)


def baseline_running_average(prefix: np.ndarray, horizon: int,
                             window: int = 4) -> np.ndarray:
    """Constant prediction: normalized mean of the last `window` frames
    after sign alignment."""
    prefix = np.asarray(prefix, dtype=float)
    if prefix.shape[0] < window:
        raise ValueError(f"prefix shorter than averaging window ({window})")
    avg = rm.quat_mean(prefix[-window:], axis=0)
    return np.repeat(avg[None], horizon, axis=0)


# -- protocol -------------------------------------------------------------------

@dataclass(frozen=True)
class EvalProtocol:
    samples_per_sequence: int = 4
    seed: int = 1234
    conditioning_frames: int = 10
    horizons_ms: tuple = (80, 160, 320, 400)
    frame_rate: float = 25.0

    @classmethod
    def standard(cls, **kw) -> "EvalProtocol":
        return cls(samples_per_sequence=4, **kw)

    @classmethod
    def proposed(cls, **kw) -> "EvalProtocol":
        return cls(samples_per_sequence=128, **kw)

    @property
    def horizon_frames(self) -> list:
        return [max(1, int(round(ms * self.frame_rate / 1000.0)))
                for ms in self.horizons_ms]

    def describe(self) -> str:
        return (f"S={self.samples_per_sequence} seed={self.seed} "
                f"n={self.conditioning_frames} horizons_ms={list(self.horizons_ms)}")


@dataclass
class EvalReport:
    protocol: str
    per_sample: dict = field(default_factory=dict)  # (action, ms) -> [errors]
    skipped_clips: int = 0

    def add(self, action: str, horizon_ms: int, error: float) -> None:
        self.per_sample.setdefault((action, horizon_ms), []).append(float(error))

    def mean(self, action: str, horizon_ms: int) -> float:
        return float(np.mean(self.per_sample[(action, horizon_ms)]))

    def overall_mean(self, horizon_ms: int) -> float:
        errs = [e for (_, ms), v in self.per_sample.items() if ms == horizon_ms
                for e in v]
        return float(np.mean(errs))

    def rows(self, ci: bool = False, resamples: int = 1000, seed: int = 0):
        out = []
        for (action, ms) in sorted(self.per_sample):
            errs = np.array(self.per_sample[(action, ms)])
            lo = hi = float("nan")
            if ci and len(errs) >= 2:
                lo, hi = bootstrap_ci(errs, resamples=resamples, seed=seed)
            out.append({"action": action, "horizon_ms": ms,
                        "mean_error": float(errs.mean()), "ci_low": lo,
                        "ci_high": hi, "n_samples": len(errs)})
        return out

    def to_csv(self, path, ci: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["action", "horizon_ms", "mean_error", "ci_low",
                        "ci_high", "n_samples"])
            for r in self.rows(ci=ci):
                w.writerow([r["action"], r["horizon_ms"], r["mean_error"],
                            r["ci_low"], r["ci_high"], r["n_samples"]])

    def summary(self) -> str:
        lines = [f"protocol: {self.protocol} (skipped {self.skipped_clips} clips)",
                 f"{'action':<28}{'ms':>6}{'error':>12}{'n':>8}"]
        for r in self.rows():
            lines.append(f"{r['action']:<28}{r['horizon_ms']:>6}"
                         f"{r['mean_error']:>12.4f}{r['n_samples']:>8}")
        return "\n".join(lines)


def run_protocol(predictor, clips, protocol: EvalProtocol,
                 orders=None) -> EvalReport:
    """Evaluate ``predictor(prefix (n, A, 4), horizon) -> (horizon, A, 4)``
    under the seeded chunk-sampling protocol.

    Chunk starts are uniform over [0, len - n - max_horizon] with one rng
    stream over clips in order; too-short clips are skipped with a warning
    and counted in the report.
    """
    rng = np.random.default_rng(protocol.seed)
    n = protocol.conditioning_frames
    hframes = protocol.horizon_frames
    max_h = max(hframes)
    report = EvalReport(protocol=protocol.describe())
    for clip in clips:
        if orders is None:
            active = clip.skeleton.active_indices
            clip_orders = [clip.skeleton.euler_orders[a] for a in active]
        else:
            clip_orders = orders
        limit = clip.num_frames - n - max_h
        if limit < 0:
            warnings.warn(f"clip {clip.action!r} too short for the protocol; skipped")
            report.skipped_clips += 1
            continue
        starts = rng.integers(0, limit + 1, size=protocol.samples_per_sequence)
        rots = clip.active_rotations
        sel = np.array(hframes) - 1
        for s in starts:
            pred = predictor(rots[s:s + n], max_h)
            errs = euler_error(pred[sel], rots[s + n + sel], clip_orders)
            for ms, err in zip(protocol.horizons_ms, errs):
                report.add(clip.action, ms, err)
    return report


def bootstrap_ci(errors, resamples: int = 1000, quantiles=(25.0, 75.0),
                 seed: int = 0):
    """Percentile bootstrap interval for the mean of ``errors``."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, errors.size, size=(resamples, errors.size))
    means = errors[idx].mean(axis=1)
    lo, hi = np.percentile(means, quantiles)
    return float(lo), float(hi)


# -- ablation harnesses ------------------------------------------------------------

def ablate_conditioning(evaluate_for_n, n_values) -> list:
    """Error-vs-conditioning-length table: [(n, error), ...] using the
    caller-supplied ``evaluate_for_n(n) -> error``."""
    return [(int(n), float(evaluate_for_n(int(n)))) for n in n_values]


def detect_plateau(errors, rel_tol: float = 0.05) -> int:
    """First index after which every successive change stays below
    rel_tol of the current value."""
    errors = [float(e) for e in errors]
    for i in range(len(errors)):
        flat = all(abs(errors[j + 1] - errors[j]) < rel_tol * max(abs(errors[j]), 1e-12)
                   for j in range(i, len(errors) - 1))
        if flat:
            return i
    return len(errors) - 1


def tail_mass(errors: np.ndarray, threshold: float) -> float:
    """Fraction of samples strictly beyond the threshold."""
    errors = np.asarray(errors, dtype=float)
    return float(np.mean(errors > threshold))


def _free_run_velocity_errors(net: PoseNetwork, clips, skel: Skeleton,
                              n: int, k: int, max_chunks: int = 8) -> np.ndarray:
    """Per-frame velocity errors of free-run predictions, pooled over
    evenly spaced chunks; used for tail-mass comparisons."""
    errs = []
    for clip in clips:
        limit = clip.num_frames - n - k
        if limit < 0:
            continue
        starts = np.unique(np.linspace(0, limit, min(max_chunks, limit + 1), dtype=int))
        rots = clip.active_rotations
        for s in starts:
            pred = free_run_predict(net, rots[s:s + n], k)
            root = np.zeros((k, 3))
            got = forward_kinematics(skel, pred, root)
            ref = forward_kinematics(skel, rots[s + n:s + n + k], root)
            errs.append(per_frame_velocity_error(got, ref))
    return np.concatenate(errs)


def compare_parameterizations(clips, skel: Skeleton, config: TrainConfig,
                              parameterizations=("quaternion", "expmap",
                                                 "euler-xyz", "euler-yzx"),
                              seeds=(0, 1), val_clips=None,
                              hidden: int = 64, validate_every: int = 10) -> dict:
    """Train one absolute-mode model per parameterization and seed under an
    identical budget; all variants share the FK layer through conversion
    to quaternions. Returns per-variant loss curves and pooled free-run
    velocity errors."""
    val_clips = val_clips or clips
    a = skel.num_active
    out = {}
    for param in parameterizations:
        runs = []
        for seed in seeds:
            net = PoseNetwork(PoseNetworkConfig.desk(
                a, hidden=hidden, mode="absolute", parameterization=param), seed=seed)
            cfg = replace(config, seed=config.seed + seed)
            hist = train_pose(net, clips, skel, cfg, val_clips=val_clips,
                              validate_every=validate_every)
            vel = _free_run_velocity_errors(
                net, val_clips, skel, cfg.conditioning_frames, cfg.prediction_frames)
            runs.append({
                "seed": seed,
                "train_curve": [h["train_loss"] for h in hist],
                "position_curve": [h["val_position_loss"] for h in hist
                                   if h["val_position_loss"] == h["val_position_loss"]],
                "velocity_curve": [h["val_velocity_loss"] for h in hist
                                   if h["val_velocity_loss"] == h["val_velocity_loss"]],
                "velocity_errors": vel,
            })
        out[param] = runs
    return out


# -- position-output model (for the regression comparison) --------------------------

class PositionNetwork:
    """Recurrent regressor that predicts next-frame joint positions
    directly, the rotation-free alternative in the output-space
    comparison. Input and output are root-relative positions of all
    joints, flattened."""

    def __init__(self, num_joints: int, hidden: int = 64, layers: int = 2,
                 seed: int = 0):
        self.num_joints = num_joints
        self.hidden = hidden
        self.layers = layers
        rng = np.random.default_rng(seed)
        params = {}
        dim = 3 * num_joints
        i = dim
        for layer in range(layers):
            _init_gru(rng, f"gru{layer}", i, hidden, params)
            i = hidden
        _init_linear(rng, "head", hidden, dim, params)
        self.params = params

    def param_arrays(self) -> dict:
        return {k: v.data for k, v in self.params.items()}

    def grads(self) -> dict:
        return {k: v.grad for k, v in self.params.items() if v.grad is not None}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def init_state(self, batch: int) -> list:
        return [self.params[f"gru{layer}.h0"] + ad.zeros((batch, self.hidden))
                for layer in range(self.layers)]

    def step(self, x: Tensor, state: list):
        new_state = []
        h = x
        for layer in range(self.layers):
            h = _gru_step(self.params, f"gru{layer}", h, state[layer], self.hidden)
            new_state.append(h)
        return _linear(self.params, "head", h), new_state

    def free_run(self, prefix: np.ndarray, horizon: int) -> np.ndarray:
        """prefix (n, J, 3) -> predictions (horizon, J, 3)."""
        n = prefix.shape[0]
        flat = prefix.reshape(n, -1)
        state = self.init_state(1)
        out = None
        for f in range(n):
            out, state = self.step(Tensor(flat[f][None]), state)
            state = [s.detach() for s in state]
        preds = []
        for _ in range(horizon):
            preds.append(out.data[0].reshape(self.num_joints, 3))
            out, state = self.step(Tensor(out.data), state)
            state = [s.detach() for s in state]
        return np.stack(preds)


def train_position_network(net: PositionNetwork, clips, skel: Skeleton,
                           config: TrainConfig) -> list:
    """Teacher-forced next-frame position regression with the shared
    optimizer stack (mean joint distance loss)."""
    from .motiondata import EpisodeSampler

    episode_len = config.conditioning_frames + config.prediction_frames
    sampler = EpisodeSampler(clips, episode_len, seed=config.seed)
    adam = AdamState()
    arrays = net.param_arrays()
    history = []
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        losses = []
        remaining = len(clips)
        while remaining > 0:
            take = min(config.batch_size, remaining)
            remaining -= take
            batch = sampler.sample(take)
            rots = batch["rotations"]
            b, t = rots.shape[:2]
            pos = forward_kinematics(skel, rots, np.zeros((b, t, 3)))
            flat = pos.reshape(b, t, -1)
            net.zero_grad()
            state = net.init_state(b)
            terms = []
            for f in range(t - 1):
                out, state = net.step(Tensor(flat[:, f]), state)
                if f >= config.conditioning_frames - 1:
                    diff = ad.reshape(out, (b, skel.num_joints, 3)) - Tensor(pos[:, f + 1])
                    terms.append(ad.tmean(ad.l2norm(diff, axis=-1)))
            loss = terms[0]
            for term in terms[1:]:
                loss = loss + term
            loss = loss / float(len(terms))
            loss.backward()
            adam_step(arrays, net.grads(), adam, lr, clip_norm=config.clip_norm)
            losses.append(loss.item())
        history.append({"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses))})
    return history


def bone_length_spread(positions: np.ndarray, skel: Skeleton) -> float:
    """Largest per-bone deviation of observed lengths from the skeleton's
    structural lengths (0 for FK-produced poses)."""
    lengths = np.linalg.norm(
        positions[..., 1:, :] - positions[..., skel.parents[1:], :], axis=-1)
    ref = skel.bone_lengths()[1:]
    return float(np.abs(lengths - ref).max())


def compare_position_regression(clips, skel: Skeleton, config: TrainConfig,
                                val_clips=None, hidden: int = 64,
                                ik_cfg=None) -> dict:
    """Quaternion model vs direct position regression vs IK-reprojected
    positions: losses, velocity-error pools, and bone-length checks."""
    val_clips = val_clips or clips
    a = skel.num_active
    n, k = config.conditioning_frames, config.prediction_frames

    qnet = PoseNetwork(PoseNetworkConfig.desk(
        a, hidden=hidden, mode="absolute",
        parameterization="quaternion"), seed=config.seed)
    qcfg = replace(config, loss="positional")
    train_pose(qnet, clips, skel, qcfg, val_clips=val_clips,
               validate_every=max(1, config.epochs // 2))
    pnet = PositionNetwork(skel.num_joints, hidden=hidden, seed=config.seed)
    train_position_network(pnet, clips, skel, config)

    out = {"quaternion": {"velocity_errors": [], "position_errors": []},
           "position": {"velocity_errors": [], "position_errors": [],
                        "bone_spread": 0.0},
           "reprojected": {"velocity_errors": [], "position_errors": []}}
    for clip in val_clips:
        limit = clip.num_frames - n - k
        if limit < 0:
            continue
        starts = np.unique(np.linspace(0, limit, min(4, limit + 1), dtype=int))
        rots = clip.active_rotations
        for s in starts:
            root = np.zeros((k, 3))
            ref = forward_kinematics(skel, rots[s + n:s + n + k], root)

            qpred = free_run_predict(qnet, rots[s:s + n], k)
            qpos = forward_kinematics(skel, qpred, root)
            out["quaternion"]["position_errors"].append(position_error(qpos, ref))
            out["quaternion"]["velocity_errors"].append(
                per_frame_velocity_error(qpos, ref))

            prefix_pos = forward_kinematics(skel, rots[s:s + n], np.zeros((n, 3)))
            ppos = pnet.free_run(prefix_pos, k)
            out["position"]["position_errors"].append(position_error(ppos, ref))
            out["position"]["velocity_errors"].append(
                per_frame_velocity_error(ppos, ref))
            out["position"]["bone_spread"] = max(
                out["position"]["bone_spread"], bone_length_spread(ppos, skel))

            reproj = ik_reproject(skel, ppos, rots[s + n - 1], cfg=ik_cfg,
                                  root_position=np.zeros(3))
            rpos = forward_kinematics(skel, reproj, root)
            out["reprojected"]["position_errors"].append(position_error(rpos, ref))
            out["reprojected"]["velocity_errors"].append(
                per_frame_velocity_error(rpos, ref))
            out["reprojected"]["bone_spread"] = bone_length_spread(rpos, skel)
    for key in out:
        out[key]["velocity_errors"] = np.concatenate(out[key]["velocity_errors"])
        out[key]["position_loss"] = float(np.mean(out[key]["position_errors"]))
    return out
