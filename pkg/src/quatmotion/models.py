"""Autoregressive pose networks, the pace network, and checkpoint I/O.

Two backbones predict the next pose from the previous one: a 2-layer GRU
with learned initial states, and a stack of 5 causal dilated convolutions
(width 2, dilations 1,2,4,8,16, receptive field 32 frames). In velocity
mode the head's quaternions are multiplied onto the previous pose, so the
network outputs rotation deltas. Optional side inputs: 2 translation
channels (root height, trajectory offset) and a 6-feature control frame
passed through a small feed-forward encoder outside the recurrent path.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import rotmath as rm
from .autodiff import Tensor

CHECKPOINT_MAGIC = b"QMN1"
CHECKPOINT_VERSION = 1
CONTROL_DIM = 6
ENCODER_UNITS = 30
LEAKY_SLOPE = 0.05

PARAMETERIZATIONS = ("quaternion", "expmap", "euler-xyz", "euler-yzx")


class GenerationDivergedError(RuntimeError):
    pass


# -- differentiable rotation decoders ---------------------------------------

def expmap_to_quat_t(e: Tensor) -> Tensor:
    """Axis-angle 3-vectors (..., 3) to quaternions (..., 4), autodiff.

    The tiny epsilon under the square root keeps the gradient finite at the
    origin; the induced value error is below 1e-8 radians.
    """
    theta = ad.sqrt(ad.tsum(ad.square(e), axis=-1, keepdims=True) + 1e-16)
    half = theta * 0.5
    w = ad.cos(half)
    xyz = e * (ad.sin(half) / theta)
    return ad.concat([w, xyz], axis=-1)


def _single_axis_quat_t(axis: str, angle: Tensor) -> Tensor:
    c = ad.cos(angle * 0.5)
    s = ad.sin(angle * 0.5)
    z = ad.zeros(angle.shape)
    comps = {"x": [c, s, z, z], "y": [c, z, s, z], "z": [c, z, z, s]}
    return ad.stack(comps[axis], axis=-1)


def euler_to_quat_t(angles: Tensor, order: str) -> Tensor:
    """Intrinsic Euler angles (..., 3) to quaternions (..., 4), autodiff."""
    q = _single_axis_quat_t(order[0], angles[..., 0])
    q = ad.qmul(q, _single_axis_quat_t(order[1], angles[..., 1]))
    return ad.qmul(q, _single_axis_quat_t(order[2], angles[..., 2]))


def pose_dim_per_joint(parameterization: str) -> int:
    if parameterization not in PARAMETERIZATIONS:
        raise ValueError(f"unknown parameterization {parameterization!r}")
    return 4 if parameterization == "quaternion" else 3


def encode_pose(quats: np.ndarray, parameterization: str) -> np.ndarray:
    """Reference rotations (..., A, 4) to flat network inputs (..., A*P)."""
    quats = np.asarray(quats, dtype=float)
    lead = quats.shape[:-2]
    a = quats.shape[-2]
    if parameterization == "quaternion":
        return quats.reshape(lead + (a * 4,))
    if parameterization == "expmap":
        return rm.quat_to_expmap(quats).reshape(lead + (a * 3,))
    order = parameterization.split("-")[1]
    return rm.quat_to_euler(quats, order).angles.reshape(lead + (a * 3,))


def decode_pose_t(flat: Tensor, num_joints: int, parameterization: str) -> Tensor:
    """Flat network pose outputs to quaternions (..., A, 4), autodiff.

    Quaternion outputs are returned raw (pre-normalization) so velocity
    composition and the unit-norm penalty see the head's actual values.
    """
    p = pose_dim_per_joint(parameterization)
    shaped = ad.reshape(flat, flat.shape[:-1] + (num_joints, p))
    if parameterization == "quaternion":
        return shaped
    if parameterization == "expmap":
        return expmap_to_quat_t(shaped)
    return euler_to_quat_t(shaped, parameterization.split("-")[1])


# -- configs -----------------------------------------------------------------

@dataclass
class PoseNetworkConfig:
    num_joints: int
    mode: str = "velocity"  # velocity | absolute
    backbone: str = "recurrent"  # recurrent | convolutional
    hidden: int = 1000
    layers: int = 2
    channels: int = 1024
    filter_width: int = 2
    conv_layers: int = 5
    parameterization: str = "quaternion"
    include_controls: bool = False
    include_translations: bool = False

    def __post_init__(self):
        if self.mode not in ("velocity", "absolute"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.backbone not in ("recurrent", "convolutional"):
            raise ValueError(f"unknown backbone {self.backbone!r}")
        pose_dim_per_joint(self.parameterization)
        if self.mode == "velocity" and self.parameterization != "quaternion":
            raise ValueError("velocity mode requires quaternion outputs")

    @classmethod
    def desk(cls, num_joints: int, **kw) -> "PoseNetworkConfig":
        kw.setdefault("hidden", 64)
        kw.setdefault("channels", 64)
        return cls(num_joints, **kw)

    @property
    def pose_dim(self) -> int:
        return self.num_joints * pose_dim_per_joint(self.parameterization)

    @property
    def input_dim(self) -> int:
        d = self.pose_dim
        if self.include_translations:
            d += 2
        if self.include_controls:
            d += ENCODER_UNITS
        return d

    @property
    def output_dim(self) -> int:
        return self.pose_dim + (2 if self.include_translations else 0)

    @property
    def dilations(self) -> list:
        return [2 ** k for k in range(self.conv_layers)]

    @property
    def receptive_field(self) -> int:
        # width-2 taps: 1 + sum of dilations
        return 1 + sum(self.dilations)


def expected_param_count(config: PoseNetworkConfig) -> int:
    """Closed-form parameter count, used to guard against architecture
    drift. GRU layer: 3H(I + H + 1) weights plus H for the learned initial
    state. Conv layer: out*(in*W + 1)."""
    n = 0
    if config.include_controls:
        n += (CONTROL_DIM + 1) * ENCODER_UNITS + (ENCODER_UNITS + 1) * ENCODER_UNITS
    if config.backbone == "recurrent":
        h = config.hidden
        i = config.input_dim
        for _ in range(config.layers):
            n += 3 * h * (i + h + 1) + h
            i = h
        n += (h + 1) * config.output_dim
        return n
    w = config.filter_width
    dims = ([config.input_dim] + [config.channels] * (config.conv_layers - 1)
            + [config.output_dim])
    for fin, fout in zip(dims[:-1], dims[1:]):
        n += fout * (fin * w + 1)
    return n


# -- shared building blocks ---------------------------------------------------

def _init_gru(rng, prefix: str, input_dim: int, hidden: int, params: dict) -> None:
    scale = 1.0 / np.sqrt(hidden)
    params[f"{prefix}.wx"] = ad.parameter((input_dim, 3 * hidden), rng, scale)
    params[f"{prefix}.wh"] = ad.parameter((hidden, 3 * hidden), rng, scale)
    params[f"{prefix}.b"] = ad.parameter(np.zeros(3 * hidden))
    params[f"{prefix}.h0"] = ad.parameter(np.zeros(hidden))


def _gru_step(params: dict, prefix: str, x: Tensor, h: Tensor, hidden: int) -> Tensor:
    gx = x @ params[f"{prefix}.wx"] + params[f"{prefix}.b"]
    gh = h @ params[f"{prefix}.wh"]
    r = ad.sigmoid(gx[..., :hidden] + gh[..., :hidden])
    z = ad.sigmoid(gx[..., hidden:2 * hidden] + gh[..., hidden:2 * hidden])
    # reset gate rescales only the recurrent contribution to the candidate
    n = ad.tanh(gx[..., 2 * hidden:] + r * gh[..., 2 * hidden:])
    return (1.0 - z) * n + z * h


def _init_linear(rng, prefix: str, input_dim: int, output_dim: int, params: dict) -> None:
    scale = 1.0 / np.sqrt(input_dim)
    params[f"{prefix}.w"] = ad.parameter((input_dim, output_dim), rng, scale)
    params[f"{prefix}.b"] = ad.parameter(np.zeros(output_dim))


def _linear(params: dict, prefix: str, x: Tensor) -> Tensor:
    return x @ params[f"{prefix}.w"] + params[f"{prefix}.b"]


def encode_controls(params: dict, controls: Tensor) -> Tensor:
    """6-feature control frame -> 30-vector, two leaky-ReLU layers."""
    h = ad.leaky_relu(_linear(params, "enc.l1", controls), LEAKY_SLOPE)
    return ad.leaky_relu(_linear(params, "enc.l2", h), LEAKY_SLOPE)


# -- pose network --------------------------------------------------------------

class PoseNetwork:
    """Next-pose predictor over the active joints of one skeleton."""

    def __init__(self, config: PoseNetworkConfig, seed: int = 0, params: dict | None = None):
        self.config = config
        if params is not None:
            self.params = params
            return
        rng = np.random.default_rng(seed)
        params = {}
        if config.include_controls:
            _init_linear(rng, "enc.l1", CONTROL_DIM, ENCODER_UNITS, params)
            _init_linear(rng, "enc.l2", ENCODER_UNITS, ENCODER_UNITS, params)
        if config.backbone == "recurrent":
            i = config.input_dim
            for layer in range(config.layers):
                _init_gru(rng, f"gru{layer}", i, config.hidden, params)
                i = config.hidden
            _init_linear(rng, "head", config.hidden, config.output_dim, params)
        else:
            dims = ([config.input_dim] + [config.channels] * (config.conv_layers - 1)
                    + [config.output_dim])
            scaleable = zip(dims[:-1], dims[1:])
            for layer, (fin, fout) in enumerate(scaleable):
                scale = 1.0 / np.sqrt(fin * config.filter_width)
                params[f"conv{layer}.w0"] = ad.parameter((fin, fout), rng, scale)
                params[f"conv{layer}.w1"] = ad.parameter((fin, fout), rng, scale)
                params[f"conv{layer}.b"] = ad.parameter(np.zeros(fout))
        self.params = params

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def param_arrays(self) -> dict:
        return {k: v.data for k, v in self.params.items()}

    def grads(self) -> dict:
        return {k: v.grad for k, v in self.params.items() if v.grad is not None}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # -- recurrent path --------------------------------------------------

    def init_state(self, batch_size: int) -> list:
        """Per-layer hidden states: the learned h0 broadcast over the batch."""
        if self.config.backbone != "recurrent":
            raise ValueError("state applies to the recurrent backbone only")
        return [self.params[f"gru{layer}.h0"] + ad.zeros((batch_size, self.config.hidden))
                for layer in range(self.config.layers)]

    def _head_to_pose(self, raw: Tensor, prev_quats) -> dict:
        cfg = self.config
        out = {}
        if cfg.include_translations:
            pose_raw = raw[..., :cfg.pose_dim]
            out["translations"] = raw[..., cfg.pose_dim:]
        else:
            pose_raw = raw
            out["translations"] = None
        raw_q = decode_pose_t(pose_raw, cfg.num_joints, cfg.parameterization)
        if cfg.parameterization == "quaternion":
            out["raw_quats"] = raw_q
            if cfg.mode == "velocity":
                quats = ad.qnormalize(ad.qmul(ad.qnormalize(raw_q), prev_quats))
            else:
                quats = ad.qnormalize(raw_q)
            out["quats"] = quats
            out["feedback"] = ad.reshape(quats, quats.shape[:-2] + (cfg.pose_dim,))
        else:
            # non-quaternion heads are unit by construction after decoding
            out["raw_quats"] = None
            out["quats"] = raw_q
            out["feedback"] = pose_raw
        return out

    def step(self, pose: Tensor, state: list, prev_quats: Tensor | None = None,
             translations: Tensor | None = None, controls: Tensor | None = None) -> dict:
        """One recurrent prediction step.

        ``pose`` is the previous pose in the network's parameterization,
        (B, pose_dim); ``prev_quats`` (B, A, 4) is required in velocity
        mode. Returns quats, raw_quats, feedback, translations, state.
        """
        cfg = self.config
        if cfg.backbone != "recurrent":
            raise ValueError("step() applies to the recurrent backbone")
        for s in state:
            if not np.all(np.isfinite(s.data)):
                raise ad.NumericalError("non-finite recurrent state")
        if pose.shape[-1] != cfg.pose_dim:
            raise ValueError("pose feature size does not match config")
        if cfg.mode == "velocity" and prev_quats is None:
            raise ValueError("velocity mode needs prev_quats")
        parts = [pose]
        if cfg.include_translations:
            if translations is None:
                raise ValueError("config expects translation inputs")
            parts.append(translations)
        if cfg.include_controls:
            if controls is None:
                raise ValueError("config expects control inputs")
            parts.append(encode_controls(self.params, controls))
        x = ad.concat(parts, axis=-1) if len(parts) > 1 else parts[0]
        new_state = []
        for layer in range(cfg.layers):
            x = _gru_step(self.params, f"gru{layer}", x, state[layer], cfg.hidden)
            new_state.append(x)
        raw = _linear(self.params, "head", x)
        out = self._head_to_pose(raw, prev_quats)
        out["state"] = new_state
        return out

    # -- convolutional path ------------------------------------------------

    def _causal_conv(self, layer: int, x: Tensor, dilation: int) -> Tensor:
        # width-2 causal conv: y[t] = w0.x[t-d] + w1.x[t] + b, zero history
        b, t = x.shape[0], x.shape[1]
        fin = x.shape[2]
        if dilation >= t:
            shifted = ad.zeros((b, t, fin))
        else:
            shifted = ad.concat([ad.zeros((b, dilation, fin)), x[:, :t - dilation]], axis=1)
        return (shifted @ self.params[f"conv{layer}.w0"]
                + x @ self.params[f"conv{layer}.w1"]
                + self.params[f"conv{layer}.b"])

    def forward_window(self, pose_window: Tensor, prev_quats: Tensor | None = None,
                       translations: Tensor | None = None,
                       controls: Tensor | None = None) -> dict:
        """Predict the frame after a (B, T, pose_dim) window, T >= the
        receptive field. Additive skips connect every other same-width
        layer (1->3, 2->4); the last layer is linear."""
        cfg = self.config
        if cfg.backbone != "convolutional":
            raise ValueError("forward_window() applies to the convolutional backbone")
        t = pose_window.shape[1]
        if t < cfg.receptive_field:
            raise ValueError(
                f"window of {t} frames is shorter than the receptive field "
                f"({cfg.receptive_field})")
        if cfg.mode == "velocity" and prev_quats is None:
            raise ValueError("velocity mode needs prev_quats")
        parts = [pose_window]
        if cfg.include_translations:
            if translations is None:
                raise ValueError("config expects translation inputs")
            parts.append(translations)
        if cfg.include_controls:
            if controls is None:
                raise ValueError("config expects control inputs")
            parts.append(encode_controls(self.params, controls))
        x = ad.concat(parts, axis=-1) if len(parts) > 1 else parts[0]
        dil = cfg.dilations
        h1 = ad.leaky_relu(self._causal_conv(0, x, dil[0]), LEAKY_SLOPE)
        h2 = ad.leaky_relu(self._causal_conv(1, h1, dil[1]), LEAKY_SLOPE)
        h3 = ad.leaky_relu(self._causal_conv(2, h2, dil[2]), LEAKY_SLOPE) + h1
        h4 = ad.leaky_relu(self._causal_conv(3, h3, dil[3]), LEAKY_SLOPE) + h2
        raw = self._causal_conv(4, h4, dil[4])
        return self._head_to_pose(raw[:, -1], prev_quats)


# -- pace network ---------------------------------------------------------------

@dataclass
class PaceNetworkConfig:
    hidden: int = 30
    variant: str = "bidirectional"  # bidirectional | online
    delay: int = 4

    def __post_init__(self):
        if self.variant not in ("bidirectional", "online"):
            raise ValueError(f"unknown variant {self.variant!r}")


class PaceNetwork:
    """Maps per-segment spline curvature to (facing versor relative to the
    tangent, footstep frequency, local speed).

    The offline variant reads the whole spline in both directions; the
    online variant emits each segment's output after seeing ``delay``
    further segments.
    """

    OUT_DIM = 4  # facing (2) + frequency + speed

    def __init__(self, config: PaceNetworkConfig, seed: int = 0, params: dict | None = None):
        self.config = config
        if params is not None:
            self.params = params
            return
        rng = np.random.default_rng(seed)
        params = {}
        _init_gru(rng, "fwd", 1, config.hidden, params)
        head_in = config.hidden
        if config.variant == "bidirectional":
            _init_gru(rng, "bwd", 1, config.hidden, params)
            head_in = 2 * config.hidden
        _init_linear(rng, "head", head_in, self.OUT_DIM, params)
        self.params = params

    def param_arrays(self) -> dict:
        return {k: v.data for k, v in self.params.items()}

    def grads(self) -> dict:
        return {k: v.grad for k, v in self.params.items() if v.grad is not None}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _run_gru(self, prefix: str, inputs: list) -> list:
        h = self.params[f"{prefix}.h0"] + ad.zeros((1, self.config.hidden))
        states = []
        for x in inputs:
            h = _gru_step(self.params, prefix, x, h, self.config.hidden)
            states.append(h)
        return states

    def forward(self, curvatures) -> dict:
        """Per-segment outputs for a curvature sequence of length S.

        Returns facing (S, 2) unit versors, frequency (S,), speed (S,)."""
        curv = np.asarray(curvatures if not isinstance(curvatures, Tensor)
                          else curvatures.data, dtype=float).reshape(-1)
        if len(curv) == 0:
            raise ValueError("need at least one segment")
        s = len(curv)
        inputs = [Tensor(curv[i].reshape(1, 1)) for i in range(s)]
        fwd = self._run_gru("fwd", inputs)
        if self.config.variant == "bidirectional":
            bwd = self._run_gru("bwd", inputs[::-1])[::-1]
            feats = [ad.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]
        else:
            d = self.config.delay
            feats = [fwd[min(i + d, s - 1)] for i in range(s)]
        raw = ad.concat([_linear(self.params, "head", f) for f in feats], axis=0)
        # tiny forward bias keeps the norm nonzero when the head outputs
        # an exactly zero facing (e.g. an untrained net on zero curvature)
        fac = raw[:, :2] + Tensor(np.array([1e-9, 0.0]))
        norm = ad.l2norm(fac, axis=-1, keepdims=True)
        return {"facing": fac / norm, "frequency": raw[:, 2], "speed": raw[:, 3],
                "raw": raw}


def _rotate2(v: np.ndarray, by: np.ndarray) -> np.ndarray:
    """Rotate ground-plane vector(s) v by the angle of unit vector(s) by,
    treating (x, z) components as the complex plane."""
    return np.stack([by[..., 0] * v[..., 0] - by[..., 1] * v[..., 1],
                     by[..., 1] * v[..., 0] + by[..., 0] * v[..., 1]], axis=-1)


def generate_locomotion(pose_net: PoseNetwork, pace_net: PaceNetwork, spline,
                        init_clip, num_frames: int, frame_rate: float):
    """Closed-loop locomotion along a trajectory spline.

    The pace network supplies per-segment facing/frequency/speed; frequency
    integrates to the gait phase and speed to the arc position. The pose
    network consumes its own outputs (pose, translations) plus the control
    frame, and the root follows the spline at the current arc position
    plus the predicted trajectory offset.
    """
    from .motiondata import MotionClip  # deferred: motiondata imports models' peers

    cfg = pose_net.config
    skel = init_clip.skeleton
    if not (cfg.include_controls and cfg.include_translations):
        raise ValueError("generation needs a model with controls and translations")
    if cfg.backbone != "recurrent":
        raise ValueError("generation uses the recurrent backbone")

    pace = pace_net.forward(spline.curvatures)
    seg_facing = pace["facing"].data
    seg_freq = pace["frequency"].data
    seg_speed = np.maximum(pace["speed"].data, 0.0)

    active = skel.active_indices
    init_q = init_clip.active_rotations
    n_init = init_q.shape[0]
    height_limit = 10.0 * max(skel.height(), 1e-6)

    # warm up on the conditioning frames
    state = pose_net.init_state(1)
    theta = 0.0
    arc = 0.0
    offset = 0.0
    root_height = float(init_clip.root_positions[-1, 1])

    def seg_index(s):
        return int(np.clip(s / spline.segment_length, 0, spline.num_segments - 1))

    def control_frame():
        i = seg_index(arc)
        tangent = spline.tangents[i]
        facing = _rotate2(seg_facing[i], tangent)
        a = seg_speed[i]
        gait = a * np.array([np.cos(theta), np.sin(theta)])
        return np.concatenate([tangent, facing, gait])[None, :]

    out = None
    prev_q = None
    for f in range(n_init):
        prev_q = Tensor(init_q[f][None])
        pose = Tensor(encode_pose(init_q[f][None], cfg.parameterization))
        trans = Tensor(np.array([[init_clip.root_positions[f, 1], 0.0]]))
        out = pose_net.step(pose, state, prev_quats=prev_q,
                            translations=trans, controls=Tensor(control_frame()))
        state = [s.detach() for s in out["state"]]
        i = seg_index(arc)
        arc += seg_speed[i] / frame_rate
        theta += 2.0 * np.pi * seg_freq[i] / frame_rate

    frames_q = []
    frames_root = []
    for f in range(num_frames):
        quats = out["quats"].data[0]
        trans_pred = out["translations"].data[0]
        if (not np.isfinite(quats).all() or not np.isfinite(trans_pred).all()
                or np.abs(trans_pred).max() > height_limit):
            raise GenerationDivergedError(
                f"pose or translation left the {height_limit:.3g} envelope "
                f"at frame {f}")
        root_height = float(trans_pred[0])
        offset = float(trans_pred[1])
        ground = spline.position_at(np.clip(arc + offset, 0.0, spline.total_length))
        root = np.array([ground[0], root_height, ground[1]])
        frames_q.append(quats)
        frames_root.append(root)

        i = seg_index(arc)
        arc += seg_speed[i] / frame_rate
        theta += 2.0 * np.pi * seg_freq[i] / frame_rate
        prev_q = Tensor(quats[None])
        out = pose_net.step(Tensor(out["feedback"].data), state, prev_quats=prev_q,
                            translations=Tensor(trans_pred[None]),
                            controls=Tensor(control_frame()))
        state = [s.detach() for s in out["state"]]

    rotations = np.zeros((num_frames, skel.num_joints, 4))
    rotations[..., 0] = 1.0
    rotations[:, active] = np.stack(frames_q)
    return MotionClip(skel, frame_rate, np.stack(frames_root), rotations,
                      subject="generated", action="locomotion")


# -- checkpoints ------------------------------------------------------------------

def save_checkpoint(path, kind: str, config: dict, arrays: dict, meta: dict | None = None) -> None:
    """Versioned container: magic, uint32 header length, JSON header
    (kind, config, meta, array manifest), then float64 LE array bodies in
    manifest order."""
    names = sorted(arrays)
    header = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "meta": meta or {},
        "arrays": [{"name": n, "shape": list(np.asarray(arrays[n]).shape)} for n in names],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.asarray(arrays[n], dtype=float).astype("<f8").tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            arrays[spec["name"]] = np.frombuffer(
                fh.read(count * 8), dtype="<f8").reshape(shape).astype(float)
    return {"kind": header["kind"], "config": header["config"],
            "meta": header["meta"], "arrays": arrays}


def pose_network_from_checkpoint(ck: dict) -> PoseNetwork:
    config = PoseNetworkConfig(**ck["config"])
    params = {k: ad.parameter(v) for k, v in ck["arrays"].items()}
    return PoseNetwork(config, params=params)


def pace_network_from_checkpoint(ck: dict) -> PaceNetwork:
    config = PaceNetworkConfig(**ck["config"])
    params = {k: ad.parameter(v) for k, v in ck["arrays"].items()}
    return PaceNetwork(config, params=params)
