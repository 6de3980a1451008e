"""Synthetic ground truth and the corruption model used to test the pipeline.

Random numbers come from numpy's PCG64 bit generator. Motion defaults are
drawn from ``PCG64(seed)`` and corruption from ``PCG64(SeedSequence([seed, 1]))``;
within a frame, draws happen in a fixed order regardless of which noise
levels are zero, so changing one sigma never shifts another's samples.
"""

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rotmath
from .errors import InvalidArgumentError, ParseError
from .handfuse import HandEstimate, load_hand_mean
from .kinematics import SIDES, BodyPose, default_tree, forward_kinematics_batch, landmark_name, load_tree
from .refine import Keypoint2D, WeakPerspectiveCamera, project
from .sequence import BUNDLED_TREE, FrameBundle, Sequence

ARM_PARTS = ("shoulder", "elbow", "wrist")


def rng_for(seed, stream=0):
    """Generator for one named stream of a seed (0: motion, 1: corruption)."""
    if stream == 0:
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def sample_rotation_noise(rng, sigma, size):
    """Rotation vectors with uniform direction and angle ``|N(0, sigma)|``."""
    d = rng.standard_normal((size, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    angle = np.abs(rng.standard_normal(size)) * sigma
    return d * angle[:, None]


def perturb(local, noise):
    """Left-multiply rotation noise onto local rotation vectors."""
    R = rotmath.axis_angle_to_rotation(noise) @ rotmath.axis_angle_to_rotation(local)
    return rotmath.rotation_to_axis_angle(R)


@dataclass
class JointMotion:
    """``offset + amplitude * sin(2 pi frequency t + phase)`` per component, in radians."""

    offset: tuple = (0.0, 0.0, 0.0)
    amplitude: tuple = (0.0, 0.0, 0.0)
    frequency: float = 0.01
    phase: float = 0.0

    def at(self, t):
        t = np.asarray(t, dtype=float)[:, None]
        return np.asarray(self.offset) + np.asarray(self.amplitude) * np.sin(
            2.0 * np.pi * self.frequency * t + self.phase
        )


@dataclass
class Corruption:
    elbow_noise_sigma: float = 0.0
    shoulder_noise_sigma: float = 0.0
    hand_pose_noise_sigma: float = 0.0
    keypoint_noise_sigma: float = 0.0
    confidence_min: float = 1.0
    confidence_max: float = 1.0
    hand_dropout: float = 0.0
    # noise on the remaining body joints and on the body estimator's own finger joints
    body_noise_sigma: float = 0.0
    body_hand_noise_sigma: float = 0.0
    mirror_left: bool = True

    def __post_init__(self):
        for f in ("elbow_noise_sigma", "shoulder_noise_sigma", "hand_pose_noise_sigma",
                  "keypoint_noise_sigma", "body_noise_sigma", "body_hand_noise_sigma"):
            if not getattr(self, f) >= 0.0:
                raise InvalidArgumentError(f"{f} must be >= 0")
        if not 0.0 <= self.hand_dropout <= 1.0:
            raise InvalidArgumentError("hand_dropout must be in [0, 1]")
        if not 0.0 <= self.confidence_min <= self.confidence_max <= 1.0:
            raise InvalidArgumentError("need 0 <= confidence_min <= confidence_max <= 1")


# Base pose of a signer: upper arms down and forward, forearms raised in front.
_LEFT_BASE = {
    "shoulder": (0.25, -0.55, -1.05),
    "elbow": (0.15, -1.35, 0.25),
    "wrist": (0.1, 0.05, 0.1),
}
_LEFT_AMP = {"shoulder": 0.25, "elbow": 0.35, "wrist": 0.3, "collar": 0.05}


def default_motion(tree, seed=0):
    """Seeded sinusoidal motion for the bundled joint naming scheme.

    Unknown joint names are simply left at rest.
    """
    rng = rng_for(seed, 0)
    motion = {}

    def draw(offset, amp):
        a = rng.uniform(-amp, amp, 3)
        f = rng.uniform(0.005, 0.03)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        return JointMotion(tuple(offset), tuple(a), float(f), float(ph))

    for name in ("spine1", "spine2", "spine3", "neck", "head"):
        if name in tree.names:
            motion[name] = draw((0.0, 0.0, 0.0), 0.06)
    for side, sx in (("left", 1.0), ("right", -1.0)):
        for part in ("collar", "shoulder", "elbow", "wrist"):
            name = f"{side}_{part}"
            if name not in tree.names:
                continue
            base = np.asarray(_LEFT_BASE.get(part, (0.0, 0.0, 0.0)))
            if sx < 0:
                base = rotmath.mirror_axis_angle(base)
            motion[name] = draw(base, _LEFT_AMP[part])
        for j in tree.hand_joints[side]:
            motion[tree.names[j]] = draw((0.0, 0.0, 0.25), 0.3)
    return motion


@dataclass
class SynthSpec:
    seed: int = 0
    frames: int = 150
    tree: object = None
    motion: dict = None
    global_orient: tuple = (0.0, 0.35, 0.0)
    translation: tuple = (0.0, 0.0, 0.0)
    camera_scale: float = 1000.0
    camera_translation: tuple = (960.0, 540.0)
    boundaries: tuple = ()
    corruption: Corruption = field(default_factory=Corruption)
    hand_mean: np.ndarray = None
    tree_ref: str = None

    def __post_init__(self):
        if int(self.frames) < 4:
            raise InvalidArgumentError("synthetic sequences need at least 4 frames")
        self.frames = int(self.frames)
        if self.tree is None:
            self.tree = default_tree()
            self.tree_ref = BUNDLED_TREE
        if self.motion is None:
            self.motion = default_motion(self.tree, self.seed)
        if self.hand_mean is None:
            self.hand_mean = load_hand_mean()

    @classmethod
    def from_dict(cls, d, path=None):
        d = dict(d)
        try:
            tree_path = d.pop("tree", None)
            tree = load_tree(tree_path) if tree_path else None
            motion = d.pop("motion", None)
            if motion is not None:
                motion = {k: JointMotion(**v) for k, v in motion.items()}
            corruption = Corruption(**d.pop("corruption", {}))
            mean_path = d.pop("hand_mean_path", None)
            spec = cls(
                tree=tree,
                motion=motion,
                corruption=corruption,
                hand_mean=load_hand_mean(mean_path) if mean_path else None,
                **{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()},
            )
        except TypeError as exc:
            raise ParseError(f"bad synth spec entry: {exc}", path) from None
        except InvalidArgumentError as exc:
            raise ParseError(str(exc), path) from None
        return spec


def load_spec(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read synth spec: {exc}", str(path)) from None
    return SynthSpec.from_dict(data, str(path))


def ground_truth_poses(spec):
    """``(T, J, 3)`` local rotation vectors of the clean motion."""
    T, J = spec.frames, spec.tree.num_joints
    rots = np.zeros((T, J, 3))
    t = np.arange(T)
    for name, m in spec.motion.items():
        rots[:, spec.tree.index(name)] = m.at(t)
    return rots


def _keypoints(tree, positions, cam):
    out = []
    for side in SIDES:
        for part, j in zip(ARM_PARTS, tree.arm(side)):
            out.append(Keypoint2D(landmark_name(side, part), tuple(project(positions[j], cam)), 1.0))
    return out


def ground_truth(spec):
    """Clean sequence: body poses, exact keypoints, and unmirrored hand estimates."""
    tree = spec.tree
    rots = ground_truth_poses(spec)
    T = spec.frames
    glob = np.tile(np.asarray(spec.global_orient, dtype=float), (T, 1))
    transl = np.tile(np.asarray(spec.translation, dtype=float), (T, 1))
    world_R, world_p = forward_kinematics_batch(tree, rots, glob, transl)
    cam = WeakPerspectiveCamera(spec.camera_scale, spec.camera_translation)
    frames = []
    for t in range(T):
        body = BodyPose(rots[t], glob[t], transl[t])
        hands = {}
        for side in SIDES:
            w = tree.arm(side)[2]
            fingers = rots[t, list(tree.hand_joints[side])] + spec.hand_mean
            hands[side] = HandEstimate(side, world_R[t, w], fingers, np.zeros(10), world_p[t, w], False)
        frames.append(FrameBundle(body, hands, _keypoints(tree, world_p[t], cam), cam))
    meta = {"synth": {"seed": spec.seed, "frames": T, "role": "ground_truth"}}
    return Sequence(tree, frames, tuple(spec.boundaries), meta, spec.tree_ref)


def corrupt(seq, corruption, seed=0):
    """Apply the corruption model to a clean sequence (hands must be unmirrored).

    Per frame the draws are, in order: shoulder noise (left, right), elbow
    noise (left, right), noise for every other body joint, noise for the
    body's finger joints, then for each hand a dropout uniform and 15 finger
    noises, then 2 pixel normals and 1 confidence uniform per keypoint.
    """
    c = corruption
    rng = rng_for(seed, 1)
    tree = seq.tree
    shoulders = [tree.arm(s)[0] for s in SIDES]
    elbows = [tree.arm(s)[1] for s in SIDES]
    hand_set = set(tree.all_hand_joints())
    others = [j for j in range(tree.num_joints) if j not in hand_set and j not in shoulders + elbows]
    body_hands = list(tree.all_hand_joints())
    out = []
    for fr in seq.frames:
        rots = fr.body.local_rotations.copy()
        for idx, sigma in ((shoulders, c.shoulder_noise_sigma), (elbows, c.elbow_noise_sigma),
                           (others, c.body_noise_sigma), (body_hands, c.body_hand_noise_sigma)):
            noise = sample_rotation_noise(rng, sigma, len(idx))
            if sigma > 0.0:
                rots[idx] = perturb(rots[idx], noise)
        body = replace(fr.body.copy(), local_rotations=rots)

        hands = {}
        for side in SIDES:
            drop = rng.uniform()
            noise = sample_rotation_noise(rng, c.hand_pose_noise_sigma, 15)
            est = fr.hands.get(side)
            if est is None or drop < c.hand_dropout:
                continue
            fingers = est.finger_rotations
            if c.hand_pose_noise_sigma > 0.0:
                fingers = perturb(fingers, noise)
            est = replace(est, finger_rotations=fingers)
            if side == "left" and c.mirror_left:
                R = rotmath.axis_angle_to_rotation(est.finger_rotations)
                est = replace(
                    est,
                    wrist_global=rotmath.mirror_conjugate(est.wrist_global),
                    finger_rotations=rotmath.rotation_to_axis_angle(rotmath.mirror_conjugate(R)),
                    source_mirrored=True,
                )
            hands[side] = est

        kps = []
        for kp in fr.keypoints:
            px = rng.standard_normal(2) * c.keypoint_noise_sigma
            u = rng.uniform()
            pos = kp.position if c.keypoint_noise_sigma == 0.0 else tuple(np.asarray(kp.position) + px)
            conf = kp.confidence
            if (c.confidence_min, c.confidence_max) != (1.0, 1.0):
                conf = c.confidence_min + u * (c.confidence_max - c.confidence_min)
            kps.append(Keypoint2D(kp.joint, pos, conf))
        out.append(FrameBundle(body, hands, kps, fr.camera, dict(fr.meta)))
    meta = dict(seq.metadata)
    meta["synth"] = {**meta.get("synth", {}), "role": "corrupted", "corruption": asdict(c)}
    return Sequence(tree, out, seq.boundaries, meta, seq.tree_ref)


def generate(spec):
    """``(ground_truth, corrupted_inputs)`` for a spec; deterministic in ``spec.seed``."""
    gt = ground_truth(spec)
    return gt, corrupt(gt, spec.corruption, spec.seed)
