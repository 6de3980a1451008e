"""Hand-body integration: pose conversion, left-hand mirroring, and the forearm solve.

The elbow solve is closed form. Given the shoulder's world rotation, the
wrist's local rotation (kept from the body estimate) and a target world
rotation for the wrist, the elbow local rotation

    R_elbow = R_shoulder_world.T @ R_target @ R_wrist_local.T

makes the chain land on the target exactly. An optional twist about the
forearm axis is then left-multiplied onto that solution.
"""

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from . import rotmath
from .errors import InvalidArgumentError, InvalidStateError
from .kinematics import HAND_JOINT_COUNT, SIDES, forearm_axis, forward_kinematics


@dataclass(eq=False)
class HandEstimate:
    """Output of any hand estimator for one hand in one frame.

    ``finger_rotations`` are in the hand model's own convention (before mean
    subtraction). ``source_mirrored`` marks left hands that were estimated as
    mirrored right hands and still need :func:`mirror_hand`.
    """

    handedness: str
    wrist_global: np.ndarray
    finger_rotations: np.ndarray
    hand_shape: np.ndarray = field(default_factory=lambda: np.zeros(10))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    source_mirrored: bool = False

    def __post_init__(self):
        if self.handedness not in SIDES:
            raise InvalidArgumentError(f"handedness must be left or right, got {self.handedness!r}")
        self.wrist_global = np.array(self.wrist_global, dtype=float)
        if not rotmath.is_rotation(self.wrist_global, tol=1e-6):
            raise InvalidArgumentError("wrist_global is not a rotation matrix")
        self.finger_rotations = np.array(self.finger_rotations, dtype=float)
        if self.finger_rotations.shape != (HAND_JOINT_COUNT, 3):
            raise InvalidArgumentError(
                f"expected {HAND_JOINT_COUNT} finger rotations, got shape {self.finger_rotations.shape}"
            )
        if not np.all(np.isfinite(self.finger_rotations)):
            raise InvalidArgumentError("finger rotations must be finite")
        self.hand_shape = np.array(self.hand_shape, dtype=float).ravel()
        self.translation = np.array(self.translation, dtype=float).reshape(3)
        self.source_mirrored = bool(self.source_mirrored)


def load_hand_mean(path=None):
    """Read 15 mean-pose rotation vectors; ``None`` gives the bundled zero mean."""
    if path is None:
        data = json.loads(resources.files("signfuse.data").joinpath("zero_hand_mean.json").read_text())
    else:
        with open(path) as fh:
            data = json.load(fh)
    mean = np.asarray(data, dtype=float)
    if mean.shape != (HAND_JOINT_COUNT, 3) or not np.all(np.isfinite(mean)):
        raise InvalidArgumentError(f"hand mean pose must be {HAND_JOINT_COUNT} finite triples")
    return mean


def convert_hand_pose(finger_rotations, mean):
    """Subtract the hand model's mean pose, joint by joint, as plain vectors."""
    finger_rotations = np.asarray(finger_rotations, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if finger_rotations.shape != mean.shape or finger_rotations.shape != (HAND_JOINT_COUNT, 3):
        raise InvalidArgumentError("finger rotations and mean pose must both be (15, 3)")
    return finger_rotations - mean


def mirror_hand(est):
    """Undo the estimator's left-as-mirrored-right convention.

    The wrist rotation and all finger rotations are conjugated by the
    YZ-plane reflection.
    """
    if not est.source_mirrored:
        raise InvalidStateError("hand estimate is not mirrored")
    if est.handedness != "left":
        raise InvalidStateError("only left hands are emitted mirrored")
    fingers = rotmath.axis_angle_to_rotation(est.finger_rotations)
    fingers = rotmath.rotation_to_axis_angle(rotmath.mirror_conjugate(fingers))
    return replace(
        est,
        wrist_global=rotmath.mirror_conjugate(est.wrist_global),
        finger_rotations=fingers,
        source_mirrored=False,
    )


def solve_elbow(R_shoulder_world, R_target_wrist, R_wrist_local):
    """Elbow local rotation that puts the wrist exactly at ``R_target_wrist``."""
    for R in (R_shoulder_world, R_target_wrist, R_wrist_local):
        if not rotmath.is_rotation(R, tol=1e-6):
            raise InvalidArgumentError("solve_elbow expects rotation matrices")
    return np.asarray(R_shoulder_world).T @ np.asarray(R_target_wrist) @ np.asarray(R_wrist_local).T


def apply_twist(a_twist, R_elbow_new):
    return rotmath.compose(rotmath.axis_angle_to_rotation(a_twist), R_elbow_new)


def integrate_hand(tree, pose, est, mean, *, convert=True, elbow_solve=True, twist=True):
    """Fuse one hand estimate into a body pose.

    Replaces the side's 15 finger joints with the converted hand pose and the
    elbow with the solved (and optionally twisted) rotation. Every other
    joint is returned bit-for-bit unchanged.

    Raises:
        InvalidStateError: the estimate is still mirrored.
        DegenerateGeometryError: elbow and wrist coincide.
    """
    if est.source_mirrored:
        raise InvalidStateError("mirror the left-hand estimate before integrating it")
    if twist and not elbow_solve:
        raise InvalidArgumentError("twist requires the elbow solve")
    pose.check(tree)
    out = pose.copy()
    side = est.handedness

    if convert:
        out.local_rotations[list(tree.hand_joints[side])] = convert_hand_pose(est.finger_rotations, mean)

    if elbow_solve:
        shoulder, elbow, wrist = tree.arm(side)
        world = forward_kinematics(tree, pose)
        R_target = est.wrist_global
        R_wrist_local = rotmath.axis_angle_to_rotation(pose.local_rotations[wrist])
        R_new = solve_elbow(world.rotations[shoulder], R_target, R_wrist_local)
        if twist:
            a_rel = rotmath.rotation_to_axis_angle(world.rotations[wrist].T @ R_target)
            f = forearm_axis(tree, world, side)
            a_twist, _ = rotmath.swing_twist_split(a_rel, f)
            R_new = apply_twist(a_twist, R_new)
        out.local_rotations[elbow] = rotmath.rotation_to_axis_angle(R_new)
    return out
