"""Articulated skeleton and forward kinematics."""

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from . import rotmath
from .errors import DegenerateGeometryError, InvalidArgumentError, ParseError

SIDES = ("left", "right")
LANDMARKS = ("l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist")
HAND_JOINT_COUNT = 15
_PREFIX = {"left": "l", "right": "r"}


def landmark_name(side, part):
    """``landmark_name("left", "elbow") -> "l_elbow"``."""
    return f"{_PREFIX[side]}_{part}"


@dataclass(frozen=True, eq=False)
class KinematicTree:
    """Joints in topological order with rest offsets in meters.

    ``parents[j]`` is ``-1`` for the root. ``landmarks`` maps the six arm
    landmark ids to joint indices; ``hand_joints`` maps each side to the 15
    finger joints in the hand estimator's joint order.
    """

    names: tuple
    parents: np.ndarray
    offsets: np.ndarray
    landmarks: dict
    hand_joints: dict
    name: str = "tree"

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=int)
        offsets = np.asarray(self.offsets, dtype=float)
        n = len(self.names)
        if parents.shape != (n,) or offsets.shape != (n, 3):
            raise InvalidArgumentError("parents/offsets do not match joint count")
        if not np.all(np.isfinite(offsets)):
            raise InvalidArgumentError("rest offsets must be finite")
        if np.count_nonzero(parents < 0) != 1 or parents[0] >= 0:
            raise InvalidArgumentError("tree needs exactly one root, at index 0")
        if np.any(parents[1:] >= np.arange(1, n)) or np.any(parents[1:] < 0):
            raise InvalidArgumentError("parent index must be smaller than child index")
        missing = set(LANDMARKS) - set(self.landmarks)
        if missing:
            raise InvalidArgumentError(f"missing landmarks: {sorted(missing)}")
        for side in SIDES:
            s, e, w = (self.landmarks[landmark_name(side, p)] for p in ("shoulder", "elbow", "wrist"))
            if parents[e] != s or parents[w] != e:
                raise InvalidArgumentError(f"{side} shoulder->elbow->wrist is not a parent chain")
            hj = list(self.hand_joints.get(side, ()))
            if len(hj) != HAND_JOINT_COUNT:
                raise InvalidArgumentError(f"{side} hand needs {HAND_JOINT_COUNT} joints")
            for j in hj:
                if w not in self.ancestors(j, parents):
                    raise InvalidArgumentError(f"hand joint {self.names[j]} is not below the {side} wrist")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "hand_joints", {s: tuple(int(j) for j in self.hand_joints[s]) for s in SIDES})
        object.__setattr__(self, "landmarks", {k: int(v) for k, v in self.landmarks.items()})

    @property
    def num_joints(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidArgumentError(f"unknown joint {name!r}") from None

    def ancestors(self, j, parents=None):
        parents = self.parents if parents is None else parents
        chain = []
        while j >= 0:
            chain.append(int(j))
            j = parents[j]
        return chain

    def arm(self, side):
        """Joint indices ``(shoulder, elbow, wrist)`` of one side."""
        return tuple(self.landmarks[landmark_name(side, p)] for p in ("shoulder", "elbow", "wrist"))

    def all_hand_joints(self):
        return self.hand_joints["left"] + self.hand_joints["right"]

    def body_joints(self):
        hands = set(self.all_hand_joints())
        return tuple(j for j in range(self.num_joints) if j not in hands)

    def to_dict(self):
        return {
            "name": self.name,
            "joints": [
                {"name": n, "parent": None if p < 0 else self.names[p], "offset": o.tolist()}
                for n, p, o in zip(self.names, self.parents, self.offsets)
            ],
            "landmarks": {k: self.names[v] for k, v in self.landmarks.items()},
            "hand_joints": {s: [self.names[j] for j in self.hand_joints[s]] for s in SIDES},
        }

    @classmethod
    def from_dict(cls, data, path=None):
        try:
            joints = data["joints"]
            names = [str(j["name"]) for j in joints]
            lookup = {n: i for i, n in enumerate(names)}

            def resolve(ref, what):
                if ref is None:
                    return -1
                if isinstance(ref, str):
                    if ref not in lookup:
                        raise ParseError(f"unknown joint {ref!r}", path, what)
                    return lookup[ref]
                return int(ref)

            parents = [resolve(j.get("parent"), f"joints[{i}].parent") for i, j in enumerate(joints)]
            offsets = [j["offset"] for j in joints]
            landmarks = {k: resolve(v, f"landmarks.{k}") for k, v in data["landmarks"].items()}
            hands = {
                s: [resolve(v, f"hand_joints.{s}") for v in data["hand_joints"][s]] for s in SIDES
            }
            return cls(names, parents, offsets, landmarks, hands, name=data.get("name", "tree"))
        except KeyError as exc:
            raise ParseError("missing key", path, exc.args[0]) from None
        except InvalidArgumentError as exc:
            raise ParseError(str(exc), path, "tree") from None


def load_tree(path):
    """Read a tree definition JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", str(path)) from None
    return KinematicTree.from_dict(data, path=str(path))


def default_tree():
    """The bundled 52-joint skeleton: 22 SMPL-X style body joints plus 2x15 finger joints."""
    text = resources.files("signfuse.data").joinpath("upper_body_tree.json").read_text()
    return KinematicTree.from_dict(json.loads(text), path="<bundled>")


@dataclass(eq=False)
class BodyPose:
    """Per-joint local rotation vectors plus global orientation and translation.

    ``shape`` and ``expression`` coefficients are carried through untouched.
    """

    local_rotations: np.ndarray
    global_orient: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    shape: np.ndarray = field(default_factory=lambda: np.zeros(10))
    expression: np.ndarray = field(default_factory=lambda: np.zeros(10))

    def __post_init__(self):
        self.local_rotations = np.array(self.local_rotations, dtype=float).reshape(-1, 3)
        self.global_orient = np.array(self.global_orient, dtype=float).reshape(3)
        self.translation = np.array(self.translation, dtype=float).reshape(3)
        self.shape = np.array(self.shape, dtype=float).ravel()
        self.expression = np.array(self.expression, dtype=float).ravel()
        for name in ("local_rotations", "global_orient", "translation"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidArgumentError(f"BodyPose.{name} must be finite")

    @classmethod
    def identity(cls, tree):
        return cls(np.zeros((tree.num_joints, 3)))

    def copy(self):
        return replace(
            self,
            local_rotations=self.local_rotations.copy(),
            global_orient=self.global_orient.copy(),
            translation=self.translation.copy(),
            shape=self.shape.copy(),
            expression=self.expression.copy(),
        )

    def check(self, tree):
        if self.local_rotations.shape != (tree.num_joints, 3):
            raise InvalidArgumentError(
                f"pose has {len(self.local_rotations)} joints, tree has {tree.num_joints}"
            )
        return self


@dataclass(eq=False)
class WorldState:
    rotations: np.ndarray  # (J, 3, 3)
    positions: np.ndarray  # (J, 3)


def forward_kinematics_batch(tree, local_rotations, global_orient, translation):
    """FK for ``T`` frames at once.

    Args:
        local_rotations: ``(T, J, 3)`` rotation vectors.
        global_orient: ``(T, 3)``.
        translation: ``(T, 3)`` root positions in meters.

    Returns:
        ``(rotations (T, J, 3, 3), positions (T, J, 3))``.
    """
    local = np.asarray(local_rotations, dtype=float)
    if local.ndim != 3 or local.shape[1:] != (tree.num_joints, 3):
        raise InvalidArgumentError(f"expected (T, {tree.num_joints}, 3) rotations, got {local.shape}")
    R_local = rotmath.axis_angle_to_rotation(local)
    R_glob = rotmath.axis_angle_to_rotation(np.asarray(global_orient, dtype=float).reshape(-1, 3))
    T, J = local.shape[:2]
    rot = np.empty((T, J, 3, 3))
    pos = np.empty((T, J, 3))
    rot[:, 0] = R_glob @ R_local[:, 0]
    pos[:, 0] = np.asarray(translation, dtype=float).reshape(-1, 3)
    offsets = tree.offsets
    for j in range(1, J):
        p = tree.parents[j]
        rot[:, j] = rot[:, p] @ R_local[:, j]
        pos[:, j] = pos[:, p] + rot[:, p] @ offsets[j]
    return rot, pos


def forward_kinematics(tree, pose):
    """World rotations and positions of every joint for one pose.

    The global orientation is applied before the root's local rotation.
    """
    pose.check(tree)
    rot, pos = forward_kinematics_batch(
        tree, pose.local_rotations[None], pose.global_orient[None], pose.translation[None]
    )
    return WorldState(rot[0], pos[0])


def chain_world_rotation(tree, pose, joint):
    """World rotation of one joint, composed along its ancestor chain only."""
    pose.check(tree)
    if not 0 <= joint < tree.num_joints:
        raise InvalidArgumentError(f"joint index {joint} out of range")
    chain = tree.ancestors(joint)[::-1]
    R = rotmath.axis_angle_to_rotation(pose.global_orient)
    for j in chain:
        R = R @ rotmath.axis_angle_to_rotation(pose.local_rotations[j])
    return R


def forearm_axis(tree, world, side):
    """Unit vector from the elbow to the wrist in world space."""
    _, e, w = tree.arm(side)
    d = world.positions[w] - world.positions[e]
    n = np.linalg.norm(d)
    if n <= 1e-6:
        raise DegenerateGeometryError(f"{side} elbow and wrist coincide")
    return d / n
