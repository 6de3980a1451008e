"""Per-frame input bundles, sequences, and their JSON file format.

Numbers are written with Python's shortest round-trip float repr, so a
save/load cycle reproduces every value bit for bit.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ParseError, SignfuseError, VersionError
from .handfuse import HandEstimate
from .kinematics import SIDES, BodyPose, KinematicTree, default_tree, forward_kinematics_batch, load_tree
from .refine import Keypoint2D, WeakPerspectiveCamera
from .smooth import normalize_boundaries

FORMAT_VERSION = "signfuse.sequence/1"
BUNDLED_TREE = "bundled:upper_body_52"


@dataclass(eq=False)
class FrameBundle:
    body: BodyPose
    hands: dict = field(default_factory=dict)
    keypoints: list = field(default_factory=list)
    camera: WeakPerspectiveCamera = field(default_factory=WeakPerspectiveCamera)
    meta: dict = field(default_factory=dict)


@dataclass(eq=False)
class Sequence:
    tree: KinematicTree
    frames: list
    boundaries: tuple = ()
    metadata: dict = field(default_factory=dict)
    tree_ref: str = None

    def __post_init__(self):
        for i, fr in enumerate(self.frames):
            try:
                fr.body.check(self.tree)
            except InvalidArgumentError as exc:
                raise InvalidArgumentError(f"frame {i}: {exc}") from None
        self.boundaries = normalize_boundaries(self.boundaries, max(len(self.frames), 1))

    def __len__(self):
        return len(self.frames)

    def stacked(self):
        """``(local_rotations (T,J,3), global_orient (T,3), translation (T,3))``."""
        return (
            np.stack([f.body.local_rotations for f in self.frames]),
            np.stack([f.body.global_orient for f in self.frames]),
            np.stack([f.body.translation for f in self.frames]),
        )

    def joint_positions(self):
        """World joint positions ``(T, J, 3)`` in meters."""
        if not self.frames:
            return np.zeros((0, self.tree.num_joints, 3))
        return forward_kinematics_batch(self.tree, *self.stacked())[1]


def _arr(value, where, shape=None):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ParseError("expected numbers", *where) from None
    if shape is not None and a.shape != shape:
        raise ParseError(f"expected shape {shape}, got {a.shape}", *where)
    if not np.all(np.isfinite(a)):
        raise ParseError("non-finite value", *where)
    return a


def _list(a):
    return np.asarray(a, dtype=float).tolist()


def body_to_dict(body):
    return {
        "local_rotations": _list(body.local_rotations),
        "global_orient": _list(body.global_orient),
        "translation": _list(body.translation),
        "shape": _list(body.shape),
        "expression": _list(body.expression),
    }


def body_from_dict(d, tree, path, prefix):
    w = lambda k: (path, f"{prefix}.{k}")  # noqa: E731
    if "local_rotations" not in d:
        raise ParseError("missing key", path, f"{prefix}.local_rotations")
    return BodyPose(
        _arr(d["local_rotations"], w("local_rotations"), (tree.num_joints, 3)),
        _arr(d.get("global_orient", [0, 0, 0]), w("global_orient"), (3,)),
        _arr(d.get("translation", [0, 0, 0]), w("translation"), (3,)),
        _arr(d.get("shape", [0] * 10), w("shape")).ravel(),
        _arr(d.get("expression", [0] * 10), w("expression")).ravel(),
    )


def hand_to_dict(h):
    return {
        "handedness": h.handedness,
        "wrist_global": _list(h.wrist_global),
        "finger_rotations": _list(h.finger_rotations),
        "hand_shape": _list(h.hand_shape),
        "translation": _list(h.translation),
        "source_mirrored": h.source_mirrored,
    }


def hand_from_dict(d, side, path, prefix):
    w = lambda k: (path, f"{prefix}.{k}")  # noqa: E731
    for key in ("wrist_global", "finger_rotations"):
        if key not in d:
            raise ParseError("missing key", path, f"{prefix}.{key}")
    handedness = d.get("handedness", side)
    if handedness != side:
        raise ParseError(f"handedness {handedness!r} filed under {side!r}", path, prefix)
    try:
        return HandEstimate(
            handedness,
            _arr(d["wrist_global"], w("wrist_global"), (3, 3)),
            _arr(d["finger_rotations"], w("finger_rotations"), (15, 3)),
            _arr(d.get("hand_shape", [0] * 10), w("hand_shape")).ravel(),
            _arr(d.get("translation", [0, 0, 0]), w("translation"), (3,)),
            bool(d.get("source_mirrored", False)),
        )
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), path, prefix) from None


def frame_to_dict(fr):
    out = {
        "body": body_to_dict(fr.body),
        "keypoints": [
            {"joint": k.joint, "position": list(k.position), "confidence": k.confidence} for k in fr.keypoints
        ],
        "camera": {"scale": fr.camera.scale, "translation": list(fr.camera.translation)},
    }
    if fr.hands:
        out["hands"] = {s: hand_to_dict(h) for s, h in fr.hands.items()}
    if fr.meta:
        out["meta"] = fr.meta
    return out


def frame_from_dict(d, tree, path, i):
    prefix = f"frames[{i}]"
    if "body" not in d:
        raise ParseError("missing key", path, f"{prefix}.body")
    body = body_from_dict(d["body"], tree, path, f"{prefix}.body")
    hands = {}
    for side, hd in (d.get("hands") or {}).items():
        if side not in SIDES:
            raise ParseError(f"unknown hand side {side!r}", path, f"{prefix}.hands")
        if hd is not None:
            hands[side] = hand_from_dict(hd, side, path, f"{prefix}.hands.{side}")
    kps = []
    for k, kd in enumerate(d.get("keypoints", [])):
        where = (path, f"{prefix}.keypoints[{k}]")
        try:
            kps.append(Keypoint2D(str(kd["joint"]), _arr(kd["position"], where, (2,)), float(kd.get("confidence", 1.0))))
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r}", *where) from None
        except InvalidArgumentError as exc:
            raise ParseError(str(exc), *where) from None
    cam_d = d.get("camera", {})
    try:
        cam = WeakPerspectiveCamera(
            float(cam_d.get("scale", 1.0)),
            tuple(_arr(cam_d.get("translation", [0, 0]), (path, f"{prefix}.camera.translation"), (2,))),
        )
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), path, f"{prefix}.camera") from None
    return FrameBundle(body, hands, kps, cam, dict(d.get("meta", {})))


def _resolve_tree(ref, path):
    if isinstance(ref, dict):
        return KinematicTree.from_dict(ref, path=path), None
    if ref is None or ref == BUNDLED_TREE:
        return default_tree(), BUNDLED_TREE
    if isinstance(ref, str):
        base = os.path.dirname(os.path.abspath(path)) if path else ""
        full = ref if os.path.isabs(ref) else os.path.join(base, ref)
        try:
            return load_tree(full), ref
        except OSError as exc:
            raise ParseError(f"cannot read tree file: {exc}", path, "tree") from None
    raise ParseError("tree must be an object or a path", path, "tree")


def sequence_from_dict(data, path=None):
    if not isinstance(data, dict):
        raise ParseError("top level must be an object", path)
    version = data.get("version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported version {version!r}, expected {FORMAT_VERSION!r}", path, "version")
    tree, tree_ref = _resolve_tree(data.get("tree"), path)
    if "frames" not in data:
        raise ParseError("missing key", path, "frames")
    frames = [frame_from_dict(fd, tree, path, i) for i, fd in enumerate(data["frames"])]
    try:
        return Sequence(tree, frames, tuple(data.get("boundaries", ())), dict(data.get("metadata", {})), tree_ref)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), path, "boundaries") from None


def sequence_to_dict(seq):
    return {
        "version": FORMAT_VERSION,
        "tree": BUNDLED_TREE if seq.tree_ref == BUNDLED_TREE else seq.tree.to_dict(),
        "frames": [frame_to_dict(f) for f in seq.frames],
        "boundaries": list(seq.boundaries),
        "metadata": seq.metadata,
    }


def load_sequence(path):
    """Read a sequence file.

    Raises:
        ParseError: malformed JSON or schema violation (message names the field).
        VersionError: unsupported ``version`` tag.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", str(path)) from None
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", str(path)) from None
    try:
        return sequence_from_dict(data, str(path))
    except SignfuseError:
        raise
    except (TypeError, AttributeError, ValueError) as exc:
        raise ParseError(f"malformed content: {exc}", str(path)) from None


def save_sequence(seq, path):
    with open(path, "w") as fh:
        json.dump(sequence_to_dict(seq), fh)
