import numpy as np
import pytest

from signfuse.kinematics import KinematicTree, default_tree


@pytest.fixture(scope="session")
def tree():
    return default_tree()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_arm_tree(shoulder=(0.2, 0.0, 0.0), elbow=(0.3, 0.0, 0.0), wrist=(0.25, 0.0, 0.0), finger=(0.02, 0.0, 0.0)):
    """Minimal valid tree: root with two 3-joint arms and 15-joint finger chains.

    The right arm mirrors the left in x.
    """
    names, parents, offsets = ["root"], [-1], [(0.0, 0.0, 0.0)]
    landmarks, hands = {}, {}
    for side, sx, pre in (("left", 1.0, "l"), ("right", -1.0, "r")):
        parent = 0
        for part, off in (("shoulder", shoulder), ("elbow", elbow), ("wrist", wrist)):
            names.append(f"{pre}_{part}")
            parents.append(parent)
            offsets.append((sx * off[0], off[1], off[2]))
            parent = len(names) - 1
            landmarks[f"{pre}_{part}"] = parent
        hands[side] = []
        for k in range(15):
            names.append(f"{pre}_finger{k}")
            parents.append(parent)
            offsets.append((sx * finger[0], finger[1], finger[2]))
            parent = len(names) - 1
            hands[side].append(parent)
    return KinematicTree(names, parents, offsets, landmarks, hands, name="arms")


@pytest.fixture(scope="session")
def arm_tree():
    return make_arm_tree()
