import math

import numpy as np
import pytest

from oracles import random_rotvecs
from signfuse import rotmath
from signfuse.errors import InvalidArgumentError, NumericalFailureError
from signfuse.kinematics import BodyPose, forward_kinematics
from signfuse.refine import (
    IdentityPrior,
    Keypoint2D,
    PosePrior,
    RefineConfig,
    ShoulderProblem,
    WeakPerspectiveCamera,
    adam_minimize,
    loss_gradient,
    make_prior,
    optimize_shoulder,
    project,
    right_jacobian,
    shoulder_loss,
)
from signfuse.synth import SynthSpec, ground_truth


def exact_keypoints(tree, pose, cam, confidence=1.0):
    pos = forward_kinematics(tree, pose).positions
    kps = []
    for side, pre in (("left", "l"), ("right", "r")):
        for part, j in zip(("shoulder", "elbow", "wrist"), tree.arm(side)):
            kps.append(Keypoint2D(f"{pre}_{part}", tuple(project(pos[j], cam)), confidence))
    return kps


def perturb_joint(pose, j, rng, angle):
    d = rng.standard_normal(3)
    d *= angle / np.linalg.norm(d)
    out = pose.copy()
    out.local_rotations[j] = rotmath.rotation_to_axis_angle(
        rotmath.axis_angle_to_rotation(d) @ rotmath.axis_angle_to_rotation(pose.local_rotations[j])
    )
    return out


@pytest.fixture(scope="module")
def scene():
    gt = ground_truth(SynthSpec(seed=3, frames=8))
    return gt.tree, gt.frames


def test_project_example():
    cam = WeakPerspectiveCamera(2.0, (1.0, 1.0))
    np.testing.assert_array_equal(project([1.0, 2.0, 3.0], cam), [3.0, 5.0])
    np.testing.assert_array_equal(project(np.zeros((4, 3)), cam), np.ones((4, 2)))


def test_keypoint_and_camera_validation():
    assert Keypoint2D("l_wrist", (0, 0), 1.7).confidence == 1.0
    assert Keypoint2D("l_wrist", (0, 0), -0.2).confidence == 0.0
    with pytest.raises(InvalidArgumentError):
        Keypoint2D("l_wrist", (np.nan, 0))
    with pytest.raises(InvalidArgumentError):
        WeakPerspectiveCamera(0.0)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        RefineConfig(lambda_reg=-1.0)
    with pytest.raises(InvalidArgumentError):
        RefineConfig(iterations=0)
    with pytest.raises(InvalidArgumentError):
        RefineConfig(prior_reference="mean")


def test_loss_hand_computed_value(arm_tree):
    # shoulder turned 90 degrees about z; elbow and wrist project to (20, 30) and (20, 55)
    pose = BodyPose.identity(arm_tree)
    cam = WeakPerspectiveCamera(100.0, (0.0, 0.0))
    kps = [
        Keypoint2D("l_shoulder", (20.0, 0.0), 1.0),
        Keypoint2D("l_elbow", (50.0, 3.0), 0.5),
        Keypoint2D("l_wrist", (70.0, 0.0), 1.0),
    ]
    cfg = RefineConfig(prior_reference="rest")
    problem = ShoulderProblem(arm_tree, pose, "left", kps, cam, make_prior(arm_tree, pose, cfg), cfg)
    theta = np.array([0.0, 0.0, math.pi / 2])
    expected = 1.335 + 1.1 * math.pi ** 2 / 4  # 0.01 * 133.5 + (1 + 0.1) * |theta|^2
    assert shoulder_loss(theta, problem) == pytest.approx(expected, abs=1e-12)
    assert shoulder_loss(theta, problem) == pytest.approx(4.0491412103, abs=1e-9)


def test_right_jacobian_first_order(rng):
    for theta in list(random_rotvecs(rng, 20, 3.0)) + [np.zeros(3), np.full(3, 1e-7)]:
        d = rng.standard_normal(3) * 1e-6
        lhs = rotmath.axis_angle_to_rotation(theta + d)
        rhs = rotmath.axis_angle_to_rotation(theta) @ rotmath.axis_angle_to_rotation(right_jacobian(theta) @ d)
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def _random_problem(tree, rng):
    pose = BodyPose(random_rotvecs(rng, tree.num_joints, 1.0), random_rotvecs(rng, 1)[0], rng.normal(size=3))
    cam = WeakPerspectiveCamera(rng.uniform(200.0, 1500.0), tuple(rng.uniform(0, 1000, 2)))
    kps = [
        Keypoint2D(k.joint, tuple(np.asarray(k.position) + rng.normal(0.0, 40.0, 2)), rng.uniform(0.1, 1.0))
        for k in exact_keypoints(tree, pose, cam)
    ]
    cfg = RefineConfig(prior_reference="rest")
    side = ("left", "right")[int(rng.integers(2))]
    return ShoulderProblem(tree, pose, side, kps, cam, make_prior(tree, pose, cfg), cfg)


def central_difference(f, x, h=1e-5):
    g = np.zeros(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def gradient_check(tree, rng, trials=200, h=1e-5, kink_margin=1.0):
    """Relative errors of the analytic gradient on random configurations away from L1 kinks."""
    errors = []
    while len(errors) < trials:
        problem = _random_problem(tree, rng)
        theta = problem.theta_init + random_rotvecs(rng, 1, 0.5)[0]
        r = problem.residuals(theta)
        if np.min(np.abs(r[problem.moving])) < kink_margin:
            continue
        g = loss_gradient(theta, problem)
        g_fd = central_difference(lambda x: shoulder_loss(x, problem), theta, h)
        errors.append(np.linalg.norm(g - g_fd) / max(np.linalg.norm(g_fd), 1e-12))
    return np.asarray(errors)


def test_gradient_matches_finite_differences(tree, rng):
    errors = gradient_check(tree, rng, trials=60)
    assert errors.max() < 1e-4


def test_gradient_with_fallback_prior_gradient(tree, rng):
    class Quadratic(PosePrior):
        def encode(self, rots):
            return 0.5 * np.asarray(rots).ravel()

    problem = _random_problem(tree, rng)
    problem.prior = Quadratic()
    theta = problem.theta_init.copy()
    if np.min(np.abs(problem.residuals(theta)[problem.moving])) < 1.0:
        pytest.skip("configuration sits on a kink")
    g = loss_gradient(theta, problem)
    g_fd = central_difference(lambda x: shoulder_loss(x, problem), theta)
    assert np.linalg.norm(g - g_fd) / np.linalg.norm(g_fd) < 1e-4


def test_identity_prior_gradient(rng):
    rots = random_rotvecs(rng, 7)
    ref = random_rotvecs(rng, 7)
    prior = IdentityPrior(range(7), ref)
    analytic = prior.joint_gradient(rots, 3)
    numeric = PosePrior.joint_gradient(prior, rots, 3)
    np.testing.assert_allclose(analytic, numeric, atol=1e-8)
    assert np.array_equal(IdentityPrior([0, 1]).joint_gradient(rots, 5), np.zeros(3))


def test_zero_confidence_is_a_fixed_point(scene):
    tree, frames = scene
    fr = frames[2]
    pose = perturb_joint(fr.body, tree.arm("left")[0], np.random.default_rng(0), 0.3)
    kps = [Keypoint2D(k.joint, k.position, 0.0) for k in fr.keypoints]
    out = optimize_shoulder(tree, pose, kps, fr.camera, sides=("left", "right"))
    assert np.array_equal(out.local_rotations, pose.local_rotations)


def test_unsupervised_arms_are_skipped(scene):
    tree, frames = scene
    fr = frames[0]
    out = optimize_shoulder(tree, fr.body, [], fr.camera)
    assert np.array_equal(out.local_rotations, fr.body.local_rotations)


def test_exact_keypoints_leave_pose_unchanged(scene):
    tree, frames = scene
    for fr in frames[:4]:
        out = optimize_shoulder(tree, fr.body, fr.keypoints, fr.camera)
        assert np.array_equal(out.local_rotations, fr.body.local_rotations)


def test_recovers_perturbed_shoulder_and_stays_local(scene):
    tree, frames = scene
    rng = np.random.default_rng(5)
    for t, side in ((1, "left"), (4, "right"), (6, "left")):
        fr = frames[t]
        s = tree.arm(side)[0]
        noisy = perturb_joint(fr.body, s, rng, 0.2)
        out = optimize_shoulder(tree, noisy, fr.keypoints, fr.camera)
        err = rotmath.geodesic_distance(
            rotmath.axis_angle_to_rotation(out.local_rotations[s]),
            rotmath.axis_angle_to_rotation(fr.body.local_rotations[s]),
        )
        assert err < 0.02
        others = np.ones(tree.num_joints, bool)
        others[s] = False
        assert np.array_equal(out.local_rotations[others], noisy.local_rotations[others])
        assert np.array_equal(out.global_orient, noisy.global_orient)
        assert np.array_equal(out.translation, noisy.translation)


def test_loss_grows_with_confidence(tree, rng):
    problem = _random_problem(tree, rng)
    theta = problem.theta_init + 0.1
    base = shoulder_loss(theta, problem)
    for k in range(3):
        problem.weights[k] += 0.3
        higher = shoulder_loss(theta, problem)
        assert higher >= base
        base = higher


def test_non_finite_loss_names_frame(scene):
    tree, frames = scene

    class Broken(PosePrior):
        def encode(self, rots):
            return np.array([np.nan])

    fr = frames[0]
    with pytest.raises(NumericalFailureError, match="frame 7"):
        optimize_shoulder(tree, fr.body, fr.keypoints, fr.camera, prior=Broken(), frame=7)


def test_best_iterate_never_worse_than_start(tree, rng):
    for _ in range(10):
        problem = _random_problem(tree, rng)
        cfg = RefineConfig(iterations=5, learning_rate=0.5, prior_reference="rest")
        problem.config = cfg
        x, f = adam_minimize(problem.loss_and_gradient, problem.theta_init, cfg)
        assert f <= problem.loss(problem.theta_init)
        assert f == pytest.approx(problem.loss(x), abs=1e-12)
