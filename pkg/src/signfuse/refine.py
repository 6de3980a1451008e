"""2D-supervised shoulder refinement.

Only the shoulder's 3 rotation parameters move. The loss is

    lam_reg * |theta - theta_init|^2
    + lam_2d * sum_j w_j c_j |proj(p_j) - k_j|_1
    + lam_pose * |z|^2

over the shoulder, elbow and wrist landmarks of one arm, where ``z`` is the
pose prior's encoding of the full body pose. Elbow and wrist positions are
``p_s + R_parent @ R(theta) @ v_j`` with ``v_j`` fixed, which gives the
gradient in closed form.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rotmath
from .errors import InvalidArgumentError, NumericalFailureError
from .kinematics import LANDMARKS, SIDES, forward_kinematics, landmark_name

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Keypoint2D:
    joint: str
    position: tuple
    confidence: float = 1.0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 2 or not np.all(np.isfinite(pos)):
            raise InvalidArgumentError(f"keypoint {self.joint!r} needs a finite 2D position")
        c = float(self.confidence)
        if not np.isfinite(c):
            raise InvalidArgumentError(f"keypoint {self.joint!r} confidence is not finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "confidence", min(max(c, 0.0), 1.0))


@dataclass(frozen=True)
class WeakPerspectiveCamera:
    """Orthographic projection scaled by ``scale`` px/m and shifted by ``translation`` px."""

    scale: float = 1.0
    translation: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise InvalidArgumentError("camera scale must be positive")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))


def project(p, cam):
    """Weak-perspective projection of ``(..., 3)`` points to ``(..., 2)`` pixels."""
    p = np.asarray(p, dtype=float)
    return cam.scale * p[..., :2] + np.asarray(cam.translation)


@dataclass
class RefineConfig:
    lambda_reg: float = 1.0
    lambda_2d: float = 0.01
    lambda_pose: float = 0.1
    joint_weights: dict = field(default_factory=lambda: {k: 1.0 for k in LANDMARKS})
    learning_rate: float = 1e-2
    iterations: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    prior_reference: str = "input"

    def __post_init__(self):
        for name in ("lambda_reg", "lambda_2d", "lambda_pose"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise InvalidArgumentError(f"{name} must be a non-negative number")
        if int(self.iterations) < 1:
            raise InvalidArgumentError("iterations must be >= 1")
        if self.learning_rate <= 0.0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.prior_reference not in ("input", "rest"):
            raise InvalidArgumentError("prior_reference must be 'input' or 'rest'")
        self.iterations = int(self.iterations)
        self.joint_weights = {**{k: 1.0 for k in LANDMARKS}, **dict(self.joint_weights)}

    def weight(self, landmark):
        return float(self.joint_weights.get(landmark, 1.0))


class PosePrior:
    """Interface for a body-pose prior with energy ``|encode(pose)|^2``.

    Subclasses implement :meth:`encode`. :meth:`joint_gradient` falls back to
    central differences; override it when an analytic form exists.
    """

    def encode(self, local_rotations):
        raise NotImplementedError

    def energy(self, local_rotations):
        z = np.asarray(self.encode(local_rotations), dtype=float)
        return float(z @ z)

    def joint_gradient(self, local_rotations, joint, h=1e-6):
        rots = np.array(local_rotations, dtype=float)
        g = np.zeros(3)
        for k in range(3):
            rots[joint, k] += h
            up = self.energy(rots)
            rots[joint, k] -= 2 * h
            down = self.energy(rots)
            rots[joint, k] += h
            g[k] = (up - down) / (2 * h)
        return g


class IdentityPrior(PosePrior):
    """Stand-in prior: ``z`` is the body joints' deviation from a reference pose.

    With no reference the rest pose (all zeros) is used.
    """

    def __init__(self, body_joints, reference=None):
        self.body_joints = np.asarray(body_joints, dtype=int)
        self.reference = None if reference is None else np.array(reference, dtype=float)

    def _deviation(self, local_rotations):
        rots = np.asarray(local_rotations, dtype=float)[self.body_joints]
        if self.reference is not None:
            rots = rots - self.reference[self.body_joints]
        return rots

    def encode(self, local_rotations):
        return self._deviation(local_rotations).ravel()

    def joint_gradient(self, local_rotations, joint, h=None):
        if joint not in self.body_joints:
            return np.zeros(3)
        ref = 0.0 if self.reference is None else self.reference[joint]
        return 2.0 * (np.asarray(local_rotations[joint], dtype=float) - ref)


def right_jacobian(theta):
    """Right Jacobian of the exponential map: ``d exp(theta + d) = exp(theta) exp(J_r d)``."""
    t = np.linalg.norm(theta)
    K = rotmath.skew(theta)
    if t < 1e-5:
        return np.eye(3) - 0.5 * K + (K @ K) / 6.0
    return (
        np.eye(3)
        - (1.0 - np.cos(t)) / (t * t) * K
        + (t - np.sin(t)) / (t ** 3) * (K @ K)
    )


class ShoulderProblem:
    """Loss and gradient for one arm's shoulder rotation with everything else frozen."""

    def __init__(self, tree, pose, side, keypoints, cam, prior, config):
        if side not in SIDES:
            raise InvalidArgumentError(f"unknown side {side!r}")
        pose.check(tree)
        self.tree, self.pose, self.side = tree, pose, side
        self.cam, self.prior, self.config = cam, prior, config
        shoulder, elbow, wrist = tree.arm(side)
        self.shoulder = shoulder
        self.theta_init = pose.local_rotations[shoulder].copy()

        world = forward_kinematics(tree, pose)
        self.R_parent = world.rotations[tree.parents[shoulder]]
        self.p_shoulder = world.positions[shoulder]
        R_elbow_local = rotmath.axis_angle_to_rotation(pose.local_rotations[elbow])
        v_elbow = tree.offsets[elbow]
        v_wrist = v_elbow + R_elbow_local @ tree.offsets[wrist]
        # rows: shoulder, elbow, wrist; the shoulder's own position does not move
        self.v = np.stack([np.zeros(3), v_elbow, v_wrist])
        self.moving = np.array([False, True, True])

        by_joint = {}
        for kp in keypoints:
            by_joint[kp.joint] = kp
        targets, weights = [], []
        for part in ("shoulder", "elbow", "wrist"):
            lm = landmark_name(side, part)
            kp = by_joint.get(lm)
            if kp is None:
                targets.append((0.0, 0.0))
                weights.append(0.0)
            else:
                targets.append(kp.position)
                weights.append(config.weight(lm) * kp.confidence)
        self.targets = np.asarray(targets, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self._scratch = pose.local_rotations.copy()

    @property
    def supervised(self):
        return bool(np.any(self.weights > 0.0))

    def positions(self, theta):
        R = self.R_parent @ rotmath.axis_angle_to_rotation(theta)
        return self.p_shoulder + self.v @ R.T

    def residuals(self, theta):
        return project(self.positions(theta), self.cam) - self.targets

    def _prior_rots(self, theta):
        self._scratch[self.shoulder] = theta
        return self._scratch

    def loss(self, theta):
        theta = np.asarray(theta, dtype=float)
        cfg = self.config
        d = theta - self.theta_init
        value = cfg.lambda_reg * float(d @ d)
        if cfg.lambda_2d:
            r = self.residuals(theta)
            value += cfg.lambda_2d * float(self.weights @ np.abs(r).sum(axis=1))
        if cfg.lambda_pose:
            value += cfg.lambda_pose * self.prior.energy(self._prior_rots(theta))
        return value

    def loss_and_gradient(self, theta):
        theta = np.asarray(theta, dtype=float)
        cfg = self.config
        d = theta - self.theta_init
        value = cfg.lambda_reg * float(d @ d)
        grad = 2.0 * cfg.lambda_reg * d
        if cfg.lambda_2d:
            R_theta = rotmath.axis_angle_to_rotation(theta)
            R = self.R_parent @ R_theta
            pts = self.p_shoulder + self.v @ R.T
            r = project(pts, self.cam) - self.targets
            value += cfg.lambda_2d * float(self.weights @ np.abs(r).sum(axis=1))
            Jr = right_jacobian(theta)
            sgn = np.sign(r)  # sign(0) == 0 is the chosen subgradient
            for k in np.flatnonzero(self.moving & (self.weights > 0.0)):
                # d(R(theta) v)/dtheta = -R(theta) [v]x J_r(theta)
                dp = -self.R_parent @ R_theta @ rotmath.skew(self.v[k]) @ Jr
                dr = self.cam.scale * dp[:2]
                grad = grad + cfg.lambda_2d * self.weights[k] * (sgn[k] @ dr)
        if cfg.lambda_pose:
            rots = self._prior_rots(theta)
            value += cfg.lambda_pose * self.prior.energy(rots)
            grad = grad + cfg.lambda_pose * self.prior.joint_gradient(rots, self.shoulder)
        return value, grad


def make_prior(tree, pose, config):
    reference = pose.local_rotations if config.prior_reference == "input" else None
    return IdentityPrior(tree.body_joints(), reference)


def shoulder_loss(theta, problem):
    return problem.loss(theta)


def loss_gradient(theta, problem):
    return problem.loss_and_gradient(theta)[1]


def adam_minimize(fun, x0, config, frame=None):
    """Adam on ``fun(x) -> (loss, grad)``; returns the best iterate seen and its loss.

    Adam is not monotone, so the starting point competes with every iterate.
    """
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    best_x, best_f = x.copy(), None
    b1, b2 = config.beta1, config.beta2
    for t in range(1, config.iterations + 1):
        f, g = fun(x)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            raise NumericalFailureError(f"non-finite loss at iteration {t}", frame=frame)
        if best_f is None or f < best_f:
            best_x, best_f = x.copy(), f
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        x = x - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    f, _ = fun(x)
    if not np.isfinite(f):
        raise NumericalFailureError("non-finite loss after the last step", frame=frame)
    if f < best_f:
        best_x, best_f = x.copy(), f
    return best_x, best_f


def optimize_shoulder(tree, pose, keypoints, cam, config=None, prior=None, sides=None, frame=None):
    """Refine the shoulder of each supervised arm; every other joint is untouched.

    Args:
        sides: arms to refine. By default every arm with at least one
            keypoint of positive confidence on its shoulder/elbow/wrist.
        prior: a :class:`PosePrior`; defaults to :class:`IdentityPrior`
            anchored according to ``config.prior_reference``.

    Raises:
        NumericalFailureError: the loss became non-finite (names ``frame``).
    """
    config = config or RefineConfig()
    prior = prior or make_prior(tree, pose, config)
    out = pose.copy()
    for side in sides or SIDES:
        problem = ShoulderProblem(tree, out, side, keypoints, cam, prior, config)
        if sides is None and not problem.supervised:
            continue
        theta, f = adam_minimize(problem.loss_and_gradient, problem.theta_init, config, frame=frame)
        log.debug("frame %s %s shoulder: loss %.6g -> %.6g", frame, side, problem.loss(problem.theta_init), f)
        out.local_rotations[problem.shoulder] = theta
    return out
