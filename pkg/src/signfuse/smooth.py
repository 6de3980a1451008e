"""Post-hoc temporal smoothing by multi-order derivative penalties.

For every channel ``x`` of a segment and raw values ``r`` the smoother
minimizes

    lam_data |x - r|^2 + lam_1 |D1 x|^2 + lam_2 |D2 x|^2 + lam_3 |D3 x|^2

where ``Dk`` is the k-th forward difference restricted to the segment. The
normal matrix is symmetric positive definite with bandwidth 3, so each
(segment, group) pair is one banded Cholesky solve shared by all channels
in the group.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import sparse
from scipy.linalg import solveh_banded

from .errors import InvalidArgumentError, InvalidConfigError

ORDERS = (1, 2, 3)


@dataclass(eq=False)
class Trajectory:
    """``T x D`` channel values, channel groups, and segment start frames."""

    values: np.ndarray
    channel_groups: dict = None
    boundaries: tuple = ()

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise InvalidArgumentError("trajectory values must be a non-empty T x D array")
        T, D = self.values.shape
        if self.channel_groups is None:
            self.channel_groups = {"all": list(range(D))}
        self.channel_groups = {k: np.asarray(v, dtype=int) for k, v in self.channel_groups.items()}
        covered = np.concatenate([v for v in self.channel_groups.values()] or [np.empty(0, int)])
        if np.sort(covered).tolist() != list(range(D)):
            raise InvalidArgumentError("channel groups must partition the channels")
        self.boundaries = normalize_boundaries(self.boundaries, T)

    @property
    def segments(self):
        return segments(self.values.shape[0], self.boundaries)

    def with_values(self, values):
        return Trajectory(values, self.channel_groups, self.boundaries)


def normalize_boundaries(boundaries, T):
    b = [int(x) for x in boundaries]
    if any(x < 0 or x >= T for x in b):
        raise InvalidArgumentError(f"boundaries must lie in [0, {T})")
    if any(y <= x for x, y in zip(b, b[1:])):
        raise InvalidArgumentError("boundaries must be strictly increasing")
    return tuple(b)


def segments(T, boundaries):
    """``[(start, stop), ...]`` half-open frame ranges between boundaries."""
    cuts = sorted({0, T, *boundaries})
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


@dataclass
class GroupWeights:
    data: float = 1.0
    d1: float = 0.5
    d2: float = 1.0
    d3: float = 2.0

    def __post_init__(self):
        for name in ("data", "d1", "d2", "d3"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v >= 0.0):
                raise InvalidConfigError(f"smoothing weight {name} must be non-negative")
            setattr(self, name, v)

    def order(self, k):
        return (self.d1, self.d2, self.d3)[k - 1]


def _default_groups():
    return {
        "body": GroupWeights(1.0, 0.5, 1.0, 2.0),
        "hands": GroupWeights(1.0, 0.05, 0.1, 0.2),
    }


@dataclass
class SmoothConfig:
    groups: dict = field(default_factory=_default_groups)
    default: GroupWeights = field(default_factory=GroupWeights)

    def weights(self, group):
        return self.groups.get(group, self.default)


def difference_operator(n, order):
    """Sparse forward-difference operator of shape ``(n - order, n)``."""
    if n <= order:
        return sparse.csr_matrix((0, n))
    coeffs = [(-1) ** (order - i) * comb(order, i) for i in range(order + 1)]
    return sparse.diags(coeffs, range(order + 1), shape=(n - order, n), format="csr")


def finite_difference(traj, order):
    """Forward differences within each segment; windows never straddle a boundary."""
    if order not in ORDERS:
        raise InvalidArgumentError(f"order must be one of {ORDERS}")
    parts = [np.diff(traj.values[a:b], n=order, axis=0) for a, b in traj.segments if b - a > order]
    if not parts:
        return np.zeros((0, traj.values.shape[1]))
    return np.concatenate(parts, axis=0)


def temporal_energy(smoothed, raw, cfg):
    """Value of the smoothing objective, summed over groups and masked windows."""
    if smoothed.values.shape != raw.values.shape:
        raise InvalidArgumentError("smoothed and raw trajectories differ in shape")
    total = 0.0
    for name, chans in raw.channel_groups.items():
        w = cfg.weights(name)
        diff = smoothed.values[:, chans] - raw.values[:, chans]
        total += w.data * float(np.sum(diff * diff))
        sub = Trajectory(smoothed.values[:, chans], None, raw.boundaries)
        for k in ORDERS:
            if w.order(k):
                d = finite_difference(sub, k)
                total += w.order(k) * float(np.sum(d * d))
    return total


def normal_matrix_banded(n, w):
    """Upper banded form (4 x n) of ``lam_data I + sum_k lam_k Dk^T Dk``."""
    ab = np.zeros((4, n))
    ab[3] = w.data
    for k in ORDERS:
        lam = w.order(k)
        if lam == 0.0 or n <= k:
            continue
        D = difference_operator(n, k)
        H = (D.T @ D).tocsr()
        for off in range(k + 1):
            ab[3 - off, off:] += lam * H.diagonal(off)
    return ab


def normal_matrix(n, w):
    """Sparse normal matrix of one segment, for residual checks."""
    H = w.data * sparse.identity(n, format="csr")
    for k in ORDERS:
        if w.order(k) and n > k:
            D = difference_operator(n, k)
            H = H + w.order(k) * (D.T @ D)
    return H.tocsr()


def smooth_sequence(raw, cfg=None):
    """Exact minimizer of :func:`temporal_energy`, segment by segment.

    Raises:
        InvalidConfigError: a group has zero data weight, which leaves the
            system singular.
    """
    cfg = cfg or SmoothConfig()
    out = raw.values.copy()
    for name, chans in raw.channel_groups.items():
        if chans.size == 0:
            continue
        w = cfg.weights(name)
        if w.data <= 0.0:
            raise InvalidConfigError(f"group {name!r} has zero data weight; smoothing is ill-posed")
        if not (w.d1 or w.d2 or w.d3):
            continue
        for a, b in raw.segments:
            n = b - a
            if n < 2:
                continue
            rhs = w.data * raw.values[a:b][:, chans]
            out[a:b, chans] = solveh_banded(normal_matrix_banded(n, w), rhs)
    return raw.with_values(out)
