"""Independent reference implementations used only by the tests.

None of these import the package's geometry or maths; they are written the
slow, obvious way so a shared bug is unlikely.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np


def los_by_sampling(g, u, bounds, height=math.inf, n=10_000) -> int:
    """Dense sampling of the segment: 1 if any sample lies in the box."""
    xmin, xmax, ymin, ymax = bounds
    t = np.linspace(0.0, 1.0, n)
    g = np.asarray(g, dtype=float)
    u = np.asarray(u, dtype=float)
    pts = g[None, :] + t[:, None] * (u - g)[None, :]
    inside = (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
    if pts.shape[1] > 2:
        inside &= pts[:, 2] < height
    return int(inside.any())


def _point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    s = 0.0 if denom == 0 else min(max(float((p - a) @ ab) / denom, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + s * ab)))


def _segments_cross(a, b, c, d) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2, o3, o4 = orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


def segment_to_rectangle_boundary(g, u, bounds) -> float:
    """Euclidean distance from the 2-D segment g-u to the rectangle's boundary."""
    xmin, xmax, ymin, ymax = bounds
    corners = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    edges = list(zip(corners, corners[1:] + corners[:1]))
    g2, u2 = tuple(g[:2]), tuple(u[:2])
    best = math.inf
    for c, d in edges:
        if _segments_cross(g2, u2, c, d):
            return 0.0
        best = min(best, _point_segment_distance(c, g2, u2), _point_segment_distance(d, g2, u2),
                   _point_segment_distance(g2, c, d), _point_segment_distance(u2, c, d))
    return best


def path_loss_hp(d, los, A_obs, dps=50) -> mpmath.mpf:
    with mpmath.workdps(dps):
        return 20 * mpmath.log10(mpmath.mpf(d)) + A_obs * los


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def homogeneous_camera_to_world(cam_xyz, theta_cam, phi_cam) -> np.ndarray:
    """4x4 transform: camera frame (x forward, y left, z up) to world.

    Built as translation @ yaw @ pitch, where positive elevation tilts the
    forward axis upward.
    """
    T = np.eye(4)
    T[:3, :3] = rot_z(phi_cam) @ rot_y(-theta_cam)
    T[:3, 3] = cam_xyz
    return T


def spherical_point(r, theta, phi) -> np.ndarray:
    """Homogeneous camera-frame point from range, elevation and azimuth."""
    horiz = r * math.cos(theta)
    return np.array([horiz * math.cos(phi), horiz * math.sin(phi), r * math.sin(theta), 1.0])


def mlp_forward(weights, biases, x):
    """Plain-Python forward pass of a ReLU MLP (identity output)."""
    a = [float(v) for v in x]
    n = len(weights)
    for k, (W, b) in enumerate(zip(weights, biases)):
        out = []
        for j in range(len(b)):
            s = math.fsum(float(W[i][j]) * a[i] for i in range(len(a))) + float(b[j])
            out.append(max(s, 0.0) if k < n - 1 else s)
        a = out
    return a


def tabular_q_single_state(rewards, updates, lr=0.1, gamma=0.0):
    """Q-learning on a one-state bandit, sweeping actions round-robin."""
    q = [0.0] * len(rewards)
    for i in range(updates):
        a = i % len(rewards)
        q[a] += lr * (rewards[a] + gamma * max(q) - q[a])
    return q
