"""Planar forward kinematics for serial chains of revolute joints.

Joint angles are relative: each angle is measured from the direction of the
parent link, and the first joint of a chain is measured from the +x axis.
Points along a link are addressed by the arc-length fraction ``s`` in [0, 1]
of the link centerline, which is what the integral coupling models consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LinkGeometry:
    """Geometry and inertial data of a single rigid link.

    ``com_offset`` defaults to mid-length and ``inertia_about_com`` to the
    uniform thin-rod value m*l^2/12.
    """

    length: float
    mass: float
    com_offset: float = field(default=-1.0)
    inertia_about_com: float = field(default=-1.0)

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"length must be > 0, got {self.length}")
        if not self.mass > 0:
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if self.com_offset < 0:
            object.__setattr__(self, "com_offset", self.length / 2.0)
        if self.inertia_about_com < 0:
            object.__setattr__(
                self, "inertia_about_com", self.mass * self.length**2 / 12.0
            )
        if self.com_offset > self.length:
            raise ValueError(
                f"com_offset {self.com_offset} exceeds link length {self.length}"
            )


def joint_origins(links, anchor, q_chain):
    """World positions of the joint pivots of one chain, plus the tip.

    Returns an (L+1, 2) array: row i is the origin of joint i, row L the tip
    of the last link.
    """
    L = len(links)
    theta = np.cumsum(q_chain)
    o = np.empty((L + 1, 2))
    o[0] = anchor
    for i in range(L):
        o[i + 1, 0] = o[i, 0] + links[i].length * np.cos(theta[i])
        o[i + 1, 1] = o[i, 1] + links[i].length * np.sin(theta[i])
    return o


def _check_point_args(model, chain, link, s):
    if not 0 <= chain < len(model.chains):
        raise ValueError(f"chain index {chain} out of range")
    if not 0 <= link < len(model.chains[chain]):
        raise ValueError(f"link index {link} out of range for chain {chain}")
    if np.any(np.asarray(s) < 0) or np.any(np.asarray(s) > 1):
        raise ValueError(f"arc fraction s must lie in [0, 1], got {s}")


def forward_point(model, q, chain, link, s):
    """World position of the point at fraction ``s`` along a link centerline."""
    _check_point_args(model, chain, link, s)
    links = model.chains[chain]
    qc = np.asarray(q, dtype=float)[model.chain_slices[chain]]
    theta = np.cumsum(qc)
    o = joint_origins(links, model.chain_anchors[chain], qc)
    d = np.array([np.cos(theta[link]), np.sin(theta[link])])
    return o[link] + s * links[link].length * d


def point_jacobian(model, q, chain, link, s):
    """2 x n Jacobian of :func:`forward_point` with respect to the full q.

    Columns of joints that are not on the kinematic path to the point are
    zero; in particular every column outside the point's chain is zero.
    """
    _check_point_args(model, chain, link, s)
    q = np.asarray(q, dtype=float)
    p = forward_point(model, q, chain, link, s)
    links = model.chains[chain]
    qc = q[model.chain_slices[chain]]
    o = joint_origins(links, model.chain_anchors[chain], qc)
    J = np.zeros((2, q.shape[0]))
    offset = model.chain_slices[chain].start
    for j in range(link + 1):
        v = p - o[j]
        J[0, offset + j] = -v[1]
        J[1, offset + j] = v[0]
    return J


def points_along(model, q, chain, link, s_values):
    """Vectorized :func:`forward_point` for many arc fractions, (S, 2)."""
    _check_point_args(model, chain, link, np.asarray(s_values))
    links = model.chains[chain]
    qc = np.asarray(q, dtype=float)[model.chain_slices[chain]]
    theta = np.cumsum(qc)
    o = joint_origins(links, model.chain_anchors[chain], qc)
    d = np.array([np.cos(theta[link]), np.sin(theta[link])])
    s = np.asarray(s_values, dtype=float)[:, None]
    return o[link][None, :] + s * links[link].length * d[None, :]


def jacobians_along(model, q, chain, link, s_values):
    """Vectorized :func:`point_jacobian`, shape (S, 2, n)."""
    q = np.asarray(q, dtype=float)
    pts = points_along(model, q, chain, link, s_values)
    links = model.chains[chain]
    qc = q[model.chain_slices[chain]]
    o = joint_origins(links, model.chain_anchors[chain], qc)
    S = pts.shape[0]
    J = np.zeros((S, 2, q.shape[0]))
    offset = model.chain_slices[chain].start
    for j in range(link + 1):
        v = pts - o[j][None, :]
        J[:, 0, offset + j] = -v[:, 1]
        J[:, 1, offset + j] = v[:, 0]
    return J
