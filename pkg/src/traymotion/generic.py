"""Scalar-generic 3-vector and rotation-matrix helpers.

Vectors are plain tuples of scalars and matrices are nested tuples, so the
same kernel code runs on floats, numpy batches, and dual scalars.  Axis
vectors and inertia entries that are genuinely constant stay Python floats,
which keeps the tangent arithmetic cheap.
"""

from __future__ import annotations

import numpy as np

from .dual import cos, sin

Vec3 = tuple
Mat3 = tuple

IDENTITY3: Mat3 = (
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
)

ZERO3: Vec3 = (0.0, 0.0, 0.0)


def vadd(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vsub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vscale(a: Vec3, s) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def dot(a: Vec3, b: Vec3):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def matvec(R: Mat3, v: Vec3) -> Vec3:
    return (
        R[0][0] * v[0] + R[0][1] * v[1] + R[0][2] * v[2],
        R[1][0] * v[0] + R[1][1] * v[1] + R[1][2] * v[2],
        R[2][0] * v[0] + R[2][1] * v[1] + R[2][2] * v[2],
    )


def mat_t_vec(R: Mat3, v: Vec3) -> Vec3:
    """R^T v without building the transpose."""
    return (
        R[0][0] * v[0] + R[1][0] * v[1] + R[2][0] * v[2],
        R[0][1] * v[0] + R[1][1] * v[1] + R[2][1] * v[2],
        R[0][2] * v[0] + R[1][2] * v[1] + R[2][2] * v[2],
    )


def transpose(R: Mat3) -> Mat3:
    return (
        (R[0][0], R[1][0], R[2][0]),
        (R[0][1], R[1][1], R[2][1]),
        (R[0][2], R[1][2], R[2][2]),
    )


def matmul(A: Mat3, B: Mat3) -> Mat3:
    return tuple(
        tuple(A[i][0] * B[0][j] + A[i][1] * B[1][j] + A[i][2] * B[2][j] for j in range(3))
        for i in range(3)
    )


def rotation_about(axis, angle) -> Mat3:
    """Rotation by ``angle`` about a constant unit ``axis`` (Rodrigues).

    The axis entries are plain floats; only the angle may be a dual or a
    batch, which keeps the returned matrix generic in the angle alone.
    """
    ax, ay, az = float(axis[0]), float(axis[1]), float(axis[2])
    c = cos(angle)
    s = sin(angle)
    t = 1.0 - c
    return (
        (c + t * (ax * ax), t * (ax * ay) - s * az, t * (ax * az) + s * ay),
        (t * (ax * ay) + s * az, c + t * (ay * ay), t * (ay * az) - s * ax),
        (t * (ax * az) - s * ay, t * (ay * az) + s * ax, c + t * (az * az)),
    )


def as_matrix(R: Mat3) -> np.ndarray:
    """Plain-scalar rotation tuple to a numpy 3x3 array."""
    return np.array([[float(R[i][j]) for j in range(3)] for i in range(3)])


def as_vector(v: Vec3) -> np.ndarray:
    return np.array([float(v[0]), float(v[1]), float(v[2])])
