"""Direct linear transform for plane-to-plane homographies."""
from __future__ import annotations

import numpy as np


def homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Homography mapping ``src`` points to ``dst`` (n >= 4), Hartley-normalised."""

    def normaliser(p):
        c = p.mean(axis=0)
        d = np.sqrt(((p - c) ** 2).sum(axis=1)).mean()
        s = np.sqrt(2) / d if d > 0 else 1.0
        return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])

    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    Ts, Td = normaliser(src), normaliser(dst)
    ps = np.c_[src, np.ones(len(src))] @ Ts.T
    pd = np.c_[dst, np.ones(len(dst))] @ Td.T
    n = len(src)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = ps
    A[0::2, 6:9] = -pd[:, 0:1] * ps
    A[1::2, 3:6] = ps
    A[1::2, 6:9] = -pd[:, 1:2] * ps
    _, _, vt = np.linalg.svd(A)
    H = np.linalg.inv(Td) @ vt[-1].reshape(3, 3) @ Ts
    return H / H[2, 2] if abs(H[2, 2]) > 1e-15 else H


def apply_homography(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    p = np.c_[pts, np.ones(len(pts))] @ H.T
    return p[:, :2] / p[:, 2:3]
