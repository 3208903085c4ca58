"""Fiducial tag detection on an already binarized image.

Black connected components are traced to their outer boundary, reduced to a
quadrilateral, refined by fitting a line to each edge, and decoded by
sampling the cell grid through the quad's homography.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .homography import apply_homography, homography_dlt
from .tagmap import TagFamily, tag_cells
from .validation import check_binary

# Canonical outer-border corners in tag-bitmap cell units (x right, y down):
# bottom-left, bottom-right, top-right, top-left.
_CANONICAL = np.array([[0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]])
_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class Quad:
    corners: np.ndarray  # (4, 2) x/y pixels, counter-clockwise on screen
    area: float


@dataclass(frozen=True, eq=False)
class Detection:
    id: int
    hamming: int
    corners: np.ndarray  # (4, 2) image corners matching the tag's BL, BR, TR, TL
    decision_margin: float
    rotation: int = 0


def _signed_area(c: np.ndarray) -> float:
    x, y = c[:, 0], c[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _edge_points(filled: np.ndarray) -> np.ndarray:
    """Sub-pixel points on the black/white transitions of a filled blob (x, y)."""
    pad = np.pad(filled, 1)
    core = pad[1:-1, 1:-1]
    pts = []
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nb = pad[1 + dy : pad.shape[0] - 1 + dy, 1 + dx : pad.shape[1] - 1 + dx]
        ys, xs = np.nonzero(core & ~nb)
        pts.append(np.c_[xs + 0.5 * dx, ys + 0.5 * dy])
    return np.concatenate(pts)


def _initial_corners(pts: np.ndarray) -> np.ndarray | None:
    c = pts.mean(axis=0)
    a = pts[np.argmax(((pts - c) ** 2).sum(axis=1))]
    b = pts[np.argmax(((pts - a) ** 2).sum(axis=1))]
    ab = b - a
    cross = ab[0] * (pts[:, 1] - a[1]) - ab[1] * (pts[:, 0] - a[0])
    if cross.max() <= 0 or cross.min() >= 0:
        return None
    p = pts[np.argmax(cross)]
    q = pts[np.argmin(cross)]
    return np.array([a, p, b, q])


def _fit_line(pts: np.ndarray):
    c = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - c, full_matrices=False)
    return c, vt[0], (s[1] / np.sqrt(len(pts)) if len(s) > 1 else 0.0)


def _intersect(l1, l2) -> np.ndarray | None:
    (c1, d1, _), (c2, d2, _) = l1, l2
    A = np.array([d1, -d2]).T
    if abs(np.linalg.det(A)) < 1e-9:
        return None
    s = np.linalg.solve(A, c2 - c1)
    return c1 + s[0] * d1


def _refine(pts: np.ndarray, corners: np.ndarray, max_residual: float):
    """Assign edge points to the nearest quad side and intersect fitted lines."""
    dists = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        ab = b - a
        L = np.linalg.norm(ab)
        if L < 1e-6:
            return None
        t = ((pts - a) @ ab) / (L * L)
        perp = np.abs(ab[0] * (pts[:, 1] - a[1]) - ab[1] * (pts[:, 0] - a[0])) / L
        dists.append(np.where((t >= -0.05) & (t <= 1.05), perp, np.inf))
    dists = np.array(dists)
    side = np.argmin(dists, axis=0)
    if np.min(dists, axis=0).max() > max_residual:
        return None
    lines = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        ab = b - a
        L = np.linalg.norm(ab)
        sel = pts[side == i]
        t = ((sel - a) @ ab) / (L * L)
        trim = min(0.2, 2.0 / L)
        keep = sel[(t > trim) & (t < 1 - trim)]
        if len(keep) < 3:
            keep = sel
        if len(keep) < 2:
            return None
        lines.append(_fit_line(keep))
    out = []
    for i in range(4):
        p = _intersect(lines[i - 1], lines[i])
        if p is None:
            return None
        out.append(p)
    return np.array(out)


def find_quads(
    binary, min_area: float = 64.0, max_residual: float = 2.5, min_hole_fraction: float = 0.05
) -> list[Quad]:
    """Quadrilateral outlines of black blobs in a {0, 255} image.

    Components touching the image border, blobs enclosing less than
    ``min_hole_fraction`` of white, non-convex outlines and blobs whose
    outline strays more than ``max_residual`` pixels from the fitted quad are
    rejected.
    """
    return _find_quads(check_binary(binary), min_area, max_residual, min_hole_fraction)


def _find_quads(data: np.ndarray, min_area: float, max_residual: float, min_hole_fraction: float = 0.05) -> list[Quad]:
    h, w = data.shape
    labels, n = ndimage.label(data == 0, structure=_FOUR)
    if n == 0:
        return []
    counts = np.bincount(labels.ravel())
    quads = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or counts[lab] < min_area / 4:
            continue
        ys, xs = sl
        bh, bw = ys.stop - ys.start, xs.stop - xs.start
        if bh < 4 or bw < 4 or bh * bw < min_area:
            continue
        if ys.start == 0 or xs.start == 0 or ys.stop == h or xs.stop == w:
            continue
        blob = labels[sl] == lab
        filled = ndimage.binary_fill_holes(blob)
        area = float(filled.sum())
        # a tag border always encloses white data cells
        if area < min_area or area - counts[lab] < min_hole_fraction * area:
            continue
        pts = _edge_points(filled)
        init = _initial_corners(pts)
        if init is None:
            continue
        corners = _refine(pts, init, max_residual)
        if corners is None:
            continue
        corners = corners + (xs.start, ys.start)
        signed = _signed_area(corners)
        if signed > 0:
            corners = corners[::-1]
        quad_area = abs(signed)
        if quad_area < min_area or not (0.8 < area / quad_area < 1.2):
            continue
        if not _is_convex(corners):
            continue
        quads.append(Quad(corners, quad_area))
    return quads


def _is_convex(c: np.ndarray) -> bool:
    signs = []
    for i in range(4):
        a, b, d = c[i], c[(i + 1) % 4], c[(i + 2) % 4]
        signs.append(np.sign((b[0] - a[0]) * (d[1] - b[1]) - (b[1] - a[1]) * (d[0] - b[0])))
    return len(set(signs)) == 1 and signs[0] != 0


def _sample_grid(data: np.ndarray, H: np.ndarray, n: int) -> np.ndarray | None:
    centers = (np.arange(n) + 0.5) / n
    gx, gy = np.meshgrid(centers, centers)
    pts = apply_homography(H, np.c_[gx.ravel(), gy.ravel()])
    cols = np.rint(pts[:, 0]).astype(np.int64)
    rows = np.rint(pts[:, 1]).astype(np.int64)
    h, w = data.shape
    if cols.min() < 0 or rows.min() < 0 or cols.max() >= w or rows.max() >= h:
        return None
    return (data[rows, cols] > 0).reshape(n, n)


def _popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x).astype(np.int64)


def decode_quad(
    binary, quad: Quad, family: TagFamily, max_correction: int = 2, max_border_errors: int = 3
) -> Detection | None:
    """Read the cell grid inside ``quad`` and match it against ``family``."""
    return _decode(check_binary(binary), quad, family, max_correction, max_border_errors)


def _decode(data, quad, family, max_correction, max_border_errors) -> Detection | None:
    n = family.total_cells
    b = family.border
    ring = np.ones((n, n), dtype=bool)
    ring[b : n - b, b : n - b] = False
    H = homography_dlt(_CANONICAL, quad.corners)
    sampled = _sample_grid(data, H, n)
    if sampled is None:
        return None
    border_errors = int(sampled[ring].sum())
    if border_errors > max_border_errors:
        return None
    margin = 1.0 - border_errors / ring.sum()
    weights = np.uint64(1) << np.arange(family.data_bits - 1, -1, -1, dtype=np.uint64)
    best = None
    for rot in range(4):
        # rolling the corner list by ``rot`` turns the sampled grid by ``rot`` quarter turns
        cells = np.rot90(sampled, -rot)
        bits = cells[b : n - b, b : n - b].ravel().astype(np.uint64)
        code = np.uint64((bits * weights).sum())
        dist = _popcount(family.codes_array ^ code)
        tag_id = int(np.argmin(dist))
        ham = int(dist[tag_id])
        if ham > max_correction:
            continue
        if best is None or ham < best.hamming:
            best = Detection(tag_id, ham, np.roll(quad.corners, -rot, axis=0), margin, rot)
    return best


def detect_tags(
    binary,
    family: TagFamily,
    min_area: float = 64.0,
    max_correction: int = 2,
    max_border_errors: int = 3,
) -> list[Detection]:
    """All decodable tags, one per id (lowest hamming wins), sorted by id."""
    found: dict[int, Detection] = {}
    data = check_binary(binary)
    for quad in _find_quads(data, min_area, 2.5):
        det = _decode(data, quad, family, max_correction, max_border_errors)
        if det is None:
            continue
        prev = found.get(det.id)
        if prev is None or (det.hamming, -det.decision_margin) < (prev.hamming, -prev.decision_margin):
            found[det.id] = det
    return [found[k] for k in sorted(found)]


def render_tag_canvas(
    family: TagFamily, tag_id: int, cell: int, margin: int, rotation: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """White canvas with one tag rotated by ``rotation`` quarter turns.

    Returns the canvas and the tag's BL, BR, TR, TL corners (x, y) in the
    pixel-center convention.
    """
    cells = tag_cells(family, tag_id)
    bitmap = np.kron(cells, np.ones((cell, cell), dtype=np.uint8)) * 255
    side = bitmap.shape[0]
    canvas = np.full((side + 2 * margin, side + 2 * margin), 255, dtype=np.uint8)
    canvas[margin : margin + side, margin : margin + side] = np.rot90(bitmap, rotation)
    lo, hi = margin - 0.5, margin + side - 0.5
    corners = np.array([[lo, hi], [hi, hi], [hi, lo], [lo, lo]])
    # np.rot90 turns the picture counter-clockwise on screen; follow the corners
    center = np.array([(lo + hi) / 2, (lo + hi) / 2])
    for _ in range(rotation % 4):
        rel = corners - center
        corners = center + np.c_[rel[:, 1], -rel[:, 0]]
    return canvas, corners
