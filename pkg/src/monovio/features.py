"""Single-scale ORB front end and two-way Hamming matching.

Images are 2-D uint8 arrays (row-major, [y, x] indexing). The detector is
FAST-9/16 with non-maximum suppression, corners are ranked by Harris
response, oriented by the intensity centroid over a radius-15 disc, and
described with 256 rBRIEF comparisons steered by the quantized orientation.
Descriptors are stored packed as 4 little-endian uint64 words per keypoint
so Hamming distances reduce to XOR + popcount.

Every function here is pure, and the stripe/block-parallel variants of
detection and matching are defined so their merged result is bit-for-bit
identical to the serial computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .orb_pattern import BRIEF_PATTERN

DESCRIPTOR_BITS = 256
DESCRIPTOR_WORDS = 4
MAX_FRAME_FEATURES = 700
MAX_MATCH_SET = 1000
BORDER = 16
PATCH_RADIUS = 15
N_ANGLE_BINS = 30  # 12 degree quantization

HARRIS_K = 0.04
DEFAULT_FAST_THRESHOLD = 20
DEFAULT_MAX_HAMMING = 64

# circle of 16 Bresenham offsets at radius 3, clockwise from 12 o'clock
_CIRCLE = np.array(
    [
        (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
        (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
    ],
    dtype=np.int32,
)


@dataclass
class Keypoint:
    x: int
    y: int
    fast_score: int
    harris_score: float
    angle: float = 0.0


@dataclass
class Frame:
    """Detected keypoints of one image plus their packed descriptors."""

    timestamp: int
    keypoints: list = field(default_factory=list)
    descriptors: np.ndarray = field(
        default_factory=lambda: np.zeros((0, DESCRIPTOR_WORDS), dtype=np.uint64)
    )

    def __len__(self):
        return len(self.keypoints)


@dataclass
class MatchPair:
    index_a: int
    index_b: int
    hamming: int


def _check_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("expected a 2-D uint8 image")
    return img


def fast_score_map(img) -> np.ndarray:
    """FAST-9/16 score for every pixel (0 where not a corner at threshold 1).

    The score is the largest threshold t for which the segment test still
    passes: score = (best over 9-arcs of the minimum contrast) - 1.
    """
    img = _check_image(img)
    h, w = img.shape
    if h < 7 or w < 7:
        raise ValueError("image smaller than 7x7")
    center = img[3 : h - 3, 3 : w - 3].astype(np.int16)
    ih, iw = center.shape

    diffs = np.empty((16, ih, iw), dtype=np.int16)
    for k, (dx, dy) in enumerate(_CIRCLE):
        diffs[k] = img[3 + dy : 3 + dy + ih, 3 + dx : 3 + dx + iw].astype(np.int16) - center

    neg_diffs = -diffs
    bright = np.full((ih, iw), -1, dtype=np.int16)
    dark = np.full((ih, iw), -1, dtype=np.int16)
    for start in range(16):
        idx = [(start + j) % 16 for j in range(9)]
        bright = np.maximum(bright, np.minimum.reduce(diffs[idx]))
        dark = np.maximum(dark, np.minimum.reduce(neg_diffs[idx]))

    score = np.maximum(bright, dark) - 1
    out = np.zeros((h, w), dtype=np.int16)
    out[3 : h - 3, 3 : w - 3] = np.maximum(score, 0)
    return out


def _nms_3x3(score: np.ndarray) -> np.ndarray:
    """Mask of local maxima; ties go to the first pixel in raster order."""
    h, w = score.shape
    keep = score > 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            shifted = np.zeros_like(score)
            ys = slice(max(0, dy), h + min(0, dy))
            xs = slice(max(0, dx), w + min(0, dx))
            yd = slice(max(0, -dy), h + min(0, -dy))
            xd = slice(max(0, -dx), w + min(0, -dx))
            shifted[yd, xd] = score[ys, xs]
            if (dy, dx) < (0, 0) or (dy == 0 and dx < 0):
                keep &= score >= shifted  # earlier neighbor wins ties
                keep &= ~((score == shifted) & (shifted > 0))
            else:
                keep &= score >= shifted
    return keep


def fast_corners(img, threshold: int = DEFAULT_FAST_THRESHOLD):
    """All FAST-9/16 corners after 3x3 non-maximum suppression.

    Returns a list of (x, y, fast_score) with fast_score the maximum
    threshold at which the pixel stays a corner.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    score = fast_score_map(img)
    corner = score >= threshold
    keep = corner & _nms_3x3(np.where(corner, score, 0))
    ys, xs = np.nonzero(keep)
    return [(int(x), int(y), int(score[y, x])) for x, y in zip(xs, ys)]


def _sobel(img: np.ndarray):
    """Sobel gradients of the interior (1 px smaller on each side)."""
    a = img.astype(np.float64)
    # [1 2 1]^T x [-1 0 1] and its transpose
    gx = (
        (a[:-2, 2:] + 2.0 * a[1:-1, 2:] + a[2:, 2:])
        - (a[:-2, :-2] + 2.0 * a[1:-1, :-2] + a[2:, :-2])
    )
    gy = (
        (a[2:, :-2] + 2.0 * a[2:, 1:-1] + a[2:, 2:])
        - (a[:-2, :-2] + 2.0 * a[:-2, 1:-1] + a[:-2, 2:])
    )
    return gx, gy


def _box_sum_7(a: np.ndarray) -> np.ndarray:
    """Sum over centered 7x7 windows; result 6 px smaller on each axis."""
    c = np.cumsum(np.cumsum(a, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[7:, 7:] - c[:-7, 7:] - c[7:, :-7] + c[:-7, :-7]


def harris_response_map(img) -> np.ndarray:
    """det(M) - k trace(M)^2 over 7x7 windows of Sobel gradients.

    Valid for pixels at least 4 px from every border; zero elsewhere.
    """
    img = _check_image(img)
    h, w = img.shape
    gx, gy = _sobel(img)
    sxx = _box_sum_7(gx * gx)
    syy = _box_sum_7(gy * gy)
    sxy = _box_sum_7(gx * gy)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    out = np.zeros((h, w))
    out[4 : h - 4, 4 : w - 4] = det - HARRIS_K * trace * trace
    return out


def harris_score(img, x: int, y: int) -> float:
    """Harris response at one pixel (must be >= 4 px from every border)."""
    img = _check_image(img)
    h, w = img.shape
    if not (4 <= x < w - 4 and 4 <= y < h - 4):
        raise ValueError(f"({x}, {y}) too close to the border for a 7x7 window")
    patch = img[y - 4 : y + 5, x - 4 : x + 5]
    gx, gy = _sobel(patch)
    sxx = float((gx * gx).sum())
    syy = float((gy * gy).sum())
    sxy = float((gx * gy).sum())
    return sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) ** 2


# intensity-centroid disc: all offsets with dx^2 + dy^2 <= PATCH_RADIUS^2
_dy, _dx = np.mgrid[-PATCH_RADIUS : PATCH_RADIUS + 1, -PATCH_RADIUS : PATCH_RADIUS + 1]
_disc = (_dx * _dx + _dy * _dy) <= PATCH_RADIUS * PATCH_RADIUS
DISC_DX = _dx[_disc].astype(np.int64)
DISC_DY = _dy[_disc].astype(np.int64)

# rotated integer sampling offsets for each of the 30 quantized angles
_ROTATED = np.empty((N_ANGLE_BINS, DESCRIPTOR_BITS, 4), dtype=np.int64)
for _b in range(N_ANGLE_BINS):
    _ang = 2.0 * np.pi * _b / N_ANGLE_BINS
    _c, _s = np.cos(_ang), np.sin(_ang)
    for _j in (0, 2):
        _px = BRIEF_PATTERN[:, _j].astype(np.float64)
        _py = BRIEF_PATTERN[:, _j + 1].astype(np.float64)
        _ROTATED[_b, :, _j] = np.round(_c * _px - _s * _py).astype(np.int64)
        _ROTATED[_b, :, _j + 1] = np.round(_s * _px + _c * _py).astype(np.int64)


def _orientations(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Intensity-centroid angles in [-pi, pi) for keypoints >= 16 px inside."""
    flat = img.ravel().astype(np.int64)
    w = img.shape[1]
    idx = (ys[:, None] + DISC_DY[None, :]) * w + (xs[:, None] + DISC_DX[None, :])
    vals = flat[idx]
    m10 = (vals * DISC_DX[None, :]).sum(axis=1)
    m01 = (vals * DISC_DY[None, :]).sum(axis=1)
    ang = np.arctan2(m01.astype(np.float64), m10.astype(np.float64))
    return np.where(ang >= np.pi, ang - 2.0 * np.pi, ang)


def _describe(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Packed rBRIEF descriptors for keypoints with known orientations."""
    h, w = img.shape
    bins = np.round(angles / (2.0 * np.pi / N_ANGLE_BINS)).astype(np.int64) % N_ANGLE_BINS
    pat = _ROTATED[bins]  # (n, 256, 4)
    x0 = np.clip(xs[:, None] + pat[:, :, 0], 0, w - 1)
    y0 = np.clip(ys[:, None] + pat[:, :, 1], 0, h - 1)
    x1 = np.clip(xs[:, None] + pat[:, :, 2], 0, w - 1)
    y1 = np.clip(ys[:, None] + pat[:, :, 3], 0, h - 1)
    flat = img.ravel()
    bits = flat[y0 * w + x0] < flat[y1 * w + x1]
    packed_bytes = np.packbits(bits, axis=1, bitorder="little")
    return packed_bytes.view(np.uint64).reshape(-1, DESCRIPTOR_WORDS)


def detect_and_describe(
    img,
    max_features: int = MAX_FRAME_FEATURES,
    threshold: int = DEFAULT_FAST_THRESHOLD,
    timestamp: int = 0,
    stripes: int = 1,
) -> Frame:
    """FAST -> Harris-on-FAST-corners -> oriented rBRIEF, capped at
    max_features keypoints sorted by descending Harris score.

    `stripes > 1` computes detection over horizontal image stripes and merges;
    the result is bitwise identical to the serial path (covered by a test).
    """
    if not (1 <= max_features <= MAX_FRAME_FEATURES):
        raise ValueError(f"max_features must be in 1..{MAX_FRAME_FEATURES}")
    img = _check_image(img)
    h, w = img.shape

    if stripes <= 1:
        corners = fast_corners(img, threshold)
    else:
        corners = _fast_corners_striped(img, threshold, stripes)
    if not corners:
        return Frame(timestamp=timestamp)

    arr = np.asarray(corners, dtype=np.int64)
    inside = (
        (arr[:, 0] >= BORDER)
        & (arr[:, 0] < w - BORDER)
        & (arr[:, 1] >= BORDER)
        & (arr[:, 1] < h - BORDER)
    )
    arr = arr[inside]
    if arr.shape[0] == 0:
        return Frame(timestamp=timestamp)

    hmap = harris_response_map(img)
    hs = hmap[arr[:, 1], arr[:, 0]]
    # descending Harris, ties broken by raster position for determinism
    order = np.lexsort((arr[:, 0], arr[:, 1], -hs))
    order = order[:max_features]
    arr = arr[order]
    hs = hs[order]

    xs = arr[:, 0]
    ys = arr[:, 1]
    angles = _orientations(img, xs, ys)
    desc = _describe(img, xs, ys, angles)
    kps = [
        Keypoint(int(x), int(y), int(s), float(hv), float(a))
        for (x, y, s), hv, a in zip(arr[:, :3].tolist(), hs, angles)
    ]
    return Frame(timestamp=timestamp, keypoints=kps, descriptors=desc)


def _fast_corners_striped(img: np.ndarray, threshold: int, stripes: int):
    """Strip-parallel FAST: each stripe is processed with a 4 px halo so the
    merged corner set equals the full-image result exactly."""
    h = img.shape[0]
    bounds = np.linspace(0, h, stripes + 1).astype(int)
    out = []
    for i in range(stripes):
        y0, y1 = int(bounds[i]), int(bounds[i + 1])
        lo = max(0, y0 - 4)
        hi = min(h, y1 + 4)
        if hi - lo < 7:
            continue
        sub = img[lo:hi]
        for x, y, s in fast_corners(sub, threshold):
            yy = y + lo
            if y0 <= yy < y1:
                out.append((x, yy, s))
    out.sort(key=lambda c: (c[1], c[0]))
    return out


_POPCOUNT_OK = hasattr(np, "bitwise_count")


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between packed descriptor sets."""
    x = a[:, None, :] ^ b[None, :, :]
    if _POPCOUNT_OK:
        return np.bitwise_count(x).sum(axis=2, dtype=np.uint16)
    bytes_view = x.view(np.uint8)
    return np.unpackbits(bytes_view, axis=-1).sum(axis=-1, dtype=np.uint16)


def match_two_way(
    a: np.ndarray,
    b: np.ndarray,
    max_hamming: int = DEFAULT_MAX_HAMMING,
    blocks: int = 1,
):
    """Mutual-best brute-force matching of two packed descriptor sets.

    Pair (i, j) is returned iff j is i's best match, i is j's best match, and
    the distance is <= max_hamming; distance ties resolve to the lowest index.
    `blocks > 1` evaluates the distance matrix in column blocks and merges by
    (distance, index) minimum - identical to the serial result.
    """
    a = np.ascontiguousarray(a, dtype=np.uint64)
    b = np.ascontiguousarray(b, dtype=np.uint64)
    na, nb = a.shape[0], b.shape[0]
    if na > MAX_MATCH_SET or nb > MAX_MATCH_SET:
        raise ValueError(f"descriptor set exceeds {MAX_MATCH_SET}")
    if na == 0 or nb == 0:
        return []

    if blocks <= 1:
        d = hamming_matrix(a, b)
        best_b = d.argmin(axis=1)
        best_b_dist = d[np.arange(na), best_b]
        best_a = d.argmin(axis=0)
    else:
        best_b = np.zeros(na, dtype=np.int64)
        best_b_dist = np.full(na, np.iinfo(np.uint16).max, dtype=np.uint16)
        best_a = np.zeros(nb, dtype=np.int64)
        cuts = np.linspace(0, nb, blocks + 1).astype(int)
        for k in range(blocks):
            j0, j1 = int(cuts[k]), int(cuts[k + 1])
            if j0 == j1:
                continue
            d = hamming_matrix(a, b[j0:j1])
            loc = d.argmin(axis=1)
            dist = d[np.arange(na), loc]
            upd = dist < best_b_dist  # strict: earlier block wins ties
            best_b[upd] = loc[upd] + j0
            best_b_dist[upd] = dist[upd]
            best_a[j0:j1] = d.argmin(axis=0)

    mutual = best_a[best_b] == np.arange(na)
    ok = mutual & (best_b_dist <= max_hamming)
    return [
        MatchPair(int(i), int(best_b[i]), int(best_b_dist[i]))
        for i in np.nonzero(ok)[0]
    ]
