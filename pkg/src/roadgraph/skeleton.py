"""Skeletonization of binary road masks and skeleton-to-graph conversion."""

from __future__ import annotations

import cv2
import numba
import numpy as np

from .graph import GeoTransform, RoadEdge, RoadGraph, RoadNode
from .masks import RasterMask


class SkeletonError(ValueError):
    pass


# neighbour offsets in ring order P2..P9: N, NE, E, SE, S, SW, W, NW
_DR = np.array([-1, -1, 0, 1, 1, 1, 0, -1], dtype=np.int64)
_DC = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)


@numba.njit(cache=True, nogil=True)
def _ring(img, r, c, out):
    h, w = img.shape
    for k in range(8):
        rr = r + _DR[k]
        cc = c + _DC[k]
        if 0 <= rr < h and 0 <= cc < w:
            out[k] = img[rr, cc]
        else:
            out[k] = 0


@numba.njit(cache=True, nogil=True)
def _zhang_suen(img, rows, cols):
    n = rows.shape[0]
    alive = np.ones(n, dtype=np.bool_)
    flag = np.zeros(n, dtype=np.bool_)
    p = np.zeros(8, dtype=np.uint8)
    changed = True
    while changed:
        changed = False
        for step in range(2):
            for i in range(n):
                flag[i] = False
                if not alive[i]:
                    continue
                _ring(img, rows[i], cols[i], p)
                b = 0
                for k in range(8):
                    b += p[k]
                if b < 2 or b > 6:
                    continue
                a = 0
                for k in range(8):
                    if p[k] == 0 and p[(k + 1) % 8] == 1:
                        a += 1
                if a != 1:
                    continue
                # p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
                if step == 0:
                    if p[0] * p[2] * p[4] != 0 or p[2] * p[4] * p[6] != 0:
                        continue
                else:
                    if p[0] * p[2] * p[6] != 0 or p[0] * p[4] * p[6] != 0:
                        continue
                flag[i] = True
            for i in range(n):
                if flag[i]:
                    img[rows[i], cols[i]] = 0
                    alive[i] = False
                    changed = True
    return alive


@numba.njit(cache=True, nogil=True)
def _yokoi8(p):
    # 8-connectivity number; 1 means the pixel is simple
    total = 0
    for k in range(0, 8, 2):
        a = 1 - np.int64(p[k])
        b = 1 - np.int64(p[(k + 1) % 8])
        c = 1 - np.int64(p[(k + 2) % 8])
        total += a - a * b * c
    return total


@numba.njit(cache=True, nogil=True)
def _remove_staircase(img, rows, cols, alive):
    """Sequentially delete simple corner pixels left by parallel thinning."""
    p = np.zeros(8, dtype=np.uint8)
    changed = True
    while changed:
        changed = False
        for i in range(rows.shape[0]):
            if not alive[i]:
                continue
            _ring(img, rows[i], cols[i], p)
            cnt = 0
            for k in range(8):
                cnt += p[k]
            if cnt < 2:
                continue
            corner = p[0] * p[2] + p[2] * p[4] + p[4] * p[6] + p[6] * p[0]
            if corner == 0:
                continue
            if _yokoi8(p) != 1:
                continue
            img[rows[i], cols[i]] = 0
            alive[i] = False
            changed = True


def skeletonize(binary) -> RasterMask | np.ndarray:
    """Zhang-Suen thinning followed by a staircase clean-up pass.

    Accepts a :class:`RasterMask` or a 2-D array and returns the same kind.
    The result is a subset of the input foreground with 8-connectivity of
    every component preserved.
    """
    is_mask = isinstance(binary, RasterMask)
    arr = binary.data[0] if is_mask else np.asarray(binary)
    img = np.ascontiguousarray(arr > 0, dtype=np.uint8)
    rows, cols = np.nonzero(img)
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    if len(rows):
        n_in, labels = cv2.connectedComponents(img, connectivity=8)
        alive = _zhang_suen(img, rows, cols)
        _remove_staircase(img, rows, cols, alive)
        _restore_vanished(img, labels, n_in, rows, cols)
    if is_mask:
        return RasterMask(img[None], binary.transform)
    return img


def _restore_vanished(img, labels, n_in, rows, cols) -> None:
    """Put back one pixel of every input component that thinning erased.

    Zhang-Suen deletes a lone 2x2 block outright; the first pixel in
    row-major order is kept instead.
    """
    lab = labels[rows, cols]
    kept = np.zeros(n_in, dtype=bool)
    kept[labels[img > 0]] = True
    kept[0] = True
    if kept.all():
        return
    first_lab, first = np.unique(lab, return_index=True)
    gone = first[~kept[first_lab]]
    img[rows[gone], cols[gone]] = 1


def _neighbour_table(rows: np.ndarray, cols: np.ndarray, width: int) -> np.ndarray:
    """``(n, 8)`` indices of the foreground neighbours of each pixel (-1 if absent)."""
    stride = width + 2
    key = (rows + 1) * stride + (cols + 1)
    nb = np.full((len(key), 8), -1, dtype=np.int64)
    if len(key) == 0:
        return nb
    for k in range(8):
        target = key + _DR[k] * stride + _DC[k]
        idx = np.searchsorted(key, target)
        idx = np.minimum(idx, len(key) - 1)
        hit = key[idx] == target
        nb[hit, k] = idx[hit]
    return nb


def skeleton_to_graph(skeleton, transform: GeoTransform | None = None, min_loop_px: int = 3) -> RoadGraph:
    """Convert a 1-pixel skeleton into a geometric road graph.

    Pixels with a neighbour count other than two become nodes; adjacent
    junction pixels (three or more neighbours) collapse into one node at their
    centroid. Chains of two-neighbour pixels become edge polylines through
    pixel centers. Pure cycles get a single node at their first pixel in
    row-major order. Self-loops with fewer than ``min_loop_px`` interior chain
    pixels are junction artifacts and are dropped.

    Working memory is proportional to the number of skeleton pixels.
    """
    if isinstance(skeleton, RasterMask):
        transform = transform or skeleton.transform
        arr = skeleton.data[0]
    else:
        arr = np.asarray(skeleton)
    if transform is None:
        transform = GeoTransform(0.0, float(arr.shape[0]), 1.0, arr.shape[1], arr.shape[0])
    rows, cols = np.nonzero(arr)
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    n = len(rows)
    if n == 0:
        return RoadGraph.empty(transform)
    nb = _neighbour_table(rows, cols, arr.shape[1])

    # E (2), S (4) and SE (3) all present means a solid 2x2 block
    block = (nb[:, 2] >= 0) & (nb[:, 3] >= 0) & (nb[:, 4] >= 0)
    if block.any():
        i = int(np.argmax(block))
        raise SkeletonError(f"skeleton is not thin: 2x2 block at row {rows[i]}, col {cols[i]}")

    count = (nb >= 0).sum(axis=1)
    is_node = count != 2
    junction = count >= 3

    # union adjacent junction pixels
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in np.nonzero(junction)[0]:
        for j in nb[i]:
            if j > i and junction[j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    xs, ys = transform.pixel_to_world(cols, rows)
    pix_xy = np.column_stack([xs, ys])
    node_of = np.full(n, -1, dtype=np.int64)
    members: dict[int, list[int]] = {}
    for i in np.nonzero(is_node)[0]:
        members.setdefault(find(i), []).append(i)
    nodes: dict[int, RoadNode] = {}
    for nid, root in enumerate(sorted(members)):
        idx = members[root]
        node_of[idx] = nid
        cx, cy = pix_xy[idx].mean(axis=0)
        nodes[nid] = RoadNode(nid, float(cx), float(cy))

    edges: list[RoadEdge] = []
    visited = np.zeros(n, dtype=bool)

    def make_edge(u, v, path):
        pts = [(nodes[u].x, nodes[u].y)] + [tuple(pix_xy[k]) for k in path] + [(nodes[v].x, nodes[v].y)]
        dedup = [pts[0]]
        for p in pts[1:]:
            if p != dedup[-1]:
                dedup.append(p)
        if len(dedup) < 2:
            dedup.append(dedup[0])
        edges.append(RoadEdge.from_geometry(u, v, np.array(dedup)))

    seen_pairs = set()
    for p in np.nonzero(is_node)[0]:
        for q in nb[p]:
            if q < 0:
                continue
            if is_node[q]:
                if node_of[q] != node_of[p]:
                    pair = (min(p, q), max(p, q))
                    if pair not in seen_pairs:
                        seen_pairs.add(pair)
                        make_edge(node_of[p], node_of[q], [p, q])
                continue
            if visited[q]:
                continue
            path = [p, q]
            visited[q] = True
            prev, cur = p, q
            while True:
                a, b = [k for k in nb[cur] if k >= 0]
                nxt = b if a == prev else a
                path.append(nxt)
                if is_node[nxt] or visited[nxt]:
                    break
                visited[nxt] = True
                prev, cur = cur, nxt
            end = path[-1]
            if not is_node[end]:
                continue
            u, v = node_of[p], node_of[end]
            if u == v and len(path) - 2 < min_loop_px:
                continue
            make_edge(u, v, path)

    # pure cycles
    for s in range(n):
        if is_node[s] or visited[s]:
            continue
        nid = len(nodes)
        nodes[nid] = RoadNode(nid, float(pix_xy[s, 0]), float(pix_xy[s, 1]))
        node_of[s] = nid
        visited[s] = True
        a, b = sorted(k for k in nb[s] if k >= 0)
        path = [s]
        prev, cur = s, a
        while cur != s:
            visited[cur] = True
            path.append(cur)
            x, y = [k for k in nb[cur] if k >= 0]
            prev, cur = cur, (y if x == prev else x)
        path.append(s)
        edges.append(RoadEdge.from_geometry(nid, nid, pix_xy[path]))
    return RoadGraph(nodes, tuple(edges), transform)
