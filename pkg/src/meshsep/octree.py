"""Octree over triangle bounding boxes.

Boxes are binary64 and inflated outward so they contain the exact triangles;
queries therefore return supersets (no false negatives).
"""
from __future__ import annotations

import numpy as np

DEFAULT_MAX_LEAF = 16
DEFAULT_MAX_DEPTH = 20
_REL = 4.0 * 2.0 ** -53


def inflate(lo, hi):
    """Outward-round a float box so it contains the exact geometry it came from."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lo - np.abs(lo) * _REL - 1e-300, hi + np.abs(hi) * _REL + 1e-300


def _disjoint(lo, hi, nlo, nhi):
    return (lo[0] > nhi[0] or lo[1] > nhi[1] or lo[2] > nhi[2]
            or hi[0] < nlo[0] or hi[1] < nlo[1] or hi[2] < nlo[2])


def _futile(masks, n):
    """A split is pointless when one child keeps most of the boxes.

    Boxes sharing a mesh vertex all contain it, so splitting around a
    high-degree vertex would otherwise recurse to max depth shedding one
    box per level.
    """
    return 4 * max(int(m.sum()) for m in masks) >= 3 * n


class _Node:
    __slots__ = ("lo", "hi", "depth", "items", "children", "stuck")

    def __init__(self, lo, hi, depth):
        self.lo = tuple(float(x) for x in lo)
        self.hi = tuple(float(x) for x in hi)
        self.depth = depth
        self.items = set()
        self.children = None
        # leaf size at which a split last failed to separate anything
        self.stuck = 0


class Octree:
    """Octree over boxes; an id is stored in every leaf its box overlaps."""

    def __init__(self, lo, hi, max_leaf=DEFAULT_MAX_LEAF, max_depth=DEFAULT_MAX_DEPTH):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        center = (lo + hi) / 2
        half = max(float(np.max(hi - lo)) / 2, 1e-300) * (1 + 1e-9)
        self.root = _Node(center - half, center + half, 0)
        self.max_leaf = max_leaf
        self.max_depth = max_depth
        self.boxes = {}
        self.overflow = set()

    # -- construction ------------------------------------------------------
    @classmethod
    def from_boxes(cls, ids, lo, hi, max_leaf=DEFAULT_MAX_LEAF, max_depth=DEFAULT_MAX_DEPTH,
                   bounds=None):
        ids = np.asarray(ids, dtype=np.int64)
        lo = np.asarray(lo, dtype=float).reshape(-1, 3)
        hi = np.asarray(hi, dtype=float).reshape(-1, 3)
        if bounds is None:
            if len(ids):
                bounds = (lo.min(axis=0), hi.max(axis=0))
            else:
                bounds = (np.zeros(3), np.ones(3))
        tree = cls(bounds[0], bounds[1], max_leaf, max_depth)
        for i, t in enumerate(ids.tolist()):
            tree.boxes[t] = (tuple(lo[i].tolist()), tuple(hi[i].tolist()))
        rlo, rhi = np.array(tree.root.lo), np.array(tree.root.hi)
        inside = np.all(lo <= rhi, axis=1) & np.all(hi >= rlo, axis=1)
        contained = np.all(lo >= rlo, axis=1) & np.all(hi <= rhi, axis=1)
        tree.overflow = set(ids[~contained].tolist())
        sel = np.nonzero(inside)[0]
        tree._build(tree.root, ids[sel], lo[sel], hi[sel])
        return tree

    def _split_masks(self, node, lo, hi):
        nlo, nhi = np.array(node.lo), np.array(node.hi)
        mid = (nlo + nhi) / 2
        masks = []
        cells = []
        for k in range(8):
            sel = np.array([k & 1, k & 2, k & 4], dtype=bool)
            clo = np.where(sel, mid, nlo)
            chi = np.where(sel, nhi, mid)
            m = np.all(lo <= chi, axis=1) & np.all(hi >= clo, axis=1)
            masks.append(m)
            cells.append((clo, chi))
        return masks, cells

    def _build(self, node, ids, lo, hi):
        if len(ids) <= self.max_leaf or node.depth >= self.max_depth:
            node.items = set(ids.tolist())
            return
        masks, cells = self._split_masks(node, lo, hi)
        if _futile(masks, len(ids)):
            node.items = set(ids.tolist())
            node.stuck = len(ids)
            return
        node.children = []
        for m, (clo, chi) in zip(masks, cells):
            child = _Node(clo, chi, node.depth + 1)
            node.children.append(child)
            self._build(child, ids[m], lo[m], hi[m])

    # -- incremental updates -------------------------------------------------
    def _contains(self, lo, hi):
        rlo, rhi = self.root.lo, self.root.hi
        return all(lo[k] >= rlo[k] and hi[k] <= rhi[k] for k in range(3))

    def insert(self, tid, lo, hi):
        lo = tuple(float(x) for x in lo)
        hi = tuple(float(x) for x in hi)
        self.boxes[tid] = (lo, hi)
        if not self._contains(lo, hi):
            self.overflow.add(tid)
        stack = [self.root]
        while stack:
            node = stack.pop()
            if _disjoint(lo, hi, node.lo, node.hi):
                continue
            if node.children is not None:
                stack.extend(node.children)
                continue
            node.items.add(tid)
            if (len(node.items) > max(self.max_leaf, 2 * node.stuck)
                    and node.depth < self.max_depth):
                self._try_split(node)

    def _try_split(self, node):
        ids = np.fromiter(node.items, dtype=np.int64, count=len(node.items))
        lo = np.array([self.boxes[t][0] for t in ids.tolist()])
        hi = np.array([self.boxes[t][1] for t in ids.tolist()])
        masks, cells = self._split_masks(node, lo, hi)
        if _futile(masks, len(ids)):
            node.stuck = len(ids)
            return
        node.items = set()
        node.children = []
        for m, (clo, chi) in zip(masks, cells):
            child = _Node(clo, chi, node.depth + 1)
            node.children.append(child)
            self._build(child, ids[m], lo[m], hi[m])

    def remove(self, tid):
        box = self.boxes.pop(tid, None)
        if box is None:
            return
        self.overflow.discard(tid)
        lo, hi = box
        stack = [self.root]
        while stack:
            node = stack.pop()
            if _disjoint(lo, hi, node.lo, node.hi):
                continue
            if node.children is not None:
                stack.extend(node.children)
            else:
                node.items.discard(tid)

    def update(self, tid, lo, hi):
        self.remove(tid)
        self.insert(tid, lo, hi)

    # -- queries -----------------------------------------------------------
    def query(self, lo, hi):
        """Ids whose stored box overlaps the closed box [lo, hi]."""
        lo = [float(x) for x in lo]
        hi = [float(x) for x in hi]
        found = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            nlo, nhi = node.lo, node.hi
            if (lo[0] > nhi[0] or lo[1] > nhi[1] or lo[2] > nhi[2]
                    or hi[0] < nlo[0] or hi[1] < nlo[1] or hi[2] < nlo[2]):
                continue
            if node.children is not None:
                stack.extend(node.children)
            else:
                found |= node.items
        found |= self.overflow
        out = []
        for t in found:
            blo, bhi = self.boxes[t]
            if (blo[0] <= hi[0] and blo[1] <= hi[1] and blo[2] <= hi[2]
                    and bhi[0] >= lo[0] and bhi[1] >= lo[1] and bhi[2] >= lo[2]):
                out.append(t)
        return out

    def leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.children is not None:
                stack.extend(node.children)
            else:
                yield node

    def depth(self):
        return max(n.depth for n in self.leaves())

    def __len__(self):
        return len(self.boxes)
