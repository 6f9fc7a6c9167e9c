"""Windowed covering space on which a cocycle gains a global primitive.

For a cocycle with nonzero periods the graph itself supports no primitive;
unwinding the homology generators does.  :func:`build_cover` constructs the
finite window of that cover with deck coordinates ``h`` in ``Z^k`` bounded
by ``|h|_inf <= h_max``, where ``k`` counts the spanning-tree chords with
nonzero period.  Sheets are copies of the base glued along chord edges that
shift one deck coordinate; the primitive is

    phi(x, h) = f0(x) + h . periods

with ``f0`` the tree potential.  Along every lifted edge the increment of
``phi`` equals the cocycle value of the projected edge exactly.

Deck coordinates are integer bookkeeping: groups with irrationally related
periods are handled by the index, never by comparing nearby ``phi`` values.
The canonical fundamental domain is the zero sheet.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .space import GraphSpace
from .forms import VertexPath, _as_cocycle, tree_primitive

__all__ = ["WindowExceeded", "CoverWindow", "LiftedPath", "build_cover", "lift_path"]

PERIOD_TOL = 1e-12


class WindowExceeded(RuntimeError):
    """A walk ran off the deck window; enlarge ``h_max`` and rebuild."""


@dataclass(frozen=True)
class LiftedPath:
    """Lift of a base path: per-step (vertex, deck coordinate) pairs."""

    cover: "CoverWindow"
    steps: tuple  # tuple of (vertex, sheet tuple)

    @property
    def start(self):
        return self.steps[0]

    @property
    def end(self):
        return self.steps[-1]

    def phi_increment(self):
        (xa, ha), (xb, hb) = self.steps[0], self.steps[-1]
        return self.cover.phi_at(xb, hb) - self.cover.phi_at(xa, ha)


class CoverWindow:
    """Truncated lift of a graph space along a cocycle.  Built by
    :func:`build_cover`; immutable afterwards."""

    def __init__(self, space, omega, beta, h_max):
        self.space = space
        self.omega = omega
        self.beta = float(beta)
        self.h_max = int(h_max)
        if self.h_max < 0:
            raise ValueError("h_max must be nonnegative")
        f0, chords = tree_primitive(space, omega)
        all_periods = np.array(
            [omega.values[e] - (f0[v] - f0[u]) for e, (u, v) in
             ((e, map(int, space.edges[e])) for e in chords)]
        ) if chords else np.zeros(0)
        keep = [i for i, p in enumerate(all_periods) if abs(p) > PERIOD_TOL]
        self.rank = len(keep)
        self.periods = all_periods[keep] if keep else np.zeros(0)
        self.f0 = f0
        self._chord_coord = {chords[i]: j for j, i in enumerate(keep)}
        self._build_window()

    # -- construction ---------------------------------------------------------

    def _sheet_list(self):
        if self.rank == 0:
            return [()]
        rng = range(-self.h_max, self.h_max + 1)
        return list(itertools.product(rng, repeat=self.rank))

    def _build_window(self):
        space = self.space
        n = space.n_vertices
        self.sheets = self._sheet_list()
        self._sheet_index = {h: i for i, h in enumerate(self.sheets)}
        self.n_lifted = n * len(self.sheets)
        self.base_of = np.tile(np.arange(n), len(self.sheets))
        self.sheet_of = np.repeat(np.arange(len(self.sheets)), n)
        sheet_arr = np.array(self.sheets, dtype=np.int64).reshape(
            len(self.sheets), self.rank
        )
        self.phi = np.concatenate(
            [self.f0 + (h @ self.periods if self.rank else 0.0) for h in sheet_arr]
        )
        self.lifted_measure = np.tile(space.measure, len(self.sheets))
        self.weighted_measure = np.exp(2.0 * self.beta * self.phi) * self.lifted_measure
        # per-base-edge deck shift vectors
        shifts = np.zeros((space.n_edges, self.rank), dtype=np.int64)
        for e, j in self._chord_coord.items():
            shifts[e, j] = 1
        self.edge_shift = shifts
        edges, base_edge = [], []
        for si, h in enumerate(self.sheets):
            harr = np.array(h, dtype=np.int64)
            for e in range(space.n_edges):
                u, v = map(int, space.edges[e])
                target = tuple((harr + shifts[e]).tolist())
                ti = self._sheet_index.get(target)
                if ti is None:
                    continue  # edge walks off the window
                edges.append((si * n + u, ti * n + v))
                base_edge.append(e)
        self.lifted_edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.lifted_base_edge = np.array(base_edge, dtype=np.int64)
        self.lifted_lengths = space.lengths[self.lifted_base_edge]
        self.lifted_weights = space.weights[self.lifted_base_edge]
        for arr in (self.base_of, self.sheet_of, self.phi, self.lifted_measure,
                    self.weighted_measure, self.edge_shift, self.lifted_edges,
                    self.lifted_base_edge):
            arr.setflags(write=False)
        self._lifted_space = None

    # -- accessors --------------------------------------------------------------

    def vertex_id(self, x, sheet):
        sheet = tuple(int(c) for c in sheet)
        try:
            si = self._sheet_index[sheet]
        except KeyError:
            raise WindowExceeded(
                f"sheet {sheet} outside |h|_inf <= {self.h_max}"
            ) from None
        return si * self.space.n_vertices + int(x)

    def sheet_tuple(self, vid):
        return self.sheets[self.sheet_of[vid]]

    def project(self, vid):
        return int(self.base_of[vid])

    def phi_at(self, x, sheet):
        return float(self.phi[self.vertex_id(x, sheet)])

    def fundamental_domain(self):
        """Lifted ids of the zero sheet {(x, 0)} in base vertex order."""
        zero = tuple([0] * self.rank)
        si = self._sheet_index[zero]
        n = self.space.n_vertices
        return np.arange(si * n, (si + 1) * n)

    def deck_translate(self, vid, shift):
        """Image of a lifted vertex under the deck map T_shift."""
        shift = tuple(int(c) for c in shift)
        h = self.sheet_tuple(vid)
        target = tuple(a + b for a, b in zip(h, shift))
        return self.vertex_id(self.base_of[vid], target)

    def edge_deck_shift(self, base_edge_idx, sign=1):
        """Deck increment incurred crossing a base edge in a given direction."""
        return int(sign) * self.edge_shift[base_edge_idx]

    def lifted_space(self):
        """The window as a GraphSpace (measure renormalised to total one;
        the honest lifted measure is ``lifted_measure``)."""
        if self._lifted_space is None:
            m = self.lifted_measure / self.lifted_measure.sum()
            self._lifted_space = GraphSpace(
                self.n_lifted, self.lifted_edges, self.lifted_lengths,
                self.lifted_weights, m,
            )
        return self._lifted_space

    def summary(self):
        return {
            "rank": self.rank,
            "periods": [float(p) for p in self.periods],
            "h_max": self.h_max,
            "n_lifted_vertices": int(self.n_lifted),
            "n_lifted_edges": int(len(self.lifted_edges)),
        }


def build_cover(space, omega, h_max, beta=1.0):
    """Construct the deck window for a closed cocycle.

    If every period vanishes the rank is zero and the window is the base
    itself with the tree potential as a global primitive.
    """
    om = _as_cocycle(omega)
    if om.space is not space:
        raise ValueError("cocycle does not live on the given space")
    return CoverWindow(space, om, beta, h_max)


def lift_path(cover, path, start_sheet=None):
    """Unique lift of a base path starting on a prescribed sheet.

    Raises :class:`WindowExceeded` as soon as the walk needs a sheet outside
    the window; ``phi`` increments along the lift reproduce the base path
    integral of the cocycle exactly.
    """
    verts = path.vertices if isinstance(path, VertexPath) else tuple(path)
    if start_sheet is None:
        start_sheet = tuple([0] * cover.rank)
    h = np.array(start_sheet, dtype=np.int64)
    if len(h) != cover.rank:
        raise ValueError(f"start sheet must have {cover.rank} coordinates")
    if np.any(np.abs(h) > cover.h_max):
        raise WindowExceeded("start sheet outside the window")
    steps = [(int(verts[0]), tuple(h.tolist()))]
    for a, b in zip(verts, verts[1:]):
        if a == b:
            steps.append((int(b), tuple(h.tolist())))
            continue
        idx, sign = cover.space.edge_id(a, b)
        h = h + cover.edge_deck_shift(idx, sign)
        if np.any(np.abs(h) > cover.h_max):
            raise WindowExceeded(
                f"lift reached sheet {tuple(h.tolist())} beyond h_max={cover.h_max}"
            )
        steps.append((int(b), tuple(h.tolist())))
    return LiftedPath(cover=cover, steps=tuple(steps))
