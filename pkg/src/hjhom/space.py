"""Finite weighted graphs as metric measure spaces.

A :class:`GraphSpace` is a connected graph whose edges carry a length
(metric units) and a conductance (inverse-length units), together with a
probability measure on vertices.  It supplies the squared-gradient
bilinear form ``gamma``, the graph Laplacian, the heat semigroup and the
sup-norm hierarchy used by the solvers.

Conventions
-----------
* ``gamma(f, g)(x)  = (1 / 2 m(x)) * sum_{y ~ x} w(xy) (f(y)-f(x)) (g(y)-g(x))``
* ``laplacian(f)(x) = (1 / m(x))   * sum_{y ~ x} w(xy) (f(y)-f(x))``

With these choices the summation-by-parts identity

    - sum_x laplacian(f)(x) g(x) m(x) = sum_x gamma(f, g)(x) m(x)

holds exactly (up to float roundoff), the Dirichlet energy is quadratic
by construction, and the heat semigroup ``exp((tau / 2 beta) * Delta)``
conserves mass and satisfies the maximum principle.

All reductions run in fixed vertex-index order so repeated runs are
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

__all__ = [
    "GraphSpace",
    "TimeGrid",
    "ScalarFieldPath",
    "VNorms",
    "gamma",
    "laplacian",
    "heat_flow",
    "v_norms",
]

#: hard cap on implicit-Euler substeps; a first-order scheme cannot reach
#: arbitrary accuracy with a sane substep count, so past this cap the call
#: proceeds at the cap (use the "eig" or "expm" backend for tighter work).
MAX_HEAT_SUBSTEPS = 100_000


class GraphSpace:
    """Connected weighted graph with edge lengths, conductances and a
    probability vertex measure.

    Parameters
    ----------
    n_vertices:
        Number of vertices, indexed ``0 .. n_vertices - 1``.
    edges:
        Array-like of shape ``(m, 2)``; each row is an unordered pair of
        distinct vertices.  The storage order of a row fixes the reference
        orientation used by edge cochains.
    lengths, weights:
        Positive per-edge arrays (metric length and conductance).
    measure:
        Positive per-vertex array summing to one.
    """

    def __init__(self, n_vertices, edges, lengths, weights, measure):
        self.n_vertices = int(n_vertices)
        self.edges = np.ascontiguousarray(edges, dtype=np.int64).reshape(-1, 2)
        self.lengths = np.asarray(lengths, dtype=float).reshape(-1)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        self.measure = np.asarray(measure, dtype=float).reshape(-1)
        self._validate()
        self._build_adjacency()
        for arr in (self.edges, self.lengths, self.weights, self.measure):
            arr.setflags(write=False)
        self._dist = None
        self._heat_basis_cache = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def cycle(cls, n, length=1.0):
        """Uniform cycle with ``n`` vertices and total circumference ``length``.

        Spacing ``h = length / n``, measure ``1/n`` per vertex and conductance
        ``1 / (length * h)``, so the Laplacian is the usual second-difference
        operator of the circle.
        """
        if n < 3:
            raise ValueError("cycle needs at least 3 vertices")
        h = length / n
        edges = [(i, (i + 1) % n) for i in range(n)]
        w = 1.0 / (length * h)
        return cls(n, edges, np.full(n, h), np.full(n, w), np.full(n, 1.0 / n))

    @classmethod
    def path_graph(cls, n, length=1.0):
        """Uniform path with ``n`` vertices spanning total length ``length``."""
        if n < 2:
            raise ValueError("path needs at least 2 vertices")
        h = length / (n - 1)
        edges = [(i, i + 1) for i in range(n - 1)]
        m = np.full(n, 1.0 / n)
        w = (1.0 / n) / h**2
        return cls(n, edges, np.full(n - 1, h), np.full(n - 1, w), m)

    # -- validation ------------------------------------------------------------

    def _validate(self):
        n, e = self.n_vertices, self.edges
        if n < 1:
            raise ValueError("empty vertex set")
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        if len(self.lengths) != len(e) or len(self.weights) != len(e):
            raise ValueError("edge data length mismatch")
        if np.any(self.lengths <= 0) or np.any(self.weights <= 0):
            raise ValueError("lengths and conductances must be positive")
        if len(self.measure) != n:
            raise ValueError("measure length mismatch")
        if np.any(self.measure <= 0) or np.any(self.measure > 1):
            raise ValueError("measure entries must lie in (0, 1]")
        if abs(self.measure.sum() - 1.0) > 1e-9:
            raise ValueError("measure must sum to one")
        key = set(map(tuple, np.sort(e, axis=1).tolist()))
        if len(key) != len(e):
            raise ValueError("parallel edges are not allowed")
        if n > 1:
            adj = sp.coo_matrix(
                (np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)
            )
            ncomp, _ = connected_components(adj, directed=False)
            if ncomp != 1:
                raise ValueError("graph must be connected")

    def _build_adjacency(self):
        n = self.n_vertices
        e = self.edges
        # per-vertex incidence sorted by (vertex, neighbour) for determinism
        half_v = np.concatenate([e[:, 0], e[:, 1]])
        half_nbr = np.concatenate([e[:, 1], e[:, 0]])
        half_edge = np.concatenate([np.arange(len(e))] * 2)
        half_sign = np.concatenate([np.ones(len(e)), -np.ones(len(e))])
        order = np.lexsort((half_nbr, half_v))
        self._inc_vertex = half_v[order]
        self._inc_nbr = half_nbr[order]
        self._inc_edge = half_edge[order]
        self._inc_sign = half_sign[order]
        self._inc_ptr = np.searchsorted(self._inc_vertex, np.arange(n + 1))
        lut = {}
        for idx, (u, v) in enumerate(map(tuple, e.tolist())):
            lut[(u, v)] = (idx, 1.0)
            lut[(v, u)] = (idx, -1.0)
        self._edge_lut = lut

    # -- basic queries ---------------------------------------------------------

    @property
    def n_edges(self):
        return len(self.edges)

    def neighbors(self, x):
        """Neighbours of ``x`` in ascending index order."""
        lo, hi = self._inc_ptr[x], self._inc_ptr[x + 1]
        return self._inc_nbr[lo:hi]

    def edge_id(self, x, y):
        """(edge index, orientation sign) of the edge joining x and y."""
        try:
            return self._edge_lut[(int(x), int(y))]
        except KeyError:
            raise KeyError(f"no edge between {x} and {y}") from None

    def are_adjacent(self, x, y):
        return (int(x), int(y)) in self._edge_lut

    def edge_differences(self, f):
        """Per-edge differences ``f(head) - f(tail)`` in storage orientation."""
        f = np.asarray(f, dtype=float)
        return f[self.edges[:, 1]] - f[self.edges[:, 0]]

    def scatter_edges(self, per_edge):
        """Sum a per-edge quantity onto both endpoints of every edge."""
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.edges[:, 0], per_edge)
        np.add.at(out, self.edges[:, 1], per_edge)
        return out

    def distances(self):
        """All-pairs shortest-path distances for the edge lengths (cached)."""
        if self._dist is None:
            n = self.n_vertices
            g = sp.coo_matrix(
                (self.lengths, (self.edges[:, 0], self.edges[:, 1])),
                shape=(n, n),
            ).tocsr()
            d = dijkstra(g, directed=False)
            d.setflags(write=False)
            self._dist = d
        return self._dist

    # -- operators -------------------------------------------------------------

    def conductance_laplacian(self):
        """Sparse PSD matrix L with  (L f)(x) = sum_y w(xy) (f(x) - f(y))."""
        n = self.n_vertices
        e, w = self.edges, self.weights
        rows = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0], e[:, 0], e[:, 1]])
        vals = np.concatenate([-w, -w, w, w])
        return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    def laplacian_matrix(self, sparse=True):
        """Matrix of the (negative-semidefinite) Laplacian Delta = -M^{-1} L."""
        lap = -sp.diags(1.0 / self.measure) @ self.conductance_laplacian()
        return lap.tocsr() if sparse else lap.toarray()

    def heat_basis(self):
        """Eigendecomposition of -Delta in the measure-weighted inner product.

        Returns ``(lam, U, msqrt, minvsqrt)`` with
        ``-Delta = diag(minvsqrt) U diag(lam) U^T diag(msqrt)`` and lam >= 0.
        """
        if self._heat_basis_cache is None:
            msqrt = np.sqrt(self.measure)
            minvsqrt = 1.0 / msqrt
            sym = self.conductance_laplacian().toarray()
            sym = minvsqrt[:, None] * sym * minvsqrt[None, :]
            sym = 0.5 * (sym + sym.T)
            lam, u = scipy.linalg.eigh(sym)
            lam = np.clip(lam, 0.0, None)
            self._heat_basis_cache = (lam, u, msqrt, minvsqrt)
        return self._heat_basis_cache

    def spectral_max(self):
        """Largest eigenvalue of -Delta."""
        return float(self.heat_basis()[0][-1])


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[t_start, 0]`` with ``steps`` intervals.

    Node ``k`` sits at ``t_k = t_start + k * dt``; node ``steps`` is ``t = 0``.
    """

    t_start: float
    steps: int

    def __post_init__(self):
        if not self.t_start < 0:
            raise ValueError("t_start must be negative")
        if self.steps < 1:
            raise ValueError("need at least one step")

    @classmethod
    def from_dt(cls, t_start, dt):
        steps = round(-t_start / dt)
        if steps < 1 or abs(steps * dt + t_start) > 1e-9 * max(1.0, -t_start):
            raise ValueError("dt must divide the horizon evenly")
        return cls(float(t_start), steps)

    @property
    def dt(self):
        return -self.t_start / self.steps

    @property
    def horizon(self):
        return -self.t_start

    @property
    def nodes(self):
        return np.linspace(self.t_start, 0.0, self.steps + 1)

    def trapezoid_weights(self):
        w = np.full(self.steps + 1, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass
class ScalarFieldPath:
    """Time-indexed vertex fields on a :class:`TimeGrid`.

    ``values[k]`` is the field at node ``k`` (``k = steps`` is ``t = 0``).
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.steps + 1:
            raise ValueError("values must have shape (steps + 1, n_vertices)")

    def at_time_zero(self):
        return self.values[-1]

    def at_start(self):
        return self.values[0]


@dataclass(frozen=True)
class VNorms:
    """Sup-norm hierarchy of a vertex field.

    ``v1**2 = linf**2 + gamma_linf`` and ``v2**2 = v1**2 + laplacian_linf**2``
    (the squared-gradient term enters unsquared as it is already quadratic).
    """

    linf: float
    v1: float
    v2: float
    gamma_linf: float
    laplacian_linf: float


def _as_field(space, f):
    f = np.asarray(f, dtype=float).reshape(-1)
    if len(f) != space.n_vertices:
        raise ValueError("field length does not match vertex count")
    if not np.all(np.isfinite(f)):
        raise ValueError("field has non-finite entries")
    return f


def gamma(space, f, g=None):
    """Squared-gradient bilinear form; ``gamma(space, f)`` means gamma(f, f)."""
    f = _as_field(space, f)
    g = f if g is None else _as_field(space, g)
    per_edge = space.weights * space.edge_differences(f) * space.edge_differences(g)
    return space.scatter_edges(per_edge) / (2.0 * space.measure)


def laplacian(space, f):
    """Graph Laplacian; non-positive-definite, kernel = constants."""
    f = _as_field(space, f)
    df = space.weights * space.edge_differences(f)
    out = np.zeros(space.n_vertices)
    np.add.at(out, space.edges[:, 0], df)
    np.add.at(out, space.edges[:, 1], -df)
    return out / space.measure


def heat_flow(space, f, tau, beta, backend="eig", substep_tol=1e-8, substeps=None):
    """Apply the heat semigroup ``exp((tau / 2 beta) * Delta)`` to ``f``.

    Backends:

    * ``"eig"``  -- exact via the cached symmetric eigendecomposition
      (default; graphs here are small).
    * ``"expm"`` -- scipy's Krylov-type matrix-exponential action; for
      graphs too large to diagonalise densely.
    * ``"euler"``-- implicit-Euler substeps, for cross-checking.  The
      substep count targets a splitting error of ``substep_tol`` from the
      first-order error model and is capped at ``MAX_HEAT_SUBSTEPS``; the
      scheme is first order, so very tight targets saturate the cap.
    """
    f = _as_field(space, f)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if beta <= 0:
        raise ValueError("beta must be positive")
    if tau == 0:
        return f.copy()
    scale = tau / (2.0 * beta)
    if backend == "eig":
        lam, u, msqrt, minvsqrt = space.heat_basis()
        coeff = u.T @ (msqrt * f)
        coeff *= np.exp(-scale * lam)
        return minvsqrt * (u @ coeff)
    if backend == "expm":
        op = (scale * space.laplacian_matrix()).tocsc()
        return sp.linalg.expm_multiply(op, f)
    if backend == "euler":
        if substeps is None:
            x = min(scale * space.spectral_max(), 36.0)
            substeps = int(min(MAX_HEAT_SUBSTEPS, max(1, np.ceil(x * x / (2.0 * substep_tol)))))
        h = scale / substeps
        m = sp.diags(space.measure).tocsc()
        sys = sp.linalg.splu((m + h * space.conductance_laplacian()).tocsc())
        out = f.copy()
        mv = space.measure
        for _ in range(substeps):
            out = sys.solve(mv * out)
        return out
    raise ValueError(f"unknown heat backend {backend!r}")


def v_norms(space, f):
    """L-infinity, first and second sup-norm levels of a field."""
    f = _as_field(space, f)
    linf = float(np.max(np.abs(f))) if len(f) else 0.0
    gam = float(np.max(gamma(space, f)))
    lap = float(np.max(np.abs(laplacian(space, f))))
    v1 = float(np.sqrt(linf**2 + gam))
    v2 = float(np.sqrt(linf**2 + gam + lap**2))
    return VNorms(linf=linf, v1=v1, v2=v2, gamma_linf=gam, laplacian_linf=lap)


def is_autonomous_potential(potential):
    return potential is None or not callable(potential)


def potential_slices(potential, space, grid):
    """Evaluate a potential on every grid node as a (steps+1, n) array.

    Accepts ``None`` (zero), a per-vertex array (time independent) or a
    callable ``t -> field``.
    """
    k = grid.steps + 1
    n = space.n_vertices
    if potential is None:
        return np.zeros((k, n))
    if callable(potential):
        return np.stack([_as_field(space, potential(t)) for t in grid.nodes])
    return np.tile(_as_field(space, potential), (k, 1))
