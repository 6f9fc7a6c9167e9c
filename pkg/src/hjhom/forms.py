"""Closed one-forms on a graph space.

Two interchangeable representations are supported:

* :class:`Cocycle` -- an antisymmetric real function on oriented edges,
  together with optional *contractible cycles* (vertex loops whose
  circulation must vanish; e.g. mesh faces).  On a bare graph the set is
  empty and every cocycle is closed.
* :class:`ChartForm` -- a finite family of vertex subsets with local
  primitives whose pairwise differences are constant on the connected
  components of the overlaps.

Path integration, equivalence (equal circulation on every cycle), sums,
the edgewise pairing :func:`gamma_hat`, harmonicity and periods over a
spanning-tree homology basis all live here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .space import GraphSpace, v_norms

__all__ = [
    "ChartGap",
    "Cocycle",
    "ChartForm",
    "VertexPath",
    "edge_charts",
    "local_primitive_chart",
    "integrate",
    "equivalent",
    "add",
    "path_bound_constant",
    "gamma_hat",
    "divergence",
    "is_harmonic",
    "HarmonicityReport",
    "harmonic_representative",
    "spanning_tree",
    "cycle_basis",
    "periods",
    "homology_class",
    "check_hypotheses",
    "HypothesesReport",
]

CLOSURE_TOL = 1e-12


class ChartGap(ValueError):
    """A path edge lies in no chart of a chart-represented form."""


@dataclass(frozen=True)
class VertexPath:
    """Vertex sequence with consecutive entries adjacent (or equal).

    Equal consecutive entries are zero-length rest steps; they integrate
    to zero and are allowed so that discrete minimizers, which may wait,
    are valid paths.
    """

    space: GraphSpace
    vertices: tuple

    def __post_init__(self):
        verts = tuple(int(v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 1:
            raise ValueError("empty path")
        for a, b in zip(verts, verts[1:]):
            if a != b and not self.space.are_adjacent(a, b):
                raise ValueError(f"vertices {a} and {b} are not adjacent")

    def length(self):
        total = 0.0
        for a, b in zip(self.vertices, self.vertices[1:]):
            if a != b:
                idx, _ = self.space.edge_id(a, b)
                total += self.space.lengths[idx]
        return total

    def is_loop(self):
        return self.vertices[0] == self.vertices[-1]


class Cocycle:
    """Antisymmetric edge function, closed relative to declared faces."""

    def __init__(self, space, values, faces=()):
        self.space = space
        self.values = np.asarray(values, dtype=float).reshape(-1)
        if len(self.values) != space.n_edges:
            raise ValueError("one value per edge required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("cocycle values must be finite")
        self.faces = tuple(
            f if isinstance(f, VertexPath) else VertexPath(space, tuple(f))
            for f in faces
        )
        for f in self.faces:
            if not f.is_loop():
                raise ValueError("contractible cycles must be closed loops")
            circ = _cocycle_path_integral(self, f.vertices)
            if abs(circ) > CLOSURE_TOL:
                raise ValueError(
                    f"circulation {circ:.3e} on a contractible cycle exceeds "
                    f"{CLOSURE_TOL:.0e}"
                )
        self.values.setflags(write=False)

    @classmethod
    def exact(cls, space, f, faces=()):
        """Coboundary of a vertex function: value f(head) - f(tail)."""
        return cls(space, space.edge_differences(f), faces=faces)

    @classmethod
    def constant_on_cycle(cls, space, c, faces=()):
        """Value c * (oriented arc step) on a cycle built by GraphSpace.cycle."""
        return cls(space, c * space.lengths, faces=faces)

    def value(self, x, y):
        """Oriented value on the edge from x to y; antisymmetric by storage."""
        idx, sign = self.space.edge_id(x, y)
        return sign * self.values[idx]

    def to_edge_list(self):
        """Serialisable oriented-edge/value triples [tail, head, value]."""
        return [
            [int(u), int(v), float(val)]
            for (u, v), val in zip(self.space.edges.tolist(), self.values)
        ]

    def __add__(self, other):
        return add(self, other)

    def __neg__(self):
        return Cocycle(self.space, -self.values, faces=self.faces)

    def __sub__(self, other):
        other = _as_cocycle(other)
        return add(self, Cocycle(other.space, -other.values, faces=other.faces))


class ChartForm:
    """Closed form given by charts ``(U_i, f_i)`` covering all vertices.

    Validates that on every connected component of the subgraph induced by
    an overlap ``U_i & U_j`` the difference ``f_i - f_j`` is constant.
    """

    def __init__(self, space, charts, tol=1e-9):
        self.space = space
        parsed = []
        for verts, vals in charts:
            verts = tuple(int(v) for v in verts)
            if len(set(verts)) != len(verts):
                raise ValueError("duplicate vertices in a chart")
            if isinstance(vals, dict):
                values = {int(k): float(v) for k, v in vals.items()}
            else:
                values = {v: float(x) for v, x in zip(verts, vals)}
            if set(values) != set(verts):
                raise ValueError("chart values must match its vertex set")
            parsed.append((verts, values))
        self.charts = tuple(parsed)
        covered = set()
        for verts, _ in self.charts:
            covered.update(verts)
        if covered != set(range(space.n_vertices)):
            raise ValueError("charts must cover all vertices")
        self._check_overlaps(tol)

    def _check_overlaps(self, tol):
        for i in range(len(self.charts)):
            vi, fi = self.charts[i]
            for j in range(i + 1, len(self.charts)):
                vj, fj = self.charts[j]
                overlap = sorted(set(vi) & set(vj))
                for comp in _induced_components(self.space, overlap):
                    diffs = [fi[v] - fj[v] for v in comp]
                    if max(diffs) - min(diffs) > tol:
                        raise ValueError(
                            f"charts {i} and {j} differ non-constantly on an "
                            "overlap component"
                        )

    def chart_contains_edge(self, chart_idx, x, y):
        verts = self.charts[chart_idx][0]
        return x in verts and y in verts

    def to_cocycle(self, faces=()):
        """Edgewise coboundary of the local primitives (well defined on
        overlaps by the chart condition)."""
        vals = np.empty(self.space.n_edges)
        for idx, (u, v) in enumerate(self.space.edges.tolist()):
            for verts, f in self.charts:
                if u in verts and v in verts:
                    vals[idx] = f[v] - f[u]
                    break
            else:
                raise ChartGap(f"edge ({u}, {v}) lies in no chart")
        return Cocycle(self.space, vals, faces=faces)


def edge_charts(cocycle):
    """Chart representation with one two-vertex chart per edge.

    Always valid (overlaps are single vertices) and reproduces every path
    integral of the cocycle exactly.
    """
    charts = []
    for idx, (u, v) in enumerate(cocycle.space.edges.tolist()):
        charts.append(((u, v), {u: 0.0, v: float(cocycle.values[idx])}))
    return ChartForm(cocycle.space, charts)


def local_primitive_chart(space, form, vertices):
    """Chart ``(vertices, f)`` with ``df = form`` on the induced subgraph.

    The subset must induce a connected subgraph on which the form is exact
    (consistency on non-tree induced edges is checked to 1e-9).
    """
    om = _as_cocycle(form)
    verts = sorted(int(v) for v in vertices)
    vset = set(verts)
    f = {verts[0]: 0.0}
    stack = [verts[0]]
    while stack:
        x = stack.pop()
        for y in space.neighbors(x):
            y = int(y)
            if y in vset and y not in f:
                f[y] = f[x] + om.value(x, y)
                stack.append(y)
    if set(f) != vset:
        raise ValueError("vertex subset does not induce a connected subgraph")
    for u, v in space.edges.tolist():
        if u in vset and v in vset:
            if abs((f[v] - f[u]) - om.value(u, v)) > 1e-9:
                raise ValueError("form is not exact on the induced subgraph")
    return (tuple(verts), f)


def _induced_components(space, vertices):
    """Connected components of the subgraph induced by a vertex subset."""
    vset = set(vertices)
    seen = set()
    for start in sorted(vset):
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in space.neighbors(x):
                y = int(y)
                if y in vset and y not in seen:
                    seen.add(y)
                    stack.append(y)
        yield sorted(comp)


def _as_cocycle(form):
    if isinstance(form, Cocycle):
        return form
    if isinstance(form, ChartForm):
        return form.to_cocycle()
    raise TypeError(f"not a one-form: {type(form).__name__}")


def _as_path(space, path):
    if isinstance(path, VertexPath):
        return path.vertices
    return VertexPath(space, tuple(path)).vertices


def _cocycle_path_integral(omega, verts):
    total = 0.0
    for a, b in zip(verts, verts[1:]):
        if a != b:
            total += omega.value(a, b)
    return total


def _chart_path_integral(form, verts, rng=None):
    """Adapted-partition integral: greedy maximal segments by default,
    randomised admissible segments when ``rng`` is given (the result is
    partition independent; randomisation exists to test exactly that)."""
    total = 0.0
    pos = 0
    n_charts = len(form.charts)
    while pos < len(verts) - 1:
        a, b = verts[pos], verts[pos + 1]
        if a == b:
            pos += 1
            continue
        admissible = [
            i for i in range(n_charts) if form.chart_contains_edge(i, a, b)
        ]
        if not admissible:
            raise ChartGap(f"edge ({a}, {b}) lies in no chart")
        if rng is None:
            chart = admissible[0]
        else:
            chart = admissible[int(rng.integers(len(admissible)))]
        verts_in = form.charts[chart][0]
        end = pos + 1
        while end < len(verts) - 1 and verts[end + 1] in verts_in:
            end += 1
            if rng is not None and rng.random() < 0.4:
                break
        f = form.charts[chart][1]
        total += f[verts[end]] - f[verts[pos]]
        pos = end
    return total


def integrate(form, path, rng=None):
    """Integral of a closed form along a vertex path.

    Cocycles sum oriented edge values; chart forms use an adapted
    partition (greedy maximal segments, or randomised ones when ``rng`` is
    supplied -- the value does not depend on the partition).
    """
    if isinstance(form, Cocycle):
        return _cocycle_path_integral(form, _as_path(form.space, path))
    if isinstance(form, ChartForm):
        return _chart_path_integral(form, _as_path(form.space, path), rng=rng)
    raise TypeError(f"not a one-form: {type(form).__name__}")


def add(form_a, form_b):
    """Edgewise sum; path integrals distribute over it."""
    a, b = _as_cocycle(form_a), _as_cocycle(form_b)
    if a.space is not b.space:
        raise ValueError("forms live on different spaces")
    faces = a.faces if a.faces else b.faces
    return Cocycle(a.space, a.values + b.values, faces=faces)


def equivalent(form_a, form_b, tol=1e-10):
    """True iff the two forms have equal circulation on every cycle,
    i.e. their difference is exact (zero periods on a homology basis)."""
    a, b = _as_cocycle(form_a), _as_cocycle(form_b)
    if a.space is not b.space:
        raise ValueError("forms live on different spaces")
    diff = Cocycle(a.space, a.values - b.values)
    return bool(np.all(np.abs(periods(diff)) <= tol))


def path_bound_constant(form):
    """Smallest C with |integral over p| <= C * length(p) for every path:
    the max over edges of |value| / length."""
    om = _as_cocycle(form)
    if om.space.n_edges == 0:
        return 0.0
    return float(np.max(np.abs(om.values) / om.space.lengths))


def gamma_hat(form_a, form_b=None):
    """Edgewise pairing of one-forms:

        gamma_hat(w, w')(x) = (1 / 2 m(x)) * sum_{y~x} w(xy) w_e w'_e.

    Coincides exactly with ``gamma`` of the primitives on exact forms, is
    bilinear, symmetric, and pointwise PSD on the diagonal.
    """
    a = _as_cocycle(form_a)
    b = a if form_b is None else _as_cocycle(form_b)
    space = a.space
    per_edge = space.weights * a.values * b.values
    return space.scatter_edges(per_edge) / (2.0 * space.measure)


def gamma_hat_with_gradient(form, f):
    """Pairing of a form with the coboundary of a vertex function,
    gamma_hat(form, d f), without materialising the exact form."""
    om = _as_cocycle(form)
    space = om.space
    per_edge = space.weights * om.values * space.edge_differences(f)
    return space.scatter_edges(per_edge) / (2.0 * space.measure)


def divergence(form):
    """div(form)(x) = (1 / m(x)) sum_{y~x} w(xy) form(x, y): the Laplacian
    of any local primitive."""
    om = _as_cocycle(form)
    space = om.space
    wv = space.weights * om.values
    out = np.zeros(space.n_vertices)
    np.add.at(out, space.edges[:, 0], wv)
    np.add.at(out, space.edges[:, 1], -wv)
    return out / space.measure


@dataclass(frozen=True)
class HarmonicityReport:
    harmonic: bool
    residual: np.ndarray
    max_abs: float


def is_harmonic(form, tol=1e-10):
    """Divergence-free test; returns the verdict plus the residual field."""
    res = divergence(form)
    mx = float(np.max(np.abs(res))) if len(res) else 0.0
    return HarmonicityReport(harmonic=mx <= tol, residual=res, max_abs=mx)


def harmonic_representative(form):
    """The divergence-free representative ``form + dh``, with ``h`` solving
    the Poisson problem by one conductance-Laplacian solve (gauge h(0)=0)."""
    om = _as_cocycle(form)
    space = om.space
    rhs = divergence(om) * space.measure
    lap = space.conductance_laplacian().tocsc()
    n = space.n_vertices
    h = np.zeros(n)
    if n > 1:
        keep = np.arange(1, n)
        sub = lap[keep][:, keep]
        h[1:] = spla.spsolve(sub.tocsc(), rhs[keep])
    return add(om, Cocycle.exact(space, h))


def spanning_tree(space):
    """Deterministic BFS tree from vertex 0.

    Returns ``(parent, parent_edge, order, chords)`` where ``chords`` are
    the indices of non-tree edges in ascending order.
    """
    n = space.n_vertices
    parent = np.full(n, -1, dtype=np.int64)
    parent_edge = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    order = [0]
    queue = [0]
    tree_edges = set()
    while queue:
        x = queue.pop(0)
        for y in space.neighbors(x):
            y = int(y)
            if not seen[y]:
                seen[y] = True
                idx, _ = space.edge_id(x, y)
                parent[y] = x
                parent_edge[y] = idx
                tree_edges.add(idx)
                order.append(y)
                queue.append(y)
    chords = [i for i in range(space.n_edges) if i not in tree_edges]
    return parent, parent_edge, order, chords


def tree_primitive(space, omega):
    """Vertex potential integrating the cocycle along the BFS tree
    (zero at vertex 0)."""
    parent, _, order, chords = spanning_tree(space)
    f0 = np.zeros(space.n_vertices)
    for v in order[1:]:
        f0[v] = f0[parent[v]] + omega.value(parent[v], v)
    return f0, chords


def _tree_path(space, parent, a, b):
    """Vertex path from a to b inside the BFS tree."""
    anc_a = [a]
    while parent[anc_a[-1]] >= 0:
        anc_a.append(int(parent[anc_a[-1]]))
    pos = {v: i for i, v in enumerate(anc_a)}
    up_b = [b]
    while up_b[-1] not in pos:
        up_b.append(int(parent[up_b[-1]]))
    meet = up_b[-1]
    return anc_a[: pos[meet] + 1] + up_b[-2::-1]


def cycle_basis(space):
    """One loop per spanning-tree chord: chord edge followed by the tree
    path back; deterministic (BFS order, chords ascending)."""
    parent, _, _, chords = spanning_tree(space)
    loops = []
    for e in chords:
        u, v = map(int, space.edges[e])
        loops.append(VertexPath(space, tuple([u, v] + _tree_path(space, parent, v, u)[1:])))
    return loops


def periods(form, basis=None):
    """Circulations over the homology basis; the form is exact iff all
    periods vanish."""
    om = _as_cocycle(form)
    space = om.space
    if basis is None:
        f0, chords = tree_primitive(space, om)
        out = np.empty(len(chords))
        for k, e in enumerate(chords):
            u, v = map(int, space.edges[e])
            out[k] = om.values[e] - (f0[v] - f0[u])
        return out
    return np.array([integrate(om, loop) for loop in basis])


def homology_class(space, path):
    """Signed chord-crossing counts of a loop with respect to the BFS
    basis; the loop integral of any cocycle is class . periods."""
    verts = _as_path(space, path)
    _, _, _, chords = spanning_tree(space)
    pos = {e: i for i, e in enumerate(chords)}
    h = np.zeros(len(chords), dtype=np.int64)
    for a, b in zip(verts, verts[1:]):
        if a == b:
            continue
        idx, sign = space.edge_id(a, b)
        if idx in pos:
            h[pos[idx]] += int(sign)
    return h


@dataclass(frozen=True)
class HypothesesReport:
    """Finite-graph constants entering the viscous solver tolerances."""

    gamma_hat_linf: float
    gamma_hat_v1: float
    coupling_ratio: float      # max over probes of |gamma_hat(w, dv)|_V1 / |v|_V2
    coupling_argmax: int
    potential_sup: float
    potential_lipschitz: float
    mol_dt_bound: float
    gradient_flow_tau_bound: float

    def as_dict(self):
        return {
            "gamma_hat_linf": self.gamma_hat_linf,
            "gamma_hat_v1": self.gamma_hat_v1,
            "coupling_ratio": self.coupling_ratio,
            "coupling_argmax": self.coupling_argmax,
            "potential_sup": self.potential_sup,
            "potential_lipschitz": self.potential_lipschitz,
            "mol_dt_bound": self.mol_dt_bound,
            "gradient_flow_tau_bound": self.gradient_flow_tau_bound,
        }


def check_hypotheses(space, form, potential, grid, beta, n_probes=200, seed=0):
    """Empirical report of the regularity constants used by the viscous
    solvers: sup norms of gamma_hat(w, w), the probe-maximised coupling
    ratio, potential bounds, and the resulting stable step sizes.

    On a finite graph every constant is finite; nothing universal is
    asserted.
    """
    from .space import potential_slices
    from .viscous import generator_matrix  # local import: avoid module cycle

    om = _as_cocycle(form)
    gh = gamma_hat(om)
    gh_norms = v_norms(space, gh)
    rng = np.random.default_rng(seed)
    ratio, argmax = 0.0, -1
    for i in range(n_probes):
        probe = rng.standard_normal(space.n_vertices)
        denom = v_norms(space, probe).v2
        if denom == 0.0:
            continue
        num = v_norms(space, gamma_hat_with_gradient(om, probe)).v1
        if num / denom > ratio:
            ratio, argmax = num / denom, i
    vslices = potential_slices(potential, space, grid)
    vsup = float(np.max(np.abs(vslices))) if vslices.size else 0.0
    lip = 0.0
    for k in range(vslices.shape[0]):
        dv = np.abs(space.edge_differences(vslices[k]))
        if len(dv):
            lip = max(lip, float(np.max(dv / space.lengths)))
    if vslices.shape[0] > 1:
        lip = max(lip, float(np.max(np.abs(np.diff(vslices, axis=0)))) / grid.dt)
    lam_plus = 0.0
    for k in (0, vslices.shape[0] - 1):
        a = generator_matrix(space, om, vslices[k], beta, dense=True)
        ms = np.sqrt(space.measure)
        sym = ms[:, None] * a / ms[None, :]
        sym = 0.5 * (sym + sym.T)
        lam_plus = max(lam_plus, float(np.max(np.linalg.eigvalsh(sym))))
    mol_bound = float("inf") if lam_plus <= 0 else 1.0 / lam_plus
    tau_bound = float("inf") if vsup == 0 else 1.0 / (2.0 * beta * vsup)
    return HypothesesReport(
        gamma_hat_linf=gh_norms.linf,
        gamma_hat_v1=gh_norms.v1,
        coupling_ratio=float(ratio),
        coupling_argmax=int(argmax),
        potential_sup=vsup,
        potential_lipschitz=float(lip),
        mol_dt_bound=mol_bound,
        gradient_flow_tau_bound=tau_bound,
    )
