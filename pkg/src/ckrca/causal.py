"""PC causal discovery over binary alert indicators.

Skeleton search runs level by level with adjacency sets frozen at the start
of each level, so the result does not depend on the order in which edges
are tested within a level. All visits are lexicographic by alert id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaincc
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .ingestion import IndicatorMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CITestResult:
    statistic: float
    p_value: float
    dof: int
    independent: bool
    degenerate: bool = False

    def __iter__(self):
        # unpacks as (statistic, p_value, independent)
        return iter((self.statistic, self.p_value, self.independent))


def chi2_sf(statistic: float, dof: int) -> float:
    """Upper tail of the chi-square distribution via the regularized incomplete gamma Q(k/2, x/2)."""
    if dof <= 0:
        return 1.0
    return float(gammaincc(dof / 2.0, max(statistic, 0.0) / 2.0))


def _stratified_tables(x: np.ndarray, y: np.ndarray, Z: np.ndarray | None) -> np.ndarray:
    """2x2 counts per observed configuration of Z, shape (n_strata, 2, 2)."""
    cell = 2 * x.astype(np.int64) + y.astype(np.int64)
    if Z is None or Z.shape[1] == 0:
        return np.bincount(cell, minlength=4).reshape(1, 2, 2)
    weights = 1 << np.arange(Z.shape[1], dtype=np.int64)
    code = Z.astype(np.int64) @ weights
    _, stratum = np.unique(code, return_inverse=True)
    counts = np.bincount(stratum.ravel() * 4 + cell, minlength=4 * (stratum.max() + 1))
    return counts.reshape(-1, 2, 2)


def chi_square_statistic(tables: np.ndarray) -> tuple[float, int]:
    """Pearson statistic summed over 2x2 strata; strata with a zero margin are skipped."""
    tables = np.asarray(tables, dtype=float).reshape(-1, 2, 2)
    rows = tables.sum(axis=2)
    cols = tables.sum(axis=1)
    ok = (rows > 0).all(axis=1) & (cols > 0).all(axis=1)
    if not ok.any():
        return 0.0, 0
    t, r, c = tables[ok], rows[ok], cols[ok]
    n = t.sum(axis=(1, 2))
    expected = r[:, :, None] * c[:, None, :] / n[:, None, None]
    stat = ((t - expected) ** 2 / expected).sum()
    return float(stat), int(ok.sum())


def ci_test_columns(x: np.ndarray, y: np.ndarray, Z: np.ndarray | None = None, alpha: float = 0.05) -> CITestResult:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.min() == x.max() or y.min() == y.max():
        return CITestResult(0.0, 1.0, 0, True, degenerate=True)
    stat, dof = chi_square_statistic(_stratified_tables(x, y, Z))
    if dof == 0:
        return CITestResult(stat, 1.0, 0, True)
    p = chi2_sf(stat, dof)
    return CITestResult(stat, p, dof, p > alpha)


def chi_square_ci_test(
    m: IndicatorMatrix, x: str, y: str, S: Iterable[str] = (), alpha: float = 0.05
) -> CITestResult:
    """Test x independent of y given S on the indicator matrix."""
    S = list(S)
    if x == y:
        raise ValueError("x and y must differ")
    if x in S or y in S:
        raise ValueError("x and y must not be in the conditioning set")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    idx = {a: j for j, a in enumerate(m.alert_ids)}
    Z = m.cells[:, [idx[s] for s in S]] if S else None
    return ci_test_columns(m.cells[:, idx[x]], m.cells[:, idx[y]], Z, alpha)


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class PartialGraph:
    """Mixed graph: undirected edges as sorted pairs, directed edges as (tail, head)."""

    nodes: list[str]
    undirected: set[tuple[str, str]] = field(default_factory=set)
    directed: set[tuple[str, str]] = field(default_factory=set)

    def adjacent(self, a: str, b: str) -> bool:
        return _pair(a, b) in self.undirected or (a, b) in self.directed or (b, a) in self.directed

    def is_undirected(self, a: str, b: str) -> bool:
        return _pair(a, b) in self.undirected

    def neighbors(self, a: str) -> set[str]:
        out = {v for u, v in self.undirected if u == a} | {u for u, v in self.undirected if v == a}
        out |= {v for u, v in self.directed if u == a} | {u for u, v in self.directed if v == a}
        return out

    def parents(self, a: str) -> set[str]:
        return {u for u, v in self.directed if v == a}

    def orient(self, a: str, b: str) -> None:
        self.undirected.discard(_pair(a, b))
        self.directed.add((a, b))

    def has_directed_path(self, src: str, dst: str) -> bool:
        children: dict[str, list[str]] = {}
        for u, v in self.directed:
            children.setdefault(u, []).append(v)
        stack, seen = [src], {src}
        while stack:
            u = stack.pop()
            if u == dst:
                return True
            for v in children.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    def copy(self) -> "PartialGraph":
        return PartialGraph(list(self.nodes), set(self.undirected), set(self.directed))


@dataclass
class Cpdag:
    nodes: list[str]
    directed_edges: set[tuple[str, str]] = field(default_factory=set)
    undirected_edges: set[tuple[str, str]] = field(default_factory=set)

    def __post_init__(self):
        self.undirected_edges = {_pair(a, b) for a, b in self.undirected_edges}
        for a, b in self.directed_edges | self.undirected_edges:
            if a == b:
                raise ValueError(f"self-loop on {a}")
        if self.directed_edges & {(a, b) for a, b in self.undirected_edges} or self.directed_edges & {
            (b, a) for a, b in self.undirected_edges
        }:
            raise ValueError("directed and undirected edge sets overlap")
        check_acyclic(self.nodes, self.directed_edges)

    def successors(self) -> dict[str, list[str]]:
        """Traversal adjacency: directed edges forward, undirected edges both ways."""
        succ: dict[str, set[str]] = {n: set() for n in self.nodes}
        for a, b in self.directed_edges:
            succ[a].add(b)
        for a, b in self.undirected_edges:
            succ[a].add(b)
            succ[b].add(a)
        return {n: sorted(v) for n, v in succ.items()}

    def skeleton(self) -> set[tuple[str, str]]:
        return {_pair(a, b) for a, b in self.directed_edges} | set(self.undirected_edges)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "directed": [list(e) for e in sorted(self.directed_edges)],
            "undirected": [list(e) for e in sorted(self.undirected_edges)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Cpdag":
        return cls(
            list(d["nodes"]),
            {tuple(e) for e in d.get("directed", [])},
            {tuple(e) for e in d.get("undirected", [])},
        )

    def __eq__(self, other):
        if not isinstance(other, Cpdag):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def check_acyclic(nodes: Sequence[str], directed: Iterable[tuple[str, str]]) -> list[str]:
    ts = TopologicalSorter({n: set() for n in nodes})
    for a, b in directed:
        ts.add(b, a)
    try:
        return list(ts.static_order())
    except CycleError as exc:
        raise ValueError(f"directed part of the graph has a cycle: {exc.args[1]}") from None


def pc_skeleton(
    m: IndicatorMatrix, alpha: float = 0.05, max_cond: int = 3
) -> tuple[set[tuple[str, str]], dict[tuple[str, str], frozenset[str]]]:
    """Skeleton phase. Returns (undirected edges as sorted pairs, sepsets keyed by sorted pair)."""
    nodes = sorted(m.alert_ids)
    if len(nodes) < 2:
        return set(), {}
    col = {a: m.alert_ids.index(a) for a in nodes}
    data = m.cells
    # constant columns carry no information: separate them up front
    constant = {a for a in nodes if data[:, col[a]].min() == data[:, col[a]].max()}
    adj = {a: set(nodes) - {a} for a in nodes}
    sepsets: dict[tuple[str, str], frozenset[str]] = {}

    def test(x: str, y: str, S: tuple[str, ...]) -> bool:
        Z = data[:, [col[s] for s in S]] if S else None
        return ci_test_columns(data[:, col[x]], data[:, col[y]], Z, alpha).independent

    for level in range(0, max_cond + 1):
        frozen = {a: sorted(adj[a]) for a in nodes}
        if all(len(frozen[a]) - 1 < level for a in nodes):
            break
        removed = []
        for x, y in combinations(nodes, 2):
            if y not in adj[x]:
                continue
            if x in constant or y in constant:
                if level == 0:
                    removed.append((x, y, frozenset()))
                continue
            found = None
            for a, b in ((x, y), (y, x)):
                candidates = [v for v in frozen[a] if v != b]
                if len(candidates) < level:
                    continue
                for S in combinations(candidates, level):
                    if test(x, y, S):
                        found = frozenset(S)
                        break
                if found is not None:
                    break
            if found is not None:
                removed.append((x, y, found))
        for x, y, S in removed:
            adj[x].discard(y)
            adj[y].discard(x)
            sepsets[(x, y)] = S
    edges = {(x, y) for x in nodes for y in adj[x] if x < y}
    return edges, sepsets


def orient_colliders(
    skeleton: set[tuple[str, str]], sepsets: dict[tuple[str, str], frozenset[str]], nodes: Sequence[str] | None = None
) -> PartialGraph:
    """Orient unshielded colliders x -> z <- y where z is not in sepset(x, y).

    An edge asked to point both ways stays undirected, and orientations that
    would close a directed cycle are skipped.
    """
    skeleton = {_pair(a, b) for a, b in skeleton}
    if nodes is None:
        nodes = sorted({n for e in skeleton for n in e})
    g = PartialGraph(sorted(nodes), set(skeleton))
    proposals: list[tuple[str, str]] = []
    for z in g.nodes:
        nbrs = sorted(g.neighbors(z))
        for x, y in combinations(nbrs, 2):
            if g.adjacent(x, y):
                continue
            if z not in sepsets.get(_pair(x, y), frozenset()):
                proposals.append((x, z))
                proposals.append((y, z))
    wanted = set(proposals)
    for a, b in sorted(wanted):
        if (b, a) in wanted:
            continue
        if (a, b) in g.directed:
            continue
        if g.has_directed_path(b, a):
            logger.debug("collider orientation %s->%s skipped: would close a cycle", a, b)
            continue
        g.orient(a, b)
    return g


def _try_orient(g: PartialGraph, a: str, b: str) -> bool:
    if not g.is_undirected(a, b) or g.has_directed_path(b, a):
        return False
    g.orient(a, b)
    return True


def _meek_r1(g: PartialGraph) -> bool:
    # a -> b - c, a and c non-adjacent  =>  b -> c
    for a, b in sorted(g.directed):
        for c in sorted(g.neighbors(b)):
            if c != a and g.is_undirected(b, c) and not g.adjacent(a, c):
                if _try_orient(g, b, c):
                    return True
    return False


def _meek_r2(g: PartialGraph) -> bool:
    # a -> b -> c and a - c  =>  a -> c
    for a, c in sorted(g.undirected):
        for x, y in ((a, c), (c, a)):
            if any((x, b) in g.directed and (b, y) in g.directed for b in g.nodes):
                if _try_orient(g, x, y):
                    return True
    return False


def _meek_r3(g: PartialGraph) -> bool:
    # a - b, a - c, b -> d, c -> d, b and c non-adjacent, a - d  =>  a -> d
    for e in sorted(g.undirected):
        for a, d in (e, e[::-1]):
            cands = sorted(b for b in g.parents(d) if g.is_undirected(a, b))
            for b, c in combinations(cands, 2):
                if not g.adjacent(b, c) and _try_orient(g, a, d):
                    return True
    return False


def _meek_r4(g: PartialGraph) -> bool:
    # a - b, a - c, c -> d -> b, c and b non-adjacent, a adjacent to d  =>  a -> b
    for e in sorted(g.undirected):
        for a, b in (e, e[::-1]):
            for d in sorted(g.parents(b)):
                if not g.adjacent(a, d):
                    continue
                for c in sorted(g.parents(d)):
                    if c != b and g.is_undirected(a, c) and not g.adjacent(c, b):
                        if _try_orient(g, a, b):
                            return True
    return False


def apply_meek_rules(g: PartialGraph) -> Cpdag:
    """Apply Meek rules R1-R4 until no rule fires."""
    g = g.copy()
    rules = (_meek_r1, _meek_r2, _meek_r3, _meek_r4)
    while any(rule(g) for rule in rules):
        pass
    return Cpdag(list(g.nodes), set(g.directed), set(g.undirected))


def discover(
    m: IndicatorMatrix, alpha: float = 0.05, max_cond: int = 3
) -> tuple[Cpdag, dict[tuple[str, str], frozenset[str]]]:
    skeleton, sepsets = pc_skeleton(m, alpha, max_cond)
    nodes = sorted(m.alert_ids)
    cpdag = apply_meek_rules(orient_colliders(skeleton, sepsets, nodes))
    check_acyclic(cpdag.nodes, cpdag.directed_edges)
    return cpdag, sepsets


class PCDiscovery(BaseEstimator):
    """PC algorithm with chi-square CI tests, as an estimator.

    ``fit`` accepts an :class:`IndicatorMatrix` or a binary array plus
    ``feature_names``. Fitted attributes: ``cpdag_``, ``sepsets_``.
    """

    def __init__(self, alpha: float = 0.05, max_cond: int = 3):
        self.alpha = alpha
        self.max_cond = max_cond

    def fit(self, X, y=None, feature_names: Sequence[str] | None = None):
        if isinstance(X, IndicatorMatrix):
            m = X
        else:
            arr = check_array(X, dtype=np.uint8, ensure_min_features=1)
            if not np.isin(arr, (0, 1)).all():
                raise ValueError("PCDiscovery expects a binary matrix")
            names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(arr.shape[1])]
            m = IndicatorMatrix(list(range(arr.shape[0])), names, arr, 1)
        self.feature_names_in_ = np.array(m.alert_ids, dtype=object)
        self.cpdag_, self.sepsets_ = discover(m, self.alpha, self.max_cond)
        return self

    def adjacency_matrix(self) -> np.ndarray:
        """a[i, j] = 1 for i -> j; undirected edges set both entries."""
        check_is_fitted(self, "cpdag_")
        names = list(self.feature_names_in_)
        idx = {a: i for i, a in enumerate(names)}
        out = np.zeros((len(names), len(names)), dtype=np.uint8)
        for a, b in self.cpdag_.directed_edges:
            out[idx[a], idx[b]] = 1
        for a, b in self.cpdag_.undirected_edges:
            out[idx[a], idx[b]] = out[idx[b], idx[a]] = 1
        return out
