"""Sparse bipartite graph code construction.

Each of L graphs partitions the N left nodes (beam-space components) into M
disjoint, balanced sets, one per right node. Stacking the per-graph set
indicators modulated by a two-row matrix T yields the 2ML x N measurement
matrix; every row touches at most ceil(N/M) components, so it is realizable
with that many RF chains.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import C1Infeasible, C1Violation

MODULATION_KINDS = ("cosine", "linear")


@dataclass(frozen=True, eq=False)
class ModulationSpec:
    """Two-row modulation matrix: an all-ones row over a row of distinct values.

    Storage slot i holds the value for 1-based component n = i + 1:
    linear uses t_n = n/N, cosine uses t_n = 2 cos(n*omega) with
    omega in (0, pi/(2N)].
    """

    kind: str
    n: int
    omega: float | None = None
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.kind not in MODULATION_KINDS:
            raise ValueError(f"unknown modulation kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("modulation needs at least one component")
        ids = np.arange(1, self.n + 1)
        if self.kind == "linear":
            if self.omega is not None:
                raise ValueError("linear modulation takes no omega")
            vals = ids / self.n
        else:
            omega = self.omega
            if omega is None:
                # largest usable spread; backed off the boundary so that
                # 2*cos(N*omega) stays strictly positive in floats
                omega = math.pi / (2 * self.n) * (1.0 - 1e-12)
            if not 0 < omega <= math.pi / (2 * self.n):
                raise ValueError("cosine modulation needs omega in (0, pi/(2N)]")
            object.__setattr__(self, "omega", omega)
            vals = 2.0 * np.cos(ids * omega)
        if np.any(vals <= 0) or np.unique(vals).size != self.n:
            raise ValueError("modulation values must be positive and distinct")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def linear(cls, n: int) -> "ModulationSpec":
        return cls(kind="linear", n=n)

    @classmethod
    def cosine(cls, n: int, omega: float | None = None) -> "ModulationSpec":
        return cls(kind="cosine", n=n, omega=omega)


@dataclass(frozen=True, eq=False)
class GraphEnsemble:
    """L balanced partitions of N left nodes into M sets, plus per-graph
    assignments of modulation slots to left nodes.

    cells[l, i] is the right node owning left node i in graph l;
    permutations[l, i] is the modulation slot node i reads from (identity
    unless a max-min permutation design has been applied).
    """

    n_left: int
    n_right: int
    n_graphs: int
    cells: np.ndarray
    permutations: np.ndarray
    seed: int | None = None

    @cached_property
    def members(self):
        """Per graph, per right node: sorted array of member left nodes."""
        out = []
        for l in range(self.n_graphs):
            order = np.argsort(self.cells[l], kind="stable")  # stable: members ascend
            bounds = np.searchsorted(self.cells[l][order], np.arange(self.n_right + 1))
            out.append(tuple(order[bounds[m]:bounds[m + 1]]
                             for m in range(self.n_right)))
        return tuple(out)

    @property
    def max_set_size(self) -> int:
        return -(-self.n_left // self.n_right)

    def set_sizes(self, graph: int) -> np.ndarray:
        return np.bincount(self.cells[graph], minlength=self.n_right)

    def permutation_is_identity(self, graph: int) -> bool:
        return bool(np.all(self.permutations[graph] == np.arange(self.n_left)))

    def modulated_values(self, mod: ModulationSpec) -> np.ndarray:
        """Effective per-node modulation values t^{(l)}, shape (L, N)."""
        if mod.n != self.n_left:
            raise ValueError("modulation length does not match the ensemble")
        return mod.values[self.permutations]

    def with_permutations(self, permutations: np.ndarray) -> "GraphEnsemble":
        return replace(self, permutations=np.asarray(permutations, dtype=int))


def balanced_set_sizes(n: int, m: int) -> tuple[int, ...]:
    """Set sizes differing by at most one, largest first."""
    base, extra = divmod(n, m)
    return (base + 1,) * extra + (base,) * (m - extra)


def build_ensemble(n: int, m: int, n_graphs: int, r_limit: int, rng_seed=None) -> GraphEnsemble:
    """Draw L independent uniformly random balanced partitions.

    Raises C1Infeasible when even balanced sets would exceed the RF-chain
    budget, i.e. ceil(N/M) > r_limit.
    """
    if m < 1 or n_graphs < 1:
        raise ValueError("need at least one set and one graph")
    if m > n:
        raise ValueError("more sets than left nodes would leave empty sets")
    r = -(-n // m)
    if r > r_limit:
        raise C1Infeasible(
            f"ceil({n}/{m}) = {r} simultaneous beams exceed the limit {r_limit}"
        )
    rng = np.random.default_rng(rng_seed)
    labels = np.repeat(np.arange(m), balanced_set_sizes(n, m))
    cells = np.empty((n_graphs, n), dtype=int)
    for l in range(n_graphs):
        cells[l, rng.permutation(n)] = labels
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return GraphEnsemble(
        n_left=n,
        n_right=m,
        n_graphs=n_graphs,
        cells=cells,
        permutations=np.tile(np.arange(n), (n_graphs, 1)),
        seed=seed,
    )


def _min_pairwise_gap(assign: np.ndarray, members, values: np.ndarray) -> float:
    """Smallest within-set gap of assigned modulation values, inf if no set
    has two members."""
    worst = math.inf
    for nodes in members:
        if nodes.size < 2:
            continue
        vals = np.sort(values[assign[nodes]])
        gap = float(np.min(np.diff(vals)))
        if gap < worst:
            worst = gap
    return worst


def _stride_assignment(members, values: np.ndarray, n: int) -> np.ndarray:
    """Deal value slots round-robin across sets, sorted by value.

    Consecutive slots (in value order) land in different sets, so each set's
    internal gap spans at least M slots; near-optimal for linear modulation.
    """
    order = np.argsort(values, kind="stable")
    sets = sorted(members, key=lambda nodes: (-nodes.size, nodes[0] if nodes.size else 0))
    buckets = [[] for _ in sets]
    for rank, slot in enumerate(order):
        buckets[rank % len(sets)].append(slot)
    assign = np.empty(n, dtype=int)
    for nodes, slots in zip(sets, buckets):
        assign[nodes] = sorted(slots)
    return assign


def design_permutations(ens: GraphEnsemble, mod: ModulationSpec,
                        search_budget: int = 2000, rng_seed=0,
                        strategy: str = "auto") -> GraphEnsemble:
    """Per-graph max-min assignment of modulation values to left nodes.

    Maximizes, over each graph independently, the minimum pairwise distance
    of values sharing a right node. Exhaustive for N <= 8 ("auto");
    otherwise a stride-interleave construction refined by budget-limited
    random pairwise swaps with restarts. Never returns an assignment worse
    than identity.
    """
    if strategy not in ("auto", "exhaustive", "heuristic"):
        raise ValueError("strategy must be auto, exhaustive or heuristic")
    rng = np.random.default_rng(rng_seed)
    values = mod.values
    n = ens.n_left
    exhaustive = strategy == "exhaustive" or (strategy == "auto" and n <= 8)
    if exhaustive and n > 10:
        raise ValueError("exhaustive permutation search is limited to N <= 10")
    new_perms = np.empty_like(ens.permutations)
    for l in range(ens.n_graphs):
        members = ens.members[l]
        identity = ens.permutations[l].copy()
        best = identity
        best_gap = _min_pairwise_gap(identity, members, values)
        if not math.isinf(best_gap):
            if exhaustive:
                for cand in itertools.permutations(range(n)):
                    cand = np.array(cand)
                    gap = _min_pairwise_gap(cand, members, values)
                    if gap > best_gap:
                        best, best_gap = cand, gap
            else:
                stride = _stride_assignment(members, values, n)
                gap = _min_pairwise_gap(stride, members, values)
                if gap > best_gap:
                    best, best_gap = stride, gap
                current, current_gap = best.copy(), best_gap
                stall = 0
                for _ in range(max(0, search_budget)):
                    if stall > 8 * n:  # restart from a random assignment
                        current = rng.permutation(n)
                        current_gap = _min_pairwise_gap(current, members, values)
                        stall = 0
                    i, j = rng.integers(0, n, size=2)
                    if ens.cells[l, i] == ens.cells[l, j]:
                        stall += 1
                        continue
                    current[i], current[j] = current[j], current[i]
                    gap = _min_pairwise_gap(current, members, values)
                    if gap > current_gap:
                        current_gap = gap
                        stall = 0
                        if gap > best_gap:
                            best, best_gap = current.copy(), gap
                    else:
                        current[i], current[j] = current[j], current[i]
                        stall += 1
        new_perms[l] = best
    return ens.with_permutations(new_perms)


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """Stacked 2ML x N measurement matrix.

    Rows come in adjacent pairs per (graph l, right node m): the set
    indicator row followed by the indicator weighted with the graph's
    effective modulation values.
    """

    array: np.ndarray
    ensemble: GraphEnsemble
    modulation: ModulationSpec

    @property
    def n_rows(self) -> int:
        return self.array.shape[0]

    @property
    def n_cols(self) -> int:
        return self.array.shape[1]

    @property
    def n_graphs(self) -> int:
        return self.ensemble.n_graphs

    @property
    def n_right(self) -> int:
        return self.ensemble.n_right

    def row_pair(self, graph: int, right_node: int) -> tuple[int, int]:
        base = 2 * self.n_right * graph + 2 * right_node
        return base, base + 1


def assemble_matrix(ens: GraphEnsemble, mod: ModulationSpec) -> MeasurementMatrix:
    """Deterministic assembly of the stacked matrix from an ensemble."""
    n, m, l_graphs = ens.n_left, ens.n_right, ens.n_graphs
    t_eff = ens.modulated_values(mod)
    a = np.zeros((2 * m * l_graphs, n))
    cols = np.arange(n)
    for l in range(l_graphs):
        rows = 2 * m * l + 2 * ens.cells[l]
        a[rows, cols] = 1.0
        a[rows + 1, cols] = t_eff[l]
    support = np.count_nonzero(a, axis=1)
    if support.max(initial=0) > ens.max_set_size:
        raise C1Violation("assembled matrix exceeds the ensemble's set size")
    a.setflags(write=False)
    return MeasurementMatrix(array=a, ensemble=ens, modulation=mod)


@dataclass(frozen=True)
class C1Report:
    ok: bool
    max_row_support: int
    worst_row: int


def c1_check(matrix, r_limit: int) -> C1Report:
    """Verify every row needs at most r_limit simultaneous beams."""
    a = matrix.array if isinstance(matrix, MeasurementMatrix) else np.asarray(matrix)
    support = np.count_nonzero(a, axis=1)
    worst = int(np.argmax(support))
    return C1Report(
        ok=bool(support[worst] <= r_limit),
        max_row_support=int(support[worst]),
        worst_row=worst,
    )


ENSEMBLE_FORMAT = "sbg-ensemble"


def ensemble_to_dict(ens: GraphEnsemble, mod: ModulationSpec) -> dict:
    return {
        "format": ENSEMBLE_FORMAT,
        "version": 1,
        "indexing": "0-based",
        "n_left": ens.n_left,
        "n_right": ens.n_right,
        "n_graphs": ens.n_graphs,
        "max_set_size": ens.max_set_size,
        "partitions": [
            [sorted(int(i) for i in nodes) for nodes in ens.members[l]]
            for l in range(ens.n_graphs)
        ],
        "permutations": ens.permutations.tolist(),
        "modulation": {"kind": mod.kind, "n": mod.n, "omega": mod.omega},
        "seed": ens.seed,
    }


def ensemble_from_dict(doc: dict) -> tuple[GraphEnsemble, ModulationSpec]:
    if doc.get("format") != ENSEMBLE_FORMAT:
        raise ValueError("not an ensemble document")
    n, m, l_graphs = doc["n_left"], doc["n_right"], doc["n_graphs"]
    cells = np.empty((l_graphs, n), dtype=int)
    for l, sets in enumerate(doc["partitions"]):
        if len(sets) != m:
            raise ValueError("partition does not match n_right")
        for label, nodes in enumerate(sets):
            cells[l, np.asarray(nodes, dtype=int)] = label
    ens = GraphEnsemble(
        n_left=n,
        n_right=m,
        n_graphs=l_graphs,
        cells=cells,
        permutations=np.asarray(doc["permutations"], dtype=int),
        seed=doc.get("seed"),
    )
    mspec = doc["modulation"]
    if mspec["kind"] == "linear":
        mod = ModulationSpec.linear(mspec["n"])
    else:
        mod = ModulationSpec.cosine(mspec["n"], mspec.get("omega"))
    return ens, mod


def save_ensemble(ens: GraphEnsemble, mod: ModulationSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(ensemble_to_dict(ens, mod), fh, indent=1)


def load_ensemble(path) -> tuple[GraphEnsemble, ModulationSpec]:
    with open(path) as fh:
        return ensemble_from_dict(json.load(fh))
