"""Noiseless phaseless decoding by per-graph singleton inversion.

Every right node with a nonzero measurement pair is treated as a singleton:
the second-row/first-row ratio recovers which member of the node's set is
active, the first entry recovers its magnitude. Graphs containing multitons
produce fewer nonzeros than the true sparsity, so the estimate with the
largest nonzero count wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PhaselessBatch
from .encoder import GraphEnsemble, ModulationSpec

ARCCOS_CLAMP = 1.0 - 1e-12


@dataclass(eq=False)
class MagnitudeEstimate:
    """Nonnegative estimate of |x| with provenance."""

    values: np.ndarray
    source_graph: int | str
    nonzero_count: int
    clamped_ratios: int = 0

    @classmethod
    def from_values(cls, values: np.ndarray, source_graph, clamped: int = 0):
        return cls(
            values=values,
            source_graph=source_graph,
            nonzero_count=int(np.count_nonzero(values)),
            clamped_ratios=clamped,
        )


def decode_graph(batch: PhaselessBatch, ens: GraphEnsemble, mod: ModulationSpec,
                 graph: int) -> MagnitudeEstimate:
    """Singleton-invert every nonzero right node of one graph.

    With the plain (identity) modulation assignment the analytic inverse of
    the value function gives a real-valued position that is snapped to the
    nearest index inside the right node's own set; with a permuted
    assignment the member whose value is closest to the measured ratio is
    chosen. Ties go to the smaller index. Out-of-domain arccos arguments are
    clamped and counted; they only arise from multitons misread as
    singletons, which the estimate selection discards anyway.
    """
    raw = batch.values[graph]
    comp = batch.compensated()[graph]
    est = np.zeros(ens.n_left)
    clamped = 0
    identity = ens.permutation_is_identity(graph)
    for m in np.flatnonzero(raw[:, 0] > 0):
        z = comp[m, 0]
        ratio = comp[m, 1] / z
        members = ens.members[graph][m]
        if identity:
            if mod.kind == "linear":
                pos = mod.n * ratio - 1.0
            else:
                arg = ratio / 2.0
                if not 0.0 <= arg < 1.0:
                    clamped += 1
                    arg = min(max(arg, 0.0), ARCCOS_CLAMP)
                pos = np.arccos(arg) / mod.omega - 1.0
            node = members[np.argmin(np.abs(members - pos))]
        else:
            tvals = mod.values[ens.permutations[graph, members]]
            node = members[np.argmin(np.abs(tvals - ratio))]
        est[node] = z
    return MagnitudeEstimate.from_values(est, graph, clamped)


def decode(batch: PhaselessBatch, ens: GraphEnsemble, mod: ModulationSpec) -> MagnitudeEstimate:
    """Decode all graphs, keep the estimate with the most nonzero entries.

    Ties resolve to the lowest graph index. If any graph is free of
    multitons for the true support, its estimate equals |x| exactly and has
    the maximal count, so it is the one returned.
    """
    estimates = [decode_graph(batch, ens, mod, l) for l in range(ens.n_graphs)]
    best = estimates[0]
    for cand in estimates[1:]:
        if cand.nonzero_count > best.nonzero_count:
            best = cand
    return best
