"""Synthetic networks: random connected topologies, shortest-path routing,
demand simulation and recovery-quality metrics.

A generated instance has one link per undirected edge and one demand per
ordered node pair; the route matrix column of demand (u, v) marks the
links of the breadth-first shortest path from u to v, with deterministic
lexicographic tie-breaking, so the whole instance is a pure function of
the seed.
"""

import time
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .reports import ExperimentReport
from .routes import RouteMatrix


@dataclass(frozen=True)
class TopologySpec:
    n_nodes: int
    n_links: int
    demand_lo: float = 100.0
    demand_hi: float = 300.0
    shortest_path: bool = True
    seed: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("need at least two nodes")
        if self.demand_lo > self.demand_hi:
            raise ValueError("demand_lo must not exceed demand_hi")
        if self.n_links < self.n_nodes - 1:
            raise ValueError("need at least n_nodes - 1 links for connectivity")
        if not self.shortest_path:
            raise ValueError("only shortest-path routing is supported")


@dataclass
class SyntheticInstance:
    A: RouteMatrix
    x_true: np.ndarray
    b: np.ndarray
    spec: TopologySpec
    edges: list = field(default_factory=list, repr=False)
    pairs: list = field(default_factory=list, repr=False)


def _random_connected_edges(n_nodes, n_links, rng):
    """Random tree plus extra distinct edges; sorted for determinism."""
    max_links = n_nodes * (n_nodes - 1) // 2
    n_links = min(n_links, max_links)
    perm = rng.permutation(n_nodes)
    edges = set()
    for idx in range(1, n_nodes):
        a = int(perm[idx])
        b = int(perm[rng.integers(0, idx)])
        edges.add((min(a, b), max(a, b)))
    while len(edges) < n_links:
        a = int(rng.integers(0, n_nodes))
        b = int(rng.integers(0, n_nodes))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return sorted(edges)


def _bfs_parents(adj, src):
    """Breadth-first parents with ascending-neighbor tie-breaking."""
    n = len(adj)
    parent = [-1] * n
    dist = [-1] * n
    dist[src] = 0
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                parent[w] = v
                queue.append(w)
    return parent, dist


def build_route_matrix(n_nodes, edges):
    """Route matrix for all ordered node pairs over the given edge list.

    Returns (A, pairs) where column j of A holds the links of the shortest
    path for pairs[j].  Raises if the graph is disconnected.
    """
    edges = sorted((min(a, b), max(a, b)) for a, b in edges)
    edge_id = {e: i for i, e in enumerate(edges)}
    adj = [[] for _ in range(n_nodes)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    for lst in adj:
        lst.sort()

    rows, cols = [], []
    pairs = []
    j = 0
    for src in range(n_nodes):
        parent, dist = _bfs_parents(adj, src)
        if min(dist) < 0:
            raise ValueError("graph is disconnected")
        for dst in range(n_nodes):
            if dst == src:
                continue
            v = dst
            while v != src:
                p = parent[v]
                rows.append(edge_id[(min(v, p), max(v, p))])
                cols.append(j)
                v = p
            pairs.append((src, dst))
            j += 1
    A = RouteMatrix(len(edges), j, np.array(rows), np.array(cols))
    return A, pairs


def generate_network(spec):
    """Connected random topology, shortest-path routes, simulated demands."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    last_err = None
    for _ in range(20):
        edges = _random_connected_edges(spec.n_nodes, spec.n_links, rng)
        try:
            A, pairs = build_route_matrix(spec.n_nodes, edges)
        except ValueError as exc:
            last_err = exc
            continue
        x_true = rng.uniform(spec.demand_lo, spec.demand_hi, A.n)
        b = A.matvec(x_true)
        if spec.noise_sigma > 0:
            b = b + rng.normal(0.0, spec.noise_sigma, A.m)
        return SyntheticInstance(A=A, x_true=x_true, b=b, spec=spec,
                                 edges=edges, pairs=pairs)
    raise RuntimeError("could not generate a connected topology: %s" % last_err)


def metrics(x, inst):
    """(link-load error, demand error): relative 2-norm misfits."""
    x = np.asarray(x, dtype=np.float64)
    nb = np.linalg.norm(inst.b)
    nx = np.linalg.norm(inst.x_true)
    if nb == 0 or nx == 0:
        raise ValueError("metrics need nonzero loads and demands")
    lla = float(np.linalg.norm(inst.A.matvec(x) - inst.b) / nb)
    da = float(np.linalg.norm(x - inst.x_true) / nx)
    return lla, da


def uniform_prior(inst):
    """Flat prior: every demand at the midpoint of the sampling range."""
    spec = inst.spec
    return np.full(inst.A.n, 0.5 * (spec.demand_lo + spec.demand_hi))


def run_experiment(spec, solver, cfg=None, reg_variant="entropy", lam=1.0,
                   eps=None, eps_tilde=None, trace_path=None):
    """Generate an instance, solve it with the named solver, score it.

    The prior is uniform with total mass n*(lo+hi)/2; the entropy penalty
    constrains solutions to that mass.  ``eps_tilde`` defaults to 1% of
    ||b|| for the projection solver, matching working at 1% relative
    precision on the load fit.
    """
    from . import solvers  # late import: registry lives beside the CLI

    inst = generate_network(spec)
    x_g = uniform_prior(inst)
    cfg = cfg or _default_config(spec)
    t0 = time.perf_counter()
    result = solvers.dispatch(solver, inst.A, inst.b, x_g, reg_variant, lam,
                              cfg, eps=eps, eps_tilde=eps_tilde)
    wall = time.perf_counter() - t0
    lla, da = metrics(result.x, inst)
    report = ExperimentReport(
        spec=asdict(spec), seed=spec.seed, solver=solver,
        lla=lla, da=da, iters=result.iters, flops=result.flops,
        wall_time_s=wall, trace_path=trace_path,
        extras={"x": result.x, "instance": inst, "raw": result.raw},
    )
    if trace_path:
        import json
        with open(trace_path, "w") as fh:
            json.dump({"objective_trace": list(map(float, result.obj_trace)),
                       "certificate_trace": list(map(float, result.cert_trace))},
                      fh)
    return report


def _default_config(spec):
    from .primal import SolverConfig
    return SolverConfig(seed=spec.seed)
