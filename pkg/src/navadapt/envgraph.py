"""Synthetic instruction-conditioned navigation worlds.

A world is a random geometric graph on a 30 m square. Each node carries a
feature vector = smooth positional landmark code + unit-variance noise, so
features are informative about location but never clean. Distribution shift
perturbs features and drops non-bridge edges without ever disconnecting the
graph. All geometry (success radius, geodesics, path lengths) is metric, in
meters, not hop counts.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import substream

WORLD_SIZE = 30.0
# Landmark code smoothness / strength relative to the unit feature noise.
LANDMARK_BANDWIDTH = 7.5
LANDMARK_AMP = 2.0
# Instruction = goal features + this much on-route landmark signal + jitter.
INSTRUCTION_LANDMARK_WEIGHT = 0.25
INSTRUCTION_JITTER = 0.05

_MAX_WORLD_ATTEMPTS = 64
_MAX_TASK_ATTEMPTS = 512


class GenerationError(RuntimeError):
    """Raised when a world or task cannot be built within the retry budget."""


@dataclass(frozen=True, eq=False)
class GraphWorld:
    """Immutable navigation graph.

    Attributes
    ----------
    positions : (N, 2) float64 array of node coordinates in meters.
    features : (N, F) float64 array of per-node observation features.
    edges : tuple of (u, v, length) with u < v; lengths are euclidean and
        strictly positive. The graph is connected and undirected.
    seed : seed the world was generated from (carried through shifts).
    """

    positions: np.ndarray
    features: np.ndarray
    edges: tuple[tuple[int, int, float], ...]
    seed: int
    _adj: dict[int, tuple[tuple[int, float], ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(len(self.positions))}
        for u, v, length in self.edges:
            adj[u].append((v, length))
            adj[v].append((u, length))
        frozen = {i: tuple(sorted(nbrs)) for i, nbrs in adj.items()}
        object.__setattr__(self, "_adj", frozen)

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def neighbors(self, node: int) -> tuple[tuple[int, float], ...]:
        """(neighbor, edge length) pairs in ascending neighbor order."""
        return self._adj[node]

    def edge_length(self, u: int, v: int) -> float:
        for nbr, length in self._adj[u]:
            if nbr == v:
                return length
        raise ValueError(f"no edge between {u} and {v}")


@dataclass(frozen=True, eq=False)
class Task:
    """One navigation episode spec: go from start to goal, instruction in hand."""

    start: int
    goal: int
    instruction: np.ndarray  # (F,) blend of goal + on-route landmark features
    success_radius: float
    max_steps: int


@dataclass(frozen=True, eq=False)
class Candidate:
    """One selectable action: STOP (node_id == current, length 0) or a move."""

    node_id: int
    features: np.ndarray
    length: float


@dataclass(frozen=True, eq=False)
class Observation:
    """What the policy sees at one step. candidates[0] is always STOP."""

    current: int
    candidates: tuple[Candidate, ...]
    step_index: int


@dataclass(frozen=True)
class Terminal:
    """End of an episode. stopped=False means the step budget ran out."""

    node: int
    stopped: bool


def _edge_radius(n_nodes: int, connectivity: float) -> float:
    # Connectivity scales the classic RGG threshold radius sqrt(2 ln n / n).
    return connectivity * WORLD_SIZE * math.sqrt(2.0 * math.log(n_nodes) / n_nodes)


def _is_connected(n_nodes: int, adj: dict[int, list[int]]) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        for nbr in adj[stack.pop()]:
            if nbr not in seen:
                seen.add(nbr)
                stack.append(nbr)
    return len(seen) == n_nodes


def _landmark_code(positions: np.ndarray, feature_dim: int, rng: np.random.Generator) -> np.ndarray:
    # Random Fourier features of position: smooth, stationary landmark field.
    omega = rng.normal(0.0, 1.0 / LANDMARK_BANDWIDTH, size=(feature_dim, 2))
    phase = rng.uniform(0.0, 2.0 * math.pi, size=feature_dim)
    return LANDMARK_AMP * math.sqrt(2.0) * np.cos(positions @ omega.T + phase)


def generate_world(
    seed: int,
    n_nodes: int = 40,
    feature_dim: int = 12,
    connectivity: float = 0.55,
) -> GraphWorld:
    """Sample a connected random geometric world.

    Nodes are uniform on the square; an edge joins every pair closer than the
    connectivity-scaled RGG radius. Disconnected draws are retried with fresh
    positions (bounded); running out of attempts raises GenerationError rather
    than silently relaxing the radius.
    """
    if n_nodes < 4:
        raise ValueError("n_nodes must be >= 4")
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    if not 0.0 < connectivity <= 2.0:
        raise ValueError("connectivity must be in (0, 2]")

    radius = _edge_radius(n_nodes, connectivity)
    for attempt in range(_MAX_WORLD_ATTEMPTS):
        rng = substream(seed, "world-geometry", attempt)
        positions = rng.uniform(0.0, WORLD_SIZE, size=(n_nodes, 2))
        edges: list[tuple[int, int, float]] = []
        adj: dict[int, list[int]] = {i: [] for i in range(n_nodes)}
        degenerate = False
        for u in range(n_nodes):
            for v in range(u + 1, n_nodes):
                d = float(np.hypot(*(positions[u] - positions[v])))
                if d < radius:
                    if d <= 1e-9:  # coincident nodes would give a zero-length edge
                        degenerate = True
                    edges.append((u, v, d))
                    adj[u].append(v)
                    adj[v].append(u)
        if degenerate or not _is_connected(n_nodes, adj):
            continue
        rng_feat = substream(seed, "world-features", attempt)
        code = _landmark_code(positions, feature_dim, rng_feat)
        noise = rng_feat.standard_normal((n_nodes, feature_dim))
        return GraphWorld(
            positions=positions,
            features=code + noise,
            edges=tuple(edges),
            seed=seed,
        )
    raise GenerationError(
        f"no connected world after {_MAX_WORLD_ATTEMPTS} attempts "
        f"(seed={seed}, n_nodes={n_nodes}, connectivity={connectivity})"
    )


def _bridges(n_nodes: int, edges: list[tuple[int, int, float]]) -> set[int]:
    """Indices into `edges` whose removal would disconnect the graph.

    Iterative lowlink DFS, one pass over the graph; the parent edge is skipped
    by index so a hypothetical parallel edge would not masquerade as a bridge.
    """
    adj: dict[int, list[tuple[int, int]]] = {k: [] for k in range(n_nodes)}
    for j, (u, v, _) in enumerate(edges):
        adj[u].append((v, j))
        adj[v].append((u, j))
    disc = [-1] * n_nodes
    low = [0] * n_nodes
    out: set[int] = set()
    counter = 0
    for root in range(n_nodes):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = counter
        counter += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            node, via_edge, neighbors = stack[-1]
            descended = False
            for nbr, j in neighbors:
                if j == via_edge:
                    continue
                if disc[nbr] == -1:
                    disc[nbr] = low[nbr] = counter
                    counter += 1
                    stack.append((nbr, j, iter(adj[nbr])))
                    descended = True
                    break
                low[node] = min(low[node], disc[nbr])
            if not descended:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        out.add(via_edge)
    return out


def apply_shift(
    world: GraphWorld,
    feature_noise_std: float,
    edge_dropout: float,
    seed: int,
) -> GraphWorld:
    """Return a shifted copy: noisier features, some non-bridge edges removed.

    Drops floor(edge_dropout * initial non-bridge count) edges one at a time,
    re-checking bridges after each removal so the graph stays connected; stops
    early if only bridges remain. The zero shift returns an equal world.
    """
    if feature_noise_std < 0.0:
        raise ValueError("feature_noise_std must be >= 0")
    if not 0.0 <= edge_dropout < 1.0:
        raise ValueError("edge_dropout must be in [0, 1)")

    features = world.features
    if feature_noise_std > 0.0:
        rng_feat = substream(seed, "shift-features")
        features = features + rng_feat.normal(0.0, feature_noise_std, size=features.shape)

    edges = list(world.edges)
    if edge_dropout > 0.0:
        rng_edge = substream(seed, "shift-edges")
        target = math.floor(edge_dropout * (len(edges) - len(_bridges(world.n_nodes, edges))))
        for _ in range(target):
            droppable = [i for i in range(len(edges)) if i not in _bridges(world.n_nodes, edges)]
            if not droppable:
                break
            edges.pop(droppable[int(rng_edge.integers(len(droppable)))])

    return GraphWorld(
        positions=world.positions,
        features=features,
        edges=tuple(edges),
        seed=world.seed,
    )


def geodesics_from(world: GraphWorld, source: int) -> np.ndarray:
    """Shortest-path metric distances from `source` to every node (Dijkstra)."""
    if not 0 <= source < world.n_nodes:
        raise ValueError(f"node {source} out of range")
    dist = np.full(world.n_nodes, np.inf)
    dist[source] = 0.0
    heap: list[tuple[float, int]] = [(0.0, source)]
    done: set[int] = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        for nbr, length in world.neighbors(node):
            nd = d + length
            if nd < dist[nbr]:
                dist[nbr] = nd
                heapq.heappush(heap, (nd, nbr))
    return dist


def geodesic(world: GraphWorld, a: int, b: int) -> float:
    """Metric shortest-path distance between two nodes."""
    if not 0 <= b < world.n_nodes:
        raise ValueError(f"node {b} out of range")
    return float(geodesics_from(world, a)[b])


def shortest_path(world: GraphWorld, a: int, b: int) -> list[int]:
    """Node sequence of one metric shortest path from a to b (ties: first found)."""
    if not 0 <= a < world.n_nodes or not 0 <= b < world.n_nodes:
        raise ValueError("node out of range")
    dist = np.full(world.n_nodes, np.inf)
    prev = np.full(world.n_nodes, -1, dtype=int)
    dist[a] = 0.0
    heap: list[tuple[float, int]] = [(0.0, a)]
    done: set[int] = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == b:
            break
        for nbr, length in world.neighbors(node):
            nd = d + length
            if nd < dist[nbr]:
                dist[nbr] = nd
                prev[nbr] = node
                heapq.heappush(heap, (nd, nbr))
    if not np.isfinite(dist[b]):
        raise GenerationError(f"no path from {a} to {b}")  # connected worlds cannot hit this
    path = [b]
    while path[-1] != a:
        path.append(int(prev[path[-1]]))
    path.reverse()
    return path


def is_success(world: GraphWorld, node: int, task: Task) -> bool:
    """Goal test: geodesic distance from node to goal within radius (inclusive)."""
    return geodesic(world, node, task.goal) <= task.success_radius


def generate_task(
    world: GraphWorld,
    seed: int,
    success_radius: float = 3.0,
    max_steps: int = 20,
) -> Task:
    """Sample a start/goal pair plus its instruction vector.

    Start and goal are rejected until their geodesic separation exceeds
    1.3x the success radius and the shortest path has at least two hops, so no
    episode is solved by standing still or by a single lucky move. Instruction
    = goal features + 0.25 * mean of two on-route landmark features + jitter.
    """
    rng = substream(seed, "task")
    for _ in range(_MAX_TASK_ATTEMPTS):
        start, goal = (int(i) for i in rng.choice(world.n_nodes, size=2, replace=False))
        if geodesic(world, start, goal) <= 1.3 * success_radius:
            continue
        route = shortest_path(world, start, goal)
        if len(route) - 1 < 2:
            continue
        interior = route[1:-1]
        if len(interior) >= 2:
            picks = rng.choice(len(interior), size=2, replace=False)
            landmarks = [interior[int(i)] for i in picks]
        else:
            landmarks = [interior[0], interior[0]]
        instruction = (
            world.features[goal]
            + INSTRUCTION_LANDMARK_WEIGHT * world.features[landmarks].mean(axis=0)
            + INSTRUCTION_JITTER * rng.standard_normal(world.feature_dim)
        )
        return Task(
            start=start,
            goal=goal,
            instruction=instruction,
            success_radius=success_radius,
            max_steps=max_steps,
        )
    raise GenerationError(
        f"no admissible start/goal pair after {_MAX_TASK_ATTEMPTS} attempts "
        f"(radius={success_radius}); world too small or radius too large"
    )


def observe(world: GraphWorld, node: int, step_index: int) -> Observation:
    """Build the observation at `node`: STOP first, then neighbors by id."""
    stop = Candidate(node_id=node, features=world.features[node], length=0.0)
    moves = tuple(
        Candidate(node_id=nbr, features=world.features[nbr], length=length)
        for nbr, length in world.neighbors(node)
    )
    return Observation(current=node, candidates=(stop,) + moves, step_index=step_index)


def step(
    world: GraphWorld,
    obs: Observation,
    action: int,
    max_steps: int,
) -> Observation | Terminal:
    """Apply one action. STOP or exhausting the budget returns Terminal."""
    if not 0 <= action < len(obs.candidates):
        raise IndexError(f"action {action} out of range for {len(obs.candidates)} candidates")
    if action == 0:
        return Terminal(node=obs.current, stopped=True)
    nxt = obs.candidates[action].node_id
    if obs.step_index + 1 >= max_steps:
        return Terminal(node=nxt, stopped=False)
    return observe(world, nxt, obs.step_index + 1)


def world_to_dict(world: GraphWorld) -> dict:
    """JSON-ready dict with stable field order (node id ascending, edges as built)."""
    return {
        "schema_version": 1,
        "seed": world.seed,
        "nodes": [
            {
                "id": i,
                "position": [float(x) for x in world.positions[i]],
                "features": [float(x) for x in world.features[i]],
            }
            for i in range(world.n_nodes)
        ],
        "edges": [[u, v, float(length)] for u, v, length in world.edges],
    }


def world_from_dict(data: dict) -> GraphWorld:
    nodes = data["nodes"]
    return GraphWorld(
        positions=np.array([n["position"] for n in nodes], dtype=float),
        features=np.array([n["features"] for n in nodes], dtype=float),
        edges=tuple((int(u), int(v), float(length)) for u, v, length in data["edges"]),
        seed=int(data["seed"]),
    )


def task_to_dict(task: Task) -> dict:
    return {
        "start": task.start,
        "goal": task.goal,
        "instruction": [float(x) for x in task.instruction],
        "success_radius": task.success_radius,
        "max_steps": task.max_steps,
    }


def task_from_dict(data: dict) -> Task:
    return Task(
        start=int(data["start"]),
        goal=int(data["goal"]),
        instruction=np.array(data["instruction"], dtype=float),
        success_radius=float(data["success_radius"]),
        max_steps=int(data["max_steps"]),
    )
