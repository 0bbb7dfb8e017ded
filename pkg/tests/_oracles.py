"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written from first principles — plain dicts,
breadth-first search, exhaustive path enumeration, and rational arithmetic —
so that agreement with the package is evidence, not circularity.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from itertools import product


def l1_dist(u, v):
    return sum(abs(a - b) for a, b in zip(u, v))


def lattice_neighbors(x):
    out = []
    for a in range(len(x)):
        for s in (1, -1):
            out.append(tuple(c + s if i == a else c for i, c in enumerate(x)))
    return out


def edges_incident(vertex):
    """All undirected lattice edges touching `vertex`, as frozensets."""
    return {frozenset((tuple(vertex), n)) for n in lattice_neighbors(vertex)}


def edge_weight(field, edge):
    u, v = sorted(edge)
    return field.edge_value_between(u, v)


def brute_trap_check(field, y, z, n):
    """Trap definition evaluated from scratch on the edge {y, z}."""
    y, z = tuple(y), tuple(z)
    if l1_dist(y, z) != 1:
        return False
    the_edge = frozenset((y, z))
    if edge_weight(field, the_edge) < 0.5:
        return False
    fence = (edges_incident(y) | edges_incident(z)) - {the_edge}
    assert len(fence) == 4 * len(y) - 2
    for e in fence:
        w = edge_weight(field, e)
        if not (1.0 / n <= w <= 2.0 / n):
            return False
    return True


def brute_vertex_flag(field, x, n):
    """Whether some trap edge at scale n has exactly one endpoint next to x."""
    x = tuple(x)
    d = len(x)
    ball = [
        tuple(c + o for c, o in zip(x, off))
        for off in product(range(-2, 3), repeat=d)
    ]
    for u in ball:
        for v in lattice_neighbors(u):
            if x in (u, v):
                continue
            adj_u = l1_dist(x, u) == 1
            adj_v = l1_dist(x, v) == 1
            if adj_u == adj_v:
                continue
            if brute_trap_check(field, u, v, n):
                return True
    return False


def dict_bfs(adjacency, source):
    """Hop counts from source over an adjacency dict vertex -> iterable."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def flood_components(vertices, connected):
    """Partition `vertices` into components of the symmetric relation
    `connected(u, v)` restricted to lattice-neighbour pairs."""
    vertices = [tuple(v) for v in vertices]
    vset = set(vertices)
    labels = {}
    comps = []
    for start in vertices:
        if start in labels:
            continue
        comp = []
        queue = deque([start])
        labels[start] = len(comps)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in lattice_neighbors(u):
                if v in vset and v not in labels and connected(u, v):
                    labels[v] = labels[start]
                    queue.append(v)
        comps.append(sorted(comp))
    return labels, comps


def transition_row_exact(field, x, support=None):
    """Exact one-step law at x as Fractions over float edge weights.

    Adjacency (including boundary wrapping) comes from the field; the
    normalization is recomputed here in rational arithmetic.
    """
    nbrs, ws = field.incident(tuple(x))
    weights = {}
    for y, w in zip(nbrs, ws):
        if support is not None and y not in support:
            continue
        if w > 0:
            weights[y] = weights.get(y, Fraction(0)) + Fraction(float(w))
    total = sum(weights.values())
    return {y: w / total for y, w in weights.items()}


def enumerate_confined_paths(field, start, allowed, steps):
    """Exact probability, per endpoint, of staying inside `allowed` for
    `steps` steps, by exhaustive enumeration in rational arithmetic."""
    allowed = {tuple(v) for v in allowed}
    dist = {tuple(start): Fraction(1)}
    for _ in range(steps):
        nxt = {}
        for u, p in dist.items():
            row = transition_row_exact(field, u)
            for v, q in row.items():
                if v in allowed:
                    nxt[v] = nxt.get(v, Fraction(0)) + p * q
        dist = nxt
    return dist


def absorption_split_exact(field, start, hole, boundary):
    """Exact absorption probabilities and expected absorption time for the
    walk started in `hole`, absorbed on `boundary`, via rational elimination.

    Returns (probs: boundary vertex -> Fraction, expected_steps: Fraction).
    """
    hole = [tuple(v) for v in hole]
    boundary = {tuple(v) for v in boundary}
    index = {v: i for i, v in enumerate(hole)}
    m = len(hole)
    rows = []
    for u in hole:
        row_tp = transition_row_exact(field, u)
        a = [Fraction(0)] * m
        a[index[u]] = Fraction(1)
        b = {}
        for v, q in row_tp.items():
            if v in index:
                a[index[v]] -= q
            elif v in boundary:
                b[v] = b.get(v, Fraction(0)) + q
            else:
                raise AssertionError(f"leak to {v}: hole not sealed by boundary")
        rows.append((a, b))

    # Gaussian elimination over Fractions on (I - P_hole) X = B, augmented
    # with the all-ones column for the expected number of steps.
    targets = sorted(boundary)
    width = len(targets) + 1
    aug = []
    for a, b in rows:
        aug.append(list(a) + [b.get(t, Fraction(0)) for t in targets] + [Fraction(1)])
    for col in range(m):
        piv_row = next(r for r in range(col, m) if aug[r][col] != 0)
        aug[col], aug[piv_row] = aug[piv_row], aug[col]
        pivot = aug[col][col]
        aug[col] = [v / pivot for v in aug[col]]
        for r in range(m):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [v - f * w for v, w in zip(aug[r], aug[col])]
    i = index[tuple(start)] if tuple(start) in index else None
    assert i is not None
    sol = aug[i][m:]
    probs = {t: sol[j] for j, t in enumerate(targets)}
    assert sum(probs.values()) == 1
    return probs, sol[len(targets)]


def fraction_trap_mass(atoms, n, d):
    """rho at scale n for an atomic law, in exact rationals."""
    strong = sum(Fraction(p) for v, p in atoms if Fraction(v) >= Fraction(1, 2))
    window = sum(
        Fraction(p)
        for v, p in atoms
        if Fraction(1, n) <= Fraction(v) <= Fraction(2, n)
    )
    return strong * window ** (4 * d - 2)


def matrix_power_distribution(row_fn, start, steps):
    """Distribution after `steps` exact steps, dict-based, float weights."""
    dist = {tuple(start): 1.0}
    for _ in range(steps):
        nxt = {}
        for u, p in dist.items():
            for v, q in row_fn(u).items():
                nxt[v] = nxt.get(v, 0.0) + p * q
        dist = nxt
    return dist
