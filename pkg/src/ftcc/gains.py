"""Distributed selection of control and observer gains.

Placement is rank-one per eigenvalue: premultiplying the dynamics by a left
eigenvector isolates one modal direction, so the gain row
((target - lam) / (w^T b)) w^T moves that eigenvalue and provably nothing
else.  Iterating the construction (always against the already-updated
matrix) places several eigenvalues; a token carrying the accumulated
feedback F = sum_j B_j K_j walks the digraph so each agent contributes the
placements only it can make.  Once A + F is Schur stable and every target
has been consumed, the token is declared read-only and flooded, leaving the
network-wide F at every node.

Two bookkeeping details:

* The token carries the set of already-consumed targets.  An agent skips
  eigenvalues sitting within matching tolerance of a consumed target;
  without that memory a downstream agent would re-place its predecessors'
  work (the spectra overlap whenever agents share controllable modes).
* Conjugate eigenvalue pairs are placed back-to-back in complex arithmetic
  onto a conjugate pair of targets; the summed gain is then real up to
  roundoff and is realified after a residue check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    InsufficientTargetsError,
    InvalidInputError,
    ProtocolFailureError,
    UncontrollableDirectionError,
)
from .graph import Digraph, SyncFabric, bfs_distances, round_exchange
from .linalg import as_matrix, eigen_left, is_schur_stable
from .plant import LtiSystem

DEFAULT_STABILITY_MARGIN = 1e-9
CONTROLLABILITY_TOL = 1e-7
TARGET_MATCH_TOL = 1e-7


def conjugate_closed(values, tol: float = 1e-12) -> bool:
    """True iff every complex value has its conjugate in the multiset."""
    counts: dict[complex, int] = {}
    for v in values:
        v = complex(v)
        key = complex(round(v.real, 12), round(v.imag, 12))
        counts[key] = counts.get(key, 0) + 1
    for key, cnt in counts.items():
        if abs(key.imag) > tol and counts.get(key.conjugate(), 0) != cnt:
            return False
    return True


@dataclass
class PlacementTargets:
    """Ordered eigenvalue targets with consumption flags."""

    values: tuple[complex, ...]
    consumed: list[bool] = field(default_factory=list)

    def __post_init__(self):
        self.values = tuple(complex(v) for v in self.values)
        if not conjugate_closed(self.values):
            raise InvalidInputError("targets must be a conjugate-closed set")
        if not self.consumed:
            self.consumed = [False] * len(self.values)
        elif len(self.consumed) != len(self.values):
            raise InvalidInputError("consumed flags must match target count")

    @property
    def all_consumed(self) -> bool:
        return all(self.consumed)

    def consumed_values(self) -> list[complex]:
        return [v for v, used in zip(self.values, self.consumed) if used]

    def remaining(self) -> int:
        return self.consumed.count(False)

    def take_real(self) -> float | None:
        """Consume the earliest unconsumed real target."""
        for i, (v, used) in enumerate(zip(self.values, self.consumed)):
            if not used and abs(v.imag) <= 1e-12:
                self.consumed[i] = True
                return v.real
        return None

    def take_conjugate_pair(self) -> tuple[complex, complex] | None:
        """Consume the earliest unconsumed complex target with its conjugate.

        Falls back to a doubled real target (consuming two reals) when no
        complex pair remains; placing both members of an eigenvalue pair at
        one real value keeps the summed gain real.
        """
        for i, (v, used) in enumerate(zip(self.values, self.consumed)):
            if used or abs(v.imag) <= 1e-12:
                continue
            for j, (u, used_j) in enumerate(zip(self.values, self.consumed)):
                if j != i and not used_j and abs(u - v.conjugate()) <= 1e-9:
                    self.consumed[i] = True
                    self.consumed[j] = True
                    plus = v if v.imag > 0 else u
                    return plus, plus.conjugate()
        first = self.take_real()
        if first is None:
            return None
        second = self.take_real()
        if second is None:
            # only one real left; both pair members go there anyway
            return complex(first), complex(first)
        return complex(first), complex(first)


def place_single(a_eff, b, lam: complex, lam_new: complex, w) -> np.ndarray:
    """Gain row moving one eigenvalue of A_eff to lam_new along direction b.

    ``w`` must be a left eigenvector of A_eff for ``lam``; the caller is
    responsible for having recomputed it on the current (already updated)
    matrix.  Raises UncontrollableDirectionError when w^T b vanishes.
    """
    a_eff = as_matrix(a_eff, "A_eff")
    bv = np.asarray(b, dtype=complex).reshape(-1)
    wv = np.asarray(w, dtype=complex).reshape(-1)
    if len(bv) != a_eff.shape[0] or len(wv) != a_eff.shape[0]:
        raise InvalidInputError("b and w must match the state dimension")
    wb = wv @ bv
    if abs(wb) < CONTROLLABILITY_TOL * np.linalg.norm(wv) * np.linalg.norm(bv):
        raise UncontrollableDirectionError(
            f"eigenvalue {lam:.6g} is not controllable through this column "
            f"(|w^T b| = {abs(wb):.3e})"
        )
    return ((complex(lam_new) - complex(lam)) / wb) * wv[None, :]


def _matches_any(value: complex, pool, tol: float = TARGET_MATCH_TOL) -> bool:
    return any(abs(value - complex(t)) <= tol * max(1.0, abs(complex(t))) for t in pool)


def _find_pair(pairs, value: complex):
    best, best_d = None, np.inf
    for p in pairs:
        d = abs(p.value - value)
        if d < best_d:
            best, best_d = p, d
    return best


def _place_through_column(
    a_base: np.ndarray,
    column: np.ndarray,
    k_accum: np.ndarray,
    targets: PlacementTargets,
    stability_margin: float,
    policy: str,
    skip_values: list[complex],
) -> np.ndarray:
    """Place everything this column can; returns the updated gain row."""
    n = a_base.shape[0]
    for _ in range(2 * n):
        current = a_base + column[:, None] @ k_accum
        spectrum = eigen_left(current)
        candidate = None
        for p in spectrum:
            if _matches_any(p.value, skip_values):
                continue
            if policy == "stabilize" and abs(p.value) < 1.0 - stability_margin:
                continue
            if p.value.imag < -1e-12:
                continue  # conjugate pairs are handled from the +Im member
            wb = p.left_vector @ column.astype(complex)
            if abs(wb) < CONTROLLABILITY_TOL * np.linalg.norm(column):
                continue
            candidate = p
            break
        if candidate is None:
            return k_accum
        lam = candidate.value
        if abs(lam.imag) <= 1e-12:
            t = targets.take_real()
            if t is None:
                if abs(lam) >= 1.0 - stability_margin:
                    raise InsufficientTargetsError(
                        f"no real target left for unstable eigenvalue {lam.real:.6g}"
                    )
                return k_accum
            row = place_single(current, column, lam, t, candidate.left_vector)
            k_accum = k_accum + row.real
            skip_values.append(complex(t))
        else:
            pair = targets.take_conjugate_pair()
            if pair is None:
                if abs(lam) >= 1.0 - stability_margin:
                    raise InsufficientTargetsError(
                        f"no targets left for unstable pair {lam:.6g}"
                    )
                return k_accum
            t_plus, t_minus = pair
            row1 = place_single(current, column, lam, t_plus, candidate.left_vector)
            updated = current + column[:, None] @ row1
            mate = _find_pair(eigen_left(updated), lam.conjugate())
            row2 = place_single(updated, column, mate.value, t_minus, mate.left_vector)
            combined = row1 + row2
            residue = np.max(np.abs(combined.imag))
            scale = max(1.0, np.max(np.abs(combined.real)))
            if residue > 1e-8 * scale:
                raise InvalidInputError(
                    f"conjugate placement left imaginary residue {residue:.3e}"
                )
            k_accum = k_accum + combined.real
            skip_values.append(t_plus)
            if abs(t_minus - t_plus) > 1e-12:
                skip_values.append(t_minus)
        if targets.remaining() == 0 and policy == "all":
            # nothing left to consume; unstable leftovers surface below
            current = a_base + column[:, None] @ k_accum
            leftovers = [
                p.value
                for p in eigen_left(current)
                if abs(p.value) >= 1.0 - stability_margin
                and not _matches_any(p.value, skip_values)
            ]
            if leftovers:
                raise InsufficientTargetsError(
                    f"targets exhausted with unstable eigenvalues {leftovers} left"
                )
            return k_accum
    raise ProtocolFailureError("placement loop failed to converge")


def place_for_agent(
    a_eff,
    b_i,
    targets: PlacementTargets,
    stability_margin: float = DEFAULT_STABILITY_MARGIN,
    policy: str = "stabilize",
    already_placed=(),
) -> np.ndarray:
    """Gain K_i placing what agent i can reach through the columns of B_i.

    ``policy="stabilize"`` touches only eigenvalues of modulus at least
    1 - stability_margin (the bare stabilization contract);
    ``policy="all"`` walks the whole spectrum in modulus-descending order,
    which is what the token protocol runs so the closed-loop spectrum ends
    up exactly on the configured target set.  Eigenvalues within matching
    tolerance of ``already_placed`` values are never touched again.
    """
    a = as_matrix(a_eff, "A_eff")
    b = as_matrix(b_i, "B_i")
    if policy not in ("stabilize", "all"):
        raise InvalidInputError(f"unknown policy {policy!r}")
    n = a.shape[0]
    if b.shape[1] == 0:
        return np.zeros((0, n))
    skip = [complex(v) for v in already_placed]
    rows = []
    a_running = a.astype(float)
    for col in range(b.shape[1]):
        k_col = _place_through_column(
            a_running,
            b[:, col].astype(float),
            np.zeros((1, n)),
            targets,
            stability_margin,
            policy,
            skip,
        )
        rows.append(k_col)
        a_running = a_running + b[:, col : col + 1] @ k_col
    return np.vstack(rows)


def elect_leader(g: Digraph, d_prime: int, values=None) -> int:
    """Max-consensus leader election over per-node values for D' rounds.

    Every node ends up knowing the winning (value, id) pair; ties in value
    resolve to the larger id.  With the default values (node ids) the
    maximum id wins.
    """
    n = g.node_count
    if values is None:
        values = list(range(n))
    if len(values) != n:
        raise InvalidInputError("need one election value per node")
    best = [(float(values[j]), j) for j in range(n)]
    fabric = SyncFabric(g)
    for _ in range(max(d_prime, 0)):
        snapshot = list(best)

        def send(j):
            return [(l, snapshot[j]) for l in g.out_neighbors(j)]

        def receive(j, inbox):
            for _, pair in inbox:
                if pair > best[j]:
                    best[j] = pair

        round_exchange(fabric, send, receive)
    winners = {pair[1] for pair in best}
    if len(winners) != 1:
        raise ProtocolFailureError(
            f"leader election did not converge in {d_prime} rounds: views {best}"
        )
    return winners.pop()


@dataclass
class GainToken:
    """The traveling message accumulating F = sum_j B_j K_j."""

    f: np.ndarray
    visited: set[int]
    targets: PlacementTargets
    read_only: bool = False
    hop_count: int = 0


@dataclass
class TokenResult:
    """Outcome of one token pass (control or observer mode)."""

    mode: str
    gains: list[np.ndarray]          # K_i (q_i x n) or L_i (n x p_i)
    f: np.ndarray                    # accumulated feedback of the dual pair
    hop_count: int                   # point-to-point token transmissions
    flood_count: int                 # read-only transmissions
    visit_order: list[int]
    leader: int
    declared_by: int
    rounds: int


def _check_unstable_diagonalizable(a: np.ndarray, margin: float) -> None:
    """Correctness of the walk requires non-defective unstable eigenvalues."""
    pairs = eigen_left(a)
    values = [p.value for p in pairs]
    used = [False] * len(values)
    n = a.shape[0]
    for i, lam in enumerate(values):
        if used[i] or abs(lam) < 1.0 - margin:
            continue
        group = [j for j, v in enumerate(values) if abs(v - lam) < 1e-7]
        for j in group:
            used[j] = True
        if len(group) > 1:
            geo = n - np.linalg.matrix_rank(
                a.astype(complex) - lam * np.eye(n), tol=1e-9
            )
            if geo < len(group):
                raise InvalidInputError(
                    f"unstable eigenvalue {lam:.6g} is defective "
                    f"(algebraic {len(group)}, geometric {geo})"
                )


def run_token_protocol(
    g: Digraph,
    sys: LtiSystem,
    targets,
    mode: str = "control",
    priorities: dict[int, list[int]] | None = None,
    stability_margin: float = DEFAULT_STABILITY_MARGIN,
    leader: int | None = None,
    policy: str = "all",
    hop_cap: int | None = None,
) -> TokenResult:
    """Run one full token pass over the synchronous fabric.

    Control mode works on (A, B_i); observer mode runs the identical
    protocol on the dual pairs (A^T, -C_i^T / N) and transposes the
    resulting gains into L_i, so A - (1/N) sum_i L_i C_i inherits the
    placed spectrum.

    Every token receipt first checks the stop condition (A + F Schur stable
    and no unconsumed targets); the receiver then either declares the token
    read-only and floods it, or places what it can and forwards it.
    Forwarding prefers unvisited out-neighbors in priority order, falling
    back to the out-neighbor closest to the remaining unvisited set.
    """
    n_agents = g.node_count
    if mode == "control":
        base = sys.a.astype(float)
        inputs = [b.astype(float) for b in sys.b_list]
    elif mode == "observer":
        base = sys.a.T.astype(float)
        inputs = [-c.T.astype(float) / n_agents for c in sys.c_list]
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")
    if sys.agent_count != n_agents:
        raise InvalidInputError("one agent per graph node required")
    _check_unstable_diagonalizable(base, stability_margin)
    if leader is None:
        leader = n_agents - 1
    if priorities is None:
        priorities = {}
    if hop_cap is None:
        hop_cap = max(64, 8 * n_agents * n_agents)

    n = sys.n
    token = GainToken(
        f=np.zeros((n, n)),
        visited=set(),
        targets=targets
        if isinstance(targets, PlacementTargets)
        else PlacementTargets(tuple(targets)),
    )
    gains = [np.zeros((inputs[i].shape[1], n)) for i in range(n_agents)]
    visit_order: list[int] = []
    declared_by: int | None = None
    got_final = [False] * n_agents
    flooded = [False] * n_agents
    outbox: list[tuple[int, int, tuple]] = []   # (src, dst, message)
    flood_count = 0

    def ranked_out_neighbors(j: int) -> list[int]:
        order = priorities.get(j)
        outs = list(g.out_neighbors(j))
        if order is None:
            return sorted(outs)
        ranked = [v for v in order if v in outs]
        ranked += sorted(v for v in outs if v not in ranked)
        return ranked

    def route(j: int) -> int:
        """Next hop from j: unvisited neighbor first, else toward one."""
        outs = ranked_out_neighbors(j)
        if not outs:
            raise ProtocolFailureError(f"node {j} has no out-neighbors")
        unvisited_outs = [v for v in outs if v not in token.visited]
        if unvisited_outs:
            return unvisited_outs[0]
        unvisited = [v for v in range(n_agents) if v not in token.visited]
        if not unvisited:
            return outs[0]
        best, best_key = None, None
        for v in sorted(outs):
            dist = bfs_distances(g, v)
            d = min(dist[u] for u in unvisited if dist[u] >= 0)
            key = (d, v)
            if best_key is None or key < best_key:
                best, best_key = v, key
        return best

    def start_flood(j: int):
        nonlocal flood_count
        got_final[j] = True
        if flooded[j]:
            return
        flooded[j] = True
        for l in g.out_neighbors(j):
            outbox.append((j, l, ("readonly", token.f.copy())))
            flood_count += 1

    def on_token(j: int):
        nonlocal declared_by
        stable = is_schur_stable(base + token.f, 0.0)
        if stable and token.targets.all_consumed:
            token.read_only = True
            declared_by = j
            start_flood(j)
            return
        if j not in token.visited:
            token.visited.add(j)
            visit_order.append(j)
            k_i = place_for_agent(
                base + token.f,
                inputs[j],
                token.targets,
                stability_margin,
                policy=policy,
                already_placed=token.targets.consumed_values(),
            )
            gains[j] = k_i
            token.f = token.f + inputs[j] @ k_i
        if not g.out_neighbors(j):
            # single-node network: nobody else can re-check the token
            if is_schur_stable(base + token.f, 0.0) and token.targets.all_consumed:
                token.read_only = True
                declared_by = j
                start_flood(j)
                return
            raise ProtocolFailureError(
                f"node {j} holds an unfinished token with no out-neighbors"
            )
        nxt = route(j)
        token.hop_count += 1
        outbox.append((j, nxt, ("token",)))

    fabric = SyncFabric(g)
    on_token(leader)   # the leader hands the empty token to itself

    while not all(got_final):
        if token.hop_count > hop_cap:
            raise ProtocolFailureError(
                f"token exceeded hop cap {hop_cap} without going read-only"
            )
        current, outbox = outbox, []

        def send(j, batch=current):
            return [(dst, msg) for src, dst, msg in batch if src == j]

        def receive(j, inbox):
            for _, msg in inbox:
                if msg[0] == "readonly":
                    start_flood(j)
                elif msg[0] == "token" and not token.read_only:
                    on_token(j)

        if not current:
            raise ProtocolFailureError("token protocol stalled with no messages")
        round_exchange(fabric, send, receive)

    if mode == "observer":
        gains = [k.T.copy() for k in gains]
    return TokenResult(
        mode=mode,
        gains=gains,
        f=token.f,
        hop_count=token.hop_count,
        flood_count=flood_count,
        visit_order=visit_order,
        leader=leader,
        declared_by=declared_by,
        rounds=fabric.round_index,
    )
