"""Ratio consensus, minimum-time exact averaging, and distributed termination.

Each node runs two linear iterations (numerator alpha, denominator pi) driven
by column-stochastic weights, watches the Hankel matrices of its iterate
differences for rank loss, and recovers the exact network average from the
defective Hankel kernel.  A max-consensus ladder over step counters lets all
nodes agree on when to stop and, as a byproduct, yields the round budget
m_bar and a diameter upper bound D'.

Two indexing conventions matter and are easy to get wrong:

* Two difference windows are monitored, because two different quantities are
  extracted.  The round budget uses differences taken from the first
  *updated* iterate onward (dropping alpha[1] - alpha[0]): weight matrices
  built from out-degrees routinely carry dead-beat modes (zero eigenvalues)
  whose transient pollutes the leading difference, and with the shifted
  window the size-(M+1) Hankel completes exactly at round 2(M+1), which is
  where the counter freeze value c0 = 2(M+1) and the budget formula come
  from.  The diameter bound, by contrast, must count those dead-beat modes
  (information from a node at distance d cannot arrive before round d), so
  D' is taken from the unshifted window's degree, which dominates every
  node's in-eccentricity.
* A node may also stop at round 2*phi - 1 once its max-consensus value phi
  has settled: phi then equals the largest frozen counter network-wide, so
  2*phi - 1 is the common budget m_bar and waiting longer is pointless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInitializationError, InvalidInputError
from .graph import Digraph, SyncFabric, out_weight_matrix, round_exchange
from .linalg import as_matrix, common_kernel_vector

DEFAULT_REL_TOL = 1e-8


def m_bar(m_values) -> int:
    """Network round budget: 2 * max_j(2 * (M_j + 1)) - 1."""
    ms = list(m_values)
    if not ms or any(m < 0 for m in ms):
        raise InvalidInputError("m_bar needs at least one nonnegative degree")
    return 2 * max(2 * (m + 1) for m in ms) - 1


def diameter_upper_bound(m_values) -> int:
    """Diameter bound obtained from termination: D' = max_j M_j."""
    ms = list(m_values)
    if not ms or any(m < 0 for m in ms):
        raise InvalidInputError("diameter bound needs nonnegative degrees")
    return max(ms)


def ratio_step(alpha, pi, p):
    """One synchronous ratio-consensus update: alpha <- P alpha, pi <- P pi.

    ``alpha`` is (N,) or (N, n); ``pi`` is (N,).  Column stochasticity of P
    preserves the totals of both iterations exactly.
    """
    pm = as_matrix(p, "P")
    a = np.asarray(alpha)
    pv = np.asarray(pi)
    if a.shape[0] != pm.shape[0] or pv.shape != (pm.shape[0],):
        raise InvalidInputError("state shapes do not match P")
    return pm @ a, pm @ pv


def validate_weights(g: Digraph, p) -> np.ndarray:
    """Check that P is column-stochastic and supported exactly on g."""
    pm = as_matrix(p, "P")
    n = g.node_count
    if pm.shape != (n, n):
        raise InvalidInputError(f"P must be {n}x{n}, got {pm.shape}")
    if np.any(pm < 0):
        raise InvalidInputError("P must be nonnegative")
    colsum = pm.sum(axis=0)
    if np.max(np.abs(colsum - 1.0)) > 1e-12:
        raise InvalidInputError("P must be column-stochastic")
    support = {(j, l) for j in range(n) for l in range(n) if l != j and pm[l, j] > 0}
    if support != set(g.edges):
        raise InvalidInputError("off-diagonal support of P does not match the graph")
    return pm


@dataclass
class RatioNodeState:
    """Per-node protocol state for one consensus run."""

    node_id: int
    alpha: np.ndarray                 # information state, shape (n,)
    pi: object                        # positive scalar
    alpha_hist: list = field(default_factory=list)
    pi_hist: list = field(default_factory=list)
    c: int = 0                        # step counter, frozen at c0 after detection
    r: int = 0                        # rounds the max-consensus value has held
    phi: int = 0                      # max-consensus value
    M: int | None = None              # detected degree, shifted window (budget)
    distance_degree: int | None = None  # detected degree, unshifted window (D')
    c0: int | None = None             # frozen counter value 2*(M+1)
    mu: np.ndarray | None = None      # exact average, filled at termination
    detection_round: int | None = None
    done_round: int | None = None
    phi_done: int | None = None       # max-consensus value certified at termination

    @property
    def done(self) -> bool:
        return self.done_round is not None


def _differences(history, shift: int) -> np.ndarray:
    """Differences of successive iterates, dropping the first ``shift``."""
    arr = np.asarray(history)
    return np.diff(arr, axis=0)[shift:]


def _window_rows(seq: np.ndarray, width: int) -> np.ndarray:
    return np.array([seq[i : i + width] for i in range(len(seq) - width + 1)])


def _dtype_eps(dtype) -> float:
    if dtype == object:
        from mpmath import mp

        return 2.0 ** (1 - mp.prec)
    return float(np.finfo(np.dtype(dtype)).eps)


def _live_difference_stack(
    state: RatioNodeState, width: int, square: bool, shift: int = 1
) -> np.ndarray | None:
    """Row-normalized Hankel blocks of the sequences that still carry signal.

    Each scalar sequence (every alpha component plus pi) gets its own noise
    floor, 64 eps times the largest iterate magnitude it ever reached: a
    node whose sequence is constant up to arithmetic noise (for example when
    its row of the weight matrix is already proportional to the consensus
    functional) would otherwise present pure rounding noise as a full-rank
    Hankel.  Converged blocks impose no kernel constraint; live blocks are
    scaled by their own difference magnitude so the rank test compares
    like with like.  Returns None when every sequence has converged.

    ``square`` restricts each block to its first ``width`` windows (the
    minimal square Hankel the round-by-round monitor can afford); otherwise
    every available window contributes a row, which conditions the kernel
    better.
    """
    da = _differences(state.alpha_hist, shift)
    dp = _differences(state.pi_hist, shift)
    eps = _dtype_eps(np.asarray(state.alpha_hist[0]).dtype)
    take = 2 * width - 1 if square else len(dp)
    hist = np.asarray(state.alpha_hist, dtype=object if da.dtype == object else None)
    blocks = []
    for r in range(da.shape[1]):
        seq_scale = float(max(abs(v) for v in np.asarray(hist)[:, r].ravel()))
        d = np.asarray(da[:take, r], dtype=float)
        d_scale = float(np.max(np.abs(d))) if len(d) else 0.0
        if d_scale <= 64.0 * eps * max(seq_scale, 1e-300):
            continue
        blocks.append(_window_rows(d / d_scale, width))
    pi_scale = float(max(abs(v) for v in state.pi_hist))
    d = np.asarray(dp[:take], dtype=float)
    d_scale = float(np.max(np.abs(d))) if len(d) else 0.0
    if d_scale > 64.0 * eps * max(pi_scale, 1e-300):
        blocks.append(_window_rows(d / d_scale, width))
    if not blocks:
        return None
    return np.vstack(blocks)


def _is_defective(stack: np.ndarray | None, rel_tol: float) -> bool:
    if stack is None:
        return True
    sv = np.linalg.svd(stack, compute_uv=False)
    return sv[0] == 0 or sv[-1] <= rel_tol * sv[0]


def _final_value(state: RatioNodeState, rel_tol: float) -> np.ndarray:
    """Exact average via the shared kernel quotient, evaluated late.

    Rather than trusting the minimal square Hankel that triggered detection
    (which can look singular out of sheer ill-conditioning), the kernel
    width is re-established on the full difference history: every available
    window contributes a row, and the first width whose stack is genuinely
    rank-deficient wins.  The quotient is then taken over the latest
    complete iterate window, which suppresses residual-mode contamination.
    """
    dp = _differences(state.pi_hist, 1)
    max_width = (len(dp) + 1) // 2
    beta = None
    for width in range(1, max_width + 1):
        stack = _live_difference_stack(state, width, square=False)
        if stack is None:
            # everything converged within arithmetic noise: degree zero
            width = 1
            beta = np.ones(1)
            break
        if _is_defective(stack, rel_tol):
            beta = common_kernel_vector(stack, rel_tol)
            break
    if beta is None:
        raise DegenerateInitializationError(
            f"node {state.node_id}: no rank-deficient Hankel width up to "
            f"{max_width} at finalization",
            history=[list(state.alpha_hist)],
        )
    r_last = len(state.alpha_hist) - 1
    s0 = max(1, r_last - width + 1)
    a_win = np.stack(state.alpha_hist[s0 : s0 + width])   # (width, n)
    p_win = np.array(state.pi_hist[s0 : s0 + width])
    beta_native = beta.astype(a_win.dtype) if a_win.dtype != object else np.array(
        [a_win.flat[0] * 0 + b for b in beta], dtype=object
    )
    den = p_win @ beta_native
    return (a_win.T @ beta_native) / den


def max_consensus_step(
    g: Digraph, phi_prev, c_prev, c_current
) -> list[int]:
    """One max-consensus update over phi and the step counters.

    Node j maximizes over its in-neighborhood's previous (phi, c) and its own
    previous phi together with its own current counter (which it always
    knows without communication).
    """
    new_phi = []
    for j in range(g.node_count):
        best = max(phi_prev[j], c_current[j])
        for i in g.in_neighbors(j):
            best = max(best, phi_prev[i], c_prev[i])
        new_phi.append(best)
    return new_phi


def termination_update(state: RatioNodeState, new_phi: int, round_index: int) -> None:
    """Update the agreement counter and the done flag for one node.

    ``r`` counts how many consecutive rounds phi has held its current value,
    the attainment round included.  A node terminates once it has detected
    defectiveness and either phi has held for c0 rounds or the local budget
    2*phi - 1 has elapsed (at that point phi equals the largest frozen
    counter, so the node knows no information is still in flight).
    """
    state.r = state.r + 1 if new_phi == state.phi else 1
    state.phi = new_phi
    if state.done_round is None and state.c0 is not None:
        if state.r >= state.c0 or round_index >= 2 * state.phi - 1:
            state.done_round = round_index
            state.phi_done = state.phi


@dataclass
class AverageResult:
    """Outcome of one finite-time averaging run."""

    mu: np.ndarray                    # (N, n) per-node exact averages
    degrees: list[int]                # budget degrees M_j (shifted window)
    rounds_used: int
    detection_rounds: list[int]
    done_rounds: list[int]
    m_bar: int
    diameter_bound: int               # max over unshifted-window degrees
    distance_degrees: list[int] | None = None
    phi_done: list[int] | None = None  # certified counter maximum per node


def _init_states(g: Digraph, initial_values, dtype) -> list[RatioNodeState]:
    vals = np.asarray(initial_values)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != g.node_count:
        raise InvalidInputError(
            f"need one initial value per node, got {vals.shape[0]} for N={g.node_count}"
        )
    if vals.dtype != object and not np.all(np.isfinite(vals.astype(float))):
        raise InvalidInputError("initial values must be finite")
    states = []
    one = np.asarray(1, dtype=dtype)[()] if dtype != object else vals.flat[0] * 0 + 1
    for j in range(g.node_count):
        a = vals[j].astype(dtype) if dtype != object else vals[j]
        st = RatioNodeState(node_id=j, alpha=a.copy(), pi=one)
        st.alpha_hist.append(a.copy())
        st.pi_hist.append(one)
        states.append(st)
    return states


def _consensus_round(
    g: Digraph, p: np.ndarray, fabric: SyncFabric, states: list[RatioNodeState]
) -> None:
    """One lockstep exchange of weighted (alpha, pi) plus the counter pair."""

    def send(j):
        st = states[j]
        return [
            (l, (p[l, j] * st.alpha, p[l, j] * st.pi, st.phi, st.c))
            for l in g.out_neighbors(j)
        ]

    snapshot = [(st.alpha, st.pi) for st in states]

    def receive(j, inbox):
        st = states[j]
        a_prev, pi_prev = snapshot[j]
        a_new = p[j, j] * a_prev
        pi_new = p[j, j] * pi_prev
        for _, (a_part, pi_part, _, _) in inbox:
            a_new = a_new + a_part
            pi_new = pi_new + pi_part
        st.alpha = a_new
        st.pi = pi_new
        st.alpha_hist.append(a_new.copy())
        st.pi_hist.append(pi_new)

    round_exchange(fabric, send, receive)


def _detect(states: list[RatioNodeState], round_index: int, rel_tol: float) -> None:
    """Run the rank monitors as each new square Hankel completes.

    The shifted window (budget degree M, counter freeze) gains a new square
    at even rounds; the unshifted window (distance degree for D') gains one
    at odd rounds.
    """
    if round_index % 2 == 0:
        width = round_index // 2
        for st in states:
            if st.M is not None or width < 1:
                continue
            stack = _live_difference_stack(st, width, square=True, shift=1)
            if _is_defective(stack, rel_tol):
                st.M = width - 1
                st.c0 = 2 * (st.M + 1)
                st.c = st.c0
                st.detection_round = round_index
    else:
        width = (round_index + 1) // 2
        for st in states:
            if st.distance_degree is not None:
                continue
            stack = _live_difference_stack(st, width, square=True, shift=0)
            if _is_defective(stack, rel_tol):
                st.distance_degree = width - 1


def finite_time_average(
    g: Digraph,
    initial_values,
    rel_tol: float = DEFAULT_REL_TOL,
    weights=None,
    round_cap: int | None = None,
    dtype=float,
) -> AverageResult:
    """Run ratio consensus with distributed termination until every node stops.

    Returns the per-node exact averages together with the detected degrees,
    from which the round budget m_bar and the diameter bound D' follow.
    Raises DegenerateInitializationError if defectiveness never shows up
    within the round cap (initial values on the measure-zero bad set).
    """
    if g.node_count == 1:
        states = _init_states(g, initial_values, dtype)
        return AverageResult(
            mu=np.stack([states[0].alpha]),
            degrees=[0],
            rounds_used=0,
            detection_rounds=[0],
            done_rounds=[0],
            m_bar=m_bar([0]),
            diameter_bound=0,
            distance_degrees=[0],
        )
    p = out_weight_matrix(g) if weights is None else validate_weights(g, weights)
    if round_cap is None:
        round_cap = 4 * g.node_count + 2
    states = _init_states(g, initial_values, dtype)
    fabric = SyncFabric(g)
    for round_index in range(1, round_cap + 1):
        pre_phi = [st.phi for st in states]
        pre_c = [st.c for st in states]
        _consensus_round(g, p, fabric, states)
        for st in states:
            if st.c0 is None:
                st.c += 1
        _detect(states, round_index, rel_tol)
        new_phi = max_consensus_step(g, pre_phi, pre_c, [st.c for st in states])
        for st in states:
            termination_update(st, new_phi[st.node_id], round_index)
        if all(st.done for st in states) and all(
            st.distance_degree is not None for st in states
        ):
            break
    else:
        raise DegenerateInitializationError(
            f"no Hankel defectiveness within {round_cap} rounds; "
            "perturb the initial values and retry",
            history=[list(st.alpha_hist) for st in states],
        )
    for st in states:
        st.mu = _final_value(st, rel_tol)
    degrees = [st.M for st in states]
    distance_degrees = [st.distance_degree for st in states]
    return AverageResult(
        mu=np.stack([st.mu for st in states]),
        degrees=degrees,
        rounds_used=fabric.round_index,
        detection_rounds=[st.detection_round for st in states],
        done_rounds=[st.done_round for st in states],
        m_bar=m_bar(degrees),
        diameter_bound=diameter_upper_bound(distance_degrees),
        distance_degrees=distance_degrees,
        phi_done=[st.phi_done for st in states],
    )


def exact_average_fixed_rounds(
    g: Digraph,
    initial_values,
    rounds: int,
    rel_tol: float = DEFAULT_REL_TOL,
    weights=None,
    dtype=float,
) -> tuple[np.ndarray, int]:
    """Agreement phase under a fixed round budget (no termination counters).

    All nodes run exactly ``rounds`` exchanges; each monitors defectiveness
    along the way and evaluates its final-value quotient at the end.  Returns
    the (N, n) per-node averages and the latest detection round.
    """
    if g.node_count == 1:
        states = _init_states(g, initial_values, dtype)
        return np.stack([states[0].alpha]), 0
    p = out_weight_matrix(g) if weights is None else validate_weights(g, weights)
    states = _init_states(g, initial_values, dtype)
    fabric = SyncFabric(g)
    for round_index in range(1, rounds + 1):
        _consensus_round(g, p, fabric, states)
        _detect(states, round_index, rel_tol)
    missing = [st.node_id for st in states if st.M is None]
    if missing:
        raise DegenerateInitializationError(
            f"nodes {missing} saw no Hankel defectiveness within {rounds} rounds",
            history=[list(st.alpha_hist) for st in states],
        )
    for st in states:
        st.mu = _final_value(st, rel_tol)
    return (
        np.stack([st.mu for st in states]),
        max(st.detection_round for st in states),
    )
