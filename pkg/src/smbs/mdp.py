"""Exact finite MDPs: validation, value iteration and augmented-MDP construction.

Transition tensors are held either dense with shape ``(S, A, S)`` or as a
sparse ``(S * A, S)`` matrix (row ``s * A + a``).  Augmented MDPs are always
built sparse since ``|S| * |A|**d`` grows quickly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

ROW_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Value iteration hit its iteration cap before reaching tolerance."""


class StateCapError(ValueError):
    """An augmented or product construction would exceed the state-count cap."""


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray | sp.spmatrix
    reward: np.ndarray
    initial_dist: np.ndarray
    discount: float = 0.99
    terminal: np.ndarray | None = None

    def __post_init__(self):
        reward = np.asarray(self.reward, dtype=np.float64)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "initial_dist", np.asarray(self.initial_dist, dtype=np.float64))
        if sp.issparse(self.transition):
            object.__setattr__(self, "transition", sp.csr_matrix(self.transition, dtype=np.float64))
        else:
            object.__setattr__(self, "transition", np.asarray(self.transition, dtype=np.float64))
        term = self.terminal
        if term is None:
            term = np.zeros(reward.shape[0], dtype=bool)
        object.__setattr__(self, "terminal", np.asarray(term, dtype=bool))

    @property
    def num_states(self) -> int:
        return self.reward.shape[0]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.transition)

    def matrix(self):
        """Transition probabilities as a 2-D ``(S*A, S)`` matrix."""
        if self.is_sparse:
            return self.transition
        return self.transition.reshape(self.num_states * self.num_actions, self.num_states)

    def row(self, s: int, a: int) -> np.ndarray:
        if self.is_sparse:
            return self.transition.getrow(s * self.num_actions + a).toarray().ravel()
        return self.transition[s, a].copy()

    def action_matrix(self, a: int):
        """``(S, S)`` matrix of P(s' | s, a) for a fixed action."""
        if self.is_sparse:
            return self.transition[a :: self.num_actions]
        return self.transition[:, a, :]

    def dense(self) -> np.ndarray:
        """Dense ``(S, A, S)`` transition tensor."""
        if self.is_sparse:
            return self.transition.toarray().reshape(self.num_states, self.num_actions, self.num_states)
        return self.transition


@dataclass
class ValueSolution:
    v_star: np.ndarray
    q_star: np.ndarray
    iterations: int
    residual: float


def validate(mdp: TabularMdp) -> list[str]:
    """Return human-readable descriptions of every violated invariant."""
    problems = []
    S, A = mdp.num_states, mdp.num_actions
    if S < 1 or A < 1:
        return [f"empty state or action space ({S}, {A})"]
    P = mdp.matrix()
    if P.shape != (S * A, S):
        return [f"transition shape {P.shape} does not match ({S * A}, {S})"]
    if mdp.initial_dist.shape != (S,):
        problems.append(f"initial_dist has shape {mdp.initial_dist.shape}, expected ({S},)")
    if not 0.0 < mdp.discount < 1.0:
        problems.append(f"discount {mdp.discount} outside (0, 1)")

    data = P.data if sp.issparse(P) else P
    if np.any(data < 0.0) or np.any(data > 1.0):
        problems.append("transition entries outside [0, 1]")
    sums = np.asarray(P.sum(axis=1)).ravel()
    for idx in np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL):
        s, a = divmod(int(idx), A)
        problems.append(f"row (s={s}, a={a}) sums to {sums[idx]!r}, not 1")
    if mdp.initial_dist.shape == (S,):
        if abs(mdp.initial_dist.sum() - 1.0) > ROW_TOL or np.any(mdp.initial_dist < 0):
            problems.append(f"initial_dist sums to {mdp.initial_dist.sum()!r}, not 1")
    if not np.all(np.isfinite(mdp.reward)):
        problems.append("non-finite rewards")

    for s in np.flatnonzero(mdp.terminal):
        for a in range(A):
            if abs(mdp.row(s, a)[s] - 1.0) > ROW_TOL:
                problems.append(f"terminal state {s} does not self-loop under action {a}")
            if mdp.reward[s, a] != 0.0:
                problems.append(f"terminal state {s} has nonzero reward {mdp.reward[s, a]} under action {a}")
    return problems


def is_deterministic(mdp: TabularMdp) -> bool:
    P = mdp.matrix()
    row_max = np.asarray(P.max(axis=1).todense()).ravel() if sp.issparse(P) else P.max(axis=1)
    return bool(np.all(row_max == 1.0))


def bellman_backup(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    v = q.max(axis=1)
    return mdp.reward + mdp.discount * np.asarray(mdp.matrix() @ v).reshape(q.shape)


def value_iteration(mdp: TabularMdp, tol: float = 1e-9, max_iter: int = 10**6) -> ValueSolution:
    """Solve for q* by repeated Bellman backups.

    Stops at the first iterate whose sup-norm Bellman residual is at most
    ``tol``; that iterate (not its backup) is returned, so the reported
    residual is exactly the residual of ``q_star``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = np.zeros((mdp.num_states, mdp.num_actions))
    for it in range(max_iter + 1):
        tq = bellman_backup(mdp, q)
        residual = float(np.max(np.abs(tq - q)))
        if residual <= tol:
            return ValueSolution(v_star=q.max(axis=1), q_star=q, iterations=it, residual=residual)
        q = tq
    raise ConvergenceError(f"value iteration did not reach tol={tol} in {max_iter} iterations")


def argmax_lowest(values, tie_tol: float = 0.0) -> int:
    """Index of the maximum, lowest index among entries within ``tie_tol`` of it."""
    values = np.asarray(values)
    if tie_tol == 0.0:
        return int(np.argmax(values))
    return int(np.flatnonzero(values >= values.max() - tie_tol)[0])


def greedy_policy(sol: ValueSolution, tie_tol: float = 0.0) -> np.ndarray:
    q = sol.q_star
    if tie_tol == 0.0:
        return np.argmax(q, axis=1)
    return np.array([argmax_lowest(row, tie_tol) for row in q])


# --- augmented states ---------------------------------------------------------


def encode_augmented(s: int, queue: Sequence[int], num_actions: int) -> int:
    """Mixed-radix index: base state major, oldest queued action most significant."""
    code = int(s)
    for a in queue:
        code = code * num_actions + int(a)
    return code


def decode_augmented(index: int, d: int, num_actions: int) -> tuple[int, tuple[int, ...]]:
    queue = []
    for _ in range(d):
        index, a = divmod(index, num_actions)
        queue.append(a)
    return index, tuple(reversed(queue))


def build_amdp(
    mdp: TabularMdp,
    d: int,
    queue_dist: np.ndarray | None = None,
    max_states: int = 10**6,
) -> TabularMdp:
    """Augmented MDP over S x A^d with the asynchronous reward r(s, a_1).

    From ``(s, a_1, ..., a_d)`` under action ``a`` the base state moves by
    ``P[s, a_1]`` and the queue becomes ``(a_2, ..., a_d, a)``.
    ``queue_dist`` is a per-slot action distribution for the initial queue
    (uniform by default); the initial augmented law is mu(s) times the
    product of per-slot probabilities.
    """
    if d < 0:
        raise ValueError("d must be nonnegative")
    S, A = mdp.num_states, mdp.num_actions
    Q = A**d
    if S * Q > max_states:
        raise StateCapError(f"{S} * {A}^{d} = {S * Q} augmented states exceeds cap {max_states}")
    if d == 0:
        return TabularMdp(
            transition=sp.csr_matrix(mdp.matrix()),
            reward=mdp.reward.copy(),
            initial_dist=mdp.initial_dist.copy(),
            discount=mdp.discount,
            terminal=mdp.terminal.copy(),
        )

    base = sp.coo_matrix(mdp.matrix())
    b_s, b_a = np.divmod(base.row, A)
    b_next, b_p = base.col, base.data

    queues = np.arange(Q)
    head = queues // A ** (d - 1)
    tail = queues % A ** (d - 1)

    rows, cols, vals = [], [], []
    for a1 in range(A):
        sel = b_a == a1
        s_, n_, p_ = b_s[sel], b_next[sel], b_p[sel]
        qs = queues[head == a1]
        qt = tail[head == a1]
        for a in range(A):
            # every (base entry, queue with this head) pair under new action a
            r_ = ((s_[:, None] * Q + qs[None, :]) * A + a).ravel()
            c_ = (n_[:, None] * Q + (qt * A + a)[None, :]).ravel()
            v_ = np.broadcast_to(p_[:, None], (len(p_), len(qs))).ravel()
            rows.append(r_)
            cols.append(c_)
            vals.append(v_)
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(S * Q * A, S * Q),
    )

    reward = np.repeat(mdp.reward[:, head][:, :, None], A, axis=2).reshape(S * Q, A)

    if queue_dist is None:
        queue_dist = np.full(A, 1.0 / A)
    queue_dist = np.asarray(queue_dist, dtype=np.float64)
    q_prob = np.ones(1)
    for _ in range(d):
        q_prob = np.outer(q_prob, queue_dist).ravel()
    init = np.outer(mdp.initial_dist, q_prob).ravel()

    return TabularMdp(transition=P, reward=reward, initial_dist=init, discount=mdp.discount)


def target_state_distribution(mdp: TabularMdp, base_state: int, queue: Sequence[int], max_states: int = 10**6) -> np.ndarray:
    """Exact law of the state the next action acts on, given (s, queue)."""
    if mdp.num_states > max_states:
        raise StateCapError(f"{mdp.num_states} states exceeds cap {max_states}")
    dist = np.zeros(mdp.num_states)
    dist[int(base_state)] = 1.0
    for a in queue:
        dist = np.asarray(mdp.action_matrix(int(a)).T @ dist).ravel()
    return dist


def shift_rewards(mdp: TabularMdp, shift: float) -> TabularMdp:
    """Affine reward shift on non-terminal states (terminal rewards stay 0)."""
    reward = mdp.reward + shift
    reward[mdp.terminal] = 0.0
    return TabularMdp(mdp.transition, reward, mdp.initial_dist, mdp.discount, mdp.terminal)


# --- text serialization -------------------------------------------------------


def dumps(mdp: TabularMdp) -> str:
    """Text form: header, one line per (s, a) with s'-probabilities then reward.

    Floats use ``repr`` (shortest round-tripping decimal).  Trailing
    ``initial`` and ``terminal`` lines carry the remaining fields.
    """
    out = io.StringIO()
    out.write(f"mdp {mdp.num_states} {mdp.num_actions} {mdp.discount!r}\n")
    P = mdp.dense()
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            out.write(" ".join(repr(float(p)) for p in P[s, a]))
            out.write(f" {float(mdp.reward[s, a])!r}\n")
    out.write("initial " + " ".join(repr(float(p)) for p in mdp.initial_dist) + "\n")
    out.write("terminal " + " ".join(str(int(t)) for t in mdp.terminal) + "\n")
    return out.getvalue()


def loads(text: str) -> TabularMdp:
    lines = text.strip().splitlines()
    tag, S, A, gamma = lines[0].split()
    if tag != "mdp":
        raise ValueError(f"not an mdp document: {lines[0]!r}")
    S, A, gamma = int(S), int(A), float(gamma)
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    for i, line in enumerate(lines[1 : 1 + S * A]):
        vals = [float(x) for x in line.split()]
        s, a = divmod(i, A)
        P[s, a] = vals[:S]
        R[s, a] = vals[S]
    init = np.array([float(x) for x in lines[1 + S * A].split()[1:]])
    term = np.array([bool(int(x)) for x in lines[2 + S * A].split()[1:]])
    return TabularMdp(P, R, init, gamma, term)


def dumps_matrix(tag: str, matrix: np.ndarray) -> str:
    """``<tag> <rows> <cols>`` header then one line of repr floats per row."""
    rows = [f"{tag} {matrix.shape[0]} {matrix.shape[1]}"]
    rows += [" ".join(repr(float(x)) for x in row) for row in matrix]
    return "\n".join(rows) + "\n"


def loads_matrix(text: str, tag: str) -> np.ndarray:
    lines = text.strip().splitlines()
    head = lines[0].split()
    if head[0] != tag:
        raise ValueError(f"expected {tag!r} document, got {head[0]!r}")
    n, m = int(head[1]), int(head[2])
    out = np.array([[float(x) for x in line.split()] for line in lines[1 : 1 + n]], dtype=np.float64)
    return out.reshape(n, m)
