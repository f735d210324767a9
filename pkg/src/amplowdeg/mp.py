"""Message passing on ordered pairs and the tree-indexed update F*.

Messages are stored densely: ``M[k, i]`` is the message k -> i (shape
(n, n, dim)) with the i -> i entries held at zero. One iteration costs
O(n^2 dim) using the cavity identity

    m_{i->j} = S_i - Y_ij F(m_{j->i}) / sqrt(n),   S_i = n^{-1/2} sum_{k != i} Y_ik F(m_{k->i}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .amp import GaussianLaw, Nonlinearity, QMC_POINTS, vector_se
from .model import sample_observation
from .prior import DiscretePrior, InvalidParameter
from .trees import (DirectedTreeEvaluator, GuardExceeded, RootedTree, children_decomposition,
                    enumerate_rooted_trees, eval_tree_poly, nr_count, tree_plus)

MAX_MESSAGE_BYTES = 2 * 1024**3
EXACT_TOL = 1e-9


# ---------------------------------------------------------------------------
# F*


def child_multiplicities(trees) -> np.ndarray:
    """E[a, b] = number of root subtrees of trees[a] isomorphic to trees[b]."""
    index = {t.canonical_code: k for k, t in enumerate(trees)}
    E = np.zeros((len(trees), len(trees)), dtype=int)
    for a, t in enumerate(trees):
        for sub in children_decomposition(t):
            try:
                E[a, index[sub.canonical_code]] += 1
            except KeyError:
                raise InvalidParameter(f"tree list is not closed under root removal: {sub!r}") from None
    return E


def f_star(m: np.ndarray, trees) -> np.ndarray:
    """F*(m)(T) = prod over root subtrees T' of m(T'); rows of ``m`` are vectors."""
    return FStar(trees).evaluate(m)


class FStar(Nonlinearity):
    descriptor = "f_star"

    def __init__(self, trees):
        self.trees = list(trees)
        self.dim = len(self.trees)
        self.E = child_multiplicities(self.trees)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        out = np.ones((x.shape[0], self.dim))
        for a in range(self.dim):
            for b in np.flatnonzero(self.E[a]):
                out[:, a] *= x[:, b] ** self.E[a, b]
        return out[0] if squeeze else out

    def jacobian(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        J = np.zeros((x.shape[0], self.dim, self.dim))
        for a in range(self.dim):
            support = np.flatnonzero(self.E[a])
            for b in support:
                term = self.E[a, b] * x[:, b] ** (self.E[a, b] - 1)
                for c in support:
                    if c != b:
                        term = term * x[:, c] ** self.E[a, c]
                J[:, a, b] = term
        return J


# ---------------------------------------------------------------------------
# message passing


@dataclass
class MessageField:
    t: int
    node_values: np.ndarray  # m_i^t, (n, dim)
    estimates: np.ndarray  # F_t(m_i^t), (n, dim)
    messages: np.ndarray | None = field(default=None, repr=False)  # M[k, i] = m_{k->i}


def _check_memory(n: int, dim: int):
    if n * n * dim * 8 > MAX_MESSAGE_BYTES:
        raise GuardExceeded(f"message array n*n*dim = {n}*{n}*{dim} exceeds {MAX_MESSAGE_BYTES} bytes")


def _as_schedule(F, T_iters):
    if isinstance(F, Nonlinearity):
        return [F] * (T_iters + 1)
    F = list(F)
    if len(F) < T_iters + 1:
        raise InvalidParameter("need one nonlinearity per iteration (t = 0..T)")
    return F


def mp_run(Y: np.ndarray, F, T_iters: int, m0: float = 0.0, keep_messages: bool = False) -> list:
    """Run T_iters message-passing steps; returns fields for t = 0..T_iters.

    ``F`` is a Nonlinearity or a list indexed by t (F_t is applied to the
    time-t messages). The estimate stored at time t is F_t(m_i^t). ``m0`` is
    the constant initial message in every component. Only the last field
    keeps its messages unless ``keep_messages`` is set.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    if n < 3:
        raise InvalidParameter("n must be at least 3")
    Fs = _as_schedule(F, T_iters)
    dim = Fs[0].dim
    _check_memory(n, dim)
    rn = math.sqrt(n)
    Yo = Y.copy()
    np.fill_diagonal(Yo, 0.0)
    M = np.full((n, n, dim), float(m0))
    M[np.arange(n), np.arange(n)] = 0.0
    node0 = np.full((n, dim), float(m0))
    history = [MessageField(0, node0, Fs[0].evaluate(node0), M.copy() if keep_messages else None)]
    for t in range(T_iters):
        G = Fs[t].evaluate(M.reshape(-1, dim)).reshape(n, n, dim)  # G[k, i] = F(m_{k->i})
        S = np.einsum("ik,kid->id", Yo, G) / rn
        # m_{i->j} = S_i - Y_ij G[j, i] / sqrt(n); G.transpose gives Gt[i, j] = G[j, i]
        M = S[:, None, :] - Yo[:, :, None] * G.transpose(1, 0, 2) / rn
        M[np.arange(n), np.arange(n)] = 0.0
        history.append(MessageField(t + 1, S, Fs[t + 1].evaluate(S), M if keep_messages else None))
    if not keep_messages:
        history[-1].messages = M
    return history


def mp_run_literal(Y: np.ndarray, F, T_iters: int, m0: float = 0.0) -> list:
    """Literal triple-loop version of :func:`mp_run` (testing oracle, O(n^3)); fields for t = 1..T_iters."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    Fs = _as_schedule(F, T_iters)
    dim = Fs[0].dim
    rn = math.sqrt(n)
    M = np.full((n, n, dim), float(m0))
    for i in range(n):
        M[i, i] = 0.0
    history = []
    for t in range(T_iters):
        new = np.zeros_like(M)
        node = np.zeros((n, dim))
        for i in range(n):
            for k in range(n):
                if k == i:
                    continue
                contrib = Y[i, k] * Fs[t].evaluate(M[k, i][None, :])[0] / rn
                node[i] += contrib
                for j in range(n):
                    if j != i and j != k:
                        new[i, j] += contrib
        M = new
        history.append(MessageField(t + 1, node, Fs[t + 1].evaluate(node), M.copy()))
    return history


# ---------------------------------------------------------------------------
# exact tree identity


@dataclass
class TreeCheckRow:
    tree: str
    t: int
    radius: int
    converged: bool  # t > rad(T)
    message_error: float
    node_error: float


@dataclass
class TreeIdentityReport:
    n: int
    D: int
    t_iters: int
    rows: list
    tol: float = EXACT_TOL

    @property
    def max_converged_error(self) -> float:
        errs = [max(r.message_error, r.node_error) for r in self.rows if r.converged]
        return max(errs, default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_converged_error < self.tol

    def table(self) -> str:
        lines = [f"{'tree':<12}{'t':>3}{'rad':>5}  {'status':<14}{'msg_err':>12}{'node_err':>12}"]
        for r in self.rows:
            status = "converged" if r.converged else "not yet conv."
            lines.append(f"{r.tree or '.':<12}{r.t:>3}{r.radius:>5}  {status:<14}"
                         f"{r.message_error:>12.3e}{r.node_error:>12.3e}")
        lines.append(f"max error over converged pairs: {self.max_converged_error:.3e} "
                     f"({'PASS' if self.passed else 'FAIL'} at tol {self.tol:g})")
        return "\n".join(lines)


def node_tree_value(T: RootedTree, Y: np.ndarray) -> float:
    """Value m_1^t(T) should take: sqrt(|nr(T)|) n^{-|E|/2} F_T(Y).

    This is n^{-|E|/2} times the raw sum over non-reversing labelings rooted
    at vertex 1.
    """
    n = Y.shape[0]
    if T.edge_count == 0:
        return 1.0
    return math.sqrt(nr_count(T, n)) / n ** (T.edge_count / 2) * eval_tree_poly(T, Y)


def verify_tree_to_amp(Y: np.ndarray, D: int, t_iters: int, n_pairs: int = 50,
                       rng: np.random.Generator | int = 0) -> TreeIdentityReport:
    """Compare MP with F* against naive tree-polynomial sums at every t <= t_iters.

    Messages m^t_{i->j}(T) are compared with F_{T_+, i->j}(Y) on sampled
    ordered pairs, and the estimate at vertex 1 with n^{-|E|/2} times the
    nr-labeling sum of T.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    trees = enumerate_rooted_trees(D)
    if t_iters <= max(t.radius for t in trees):
        raise InvalidParameter("t_iters must exceed the largest tree radius")
    rng = np.random.default_rng(rng)
    history = mp_run(Y, FStar(trees), t_iters, keep_messages=True)
    all_pairs = np.array([(i, j) for i in range(n) for j in range(n) if i != j])
    pick = rng.choice(len(all_pairs), size=min(n_pairs, len(all_pairs)), replace=False)
    pairs = all_pairs[np.sort(pick)]

    rows = []
    for a, T in enumerate(trees):
        ev = DirectedTreeEvaluator(tree_plus(T), n)
        target_msg = np.array([ev(Y, i, j) for i, j in pairs])
        target_node = node_tree_value(T, Y)
        for t in range(1, t_iters + 1):
            M = history[t].messages
            msg = M[pairs[:, 0], pairs[:, 1], a]
            # estimate F_t(m^t) evaluated at vertex 1 (index 0)
            rows.append(TreeCheckRow(
                tree=T.canonical_code, t=t, radius=T.radius, converged=t > T.radius,
                message_error=float(np.max(np.abs(msg - target_msg))),
                node_error=abs(float(history[t].estimates[0, a]) - target_node)))
    return TreeIdentityReport(n=n, D=D, t_iters=t_iters, rows=rows)


# ---------------------------------------------------------------------------
# vector state evolution for MP


def degree2_monomials(dim: int) -> list:
    """Monomials psi(m, theta) of degree 1 or 2: m_a, theta m_a, m_a m_b (a <= b)."""
    mons = [("m", a) for a in range(dim)]
    mons += [("theta*m", a) for a in range(dim)]
    mons += [("m*m", a, b) for a in range(dim) for b in range(a, dim)]
    return mons


def _eval_monomial(mon, m: np.ndarray, theta: np.ndarray) -> np.ndarray:
    kind = mon[0]
    if kind == "m":
        return m[:, mon[1]]
    if kind == "theta*m":
        return theta * m[:, mon[1]]
    if kind == "m*m":
        return m[:, mon[1]] * m[:, mon[2]]
    raise InvalidParameter(f"unknown monomial {mon!r}")


def monomial_name(mon, trees) -> str:
    code = lambda a: trees[a].canonical_code or "."
    if mon[0] == "m*m":
        return f"m[{code(mon[1])}]*m[{code(mon[2])}]"
    prefix = "theta*" if mon[0] == "theta*m" else ""
    return f"{prefix}m[{code(mon[1])}]"


@dataclass
class SECheckRow:
    name: str
    predicted: float
    empirical_mean: float
    std_error: float
    z: float


@dataclass
class SECheckReport:
    n: int
    D: int
    t: int
    reps: int
    rows: list

    @property
    def max_abs_z(self) -> float:
        return max((abs(r.z) for r in self.rows), default=0.0)


def mp_se_check(prior: DiscretePrior, D: int, t: int, n: int, reps: int, seed: int = 0,
                init: str = "zero", n_points: int = QMC_POINTS) -> SECheckReport:
    """z-scores of (1/n) sum_i psi(F*(m_i^t), theta_i) against the vector SE prediction.

    ``init`` is "zero" (m^0 = 0, the recursion the prediction is built for)
    or "mean" (m^0 = E[Theta] in every component, the alternative start).
    """
    trees = enumerate_rooted_trees(D)
    Fs = FStar(trees)
    dim = Fs.dim
    if init not in ("zero", "mean"):
        raise InvalidParameter("init must be 'zero' or 'mean'")
    m0 = 0.0 if init == "zero" else prior.mean
    states, _ = vector_se(prior, [Fs] * t, t, n_points=n_points)
    law = GaussianLaw(prior, states[t], n_points=n_points, qmc_seed=t)
    fx = Fs.evaluate(law.x)
    mons = degree2_monomials(dim)
    pred = np.array([law.expect(_eval_monomial(mon, fx, law.theta)) for mon in mons])

    stats = np.empty((reps, len(mons)))
    for r in range(reps):
        obs = sample_observation(prior, n, seed=(seed, r))
        field_t = mp_run(obs.Y, Fs, t, m0=m0)[t]
        est = field_t.estimates
        stats[r] = [np.mean(_eval_monomial(mon, est, obs.theta)) for mon in mons]
        del obs, field_t
    mean = stats.mean(axis=0)
    se = stats.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.full(len(mons), np.inf)
    rows = []
    for k, mon in enumerate(mons):
        diff = mean[k] - pred[k]
        if se[k] > 1e-12 * max(1.0, abs(pred[k])):
            z = diff / se[k]
        else:  # deterministic statistic (e.g. the edgeless component)
            z = 0.0 if abs(diff) < 1e-10 else math.copysign(math.inf, diff)
        rows.append(SECheckRow(monomial_name(mon, trees), float(pred[k]), float(mean[k]), float(se[k]), float(z)))
    return SECheckReport(n=n, D=D, t=t, reps=reps, rows=rows)
