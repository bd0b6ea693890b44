"""Discrete optimal transport solvers.

Every cost in this package uses the halved squared Euclidean convention
``C[i, j] = 0.5 * ||x_i - y_j||**2``.  Many references drop the 1/2, which
silently doubles the effective regularization; keep that in mind when
comparing epsilon values against other code.

Three solvers are provided:

* :func:`sinkhorn` -- entropic OT in the log domain, returning the plan and
  the dual potentials ``(f, g)`` normalized so that ``sum_j b_j g_j = 0``.
* :func:`exact_assignment` -- minimal-cost permutation with a deterministic
  (lexicographically smallest) tie-break.
* :func:`exact_plan` -- unregularized plan for arbitrary marginals (LP).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

__all__ = [
    "Assignment",
    "ConvergenceWarning",
    "Coupling",
    "barycentric_map",
    "build_cost_matrix",
    "exact_assignment",
    "exact_plan",
    "sinkhorn",
]


class ConvergenceWarning(RuntimeWarning):
    """Sinkhorn stopped at ``max_iter`` before meeting its tolerance."""


@dataclass(frozen=True)
class Coupling:
    """Transport plan with its dual potentials.

    ``epsilon == 0`` marks an exact (unregularized) plan.  For entropic
    plans the density relation
    ``plan[i, j] = a_i b_j exp((f_i + g_j - C_ij) / epsilon)`` holds by
    construction.
    """

    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    epsilon: float
    iterations: int
    marginal_error: float
    converged: bool = True

    def transport_cost(self, C: np.ndarray) -> float:
        return float(np.sum(self.plan * C))


@dataclass(frozen=True)
class Assignment:
    perm: np.ndarray
    cost: float


def as_points(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array of points, got shape {X.shape}")
    if X.shape[1] < 1:
        raise ValueError(f"{name} must have at least one coordinate")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return X


def build_cost_matrix(X, Y) -> np.ndarray:
    """Return ``C[i, j] = 0.5 * ||X[i] - Y[j]||**2``.

    1-d inputs are read as a list of scalar points.
    """
    X = as_points(X, "X")
    Y = as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(
            f"dimension mismatch: X has d={X.shape[1]}, Y has d={Y.shape[1]}"
        )
    diff = X[:, None, :] - Y[None, :, :]
    return 0.5 * np.einsum("ijk,ijk->ij", diff, diff)


def _check_weights(w, size: int, name: str) -> np.ndarray:
    if w is None:
        return np.full(size, 1.0 / size)
    w = np.asarray(w, dtype=float)
    if w.shape != (size,):
        raise ValueError(f"{name} has shape {w.shape}, expected ({size},)")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1 (sums to {w.sum():.12g})")
    return w


def _check_cost(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] == 0 or C.shape[1] == 0:
        raise ValueError(f"cost matrix must be a non-empty 2-d array, got {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix contains non-finite entries")
    return C


_TINY = 1e-200
_ABSORB = 25.0


def _softmin(M: np.ndarray, axis: int) -> np.ndarray:
    # -log sum exp(M) along axis, stabilized by the max
    top = M.max(axis=axis, keepdims=True)
    out = np.log(np.exp(M - top).sum(axis=axis)) + np.squeeze(top, axis=axis)
    return -out


def sinkhorn(
    C,
    a=None,
    b=None,
    epsilon: float = 1.0,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    g_init=None,
    normalize_cost: bool = False,
    newton_after: int | None = None,
) -> Coupling:
    """Entropic OT between discrete measures by log-stabilized Sinkhorn.

    Solves ``min <P, C> + epsilon * KL(P | a b^T)`` over couplings of ``a``
    and ``b`` (uniform when omitted).  Potentials live in the log domain;
    between absorptions the updates run as bounded multiplicative scalings
    of a stabilized kernel.  The final ``f`` is the exact soft-min of ``g``,
    so row sums are exact and convergence is judged on the L1 column
    violation.

    ``g_init`` warm-starts the target potential, which pays off when a
    sequence of closely related problems share the target points.

    With ``normalize_cost`` the cost is divided by its median entry before
    solving, i.e. ``epsilon`` is read relative to the median cost.  The
    returned ``Coupling.epsilon`` and potentials are in the original cost
    units either way.

    Sinkhorn converges linearly with a rate that degrades quickly as
    epsilon shrinks.  ``newton_after=k`` switches to damped Newton steps on
    the semi-dual (a function of ``g`` alone) once ``k`` sweeps have not
    met the tolerance; the fixed point is the same, reached quadratically.
    Newton steps count towards ``max_iter``.

    If ``max_iter`` is exhausted the last iterate is returned with
    ``converged=False`` and a :class:`ConvergenceWarning` is emitted.
    """
    C = _check_cost(C)
    m, n = C.shape
    a = _check_weights(a, m, "a")
    b = _check_weights(b, n, "b")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("sinkhorn requires strictly positive weights")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")

    eps = float(epsilon)
    if normalize_cost:
        med = float(np.median(C))
        if med > 0:
            eps *= med

    log_a = np.log(a)
    log_b = np.log(b)
    g = np.zeros(n) if g_init is None else np.array(g_init, dtype=float)
    if g.shape != (n,):
        raise ValueError(f"g_init has shape {g.shape}, expected ({n},)")

    def f_from(g):
        return eps * _softmin(log_b[None, :] + (g[None, :] - C) / eps, axis=1)

    def g_from(f):
        return eps * _softmin(log_a[:, None] + (f[:, None] - C) / eps, axis=0)

    def run_sweeps(f, g, budget):
        # Scaling iterations on the kernel with the current potentials
        # absorbed; they are folded back into (f, g) before u or v leave a
        # bounded range, so nothing overflows even for tiny epsilon.
        used, converged, err = 0, False, np.inf
        while not converged and used < budget:
            K = np.exp((f[:, None] + g[None, :] - C) / eps + log_a[:, None] + log_b[None, :])
            u = np.ones(m)
            v = np.ones(n)
            inner = 0
            while True:
                Ktu = K.T @ u
                err = float(np.abs(v * Ktu - b).sum())
                if err <= tol:
                    converged = True
                    break
                if used >= budget or Ktu.min() <= _TINY:
                    break
                v = b / Ktu
                Kv = K @ v
                if Kv.min() <= _TINY:
                    break
                u = a / Kv
                used += 1
                inner += 1
                if max(np.abs(np.log(u)).max(), np.abs(np.log(v)).max()) > _ABSORB:
                    break
            f = f + eps * np.log(u)
            g = g + eps * np.log(v)
            if inner == 0 and not converged:
                # kernel column underflowed: take a plain log-domain step
                g = g_from(f)
                used += 1
            f = f_from(g)
        return f, g, converged, err, used

    f = f_from(g)
    it = 0
    phase = max_iter if newton_after is None else max(1, newton_after)
    while True:
        f, g, converged, err, used = run_sweeps(f, g, min(phase, max_iter - it))
        it += used
        if converged or it >= max_iter or newton_after is None:
            break
        # Newton until it converges or stalls; after a stall, sweep again
        g, steps, converged, err = _newton(C, a, b, eps, g, tol, max_iter - it)
        f = f_from(g)
        it += steps
        if converged or it >= max_iter:
            break

    shift = float(b @ g)
    g = g - shift
    f = f + shift
    plan = np.exp((f[:, None] + g[None, :] - C) / eps + log_a[:, None] + log_b[None, :])
    marginal_error = float(
        np.abs(plan.sum(axis=1) - a).sum() + np.abs(plan.sum(axis=0) - b).sum()
    )
    if not converged:
        warnings.warn(
            f"Sinkhorn did not reach tol={tol:g} in {max_iter} iterations "
            f"(column error {err:.3g}, epsilon={eps:g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return Coupling(plan, f, g, eps, it, marginal_error, converged)


def _newton(C, a, b, eps, g, tol, max_steps):
    """Damped Newton ascent on the concave semi-dual ``F(g) = <a, f(g)> + <b, g>``.

    ``f(g)`` is the soft-min of ``g``, so the plan built from ``(f(g), g)``
    has exact row sums and ``grad F = b - c`` with ``c`` its column sums.
    ``-eps * Hess F = diag(c) - P^T diag(1/a) P`` is singular only along
    constants; that direction is pinned by adding ``11^T / n``.  Steps are
    halved until an Armijo increase of ``F`` holds.  Returns early (not
    converged) when no step makes progress.
    """
    log_a = np.log(a)
    log_b = np.log(b)
    n = len(g)

    def state(g):
        # an overlong trial step can overflow; its F is then not finite and
        # the line search rejects it
        with np.errstate(over="ignore", invalid="ignore"):
            f = eps * _softmin(log_b[None, :] + (g[None, :] - C) / eps, axis=1)
            P = np.exp((f[:, None] + g[None, :] - C) / eps + log_a[:, None] + log_b[None, :])
            c = P.sum(axis=0)
            return a @ f + b @ g, P, c, float(np.abs(c - b).sum())

    F, P, c, err = state(g)
    steps = 0
    while err > tol and steps < max_steps:
        H = np.diag(c) - P.T @ (P / a[:, None]) + np.full((n, n), 1.0 / n)
        grad = b - c
        try:
            step = np.linalg.solve(H, eps * grad)
        except np.linalg.LinAlgError:
            break
        slope = float(grad @ step)
        if not slope > 0:
            break
        t = 1.0
        for _ in range(40):
            trial = g + t * step
            F_t, P_t, c_t, err_t = state(trial)
            if np.isfinite(F_t) and F_t >= F + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        if F_t - F <= 1e-15 * max(1.0, abs(F)) and err_t >= err:
            break
        g, F, P, c, err = trial, F_t, P_t, c_t, err_t
        steps += 1
    return g, steps, err <= tol, err


def _assignment_duals(C: np.ndarray, perm: np.ndarray):
    """Dual potentials ``(u, v)`` certifying optimality of ``perm``.

    ``u_i + v_j <= C_ij`` everywhere with equality on ``(i, perm[i])``.
    Found by Bellman-Ford on the exchange graph over columns, whose arc
    ``j -> k`` costs the change from moving the row sitting on ``j`` to ``k``.
    """
    n = len(perm)
    row_of = np.empty(n, dtype=int)
    row_of[perm] = np.arange(n)
    on = C[row_of, np.arange(n)]
    W = C[row_of, :] - on[:, None]
    p = np.zeros(n)
    for _ in range(n):
        relaxed = np.minimum(p, (p[:, None] + W).min(axis=0))
        if not np.any(relaxed < p):
            break
        p = relaxed
    u = C[np.arange(n), perm] - p[perm]
    return u, p


def _lex_smallest_matching(adj: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Lexicographically smallest perfect matching of the bipartite graph ``adj``.

    ``perm`` must be a perfect matching inside ``adj``.  Rows are fixed in
    order; each row takes the smallest admissible column for which the
    unfixed rows can still be rematched (found by an alternating path).
    """
    n = len(perm)
    col = perm.copy()
    row = np.empty(n, dtype=int)
    row[col] = np.arange(n)
    fixed = np.zeros(n, dtype=bool)  # indexed by column
    nbrs = [np.flatnonzero(adj[i]) for i in range(n)]

    for i in range(n):
        cur = col[i]
        for j in nbrs[i]:
            if j >= cur:
                break
            if fixed[j]:
                continue
            path = _alternating_path(nbrs, row, col, fixed, start=row[j], banned=j, target=cur)
            if path is None:
                continue
            # path = [(r, c), ...]: row r moves to column c
            for r, c in path:
                col[r] = c
                row[c] = r
            col[i] = j
            row[j] = i
            break
        fixed[col[i]] = True
    return col


def _alternating_path(nbrs, row, col, fixed, start, banned, target):
    parent = {}
    frontier = [start]
    seen = {banned}
    while frontier:
        nxt = []
        for r in frontier:
            for c in nbrs[r]:
                if c in seen or fixed[c]:
                    continue
                seen.add(c)
                parent[c] = r
                if c == target:
                    path = []
                    while True:
                        r_c = parent[c]
                        path.append((r_c, c))
                        if r_c == start:
                            return path
                        c = col[r_c]
                nxt.append(row[c])
        frontier = nxt
    return None


def exact_assignment(C) -> Assignment:
    """Minimal-cost permutation for a square cost matrix.

    Among optimal permutations the lexicographically smallest is returned,
    so that rank maps are reproducible even with tied (e.g. duplicated)
    inputs.  Costs within a relative ``~1e-12`` of each other count as tied.
    """
    C = _check_cost(C)
    n, m = C.shape
    if n != m:
        raise ValueError(f"exact_assignment needs a square cost matrix, got {C.shape}")
    _, perm = optimize.linear_sum_assignment(C)
    perm = perm.astype(int)
    if n > 1:
        u, v = _assignment_duals(C, perm)
        scale = max(float(np.abs(C).max()), np.finfo(float).tiny)
        atol = 64 * np.finfo(float).eps * n * scale
        adj = (C - u[:, None] - v[None, :]) <= atol
        adj[np.arange(n), perm] = True
        if adj.sum() > n:
            perm = _lex_smallest_matching(adj, perm)
    return Assignment(perm, float(C[np.arange(n), perm].sum()))


def exact_plan(C, a=None, b=None) -> Coupling:
    """Unregularized optimal plan between weight vectors ``a`` and ``b``.

    Equal uniform marginals go through :func:`exact_assignment` (a
    permutation is optimal there); anything else is solved as a linear
    program with HiGHS.  Dual potentials are normalized like Sinkhorn's.
    """
    C = _check_cost(C)
    m, n = C.shape
    a = _check_weights(a, m, "a")
    b = _check_weights(b, n, "b")

    if m == n and np.allclose(a, 1.0 / n, rtol=0, atol=1e-15) and np.allclose(
        b, 1.0 / n, rtol=0, atol=1e-15
    ):
        perm = exact_assignment(C).perm
        plan = np.zeros((n, n))
        plan[np.arange(n), perm] = 1.0 / n
        f, g = _assignment_duals(C, perm)
    else:
        rows = sparse.kron(sparse.eye(m), np.ones((1, n)))
        cols = sparse.kron(np.ones((1, m)), sparse.eye(n))
        A_eq = sparse.vstack([rows, cols]).tocsr()
        b_eq = np.concatenate([a, b])
        res = optimize.linprog(
            C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs"
        )
        if res.status != 0:
            raise ValueError(f"transport LP failed: {res.message}")
        plan = np.clip(res.x.reshape(m, n), 0.0, None)
        duals = res.eqlin.marginals
        f, g = duals[:m].copy(), duals[m:].copy()

    shift = float(b @ g)
    g = g - shift
    f = f + shift
    err = float(np.abs(plan.sum(axis=1) - a).sum() + np.abs(plan.sum(axis=0) - b).sum())
    return Coupling(plan, f, g, 0.0, 0, err, True)


def barycentric_map(coupling, Y) -> np.ndarray:
    """Conditional mean of the target under the plan, one row per source point."""
    plan = coupling.plan if isinstance(coupling, Coupling) else np.asarray(coupling, float)
    Y = as_points(Y, "Y")
    if plan.shape[1] != Y.shape[0]:
        raise ValueError(f"plan has {plan.shape[1]} columns but Y has {Y.shape[0]} points")
    mass = plan.sum(axis=1)
    if np.any(mass <= 0):
        raise ValueError("every row of the plan needs positive mass")
    return (plan @ Y) / mass[:, None]
