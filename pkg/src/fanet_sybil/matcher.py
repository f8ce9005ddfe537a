"""Assignment of VD rows to AD columns under the balanced objective min(f1 + f2).

f1 is the total matched cost over real rows and f2 the spread of the
individual matched costs around their mean (``literal_f2=True`` uses the raw
sum f1 as the centre instead). Three solvers share one contract:

* ``solve_exact``: enumeration, the oracle for K_a <= 9;
* ``solve_hungarian``: f1-optimal linear assignment;
* ``solve_balanced``: Hungarian start refined by iterated local search over
  relocations, swaps, relocation chains and 3-cycles.

SENTINEL entries stand for infinite cost. Solvers rank assignments
lexicographically by (number of SENTINEL picks, f1 + f2 over finite picks),
which is what "infinite" means, and keeps the finite arithmetic exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .similarity import SENTINEL, CostMatrix

MAX_EXACT = 9
SOLVERS = ("exact", "hungarian", "balanced")


@dataclass(frozen=True)
class Assignment:
    """Row ``i`` of the padded square matrix takes column ``columns[i]``."""

    columns: tuple[int, ...]
    n_real: int

    def __post_init__(self) -> None:
        if sorted(self.columns) != list(range(len(self.columns))):
            raise ValueError("assignment must be a permutation of the columns")
        if not 0 <= self.n_real <= len(self.columns):
            raise ValueError("n_real out of range")

    @property
    def real_columns(self) -> tuple[int, ...]:
        return self.columns[: self.n_real]

    @property
    def unmatched(self) -> tuple[int, ...]:
        """AD columns taken by padding rows, sorted."""
        return tuple(sorted(self.columns[self.n_real :]))

    def matrix(self) -> np.ndarray:
        a = np.zeros((len(self.columns), len(self.columns)), dtype=int)
        a[np.arange(len(self.columns)), self.columns] = 1
        return a

    @classmethod
    def from_real(cls, real_columns, size: int) -> "Assignment":
        real = [int(c) for c in real_columns]
        used = set(real)
        rest = [c for c in range(size) if c not in used]
        return cls(tuple(real + rest), len(real))


@dataclass(frozen=True)
class ObjectiveValue:
    f1: float
    f2: float

    @property
    def total(self) -> float:
        return self.f1 + self.f2


def _f2(c: np.ndarray, literal: bool) -> float:
    if c.size == 0:
        return 0.0
    centre = c.sum() if literal else c.mean()
    return float(((c - centre) ** 2).sum())


def objective(costs: CostMatrix, assignment: Assignment, literal_f2: bool = False) -> ObjectiveValue:
    """f1 and f2 exactly as defined, SENTINEL picks included at face value."""
    c = costs.values[np.arange(assignment.n_real), list(assignment.real_columns)]
    return ObjectiveValue(float(c.sum()), _f2(c, literal_f2))


def rank_key(costs: CostMatrix, assignment: Assignment, literal_f2: bool = False) -> tuple[int, float]:
    """(SENTINEL picks, f1 + f2 over the finite picks): the order solvers minimise."""
    c = costs.values[np.arange(assignment.n_real), list(assignment.real_columns)]
    finite = c[c < SENTINEL]
    return int(c.size - finite.size), float(finite.sum()) + _f2(finite, literal_f2)


def solve_exact(costs: CostMatrix, literal_f2: bool = False) -> Assignment:
    """Enumerate every injective row->column map; ties go to the lexicographically smallest."""
    m, n = costs.size, costs.n_real
    if m > MAX_EXACT:
        raise ValueError(f"exact solver limited to K_a <= {MAX_EXACT}, got {m}")
    if n == 0:
        return Assignment(tuple(range(m)), 0)
    perms = np.array(list(itertools.permutations(range(m), n)), dtype=int)
    c = costs.values[np.arange(n)[None, :], perms]
    sent = c >= SENTINEL
    n_sent = sent.sum(axis=1)
    fin = np.where(sent, 0.0, c)
    k = np.maximum(n - n_sent, 1)
    s1 = fin.sum(axis=1)
    centre = s1 if literal_f2 else s1 / k
    f2 = np.where(sent, 0.0, (fin - centre[:, None]) ** 2).sum(axis=1)
    total = s1 + f2
    # lexsort: last key is primary; stable, so the first (lexicographically smallest) wins ties
    best = np.lexsort((total, n_sent))[0]
    return Assignment.from_real(perms[best], m)


def _solver_matrix(costs: CostMatrix) -> np.ndarray:
    """Real rows with SENTINEL swapped for a finite big-M that still dominates any finite total."""
    real = costs.real
    finite = real[real < SENTINEL]
    scale = float(finite.max()) if finite.size else 1.0
    big = scale * (costs.size + 1) + 1.0
    return np.where(real >= SENTINEL, big, real)


def solve_hungarian(costs: CostMatrix) -> Assignment:
    """f1-minimising assignment (O(K_a^3)); padding rows absorb the leftover columns."""
    m, n = costs.size, costs.n_real
    if n == 0:
        return Assignment(tuple(range(m)), 0)
    rows, cols = linear_sum_assignment(_solver_matrix(costs))
    real = np.empty(n, dtype=int)
    real[rows] = cols
    return Assignment.from_real(real, m)


class _Search:
    """Local search state over a permutation with O(1) objective deltas.

    The objective over the finite picks is S1 + S2 - S1^2/k (mean-centred) or
    S1 + S2 + (k - 2) S1^2 (literal), where S1, S2 are the sum and sum of
    squares of the k finite picked costs. SENTINEL picks only count.
    """

    def __init__(self, costs: CostMatrix, columns: np.ndarray, literal: bool):
        self.c = costs.values
        self.n = costs.n_real
        self.m = costs.size
        self.literal = literal
        self.sent = self.c >= SENTINEL
        self.fin = np.where(self.sent, 0.0, self.c)
        self.set(columns)

    def set(self, columns: np.ndarray) -> None:
        self.col = np.array(columns, dtype=int)
        rows = np.arange(self.n)
        picked = self.col[: self.n]
        self.cnt = int(self.sent[rows, picked].sum())
        v = self.fin[rows, picked]
        self.s1 = float(v.sum())
        self.s2 = float((v * v).sum())

    def value(self, cnt, s1, s2):
        k = np.maximum(self.n - cnt, 1)
        if self.literal:
            return s1 + s2 + (k - 2) * s1 * s1
        return s1 + s2 - s1 * s1 / k

    def key(self):
        return self.cnt, float(self.value(self.cnt, self.s1, self.s2))

    def best_move(self, use_cycles: bool):
        """Best strictly improving move, or None. Rows >= n are padding (cost-free)."""
        n, m = self.n, self.m
        col = self.col
        cur_cnt, cur_val = self.key()
        rows = np.arange(n)
        old_f = self.fin[rows, col[:n]]
        old_s = self.sent[rows, col[:n]].astype(int)
        best = None
        best_key = (cur_cnt, cur_val - 1e-12 * max(1.0, abs(cur_val)))

        def consider(dcnt, ds1, ds2, make):
            nonlocal best, best_key
            cnt = cur_cnt + dcnt
            val = self.value(cnt, self.s1 + ds1, self.s2 + ds2)
            low = cnt.min()
            i = int(np.argmin(np.where(cnt == low, val, np.inf)))
            cand = (int(low), float(val.ravel()[i]))
            if cand < best_key:
                best_key = cand
                best = make(np.unravel_index(i, cnt.shape))

        # swap rows i < j (j may be a padding row: relocation to a free column)
        ci = col[:n]
        cj = col
        new_if = self.fin[rows[:, None], cj[None, :]]
        new_is = self.sent[rows[:, None], cj[None, :]].astype(int)
        real_j = np.arange(m) < n
        rj = np.minimum(np.arange(m), n - 1)
        new_jf = np.where(real_j[None, :], self.fin[rj[None, :], ci[:, None]], 0.0)
        new_js = np.where(real_j[None, :], self.sent[rj[None, :], ci[:, None]], 0).astype(int)
        old_jf = np.where(real_j, np.concatenate([old_f, np.zeros(m - n)]), 0.0)
        old_js = np.where(real_j, np.concatenate([old_s, np.zeros(m - n, dtype=int)]), 0)
        dcnt = new_is + new_js - old_s[:, None] - old_js[None, :]
        ds1 = new_if + new_jf - old_f[:, None] - old_jf[None, :]
        ds2 = new_if**2 + new_jf**2 - (old_f**2)[:, None] - (old_jf**2)[None, :]
        valid = np.arange(m)[None, :] > rows[:, None]
        dcnt = np.where(valid, dcnt, 10**9)
        consider(dcnt, ds1, ds2, lambda ij: ("swap", int(ij[0]), int(ij[1])))

        if use_cycles and n >= 2:
            # i -> col[j], j -> col[l], l -> col[i] for distinct i, j real and l any row
            i, j, l = np.meshgrid(np.arange(n), np.arange(n), np.arange(m), indexing="ij")
            mask = (i != j) & (j != l) & (i != l)
            lr = np.minimum(l, n - 1)
            real_l = l < n
            nf = self.fin[i, col[j]] + self.fin[j, col[l]] + np.where(real_l, self.fin[lr, col[i]], 0.0)
            nq = self.fin[i, col[j]] ** 2 + self.fin[j, col[l]] ** 2 + np.where(real_l, self.fin[lr, col[i]] ** 2, 0.0)
            ns = self.sent[i, col[j]].astype(int) + self.sent[j, col[l]] + np.where(real_l, self.sent[lr, col[i]], 0)
            of = old_f[i] + old_f[j] + np.where(real_l, old_f[lr], 0.0)
            oq = old_f[i] ** 2 + old_f[j] ** 2 + np.where(real_l, old_f[lr] ** 2, 0.0)
            os_ = old_s[i] + old_s[j] + np.where(real_l, old_s[lr], 0)
            dcnt = np.where(mask, ns - os_, 10**9)
            consider(dcnt, nf - of, nq - oq, lambda ijl: ("cycle", *map(int, ijl)))
        return best

    def apply(self, move) -> None:
        col = self.col.copy()
        if move[0] == "swap":
            _, i, j = move
            col[i], col[j] = col[j], col[i]
        else:
            _, i, j, l = move
            col[i], col[j], col[l] = self.col[j], self.col[l], self.col[i]
        self.set(col)


def solve_balanced(
    costs: CostMatrix,
    budget: int = 200,
    seed: int = 0,
    literal_f2: bool = False,
    cycle_limit: int = 12,
    restart_limit: int = 12,
) -> Assignment:
    """Balanced assignment: Hungarian start, then iterated local search.

    ``budget`` caps the number of neighbourhood evaluations. 3-cycles are
    searched while K_v <= ``cycle_limit``; random-perturbation restarts are
    used while K_v <= ``restart_limit`` (larger instances stop at the first
    local optimum). The result never ranks worse than the Hungarian start.
    """
    start = solve_hungarian(costs)
    n = costs.n_real
    if n == 0 or costs.size < 2:
        return start
    use_cycles = n <= cycle_limit
    search = _Search(costs, np.array(start.columns), literal_f2)
    rng = np.random.default_rng(seed)
    best_cols, best_key = search.col.copy(), search.key()
    evals = 0
    while evals < budget:
        move = search.best_move(use_cycles)
        evals += 1
        if move is not None:
            search.apply(move)
            continue
        if search.key() < best_key:
            best_cols, best_key = search.col.copy(), search.key()
        if n > restart_limit:
            break
        # perturb the incumbent with a few random swaps and descend again
        cols = best_cols.copy()
        for _ in range(int(rng.integers(2, 4))):
            i = int(rng.integers(n))
            j = int(rng.integers(costs.size))
            cols[i], cols[j] = cols[j], cols[i]
        search.set(cols)
    if search.key() < best_key:
        best_cols, best_key = search.col.copy(), search.key()
    return Assignment.from_real(best_cols[:n], costs.size)


def solve(costs: CostMatrix, solver: str = "balanced", **kw) -> Assignment:
    if solver == "exact":
        return solve_exact(costs, literal_f2=kw.get("literal_f2", False))
    if solver == "hungarian":
        return solve_hungarian(costs)
    if solver == "balanced":
        return solve_balanced(costs, **kw)
    raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
