"""Finite-sum objectives with full, component, and coordinate gradient oracles.

Every objective here has the form

    f(x) = (1/n) * sum_i f_i(x)

and exposes, next to the plain loss, three gradient oracles: the full
gradient, per-component gradients, and per-coordinate partial derivatives
of f.  Instances are immutable after construction, so they can be shared
freely between concurrent runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.special import expit


class Problem:
    """Base class for averaged finite-sum objectives.

    Subclasses must set ``dim``, ``n_components``, ``smoothness`` and
    implement the component oracles.  ``smoothness`` is the uniform
    component smoothness bound: every f_i (and hence f) has an
    L-Lipschitz gradient with this L.
    """

    dim: int
    n_components: int
    smoothness: float
    pl_constant: float | None = None
    f_star: float | None = None
    x_opt: np.ndarray | None = None

    # --- component oracles (subclass responsibility) ---

    def component_loss(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def component_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def component_grads(self, indices, x: np.ndarray) -> np.ndarray:
        """Stack of component gradients, shape (len(indices), dim)."""
        return np.stack([self.component_grad(i, x) for i in np.asarray(indices)])

    # --- derived oracles ---

    def loss(self, x: np.ndarray) -> float:
        return float(
            np.mean([self.component_loss(i, x) for i in range(self.n_components)])
        )

    def all_component_grads(self, x: np.ndarray) -> np.ndarray:
        return self.component_grads(np.arange(self.n_components), x)

    def batch_grad(self, indices, x: np.ndarray) -> np.ndarray:
        """Average gradient over a batch of component indices."""
        return self.component_grads(indices, x).mean(axis=0)

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        return self.all_component_grads(x).mean(axis=0)

    def partial(self, x: np.ndarray, coord: int) -> float:
        """Coordinate derivative of the full objective."""
        return float(self.full_grad(x)[coord])

    def partials(self, x: np.ndarray, coords) -> np.ndarray:
        """Several coordinate derivatives at the same point.

        Cheaper than repeated ``partial`` calls for objectives where the
        expensive part of the gradient is shared between coordinates.
        """
        return np.array([self.partial(x, int(j)) for j in np.asarray(coords)])

    def curvature_matvec(self, v: np.ndarray) -> np.ndarray:
        """Product with the curvature upper-bound matrix whose largest
        eigenvalue equals ``smoothness``.  Used by power iteration."""
        raise NotImplementedError

    def subset(self, indices) -> "Problem":
        """New problem over a subset of the components."""
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticSpec:
    """Recipe for a synthetic quadratic with analytically known constants.

    ``eigenvalues`` holds one diagonal Hessian spectrum per component,
    shape (n, d).  All components share the optimum ``x_star``; the
    per-component value offsets are drawn from ``shift_seed`` so that
    losses differ between components while gradients stay affine.
    """

    eigenvalues: np.ndarray
    x_star: np.ndarray
    shift_seed: int = 0


class QuadraticProblem(Problem):
    """f_i(x) = 0.5 (x - x*)^T diag(eigs_i) (x - x*) + c_i."""

    def __init__(self, eigenvalues, x_star, shifts):
        eigs = np.atleast_2d(np.asarray(eigenvalues, dtype=float))
        if eigs.size == 0 or np.any(eigs <= 0):
            raise ValueError("component eigenvalues must be positive")
        self.eigs = eigs
        self.n_components, self.dim = eigs.shape
        self.x_star = np.asarray(x_star, dtype=float).reshape(self.dim)
        self.shifts = np.asarray(shifts, dtype=float).reshape(self.n_components)
        self.mean_eigs = eigs.mean(axis=0)
        self._max_eigs = eigs.max(axis=0)
        self.smoothness = float(eigs.max())
        self.pl_constant = float(self.mean_eigs.min())
        self.f_star = float(self.shifts.mean())
        self.x_opt = self.x_star.copy()

    def component_loss(self, i, x):
        z = np.asarray(x, dtype=float) - self.x_star
        return float(0.5 * (self.eigs[i] * z * z).sum() + self.shifts[i])

    def loss(self, x):
        z = np.asarray(x, dtype=float) - self.x_star
        return float(0.5 * (self.mean_eigs * z * z).sum() + self.f_star)

    def component_grad(self, i, x):
        z = np.asarray(x, dtype=float) - self.x_star
        return self.eigs[i] * z

    def component_grads(self, indices, x):
        z = np.asarray(x, dtype=float) - self.x_star
        return self.eigs[np.asarray(indices)] * z

    def all_component_grads(self, x):
        z = np.asarray(x, dtype=float) - self.x_star
        return self.eigs * z

    def full_grad(self, x):
        z = np.asarray(x, dtype=float) - self.x_star
        return self.mean_eigs * z

    def partial(self, x, coord):
        return float(self.mean_eigs[coord] * (x[coord] - self.x_star[coord]))

    def partials(self, x, coords):
        coords = np.asarray(coords)
        return self.mean_eigs[coords] * (np.asarray(x, dtype=float)[coords] - self.x_star[coords])

    def curvature_matvec(self, v):
        return self._max_eigs * np.asarray(v, dtype=float)

    def subset(self, indices):
        idx = np.asarray(indices)
        return QuadraticProblem(self.eigs[idx], self.x_star, self.shifts[idx])


def quadratic_problem(spec: QuadraticSpec) -> QuadraticProblem:
    """Build the quadratic objective described by ``spec``.

    Raises ValueError when any eigenvalue is nonpositive.
    """
    eigs = np.atleast_2d(np.asarray(spec.eigenvalues, dtype=float))
    shifts = np.random.default_rng(spec.shift_seed).standard_normal(eigs.shape[0])
    return QuadraticProblem(eigs, spec.x_star, shifts)


def make_quadratic(n_components, dim, seed=0, eig_range=(0.5, 2.0), cond=1.0):
    """Convenience fixture: seeded random spectra and optimum.

    ``eig_range=(L, L)`` gives the equal-curvature variant where every
    component Hessian is L times the identity.  ``cond`` > 1 scales the
    coordinates geometrically so the averaged objective has roughly that
    condition number; without it, averaging n random spectra washes the
    conditioning out and iterates converge too fast for long-horizon
    rate measurements.
    """
    rng = np.random.default_rng(seed)
    lo, hi = eig_range
    if not 0 < lo <= hi:
        raise ValueError("eigenvalue range must be positive and ordered")
    if cond < 1.0:
        raise ValueError(f"cond must be >= 1, got {cond}")
    if lo == hi:
        eigs = np.full((n_components, dim), float(lo))
    else:
        eigs = rng.uniform(lo, hi, size=(n_components, dim))
    if cond > 1.0 and dim > 1:
        scales = cond ** (-np.arange(dim) / (dim - 1))
        eigs = eigs * scales
    x_star = rng.standard_normal(dim)
    shifts = rng.standard_normal(n_components)
    return QuadraticProblem(eigs, x_star, shifts)


class LogisticProblem(Problem):
    """Binary logistic regression over a sparse design matrix.

    f_i(x) = log(1 + exp(-b_i <a_i, x>)) with labels b_i in {-1, +1};
    the objective is the average over rows.  The smoothness constant is
    the largest eigenvalue of (1/(4n)) A^T A, found by power iteration
    at construction (200 iterations, seeded start).
    """

    POWER_ITERATIONS = 200

    def __init__(self, dataset):
        if dataset.n == 0:
            raise ValueError("dataset is empty")
        labels = np.asarray(dataset.labels, dtype=float)
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1/+1; normalize the dataset first")
        self.n_components = dataset.n
        self.dim = dataset.d
        self.y = labels
        data, indices, indptr = [], [], [0]
        for row_idx, row_val in zip(dataset.indices, dataset.values):
            indices.extend(int(j) for j in row_idx)
            data.extend(float(v) for v in row_val)
            indptr.append(len(indices))
        self.X = csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(self.n_components, self.dim),
        )
        self.X_csc = self.X.tocsc()
        self.smoothness = estimate_smoothness(self, self.POWER_ITERATIONS, seed=0)

    def _margins(self, x):
        return self.y * (self.X @ np.asarray(x, dtype=float))

    def loss(self, x):
        return float(np.logaddexp(0.0, -self._margins(x)).mean())

    def component_loss(self, i, x):
        m = self.y[i] * float(self.X.getrow(i) @ np.asarray(x, dtype=float))
        return float(np.logaddexp(0.0, -m))

    def component_grad(self, i, x):
        row = self.X.getrow(i)
        m = self.y[i] * float(row @ np.asarray(x, dtype=float))
        g = np.zeros(self.dim)
        g[row.indices] = -self.y[i] * expit(-m) * row.data
        return g

    def component_grads(self, indices, x):
        idx = np.asarray(indices)
        sub = self.X[idx]
        m = self.y[idx] * (sub @ np.asarray(x, dtype=float))
        w = -self.y[idx] * expit(-m)
        return sub.multiply(w[:, None]).toarray()

    def all_component_grads(self, x):
        return self.component_grads(np.arange(self.n_components), x)

    def batch_grad(self, indices, x):
        idx = np.asarray(indices)
        sub = self.X[idx]
        m = self.y[idx] * (sub @ np.asarray(x, dtype=float))
        w = -self.y[idx] * expit(-m)
        return np.asarray(sub.T @ w).ravel() / len(idx)

    def full_grad(self, x):
        m = self._margins(x)
        w = -self.y * expit(-m)
        return np.asarray(self.X.T @ w).ravel() / self.n_components

    def partials(self, x, coords):
        m = self._margins(x)
        w = -self.y * expit(-m)
        out = np.empty(len(np.asarray(coords)))
        for pos, j in enumerate(np.asarray(coords)):
            col = self.X_csc.getcol(int(j))
            out[pos] = float((col.T @ w)[0]) / self.n_components
        return out

    def partial(self, x, coord):
        return float(self.partials(x, [coord])[0])

    def curvature_matvec(self, v):
        return np.asarray(self.X.T @ (self.X @ np.asarray(v, dtype=float))).ravel() / (
            4.0 * self.n_components
        )

    def subset(self, indices):
        from .data import Dataset

        idx = np.asarray(indices)
        sub = Dataset(
            indices=[self._row_indices(i) for i in idx],
            values=[self._row_values(i) for i in idx],
            labels=self.y[idx].copy(),
            n=len(idx),
            d=self.dim,
        )
        return LogisticProblem(sub)

    def _row_indices(self, i):
        row = self.X.getrow(int(i))
        return row.indices.astype(np.int64)

    def _row_values(self, i):
        row = self.X.getrow(int(i))
        return row.data.astype(float)


def logistic_problem(dataset) -> LogisticProblem:
    """Logistic regression objective over a parsed dataset."""
    return LogisticProblem(dataset)


def estimate_smoothness(problem, iterations, seed=0):
    """Largest eigenvalue of the problem's curvature bound, by power iteration.

    Deterministic given the seed.  Returns 0.0 for a vanishing curvature
    operator.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(problem.dim)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = np.ones(problem.dim)
        norm = np.linalg.norm(v)
    v /= norm
    estimate = 0.0
    for _ in range(iterations):
        w = problem.curvature_matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        estimate = float(v @ w)
        v = w / norm
    return float(estimate)


def partition_problem(problem, n_clients, scheme="contiguous"):
    """Split the component index set across clients.

    ``contiguous`` gives ceiling-split blocks, e.g. 10 components over 3
    clients -> sizes (4, 3, 3); ``round-robin`` deals indices out in
    turn.  The size-weighted average of client gradients reproduces the
    global gradient.
    """
    n = problem.n_components
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if n_clients > n:
        raise ValueError(
            f"cannot split {n} components across {n_clients} clients"
        )
    if scheme == "contiguous":
        base, rem = divmod(n, n_clients)
        groups = []
        start = 0
        for j in range(n_clients):
            size = base + (1 if j < rem else 0)
            groups.append(np.arange(start, start + size))
            start += size
    elif scheme == "round-robin":
        groups = [np.arange(j, n, n_clients) for j in range(n_clients)]
    else:
        raise ValueError(f"unknown partition scheme: {scheme!r}")
    return [problem.subset(g) for g in groups]
