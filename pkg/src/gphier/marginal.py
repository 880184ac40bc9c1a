"""Marginal density kernels, truncated hierarchy states, and their norms.

A level-k marginal is the kernel gamma^(k)(x_1..x_k; x'_1..x'_k) stored as
a dense rank-2k complex tensor (2kd axes for d>1), axes ordered unprimed
block first.  Physical marginals are hermitean, symmetric under separate
permutations of the unprimed and primed slots, and trace one.

All torus integrals are Riemann sums with weight h^d per integrated
variable, so trace/norm identities are exact for band-limited data.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import TorusGrid, sobolev_weights, transform

#: Dense tensors above this element count need an explicit override
#: (guards against accidental 100+ GB allocations; 2^28 complex128 = 4 GiB).
MEMORY_GUARD_ELEMENTS = 2**28


class MemoryGuardError(MemoryError):
    """Raised when a marginal would exceed the dense-tensor memory guard."""


def _check_memory_guard(grid: TorusGrid, k: int, allow_large: bool) -> None:
    n_elements = grid.M ** (2 * grid.d * k)
    if n_elements > MEMORY_GUARD_ELEMENTS and not allow_large:
        raise MemoryGuardError(
            f"level-{k} marginal on M={grid.M}, d={grid.d} has {n_elements} elements "
            f"(> {MEMORY_GUARD_ELEMENTS}); pass allow_large=True to override"
        )


@dataclass
class Marginal:
    """k-particle density kernel on a torus grid."""

    grid: TorusGrid
    k: int
    data: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"particle number must be >= 1, got k={self.k}")
        expected = (self.grid.M,) * self.grid.axis_count(self.k)
        if self.data.shape != expected:
            raise ValueError(
                f"level-{self.k} kernel needs shape {expected}, got {self.data.shape}"
            )
        if not np.iscomplexobj(self.data):
            self.data = self.data.astype(np.complex128)

    @property
    def n_axes(self) -> int:
        return self.grid.axis_count(self.k)

    def copy(self) -> "Marginal":
        return Marginal(self.grid, self.k, self.data.copy())

    def adjoint(self) -> "Marginal":
        """Hermitean adjoint: swap primed/unprimed blocks and conjugate."""
        half = self.n_axes // 2
        perm = tuple(range(half, 2 * half)) + tuple(range(half))
        return Marginal(self.grid, self.k, self.data.transpose(perm).conj())

    def __add__(self, other: "Marginal") -> "Marginal":
        return Marginal(self.grid, self.k, self.data + other.data)

    def __sub__(self, other: "Marginal") -> "Marginal":
        return Marginal(self.grid, self.k, self.data - other.data)

    def __mul__(self, c) -> "Marginal":
        return Marginal(self.grid, self.k, self.data * c)

    __rmul__ = __mul__


def zero_marginal(grid: TorusGrid, k: int, allow_large: bool = False) -> Marginal:
    _check_memory_guard(grid, k, allow_large)
    shape = (grid.M,) * grid.axis_count(k)
    return Marginal(grid, k, np.zeros(shape, dtype=np.complex128))


def factorized_marginal(
    phi: np.ndarray, k: int, grid: TorusGrid, allow_large: bool = False
) -> Marginal:
    """Product-state kernel prod_j phi(x_j) conj(phi(x'_j)).

    Trace equals ||phi||_{L2}^{2k}, so unit-normalized phi gives trace one.
    """
    phi = np.asarray(phi, dtype=np.complex128)
    if phi.shape != (grid.M,) * grid.d:
        raise ValueError(
            f"field shape {phi.shape} does not match grid (M={grid.M}, d={grid.d})"
        )
    if k < 1:
        raise ValueError(f"particle number must be >= 1, got k={k}")
    _check_memory_guard(grid, k, allow_large)
    factors = [phi] * k + [phi.conj()] * k
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return Marginal(grid, k, out)


def _variable_axes(grid: TorusGrid, k: int, var: int, primed: bool) -> tuple[int, ...]:
    """Tensor axes of variable x_var (1-based) in a level-k kernel."""
    base = (k * grid.d if primed else 0) + (var - 1) * grid.d
    return tuple(range(base, base + grid.d))


def _swap_variables(data: np.ndarray, grid: TorusGrid, k: int, i: int, j: int, primed: bool) -> np.ndarray:
    perm = list(range(data.ndim))
    for c in range(grid.d):
        a = _variable_axes(grid, k, i, primed)[c]
        b = _variable_axes(grid, k, j, primed)[c]
        perm[a], perm[b] = perm[b], perm[a]
    return data.transpose(perm)


def symmetrize(gamma: Marginal) -> Marginal:
    """Average over all permutations of unprimed slots, then of primed slots."""
    k, grid = gamma.k, gamma.grid
    if k == 1:
        return gamma.copy()
    # the product group factorizes: average the unprimed block, then the primed
    out = np.zeros_like(gamma.data)
    for perm in itertools.permutations(range(1, k + 1)):
        axes = []
        for var in perm:
            axes.extend(_variable_axes(grid, k, var, primed=False))
        axes.extend(range(k * grid.d, 2 * k * grid.d))
        out += gamma.data.transpose(axes)
    out /= math.factorial(k)
    out2 = np.zeros_like(out)
    for perm in itertools.permutations(range(1, k + 1)):
        axes = list(range(k * grid.d))
        for var in perm:
            axes.extend(_variable_axes(grid, k, var, primed=True))
        out2 += out.transpose(axes)
    out2 /= math.factorial(k)
    return Marginal(grid, k, out2)


def hermitize(gamma: Marginal) -> Marginal:
    """Project onto the hermitean part (gamma + gamma^dagger)/2."""
    return Marginal(gamma.grid, gamma.k, 0.5 * (gamma.data + gamma.adjoint().data))


@dataclass
class ValidationReport:
    hermiticity_defect: float
    symmetry_defect: float
    trace: complex
    positivity_flag: bool | None  # None when the check was skipped
    min_eigenvalue: float | None
    passed: bool


def validate_marginal(
    gamma: Marginal,
    structural_tol: float = 1e-10,
    check_positivity: bool | None = None,
) -> ValidationReport:
    """Report hermiticity/symmetry defects, trace, and (k=1) positivity.

    Defects are max-abs deviations; positivity is computed by the smallest
    eigenvalue of the M^(dk) x M^(dk) kernel matrix.  By default that check
    runs only for k=1 (eigendecomposition cost grows as M^(3dk)); pass
    check_positivity=True to force it for higher k.
    """
    k, grid = gamma.k, gamma.grid
    herm = float(np.max(np.abs(gamma.data - gamma.adjoint().data)))
    sym = 0.0
    for primed in (False, True):
        for i in range(1, k + 1):
            for j in range(i + 1, k + 1):
                swapped = _swap_variables(gamma.data, grid, k, i, j, primed)
                sym = max(sym, float(np.max(np.abs(gamma.data - swapped))))
    tr = trace(gamma)
    do_pos = check_positivity if check_positivity is not None else (k == 1)
    pos_flag = None
    min_eig = None
    if do_pos:
        n = grid.M ** (grid.d * k)
        mat = gamma.data.reshape(n, n)
        eigs = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))
        min_eig = float(eigs[0]) * grid.h ** (grid.d * k)
        pos_flag = min_eig >= -structural_tol
    passed = herm <= structural_tol and sym <= structural_tol
    return ValidationReport(herm, sym, tr, pos_flag, min_eig, passed)


def trace(gamma: Marginal) -> complex:
    """Quadrature trace h^(dk) * sum_x gamma(x; x)."""
    n = gamma.grid.M ** (gamma.grid.d * gamma.k)
    return complex(np.trace(gamma.data.reshape(n, n)) * gamma.grid.h ** (gamma.grid.d * gamma.k))


def partial_trace(gamma: Marginal) -> Marginal:
    """Contract the last particle: h^d * sum over x_{k+1} = x'_{k+1}."""
    k_out = gamma.k - 1
    if k_out < 1:
        raise ValueError("cannot partial-trace a level-1 marginal to level 0")
    grid = gamma.grid
    data = gamma.data
    for j in range(grid.d):
        # tie component d-1-j of x_{k+1} (at axis k_out*d + d-1-j) with the
        # matching component of x'_{k+1}, which sits at the current last axis
        data = np.trace(data, axis1=k_out * grid.d + (grid.d - 1 - j), axis2=data.ndim - 1)
    return Marginal(grid, k_out, data * grid.h**grid.d)


def h_alpha_norm(gamma: Marginal, alpha: float) -> float:
    """Weighted Hilbert-Schmidt norm || S^(k,alpha) gamma ||_HS.

    Transforms all axes, applies the Bessel weight per axis, and takes the
    quadrature-exact L2 norm of the weighted kernel.  For factorized data
    with unit-L2 phi this equals ||<grad>^alpha phi||_{L2}^{2k}.
    """
    hat = transform(gamma.data, range(gamma.n_axes), "forward")
    return _h_alpha_norm_hat(hat, gamma.grid, gamma.k, alpha)


def _h_alpha_norm_hat(hat: np.ndarray, grid: TorusGrid, k: int, alpha: float) -> float:
    """H^alpha norm from the Fourier representation (internal fast path)."""
    acc = np.abs(hat) ** 2
    if alpha != 0:
        w2 = sobolev_weights(grid, alpha) ** 2
        for ax in range(acc.ndim):
            shape = [1] * acc.ndim
            shape[ax] = grid.M
            acc *= w2.reshape(shape)
    return float(np.sqrt(acc.sum()) * grid.h ** (grid.d * k))


@dataclass
class HierarchyState:
    """Finite sequence (gamma^(1), ..., gamma^(N)); levels above N are zero."""

    grid: TorusGrid
    levels: list[Marginal]
    p: int = 2
    mu: int = 1

    def __post_init__(self):
        if self.p not in (2, 4):
            raise ValueError(f"interaction order p must be 2 or 4, got {self.p}")
        if self.mu not in (-1, 1):
            raise ValueError(f"coupling mu must be -1 or +1, got {self.mu}")
        if not self.levels:
            raise ValueError("hierarchy state needs at least one level")
        for n, g in enumerate(self.levels, start=1):
            if g.k != n:
                raise ValueError(f"slot {n} holds a level-{g.k} marginal")
            if g.grid is not self.grid and g.grid != self.grid:
                raise ValueError("all levels must share one grid")

    @property
    def N(self) -> int:
        return len(self.levels)

    def level(self, n: int, allow_large: bool = False) -> Marginal:
        """Level n; queries above the truncation return the zero marginal."""
        if n < 1:
            raise ValueError(f"level index must be >= 1, got {n}")
        if n <= self.N:
            return self.levels[n - 1]
        return zero_marginal(self.grid, n, allow_large=allow_large)

    def copy(self) -> "HierarchyState":
        return HierarchyState(self.grid, [g.copy() for g in self.levels], self.p, self.mu)

    @classmethod
    def factorized(
        cls,
        phi: np.ndarray,
        N: int,
        grid: TorusGrid,
        p: int = 2,
        mu: int = 1,
        allow_large: bool = False,
    ) -> "HierarchyState":
        levels = [factorized_marginal(phi, k, grid, allow_large=allow_large) for k in range(1, N + 1)]
        return cls(grid, levels, p, mu)

    @classmethod
    def zero(cls, grid: TorusGrid, N: int, p: int = 2, mu: int = 1) -> "HierarchyState":
        return cls(grid, [zero_marginal(grid, k) for k in range(1, N + 1)], p, mu)

    def truncate(self, N1: int) -> "HierarchyState":
        """P_{<=N1}: keep levels 1..N1 (shares level data with self)."""
        if N1 < 1:
            raise ValueError(f"truncation level must be >= 1, got {N1}")
        N1 = min(N1, self.N)
        return HierarchyState(self.grid, self.levels[:N1], self.p, self.mu)


def hxi_norm(state: HierarchyState, xi: float, alpha: float) -> float:
    """Weighted sequence norm sum_k xi^k ||gamma^(k)||_{H^alpha_k}."""
    if not 0 < xi < 1:
        raise ValueError(f"weight xi must lie in (0, 1), got {xi}")
    return sum(xi**k * h_alpha_norm(g, alpha) for k, g in enumerate(state.levels, start=1))


def project_tail(state: HierarchyState, N1: int) -> HierarchyState:
    """P_{>N1}: zero out levels 1..N1, keep the rest."""
    if N1 < 0:
        raise ValueError(f"tail cutoff must be >= 0, got {N1}")
    levels = []
    for k, g in enumerate(state.levels, start=1):
        levels.append(zero_marginal(state.grid, k) if k <= N1 else g.copy())
    return HierarchyState(state.grid, levels, state.p, state.mu)


def tail_norm(state: HierarchyState, N1: int, xi_prime: float, alpha: float) -> float:
    """sum_{k > N1} xi'^k ||gamma^(k)||_{H^alpha} over the stored levels."""
    if N1 < 0:
        raise ValueError(f"tail cutoff must be >= 0, got {N1}")
    if not 0 < xi_prime < 1:
        raise ValueError(f"weight xi' must lie in (0, 1), got {xi_prime}")
    return sum(
        xi_prime**k * h_alpha_norm(g, alpha)
        for k, g in enumerate(state.levels, start=1)
        if k > N1
    )


@dataclass
class NormParams:
    """Regularity and the nested weight scales (alpha, xi < xi'' < xi', eta)."""

    alpha: float = 1.0
    xi: float = 0.02
    xi2: float = 0.06
    xi_prime: float = 0.2
    eta: float = 0.3

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not (0 < self.xi < self.xi2 < self.xi_prime < 1):
            raise ValueError(
                f"weights must satisfy 0 < xi < xi2 < xi_prime < 1, got "
                f"xi={self.xi}, xi2={self.xi2}, xi_prime={self.xi_prime}"
            )
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")

    def cauchy_chain_ok(self) -> bool:
        """Whether xi < eta*xi'' < eta^2*xi' holds (the truncation-Cauchy regime)."""
        return self.xi < self.eta * self.xi2 < self.eta**2 * self.xi_prime
