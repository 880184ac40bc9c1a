"""Contraction operators, free propagator, and the hierarchy right-hand side.

The collapse B^+_{j} evaluates a level-(k+p/2) kernel with all p/2 extra
unprimed and primed slots set equal to x_j; B^-_{j} pins them to x'_j.  On
the grid each delta pair cancels one integration weight, so the operation
is a pure diagonal restriction with no h factors, which keeps
Tr B^+ gamma = Tr B^- gamma exact.

Adopted sign convention (validated by the finite-difference residual test
and the Duhamel reconstruction identity): the evolution reads
d/dt gamma^(k) = i*(sum_j Delta_{x_j} - Delta_{x'_j}) gamma^(k) - i*mu*(B gamma^(k+p/2)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import TorusGrid, phase_weights, transform
from .marginal import HierarchyState, Marginal


@dataclass(frozen=True)
class InteractionSpec:
    """Interaction order p (2 cubic, 4 quintic) and coupling sign mu."""

    p: int = 2
    mu: int = 1

    def __post_init__(self):
        if self.p not in (2, 4):
            raise ValueError(f"interaction order p must be 2 or 4, got {self.p}")
        if self.mu not in (-1, 1):
            raise ValueError(f"coupling mu must be -1 or +1, got {self.mu}")

    @property
    def half(self) -> int:
        return self.p // 2

    @property
    def focusing(self) -> bool:
        return self.mu == -1


def _restrict_to_slot(
    data: np.ndarray, grid: TorusGrid, kappa: int, k: int, j: int, pin_primed: bool
) -> np.ndarray:
    """Tie all extra-variable axes to x_j (or x'_j) via chained diagonals."""
    d = grid.d
    ids: list = list(range(data.ndim))
    cur = data
    tied: dict[int, object] = {}
    for c in range(d):
        target = (kappa * d if pin_primed else 0) + (j - 1) * d + c
        partners = [(k + e) * d + c for e in range(kappa - k)]
        partners += [kappa * d + (k + e) * d + c for e in range(kappa - k)]
        axis_id: object = target
        for n_tie, partner in enumerate(partners):
            i1, i2 = ids.index(axis_id), ids.index(partner)
            cur = np.diagonal(cur, axis1=min(i1, i2), axis2=max(i1, i2))
            new_id = ("tied", j, c, n_tie)
            for idx in sorted((i1, i2), reverse=True):
                del ids[idx]
            ids.append(new_id)
            axis_id = new_id
        tied[c] = axis_id
    desired: list = []
    for primed_block in (False, True):
        for var in range(1, k + 1):
            for c in range(d):
                if var == j and primed_block == pin_primed:
                    desired.append(tied[c])
                else:
                    desired.append((kappa * d if primed_block else 0) + (var - 1) * d + c)
    return np.ascontiguousarray(cur.transpose([ids.index(x) for x in desired]))


def _check_collapse_input(gamma: Marginal, spec: InteractionSpec) -> int:
    k = gamma.k - spec.half
    if k < 1:
        raise ValueError(
            f"collapse needs input level >= {1 + spec.half} (p={spec.p}), got level {gamma.k}"
        )
    return k


def b_plus(j: int, gamma: Marginal, spec: InteractionSpec) -> Marginal:
    """B^+_{j}: pin the p/2 extra unprimed and primed slots to x_j."""
    k = _check_collapse_input(gamma, spec)
    if not 1 <= j <= k:
        raise ValueError(f"slot index j={j} out of range 1..{k}")
    return Marginal(
        gamma.grid, k, _restrict_to_slot(gamma.data, gamma.grid, gamma.k, k, j, pin_primed=False)
    )


def b_minus(j: int, gamma: Marginal, spec: InteractionSpec) -> Marginal:
    """B^-_{j}: pin the p/2 extra unprimed and primed slots to x'_j."""
    k = _check_collapse_input(gamma, spec)
    if not 1 <= j <= k:
        raise ValueError(f"slot index j={j} out of range 1..{k}")
    return Marginal(
        gamma.grid, k, _restrict_to_slot(gamma.data, gamma.grid, gamma.k, k, j, pin_primed=True)
    )


def b_collapse(gamma: Marginal, spec: InteractionSpec, symmetrize_output: bool = False) -> Marginal:
    """B_{k+p/2} gamma = sum_j (B^+_j - B^-_j) gamma, mapping level k+p/2 to k.

    The j-sum is evaluated without intermediate symmetrization (symmetry
    holds analytically for symmetric inputs); pass symmetrize_output=True
    to add a final symmetrize pass.
    """
    k = _check_collapse_input(gamma, spec)
    out = np.zeros((gamma.grid.M,) * gamma.grid.axis_count(k), dtype=np.complex128)
    for j in range(1, k + 1):
        out += _restrict_to_slot(gamma.data, gamma.grid, gamma.k, k, j, pin_primed=False)
        out -= _restrict_to_slot(gamma.data, gamma.grid, gamma.k, k, j, pin_primed=True)
    result = Marginal(gamma.grid, k, out)
    if symmetrize_output:
        from .marginal import symmetrize

        result = symmetrize(result)
    return result


def b_hat(state: HierarchyState, spec: InteractionSpec) -> HierarchyState:
    """Sequence collapse: level-k output is B gamma^(k+p/2); N shrinks by p/2."""
    if state.p != spec.p or state.mu != spec.mu:
        raise ValueError("interaction spec does not match the hierarchy state")
    if state.N < 1 + spec.half:
        raise ValueError(f"b_hat needs N >= {1 + spec.half}, got N={state.N}")
    levels = [b_collapse(state.level(k + spec.half), spec) for k in range(1, state.N - spec.half + 1)]
    return HierarchyState(state.grid, levels, state.p, state.mu)


def free_evolve(gamma: Marginal, t: float) -> Marginal:
    """Apply U^(k)(t): diagonal phases exp(-it|p|^2) (unprimed) and conjugate (primed).

    Unitary and diagonal, so trace, hermiticity, symmetry, and every
    H^alpha norm are preserved exactly.
    """
    grid = gamma.grid
    hat = transform(gamma.data, range(gamma.n_axes), "forward")
    ph_u = phase_weights(grid, t, "unprimed")
    ph_p = phase_weights(grid, t, "primed")
    half = gamma.n_axes // 2
    for ax in range(gamma.n_axes):
        shape = [1] * gamma.n_axes
        shape[ax] = grid.M
        hat *= (ph_u if ax < half else ph_p).reshape(shape)
    return Marginal(grid, gamma.k, transform(hat, range(gamma.n_axes), "inverse"))


def rhs(state: HierarchyState, spec: InteractionSpec) -> HierarchyState:
    """Time derivative of the truncated hierarchy at the given state.

    Per level: -i*(|p|^2 multiplier) part (the kinetic commutator, diagonal
    in Fourier, consistent with free_evolve) minus i*mu times the collapse
    of the level p/2 above (zero above the truncation).
    """
    if state.p != spec.p or state.mu != spec.mu:
        raise ValueError("interaction spec does not match the hierarchy state")
    from ._kernels import multiplier_tensor

    grid = state.grid
    out = []
    for n in range(1, state.N + 1):
        g = state.level(n)
        hat = transform(g.data, range(g.n_axes), "forward")
        hat *= -1j * multiplier_tensor(grid, n)
        dgamma = transform(hat, range(g.n_axes), "inverse")
        if n + spec.half <= state.N:
            dgamma = dgamma - 1j * spec.mu * b_collapse(state.level(n + spec.half), spec).data
        out.append(Marginal(grid, n, dgamma))
    return HierarchyState(grid, out, state.p, state.mu)


@dataclass(frozen=True)
class AlphaInterval:
    """Half-line of admissible regularities (lower end open or closed)."""

    lower: float
    closed: bool

    def __contains__(self, alpha: float) -> bool:
        return alpha >= self.lower if self.closed else alpha > self.lower

    def __str__(self) -> str:
        bracket = "[" if self.closed else "("
        return f"{bracket}{self.lower}, inf)"


def admissible_alpha_range(d: int, p: int) -> AlphaInterval:
    """Regularity range in which the collapse Strichartz estimates hold."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got d={d}")
    if p not in (2, 4):
        raise ValueError(f"interaction order p must be 2 or 4, got {p}")
    if d == 1:
        return AlphaInterval(0.5, closed=False)
    if (d, p) == (3, 2):
        return AlphaInterval(1.0, closed=True)
    return AlphaInterval(d / 2 - 1 / (2 * (p - 1)), closed=False)
