"""Internal Fourier-domain kernels for the time marches.

The solver keeps hierarchy levels as mode tensors so that the free
propagator is a single elementwise phase multiply per node.  The collapse
is evaluated directly on mode tensors: pinning p/2 extra unprimed and
primed slots to x_j turns, on the mode side, into a mode-sum convolution

    out[r_1..r_k; r'] = M^(-pd/2) * sum_{pinned modes} hat[.., r_j - sigma, .., pinned]

with sigma the componentwise sum of all pinned modes (indices mod M, which
is exact on the grid).  The sigma-grouped intermediate is independent of
the slot j and of the +/- branch, so one pass over the input serves the
whole j-sum.  Cross-checked elementwise against the real-space operators
in the test suite.
"""

from __future__ import annotations

import numpy as np

from .grid import TorusGrid


def multiplier_tensor(grid: TorusGrid, k: int) -> np.ndarray:
    """Dense kinetic multiplier sum_j(|p_j|^2 - |p'_j|^2) on level-k modes."""
    n_axes = grid.axis_count(k)
    half = n_axes // 2
    p2 = grid.wavenumbers**2
    lam = np.zeros((grid.M,) * n_axes)
    for ax in range(n_axes):
        shape = [1] * n_axes
        shape[ax] = grid.M
        lam += (p2 if ax < half else -p2).reshape(shape)
    return lam


def phase_tensor(grid: TorusGrid, k: int, t: float) -> np.ndarray:
    """Dense free-propagator phases exp(-i t lambda) on level-k modes."""
    return np.exp(-1j * t * multiplier_tensor(grid, k))


def fftn_level(data: np.ndarray) -> np.ndarray:
    return np.fft.fftn(data, norm="ortho")


def ifftn_level(hat: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(hat, norm="ortho")


def fourier_collapse(hat: np.ndarray, grid: TorusGrid, kappa: int, half: int) -> np.ndarray:
    """Mode-space B_{k+p/2}: collapse a level-kappa mode tensor to level kappa-half.

    `half` is p/2.  Output axes follow the standard (unprimed block, primed
    block) order of the retained k = kappa - half variables.
    """
    d, M = grid.d, grid.M
    k = kappa - half
    if k < 1:
        raise ValueError(f"collapse needs level >= {half + 1}, got {kappa}")
    # move pinned axes (extra variables, both blocks) to the end
    free_axes = []
    for primed in (False, True):
        base = kappa * d if primed else 0
        free_axes.extend(range(base, base + k * d))
    pinned_axes = []
    for primed in (False, True):
        base = kappa * d if primed else 0
        pinned_axes.extend(range(base + k * d, base + kappa * d))
    work = hat.transpose(free_axes + pinned_axes)

    # group pinned-mode combinations by their componentwise index sum sigma
    n_pinned = len(pinned_axes)
    free_shape = (M,) * (2 * k * d)
    grouped = np.zeros(free_shape + (M,) * d, dtype=np.complex128)
    for combo in np.ndindex(*(M,) * n_pinned):
        sigma = tuple(
            sum(combo[a] for a in range(n_pinned) if a % d == c) % M for c in range(d)
        )
        grouped[(Ellipsis,) + sigma] += work[(Ellipsis,) + combo]

    # roll-accumulate: out[.., r_j, ..] = sum_sigma grouped[.., r_j - sigma, .., sigma]
    out = np.zeros(free_shape, dtype=np.complex128)
    for sigma in np.ndindex(*(M,) * d):
        slab = grouped[(Ellipsis,) + sigma]
        for j in range(k):
            plus_axes = tuple(range(j * d, (j + 1) * d))
            minus_axes = tuple(range((k + j) * d, (k + j + 1) * d))
            out += np.roll(slab, sigma, axis=plus_axes)
            out -= np.roll(slab, sigma, axis=minus_axes)
    out *= float(M) ** (-half * d)
    return out
