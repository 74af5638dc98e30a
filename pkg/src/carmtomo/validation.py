"""Input checks shared by the estimators and metrics."""

from __future__ import annotations

import numbers

import numpy as np

from .data import ProjectionStack, VoxelGrid, VoxelVolume
from .exceptions import DomainMismatch, EmptyStack, OutOfBounds


def check_stack(stack, domain=None) -> ProjectionStack:
    if not isinstance(stack, ProjectionStack):
        raise TypeError(f"expected a ProjectionStack, got {type(stack).__name__}")
    if stack.n_views < 1:
        raise EmptyStack("projection stack has no views")
    if domain is not None and stack.domain != domain:
        raise DomainMismatch(f"expected a {domain} stack, got {stack.domain}")
    return stack


def check_grid(grid) -> VoxelGrid:
    if isinstance(grid, VoxelVolume):
        return grid.grid
    if not isinstance(grid, VoxelGrid):
        raise TypeError(f"expected a VoxelGrid, got {type(grid).__name__}")
    return grid


def check_initial(initial, grid: VoxelGrid, default: float) -> np.ndarray:
    """Return a float copy of the starting volume, broadcasting scalars."""
    if initial is None:
        return np.full(grid.shape, float(default))
    if isinstance(initial, numbers.Real):
        return np.full(grid.shape, float(initial))
    data = initial.data if isinstance(initial, VoxelVolume) else np.asarray(initial, float)
    if data.shape != grid.shape:
        raise ValueError(f"initial volume shape {data.shape} does not match grid {grid.shape}")
    return np.array(data, dtype=float)


def check_positive(name: str, value, allow_zero=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'>= 0' if allow_zero else '> 0'}, got {value}")
    return value


def check_count(name: str, value, minimum=1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_index(name: str, index, size: int) -> int:
    if not isinstance(index, numbers.Integral) or not (0 <= index < size):
        raise OutOfBounds(f"{name} {index!r} outside [0, {size})")
    return int(index)
