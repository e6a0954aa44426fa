import numpy as np

from ..instances.types import ProblemInstance


def _transforms(x, y):
    return (
        (x, y), (y, x), (x, 1 - y), (y, 1 - x),
        (1 - x, y), (1 - y, x), (1 - x, 1 - y), (1 - y, 1 - x),
    )


def augment_coords_x8(coords: np.ndarray) -> np.ndarray:
    """(..., N, 2) -> (8, ..., N, 2) under the eight symmetries of the unit square."""
    x, y = coords[..., 0], coords[..., 1]
    return np.stack([np.stack(t, -1) for t in _transforms(x, y)])


def augment_x8(instance: ProblemInstance) -> list:
    """Eight symmetric copies of ``instance``; the first is the identity."""
    return [instance] + [instance.with_coords(c) for c in augment_coords_x8(instance.coords)[1:]]
