from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

HORIZON = 4.6
RHO_MAX = 3.0
GAUSSIAN_MIXTURE_PARAMS = ((1, 1),) + tuple(itertools.product((3, 5, 7), (10, 30, 50)))
MUTATION_OPERATORS = ("explosion", "implosion", "rotation", "linear_projection", "expansion", "grid")


@dataclass(frozen=True)
class VariantFlags:
    """Optional constraints on top of capacity (which is always active)."""

    open_route: bool = False
    backhaul: bool = False
    duration_limit: bool = False
    time_window: bool = False

    @property
    def name(self) -> str:
        s = "O" if self.open_route else ""
        s += "VRP"
        if self.backhaul:
            s += "B"
        if self.duration_limit:
            s += "L"
        if self.time_window:
            s += "TW"
        return "CVRP" if s == "VRP" else s

    @classmethod
    def from_name(cls, name: str) -> "VariantFlags":
        key = name.strip().upper()
        for v in ALL_VARIANTS:
            if v.name == key:
                return v
        raise ValueError(f"unknown variant {name!r}")

    def to_dict(self):
        return {
            "open_route": self.open_route,
            "backhaul": self.backhaul,
            "duration_limit": self.duration_limit,
            "time_window": self.time_window,
        }


ALL_VARIANTS = tuple(
    VariantFlags(o, b, l, tw) for o, b, l, tw in itertools.product((False, True), repeat=4)
)
VARIANT_NAMES = tuple(v.name for v in ALL_VARIANTS)


@dataclass(frozen=True)
class Distribution:
    """Coordinate distribution: ``uniform``, ``gaussian_mixture`` (m, c) or ``mutated`` (operator)."""

    kind: str = "uniform"
    clusters: int = 1
    scale: float = 1.0
    operator: Optional[str] = None

    @property
    def label(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        if self.kind == "gaussian_mixture":
            return f"gm_{self.clusters}_{self.scale:g}"
        return self.operator

    @classmethod
    def parse(cls, label: str) -> "Distribution":
        label = label.strip().lower()
        if label == "uniform":
            return cls()
        if label.startswith("gm_"):
            _, m, c = label.split("_")
            return cls("gaussian_mixture", int(m), float(c))
        if label in MUTATION_OPERATORS:
            return cls("mutated", operator=label)
        raise ValueError(f"unknown distribution {label!r}")


TRAINING_DISTRIBUTIONS = (Distribution(),) + tuple(
    Distribution("gaussian_mixture", m, float(c)) for m, c in GAUSSIAN_MIXTURE_PARAMS
)
OOD_DISTRIBUTIONS = tuple(Distribution("mutated", operator=op) for op in MUTATION_OPERATORS)


@dataclass(frozen=True)
class GeneratorConfig:
    scale: int
    variant: VariantFlags = VariantFlags()
    distribution: Distribution = Distribution()
    seed: int = 0


@dataclass
class ProblemInstance:
    """One VRP instance.  Node 0 is the depot; demands are normalised by capacity."""

    scale: int
    coords: np.ndarray  # (M+1, 2)
    demands: np.ndarray  # (M+1,), depot entry 0
    raw_capacity: int
    backhaul_mask: np.ndarray  # (M,), True => pickup
    service_times: np.ndarray  # (M+1,)
    variant: VariantFlags
    time_windows: Optional[np.ndarray] = None  # (M+1, 2)
    distance_limit: Optional[float] = None
    horizon: float = HORIZON
    seed: int = 0
    distribution: str = "uniform"
    _dist: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.scale + 1

    @property
    def pickup(self) -> np.ndarray:
        """Per-node pickup flag including the depot (always False)."""
        return np.concatenate([[False], self.backhaul_mask])

    def distance_matrix(self) -> np.ndarray:
        if self._dist is None:
            self._dist = euclidean_distances(self.coords)
        return self._dist

    def with_coords(self, coords: np.ndarray) -> "ProblemInstance":
        return ProblemInstance(
            scale=self.scale,
            coords=np.asarray(coords, dtype=np.float64),
            demands=self.demands,
            raw_capacity=self.raw_capacity,
            backhaul_mask=self.backhaul_mask,
            service_times=self.service_times,
            variant=self.variant,
            time_windows=self.time_windows,
            distance_limit=self.distance_limit,
            horizon=self.horizon,
            seed=self.seed,
            distribution=self.distribution,
        )


def euclidean_distances(coords: np.ndarray) -> np.ndarray:
    diff = coords[..., :, None, :] - coords[..., None, :, :]
    return np.sqrt((diff * diff).sum(-1))


def depot_distances(coords: np.ndarray) -> np.ndarray:
    """Depot-to-customer distances, bitwise equal to ``euclidean_distances(coords)[0, 1:]``."""
    diff = coords[1:] - coords[0]
    return np.sqrt((diff * diff).sum(-1))
