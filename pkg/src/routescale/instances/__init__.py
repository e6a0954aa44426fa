from .generate import (
    demand_capacity_ratio,
    gen_coords,
    gen_coords_gaussian_mixture,
    gen_coords_uniform,
    gen_demands,
    gen_distance_limit,
    gen_time_windows,
    make_instance,
    vehicle_capacity,
)
from .io import (
    InstanceParseError,
    dumps,
    instance_hash,
    load_dataset,
    load_instance,
    loads,
    save_dataset,
    save_instance,
)
from .mutate import MUTATION_DEFAULTS, apply_mutation, mutate
from .types import (
    ALL_VARIANTS,
    HORIZON,
    MUTATION_OPERATORS,
    OOD_DISTRIBUTIONS,
    RHO_MAX,
    TRAINING_DISTRIBUTIONS,
    VARIANT_NAMES,
    Distribution,
    GeneratorConfig,
    ProblemInstance,
    VariantFlags,
)
