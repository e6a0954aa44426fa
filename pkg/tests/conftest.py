import numpy as np
import pytest

from routescale.instances.generate import make_instance
from routescale.instances.types import ALL_VARIANTS, Distribution, GeneratorConfig, VariantFlags


def make(scale, variant="CVRP", seed=0, dist="uniform"):
    flags = variant if isinstance(variant, VariantFlags) else VariantFlags.from_name(variant)
    return make_instance(GeneratorConfig(scale, flags, Distribution.parse(dist), seed))


def random_instances(count, max_scale=8, seed=0, variants=ALL_VARIANTS):
    """Uniform-coordinate instances with scales drawn from [1, max_scale]."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        v = variants[i % len(variants)]
        out.append(make_instance(GeneratorConfig(int(rng.integers(1, max_scale + 1)), v,
                                                 Distribution(), int(rng.integers(2**40)))))
    return out


@pytest.fixture
def cvrp10():
    return make(10, "CVRP", seed=3)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
