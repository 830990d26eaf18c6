import numpy as np
import pytest

from factorbounds.design import enumerate_assignments
from factorbounds.population import Population, fixture_p4
from factorbounds.simulate import census_dataset


def build_population(K, uptake_rules, outcome_fn):
    """Assemble a Population from per-unit uptake rules.

    uptake_rules: one callable per unit, z -> length-K tuple of levels.
    outcome_fn: (unit_index, z, d) -> float in [0, 1].
    """
    design = enumerate_assignments(K)
    N = len(uptake_rules)
    uptake = np.empty((N, design.J, K), dtype=np.int8)
    outcome = np.empty((N, design.J), dtype=np.float64)
    for i, rule in enumerate(uptake_rules):
        for j, z in enumerate(design.assignments()):
            d = rule(z)
            uptake[i, j, :] = d
            outcome[i, j] = outcome_fn(i, z, d)
    return Population(design=design, uptake=uptake, outcome=outcome)


def random_population(rng, K, N):
    """Unconstrained uptake and outcomes; no assumption is guaranteed."""
    design = enumerate_assignments(K)
    uptake = rng.choice(np.array([-1, 1], dtype=np.int8), size=(N, design.J, K))
    outcome = rng.random((N, design.J))
    return Population(design=design, uptake=uptake, outcome=outcome)


@pytest.fixture
def p4():
    return fixture_p4()


@pytest.fixture
def p4_census(p4):
    return census_dataset(p4)


@pytest.fixture
def k3_joint_pop():
    """Four units, three factors; factors 1 and 2 are the bounded pair.

    Unit 0 complies with everything everywhere. Unit 1 complies with
    factors 1 and 2 only when factor 3 sits at +1, so the joint valid set
    is exactly {z3 = -1}. Units 2 and 3 never take factors 1 or 2.
    Everyone complies with factor 3.
    """

    def full(z):
        return z

    def gated(z):
        on = z[2] == 1
        return (z[0] if on else -1, z[1] if on else -1, z[2])

    def inert(z):
        return (-1, -1, z[2])

    def y(i, z, d):
        u = [(v + 1) // 2 for v in d]
        return 0.25 * u[0] * u[1] + 0.25 * u[0] + 0.1 * u[2]

    return build_population(3, [full, gated, inert, inert], y)
