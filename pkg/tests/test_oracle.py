import numpy as np
import pytest

from factorbounds.design import enumerate_assignments, strip_factor
from factorbounds.errors import (
    AssumptionViolationError,
    InvalidFactorError,
    InvalidShareError,
    NoCompliersError,
)
from factorbounds.oracle import (
    adjusted_bounds,
    conservative_bounds,
    constant_complier_share,
    exclusion_bounds,
    interaction_bounds,
    interaction_effect,
    itt_report,
    joint_bounds,
    joint_interaction_effect,
    main_effect,
    simple_bounds,
    wald_ratio,
)
from factorbounds.population import Population, check_least_compliant_profile

TOL = 1e-12

C, A, NV = 0, 1, 2  # local type codes for the sweep builder


def assumption_population(rng, K, N, upgrade_factors=(1,)):
    """Random population satisfying monotonicity and a common worst context.

    Types are drawn at the all-minus context and only ever upgraded toward
    compliance elsewhere, so the all-minus context is least compliant for
    every unit. Factors outside `upgrade_factors` keep context-invariant
    types, which preserves uptake exclusion for the factors inside.
    Outcomes are per-unit functions of the realized uptake vector alone.
    Unit 0 complies with everything everywhere.
    """
    from factorbounds.design import context_index

    design = enumerate_assignments(K)
    J = design.J
    base = rng.choice([C, A, NV], size=(N, K), p=[0.4, 0.2, 0.4])
    base[0, :] = C
    # one upgrade draw per (unit, context) so both arms of a context agree
    lift_tbl = {
        k: rng.random((N, J // 2)) < 0.5 for k in range(1, K + 1) if k in upgrade_factors
    }
    uptake = np.empty((N, J, K), dtype=np.int8)
    for j, z in enumerate(design.assignments()):
        for k in range(1, K + 1):
            ctx = strip_factor(z, k)
            t = base[:, k - 1].copy()
            if k in upgrade_factors and ctx != tuple([-1] * (K - 1)):
                lift = lift_tbl[k][:, context_index(design, k, ctx)]
                t = np.where(lift & (t != C), C, t)
            d = np.where(t == C, z[k - 1], np.where(t == A, 1, -1))
            uptake[:, j, k - 1] = d
    ymap = rng.random((N, J))
    outcome = np.empty((N, J))
    for j in range(J):
        d_idx = ((uptake[:, j, :] + 1) // 2 * (1 << np.arange(K))).sum(axis=1)
        outcome[:, j] = ymap[np.arange(N), d_idx]
    return Population(design=design, uptake=uptake, outcome=outcome)


# ---------------------------------------------------------------- P4 values


def test_p4_itt_and_first_stage(p4):
    rep = itt_report(p4, 1)
    assert rep.gamma[(-1,)] == 0.5
    assert rep.gamma[(1,)] == 0.75
    assert rep.nu[(-1,)] == 0.5
    assert rep.nu[(1,)] == 0.75
    assert rep.nu_minus[(-1,)] == 0.0 and rep.nu_minus[(1,)] == 0.0
    for ctx in rep.contexts:
        assert abs(sum(rep.components[ctx]) - rep.gamma[ctx]) < TOL


def test_p4_truth_and_shares(p4):
    assert main_effect(p4, 1) == 1.0
    assert constant_complier_share(p4, 1) == 0.5
    assert check_least_compliant_profile(p4, 1) == ((-1,),)


def test_p4_adjusted(p4):
    iv = adjusted_bounds(p4, 1, (-1,))
    assert abs(iv.center - 1.25) < TOL
    assert abs(iv.raw_lower - 1.0) < TOL
    assert abs(iv.raw_upper - 2.25) < TOL
    assert iv.lower == 1.0 and iv.upper == 1.0
    assert iv.upper_clipped and not iv.lower_clipped


def test_p4_simple(p4):
    iv = simple_bounds(p4, 1, (-1,))
    assert abs(iv.center - 1.25) < TOL
    assert abs(iv.raw_lower - 0.25) < TOL
    assert abs(iv.raw_upper - 2.25) < TOL
    assert iv.lower == 0.25 and iv.upper == 1.0


def test_p4_exclusion(p4):
    iv = exclusion_bounds(p4, 1, (-1,))
    assert abs(iv.center - 1.25) < TOL
    assert abs(iv.half_width_lower - 0.25) < TOL
    assert abs(iv.raw_lower - 1.0) < TOL and abs(iv.raw_upper - 1.5) < TOL
    assert iv.lower == 1.0 and iv.upper == 1.0


def test_p4_interaction(p4):
    iv = interaction_bounds(p4, (1, 2), 1, (-1,))
    assert abs(iv.center - 0.25) < TOL
    assert abs(iv.raw_lower - 0.0) < TOL and abs(iv.raw_upper - 0.5) < TOL
    truth = interaction_effect(p4, (1, 2), 1)
    assert truth == 0.0
    assert iv.raw_lower - TOL <= truth <= iv.raw_upper + TOL


def test_p4_conservative(p4):
    iv = conservative_bounds(p4, 1, 0.25)
    assert abs(iv.center - 2.5) < TOL
    assert abs(iv.raw_lower - 1.0) < TOL and abs(iv.raw_upper - 4.0) < TOL
    assert iv.lower == 1.0 and iv.upper == 1.0
    # plugging in the true constant-complier share reproduces the
    # least-compliant-profile bounds exactly
    ref = exclusion_bounds(p4, 1, (-1,))
    same = conservative_bounds(p4, 1, 0.5)
    assert same.raw_lower == ref.raw_lower
    assert same.raw_upper == ref.raw_upper
    assert same.center == ref.center
    with pytest.raises(InvalidShareError):
        conservative_bounds(p4, 1, 0.6)
    with pytest.raises(InvalidShareError):
        conservative_bounds(p4, 1, 0.0)


def test_p4_wald(p4):
    assert abs(wald_ratio(p4, 1) - 1.0) < TOL


def test_p4_full_compliance_factor2(p4):
    # factor 2 is taken exactly as assigned, so every method collapses to
    # the same point and the truth is the plain factorial effect
    truth = main_effect(p4, 2)
    for fn in (adjusted_bounds, simple_bounds, exclusion_bounds):
        iv = fn(p4, 2, (-1,))
        assert abs(iv.raw_lower - truth) < TOL
        assert abs(iv.raw_upper - truth) < TOL
    assert abs(wald_ratio(p4, 2) - truth) < TOL


# ------------------------------------------------------------ joint bounds


def test_joint_fixture_truth(k3_joint_pop):
    assert abs(joint_interaction_effect(k3_joint_pop, 1, 2) - 0.125) < TOL


def test_joint_fixture_bounds(k3_joint_pop):
    iv = joint_bounds(k3_joint_pop, 1, 2, (-1,))
    # hand-computed: nu_J(-1) = 1/4, g12'Ybar = 0.1875, g12'Pbar = 3
    assert abs(iv.center - 0.1875) < TOL
    assert abs(iv.half_width_lower - 0.5) < TOL
    assert abs(iv.raw_lower - (-0.3125)) < TOL
    assert abs(iv.raw_upper - 0.6875) < TOL
    truth = joint_interaction_effect(k3_joint_pop, 1, 2)
    assert iv.raw_lower - TOL <= truth <= iv.raw_upper + TOL
    with pytest.raises(AssumptionViolationError):
        joint_bounds(k3_joint_pop, 1, 2, (1,))  # not least compliant


def test_joint_full_compliance_point_identifies():
    rng = np.random.default_rng(3)
    pop = assumption_population(rng, 2, 6, upgrade_factors=())
    # overwrite: everyone complies with both factors
    design = pop.design
    uptake = np.empty_like(pop.uptake)
    for j, z in enumerate(design.assignments()):
        uptake[:, j, 0] = z[0]
        uptake[:, j, 1] = z[1]
    pop = Population(design=design, uptake=uptake, outcome=pop.outcome)
    iv = joint_bounds(pop, 1, 2, ())
    assert abs(iv.half_width_lower) < TOL and abs(iv.half_width_upper) < TOL
    assert abs(iv.center - joint_interaction_effect(pop, 1, 2)) < TOL


def test_joint_requires_cross_exclusion(k3_joint_pop):
    # factors (1, 3): unit 1's factor-1 uptake moves with z3
    with pytest.raises(AssumptionViolationError):
        joint_bounds(k3_joint_pop, 1, 3, ())


# ------------------------------------------------------- property sweeps


def test_identity_nu_decomposition():
    # nu(c) = constant share + conditional-complier share at c, exactly
    rng = np.random.default_rng(23)
    from factorbounds.oracle import _nu_arrays
    from factorbounds.population import classify, group_shares

    for _ in range(60):
        K = int(rng.integers(1, 4))
        pop = assumption_population(rng, K, int(rng.integers(2, 12)), upgrade_factors=(1,))
        contexts, _, _, nu = _nu_arrays(pop, 1)
        valid = check_least_compliant_profile(pop, 1)
        assert tuple([-1] * (K - 1)) in valid
        shares = group_shares(pop, 1, valid[0])
        for i, ctx in enumerate(contexts):
            want = shares.rho_constant + shares.rho_conditional_complier[ctx]
            assert abs(nu[i] - want) < TOL
        # and at the least-compliant profile the conditional share vanishes
        assert shares.rho_conditional_complier[valid[0]] == 0.0


def test_coverage_and_nesting_sweep():
    rng = np.random.default_rng(29)
    checked = 0
    for _ in range(150):
        K = int(rng.integers(1, 4))
        N = int(rng.integers(2, 14))
        pop = assumption_population(rng, K, N, upgrade_factors=(1,))
        tilde = tuple([-1] * (K - 1))
        truth = main_effect(pop, 1)
        iv_adj = adjusted_bounds(pop, 1, tilde)
        iv_sim = simple_bounds(pop, 1, tilde)
        iv_exc = exclusion_bounds(pop, 1, tilde)
        for iv in (iv_adj, iv_sim, iv_exc):
            assert iv.raw_lower - TOL <= truth <= iv.raw_upper + TOL
            assert iv.lower >= -1.0 and iv.upper <= 1.0
            assert iv.raw_lower <= iv.center <= iv.raw_upper
        # raw width ordering, zero tolerance
        assert iv_exc.raw_width <= iv_adj.raw_width + TOL
        assert iv_adj.raw_width <= iv_sim.raw_width + TOL
        # conservative plug-ins below the true share only widen
        rho = constant_complier_share(pop, 1)
        assert rho > 0.0
        cons = conservative_bounds(pop, 1, rho / 2)
        assert cons.raw_lower <= iv_exc.raw_lower + TOL
        assert cons.raw_upper >= iv_exc.raw_upper - TOL
        checked += 1
    assert checked == 150


def test_coverage_all_factors_upgrading():
    # monotonicity and the common worst context alone cover adjusted and
    # simple bounds even when every factor's compliance shifts with context
    rng = np.random.default_rng(31)
    for _ in range(80):
        K = int(rng.integers(2, 4))
        pop = assumption_population(rng, K, int(rng.integers(2, 10)),
                                    upgrade_factors=tuple(range(1, K + 1)))
        tilde = tuple([-1] * (K - 1))
        truth = main_effect(pop, 1)
        for fn in (adjusted_bounds, simple_bounds):
            iv = fn(pop, 1, tilde)
            assert iv.raw_lower - TOL <= truth <= iv.raw_upper + TOL


def test_interaction_coverage_sweep():
    rng = np.random.default_rng(37)
    for _ in range(60):
        K = int(rng.integers(2, 4))
        pop = assumption_population(rng, K, int(rng.integers(2, 10)), upgrade_factors=(1,))
        tilde = tuple([-1] * (K - 1))
        truth = interaction_effect(pop, (1, 2), 1)
        iv = interaction_bounds(pop, (1, 2), 1, tilde)
        assert iv.raw_lower - TOL <= truth <= iv.raw_upper + TOL
        ref = exclusion_bounds(pop, 1, tilde)
        assert abs(iv.half_width_lower - ref.half_width_lower) < TOL


def test_joint_coverage_sweep():
    rng = np.random.default_rng(41)
    covered = 0
    for _ in range(80):
        K = int(rng.integers(2, 4))
        pop = assumption_population(rng, K, int(rng.integers(2, 10)), upgrade_factors=())
        try:
            truth = joint_interaction_effect(pop, 1, 2)
        except NoCompliersError:
            continue
        iv = joint_bounds(pop, 1, 2, tuple([-1] * (K - 2)))
        assert iv.raw_lower - TOL <= truth <= iv.raw_upper + TOL
        covered += 1
    assert covered > 30


# ------------------------------------------------------------- error paths


def test_defier_rejected(p4):
    uptake = p4.uptake.copy()
    uptake[0, 0, 0] = 1
    uptake[0, 1, 0] = -1
    bad = Population(design=p4.design, uptake=uptake, outcome=p4.outcome)
    with pytest.raises(AssumptionViolationError):
        adjusted_bounds(bad, 1, (-1,))


def test_invalid_profile_rejected(p4):
    with pytest.raises(AssumptionViolationError):
        exclusion_bounds(p4, 1, (1,))


def test_no_compliers_at_profile():
    design = enumerate_assignments(2)
    uptake = np.full((3, 4, 2), -1, dtype=np.int8)  # nobody ever takes anything
    outcome = np.zeros((3, 4))
    pop = Population(design=design, uptake=uptake, outcome=outcome)
    with pytest.raises(NoCompliersError):
        simple_bounds(pop, 1, (-1,))
    with pytest.raises(NoCompliersError):
        wald_ratio(pop, 1)


def test_exclusion_requires_uptake_invariance():
    # unit 0 never takes factor 1, yet its factor-2 uptake flips with z1:
    # exactly the cross-move the exclusion bounds rule out
    design = enumerate_assignments(2)
    uptake = np.empty((2, 4, 2), dtype=np.int8)
    for j, z in enumerate(design.assignments()):
        uptake[0, j, 0] = -1
        uptake[0, j, 1] = z[0]
        uptake[1, j, 0] = z[0]
        uptake[1, j, 1] = z[1]
    outcome = np.tile(np.linspace(0, 1, 4), (2, 1))
    pop = Population(design=design, uptake=uptake, outcome=outcome)
    with pytest.raises(AssumptionViolationError):
        exclusion_bounds(pop, 1, check_least_compliant_profile(pop, 1)[0])
    # adjusted and simple do not require it
    tilde = check_least_compliant_profile(pop, 1)[0]
    adjusted_bounds(pop, 1, tilde)
    simple_bounds(pop, 1, tilde)


def test_interaction_anchor_must_be_member(p4):
    with pytest.raises(InvalidFactorError):
        interaction_bounds(p4, (2,), 1, (-1,))
    with pytest.raises(InvalidFactorError):
        interaction_effect(p4, (2,), 1)
