"""Exact population-level effects and bound intervals.

Everything here is computed from the full potential-outcome tables, so
these are the ground-truth quantities that estimators chase and that
coverage tests compare against.

Notation used throughout (for one factor k and its 2^{K-1} contexts):

    m           number of contexts, 2^{K-1}
    nu_plus(c)  (D-bar_k(c, +) + 1) / 2, uptake share under z_k = +1
    nu_minus(c) same under z_k = -1
    nu(c)       nu_plus(c) - nu_minus(c), the first-stage at context c
    tilde       a validated least-compliant context, nu(tilde) = rho_constant
    Gamma       g^T Ybar for the relevant contrast vector g

The main-effect interval families:

    adjusted    center uses the observable noncomplier outcome means
                (never-takers under z_k=+1, always-takers under z_k=-1)
                and carries asymmetric half-widths
    simple      same denominator, half-width (1 - nu(tilde)) / nu(tilde);
                always contains the adjusted interval
    exclusion   requires that untouched uptake means untouched outcomes;
                symmetric half-width (sum of nu(c) - nu(tilde)) / (m nu(tilde))

Interaction variants reuse the exclusion machinery with an interaction
contrast; the joint variant bounds the two-factor effect among units
complying with both factors everywhere. The conservative variant replaces
nu(tilde) with a declared floor t and widens monotonically as t shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import design as dsg
from . import population as popmod
from .design import Context, FactorialDesign
from .errors import (
    AssumptionViolationError,
    InvalidFactorError,
    InvalidShareError,
    NoCompliersError,
)
from .population import Population


@dataclass(frozen=True)
class Interval:
    """A bound interval with raw endpoints kept alongside the clipped ones."""

    center: float
    half_width_lower: float
    half_width_upper: float
    raw_lower: float
    raw_upper: float
    lower: float
    upper: float
    lower_clipped: bool
    upper_clipped: bool

    @property
    def raw_width(self) -> float:
        return self.raw_upper - self.raw_lower

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _clip(x: float) -> float:
    return min(1.0, max(-1.0, x))


def _make_interval(center: float, half_lower: float, half_upper: float) -> Interval:
    raw_lower = center - half_lower
    raw_upper = center + half_upper
    lower = _clip(raw_lower)
    upper = _clip(raw_upper)
    return Interval(
        center=center,
        half_width_lower=half_lower,
        half_width_upper=half_upper,
        raw_lower=raw_lower,
        raw_upper=raw_upper,
        lower=lower,
        upper=upper,
        lower_clipped=lower != raw_lower,
        upper_clipped=upper != raw_upper,
    )


@dataclass(frozen=True)
class ITTReport:
    """Per-context ITT on the outcome and its compliance-group split."""

    factor: int
    contexts: tuple[Context, ...]
    gamma: dict[Context, float]
    components: dict[Context, tuple[float, float, float]]
    nu_plus: dict[Context, float]
    nu_minus: dict[Context, float]
    nu: dict[Context, float]


def _nu_arrays(pop: Population, k: int) -> tuple[tuple[Context, ...], np.ndarray, np.ndarray, np.ndarray]:
    contexts = tuple(dsg.contexts_for(pop.design, k))
    dbar = pop.arm_uptake_means(k)
    nu_plus = np.empty(len(contexts))
    nu_minus = np.empty(len(contexts))
    for c_index in range(len(contexts)):
        j_minus, j_plus = dsg.context_arms(pop.design, k, c_index)
        nu_plus[c_index] = (dbar[j_plus] + 1.0) / 2.0
        nu_minus[c_index] = (dbar[j_minus] + 1.0) / 2.0
    return contexts, nu_plus, nu_minus, nu_plus - nu_minus


def itt_report(pop: Population, k: int) -> ITTReport:
    """ITT per context split into constant / conditional-complier /
    conditional-noncomplier contributions (group totals over N, so the
    three parts sum to gamma exactly)."""
    popmod.require_monotonicity(pop, k)
    contexts, nu_plus, nu_minus, nu = _nu_arrays(pop, k)
    prof = popmod.classify(pop, k)
    complier = prof.complier_mask()
    constant = prof.constant_complier_mask()
    N = pop.N
    gamma: dict[Context, float] = {}
    components: dict[Context, tuple[float, float, float]] = {}
    for c_index, ctx in enumerate(contexts):
        j_minus, j_plus = dsg.context_arms(pop.design, k, c_index)
        diff = pop.outcome[:, j_plus] - pop.outcome[:, j_minus]
        cc_mask = complier[:, c_index] & ~constant
        cn_mask = ~complier[:, c_index]
        part_constant = float(diff[constant].sum()) / N
        part_cc = float(diff[cc_mask].sum()) / N
        part_cn = float(diff[cn_mask].sum()) / N
        gamma[ctx] = float(diff.sum()) / N
        components[ctx] = (part_constant, part_cc, part_cn)
    return ITTReport(
        factor=k,
        contexts=contexts,
        gamma=gamma,
        components=components,
        nu_plus={ctx: float(nu_plus[i]) for i, ctx in enumerate(contexts)},
        nu_minus={ctx: float(nu_minus[i]) for i, ctx in enumerate(contexts)},
        nu={ctx: float(nu[i]) for i, ctx in enumerate(contexts)},
    )


def main_effect(pop: Population, k: int) -> float:
    """Average over contexts of the constant-complier outcome contrast."""
    popmod.require_constant_compliers(pop, k)
    prof = popmod.classify(pop, k)
    constant = prof.constant_complier_mask()
    g = dsg.main_effect_contrast(pop.design, k).signs.astype(np.float64)
    ybar_cc = pop.outcome[constant].mean(axis=0)
    m = 1 << (pop.design.K - 1)
    return float(g @ ybar_cc) / m


def interaction_effect(pop: Population, factors, k: int) -> float:
    """Interaction contrast among constant compliers of factor k."""
    fs = tuple(sorted(set(factors)))
    if k not in fs:
        raise InvalidFactorError(f"anchor factor {k} must belong to the interaction set {fs!r}")
    popmod.require_constant_compliers(pop, k)
    prof = popmod.classify(pop, k)
    constant = prof.constant_complier_mask()
    g = dsg.interaction_contrast(pop.design, fs).signs.astype(np.float64)
    ybar_cc = pop.outcome[constant].mean(axis=0)
    m = 1 << (pop.design.K - 1)
    return float(g @ ybar_cc) / m


def _joint_constant_mask(pop: Population, k: int, k2: int) -> np.ndarray:
    mask_k = popmod.classify(pop, k).constant_complier_mask()
    mask_k2 = popmod.classify(pop, k2).constant_complier_mask()
    return mask_k & mask_k2


def joint_interaction_effect(pop: Population, k: int, k2: int) -> float:
    """Two-factor interaction among units complying with both everywhere."""
    if k == k2:
        raise InvalidFactorError("joint interaction needs two distinct factors")
    mask = _joint_constant_mask(pop, k, k2)
    if not mask.any():
        raise NoCompliersError(f"no joint constant compliers for factors ({k}, {k2})")
    g = dsg.interaction_contrast(pop.design, (k, k2)).signs.astype(np.float64)
    ybar = pop.outcome[mask].mean(axis=0)
    m = 1 << (pop.design.K - 1)
    return float(g @ ybar) / m


def _resolve_tilde(pop: Population, k: int, tilde: Context) -> tuple[int, float]:
    """Validate the profile and return its index and nu(tilde) > 0."""
    tilde = tuple(tilde)
    popmod.require_monotonicity(pop, k)
    popmod.require_least_compliant(pop, k, tilde)
    _, _, _, nu = _nu_arrays(pop, k)
    t_index = dsg.context_index(pop.design, k, tilde)
    nu_tilde = float(nu[t_index])
    if nu_tilde <= 0.0:
        raise NoCompliersError(f"factor {k}: first stage at {tilde!r} is {nu_tilde}, bounds undefined")
    return t_index, nu_tilde


def _require_weak_exclusion(pop: Population, k: int) -> None:
    violations = popmod.check_weak_treatment_exclusion(pop, k)
    if violations:
        raise AssumptionViolationError(
            f"factor {k}: uptake of other factors shifts for noncompliers at {violations[:5]}"
            + ("..." if len(violations) > 5 else "")
        )


def adjusted_bounds(pop: Population, k: int, tilde: Context) -> Interval:
    """Main-effect bounds using observable noncomplier outcome means.

    The center subtracts the never-taker mean under z_k=+1 and adds the
    always-taker mean under z_k=-1 (each weighted by its exact share, so
    empty groups contribute zero without evaluating a mean). Half-widths
    are asymmetric: conditional-complier mass plus the always-taker share
    downward, plus the never-taker share upward.
    """
    _, nu_tilde = _resolve_tilde(pop, k, tilde)
    contexts, nu_plus, nu_minus, nu = _nu_arrays(pop, k)
    m = len(contexts)
    ybar = pop.arm_outcome_means()
    g = dsg.main_effect_contrast(pop.design, k).signs.astype(np.float64)
    gamma_sum = float(g @ ybar)
    d = pop.uptake[:, :, k - 1]
    never_term = 0.0
    always_term = 0.0
    for c_index in range(m):
        j_minus, j_plus = dsg.context_arms(pop.design, k, c_index)
        never_term += float(np.mean(pop.outcome[:, j_plus] * (d[:, j_plus] == -1)))
        always_term += float(np.mean(pop.outcome[:, j_minus] * (d[:, j_minus] == 1)))
    S = float(nu.sum())
    A = float(nu_minus.sum())
    B = float(np.sum(1.0 - nu_plus))
    denom = m * nu_tilde
    center = (gamma_sum - never_term + always_term) / denom
    half_lower = (S + A - m * nu_tilde) / denom
    half_upper = (S + B - m * nu_tilde) / denom
    return _make_interval(center, half_lower, half_upper)


def simple_bounds(pop: Population, k: int, tilde: Context) -> Interval:
    """Wald-style center with the coarse half-width (1 - nu(tilde)) / nu(tilde)."""
    _, nu_tilde = _resolve_tilde(pop, k, tilde)
    contexts, _, _, _ = _nu_arrays(pop, k)
    m = len(contexts)
    ybar = pop.arm_outcome_means()
    g = dsg.main_effect_contrast(pop.design, k).signs.astype(np.float64)
    center = float(g @ ybar) / (m * nu_tilde)
    half = (1.0 - nu_tilde) / nu_tilde
    return _make_interval(center, half, half)


def exclusion_bounds(pop: Population, k: int, tilde: Context) -> Interval:
    """Symmetric main-effect bounds under uptake-exclusion for noncompliers."""
    _require_weak_exclusion(pop, k)
    _, nu_tilde = _resolve_tilde(pop, k, tilde)
    contexts, _, _, nu = _nu_arrays(pop, k)
    m = len(contexts)
    ybar = pop.arm_outcome_means()
    g = dsg.main_effect_contrast(pop.design, k).signs.astype(np.float64)
    denom = m * nu_tilde
    center = float(g @ ybar) / denom
    half = (float(nu.sum()) - m * nu_tilde) / denom
    return _make_interval(center, half, half)


def interaction_bounds(pop: Population, factors, k: int, tilde: Context) -> Interval:
    """Bounds for an interaction contrast among factor-k constant compliers.

    Same half-width as the factor-k exclusion bounds; only the numerator
    contrast changes.
    """
    fs = tuple(sorted(set(factors)))
    if k not in fs:
        raise InvalidFactorError(f"anchor factor {k} must belong to the interaction set {fs!r}")
    _require_weak_exclusion(pop, k)
    _, nu_tilde = _resolve_tilde(pop, k, tilde)
    contexts, _, _, nu = _nu_arrays(pop, k)
    m = len(contexts)
    ybar = pop.arm_outcome_means()
    g = dsg.interaction_contrast(pop.design, fs).signs.astype(np.float64)
    denom = m * nu_tilde
    center = float(g @ ybar) / denom
    half = (float(nu.sum()) - m * nu_tilde) / denom
    return _make_interval(center, half, half)


def _joint_nu_array(pop: Population, k: int, k2: int) -> np.ndarray:
    contexts = dsg.joint_contexts_for(pop.design, k, k2)
    prod = (pop.uptake[:, :, k - 1].astype(np.float64) * pop.uptake[:, :, k2 - 1])
    pbar = prod.mean(axis=0)
    nu_joint = np.empty(len(contexts))
    for c_index in range(len(contexts)):
        j_mm, j_pm, j_mp, j_pp = dsg.joint_context_arms(pop.design, k, k2, c_index)
        nu_joint[c_index] = (pbar[j_pp] - pbar[j_mp] - pbar[j_pm] + pbar[j_mm]) / 4.0
    return nu_joint


def joint_bounds(pop: Population, k: int, k2: int, tilde_joint: Context) -> Interval:
    """Bounds for the two-factor interaction among joint constant compliers.

    Needs monotonicity and weak exclusion on both factors, a joint
    least-compliant profile, and uptake of each factor unmoved by the
    other's assignment. The first stage is the four-arm contrast of the
    uptake product; at the joint profile it equals the joint share.
    """
    if k == k2:
        raise InvalidFactorError("joint bounds need two distinct factors")
    tilde_joint = tuple(tilde_joint)
    popmod.require_monotonicity(pop, k)
    popmod.require_monotonicity(pop, k2)
    _require_weak_exclusion(pop, k)
    _require_weak_exclusion(pop, k2)
    cross = popmod.check_conditional_treatment_exclusion(pop, k, k2)
    if cross:
        raise AssumptionViolationError(
            f"factors ({k}, {k2}): uptake cross-dependence at {cross[:5]}"
            + ("..." if len(cross) > 5 else "")
        )
    valid = popmod.check_joint_least_compliant(pop, k, k2)
    if tilde_joint not in valid:
        raise AssumptionViolationError(
            f"factors ({k}, {k2}): {tilde_joint!r} is not a joint least-compliant profile; valid set {valid!r}"
        )
    nu_joint = _joint_nu_array(pop, k, k2)
    t_index = dsg.joint_context_index(pop.design, k, k2, tilde_joint)
    nu_tilde = float(nu_joint[t_index])
    if nu_tilde <= 0.0:
        raise NoCompliersError(
            f"factors ({k}, {k2}): joint first stage at {tilde_joint!r} is {nu_tilde}"
        )
    m = 1 << (pop.design.K - 1)
    g = dsg.interaction_contrast(pop.design, (k, k2)).signs.astype(np.float64)
    ybar = pop.arm_outcome_means()
    prod = (pop.uptake[:, :, k - 1].astype(np.float64) * pop.uptake[:, :, k2 - 1])
    pbar = prod.mean(axis=0)
    center = float(g @ ybar) / (m * nu_tilde)
    half = (float(g @ pbar) / (2 * m) - nu_tilde) / nu_tilde
    return _make_interval(center, half, half)


def constant_complier_share(pop: Population, k: int) -> float:
    return popmod.constant_complier_count(pop, k) / pop.N


def conservative_bounds(pop: Population, k: int, t: float) -> Interval:
    """Exclusion-style bounds anchored at a declared complier-share floor t.

    Valid for any 0 < t <= the constant-complier share; the interval widens
    monotonically as t decreases and contains the exclusion interval.
    """
    if not np.isfinite(t) or t <= 0.0:
        raise InvalidShareError(f"complier-share floor must be positive, got {t!r}")
    popmod.require_monotonicity(pop, k)
    if not popmod.check_least_compliant_profile(pop, k):
        raise AssumptionViolationError(f"factor {k}: no least-compliant profile exists")
    _require_weak_exclusion(pop, k)
    rho = constant_complier_share(pop, k)
    if t > rho:
        raise InvalidShareError(
            f"floor t={t} exceeds the constant-complier share {rho}"
        )
    contexts, _, _, nu = _nu_arrays(pop, k)
    m = len(contexts)
    ybar = pop.arm_outcome_means()
    g = dsg.main_effect_contrast(pop.design, k).signs.astype(np.float64)
    denom = m * t
    center = float(g @ ybar) / denom
    half = (float(nu.sum()) - m * t) / denom
    return _make_interval(center, half, half)


def wald_ratio(pop: Population, k: int) -> float:
    """Population ratio of the marginal outcome ITT to the marginal uptake ITT."""
    g = dsg.main_effect_contrast(pop.design, k).signs.astype(np.float64)
    m = 1 << (pop.design.K - 1)
    itt_y = float(g @ pop.arm_outcome_means()) / m
    itt_d = float(g @ pop.arm_uptake_means(k)) / (2 * m)
    if itt_d == 0.0:
        raise NoCompliersError(f"factor {k}: marginal uptake ITT is zero")
    return itt_y / itt_d
