"""Plug-in bound estimation from observed data.

Every interval endpoint shipped here is a linear-fractional function of the
stacked vector of per-arm sample means (outcome mean, uptake mean, and for
the adjusted method an extra noncomplier-outcome mean; for the joint method
the mean of the uptake product). That single representation gives one code
path for values and one for analytic delta-method gradients; arms are
independent, so the moment covariance is block diagonal with each block a
1/n-normalized central second-moment matrix divided by the arm size.

Confidence intervals for the partially identified effect use a critical
value between the one-sided and two-sided normal quantiles, solving

    Phi(C + (U - L) / max(se_L, se_U)) - Phi(-C) = 1 - alpha

by bisection; at width 0 this is the usual two-sided value, and for wide
intervals it tends to the one-sided value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from statistics import NormalDist

import numpy as np

from . import design as dsg
from .data import ObservedDataset
from .design import Context, FactorialDesign
from .errors import (
    InsufficientDataError,
    InvalidFactorError,
    InvalidInputError,
    WeakFirstStageError,
)

_SQRT2 = math.sqrt(2.0)


def _phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


@dataclass(frozen=True)
class ArmSummary:
    """Sample moments for one arm; variances/covariances use n-1."""

    arm: int
    z: tuple[int, ...]
    n: int
    mean_y: float
    mean_d: tuple[float, ...]
    var_y: float
    var_d: tuple[float, ...]
    cov_yd: tuple[float, ...]
    cov_dd: tuple[tuple[float, ...], ...]


def summarize(data: ObservedDataset) -> tuple[ArmSummary, ...]:
    out = []
    for j in range(data.design.J):
        mask = data.arm == j
        n = int(mask.sum())
        z = data.design.assignment(j)
        if n < 2:
            raise InsufficientDataError(f"arm {z!r} has {n} row(s); need at least 2")
        y = data.outcome[mask]
        d = data.uptake[mask].astype(np.float64)
        my = float(y.mean())
        md = d.mean(axis=0)
        yc = y - my
        dc = d - md
        var_y = float(yc @ yc) / (n - 1)
        var_d = (dc * dc).sum(axis=0) / (n - 1)
        cov_yd = dc.T @ yc / (n - 1)
        cov_dd = dc.T @ dc / (n - 1)
        out.append(
            ArmSummary(
                arm=j,
                z=z,
                n=n,
                mean_y=my,
                mean_d=tuple(float(v) for v in md),
                var_y=var_y,
                var_d=tuple(float(v) for v in var_d),
                cov_yd=tuple(float(v) for v in cov_yd),
                cov_dd=tuple(tuple(float(v) for v in row) for row in cov_dd),
            )
        )
    return tuple(out)


def _arm_d_means(data: ObservedDataset, k: int) -> np.ndarray:
    design = data.design
    dbar = np.empty(design.J)
    for j in range(design.J):
        mask = data.arm == j
        n = int(mask.sum())
        if n < 2:
            raise InsufficientDataError(
                f"arm {design.assignment(j)!r} has {n} row(s); need at least 2"
            )
        dbar[j] = data.uptake[mask, k - 1].astype(np.float64).mean()
    return dbar


def nu_hat_table(data: ObservedDataset, k: int) -> tuple[tuple[Context, ...], np.ndarray]:
    """Estimated first stage per context of factor k, canonical order."""
    dsg.validate_factor(data.design, k)
    contexts = tuple(dsg.contexts_for(data.design, k))
    dbar = _arm_d_means(data, k)
    nu = np.empty(len(contexts))
    for c_index in range(len(contexts)):
        j_minus, j_plus = dsg.context_arms(data.design, k, c_index)
        nu[c_index] = (dbar[j_plus] - dbar[j_minus]) / 2.0
    return contexts, nu


def choose_profile_min(data: ObservedDataset, k: int) -> tuple[Context, float]:
    """Context minimizing the estimated first stage; ties break to the
    lowest canonical index. The minimized value doubles as the plug-in
    constant-complier share."""
    contexts, nu = nu_hat_table(data, k)
    i = int(np.argmin(nu))
    return contexts[i], float(nu[i])


def joint_nu_hat_table(
    data: ObservedDataset, k: int, k2: int
) -> tuple[tuple[Context, ...], np.ndarray]:
    """Estimated joint first stage (four-arm contrast of the uptake product)."""
    contexts = dsg.joint_contexts_for(data.design, k, k2)
    prod = data.uptake[:, k - 1].astype(np.float64) * data.uptake[:, k2 - 1]
    pbar = np.empty(data.design.J)
    for j in range(data.design.J):
        mask = data.arm == j
        n = int(mask.sum())
        if n < 2:
            raise InsufficientDataError(
                f"arm {data.design.assignment(j)!r} has {n} row(s); need at least 2"
            )
        pbar[j] = prod[mask].mean()
    nu = np.empty(len(contexts))
    for c_index in range(len(contexts)):
        j_mm, j_pm, j_mp, j_pp = dsg.joint_context_arms(data.design, k, k2, c_index)
        nu[c_index] = (pbar[j_pp] - pbar[j_mp] - pbar[j_pm] + pbar[j_mm]) / 4.0
    return contexts, nu


def choose_joint_profile_min(data: ObservedDataset, k: int, k2: int) -> tuple[Context, float]:
    contexts, nu = joint_nu_hat_table(data, k, k2)
    i = int(np.argmin(nu))
    return contexts[i], float(nu[i])


# --- method / profile grammar ------------------------------------------------

_MAIN_METHODS = ("adjusted", "simple", "exclusion")


def parse_method(method: str) -> tuple[str, tuple[int, ...]]:
    """'adjusted' | 'simple' | 'exclusion' | 'interaction:1+2' | 'joint:2'
    -> (kind, extra factors)."""
    s = method.strip()
    if s in _MAIN_METHODS:
        return s, ()
    if ":" in s:
        head, tail = s.split(":", 1)
        head = head.strip()
        if head == "interaction":
            try:
                fs = tuple(sorted({int(t) for t in tail.split("+") if t.strip()}))
            except ValueError:
                raise InvalidInputError(f"bad interaction factor list in {method!r}") from None
            if len(fs) < 2:
                raise InvalidInputError(f"interaction needs at least two factors: {method!r}")
            return "interaction", fs
        if head == "joint":
            try:
                k2 = int(tail)
            except ValueError:
                raise InvalidInputError(f"bad joint partner in {method!r}") from None
            return "joint", (k2,)
    raise InvalidInputError(
        f"unknown method {method!r}; expected adjusted|simple|exclusion|interaction:<f+f..>|joint:<factor>"
    )


def parse_profile(profile: str, context_len: int) -> tuple[str, Context | None]:
    """'min' or 'declared:<comma-separated +-1 levels>' -> (policy, context)."""
    s = profile.strip()
    if s == "min":
        return "min", None
    if s.startswith("declared:") or s == "declared":
        tail = s[len("declared:"):] if s.startswith("declared:") else ""
        parts = [t for t in tail.split(",") if t.strip()]
        try:
            ctx = tuple(int(t) for t in parts)
        except ValueError:
            raise InvalidInputError(f"bad declared profile {profile!r}") from None
        if len(ctx) != context_len or any(v not in (-1, 1) for v in ctx):
            raise InvalidInputError(
                f"declared profile {profile!r} must list {context_len} levels in -1/+1"
            )
        return "declared", ctx
    raise InvalidInputError(f"unknown profile policy {profile!r}; expected min or declared:<levels>")


# --- linear-fractional endpoint machinery -------------------------------------


@dataclass(frozen=True)
class LinearFractional:
    """f(m) = (a.m + a0) / (b.m + b0) over the stacked arm-moment vector."""

    a: np.ndarray
    a0: float
    b: np.ndarray
    b0: float

    def denominator(self, m: np.ndarray) -> float:
        return float(self.b @ m + self.b0)

    def value(self, m: np.ndarray) -> float:
        return float(self.a @ m + self.a0) / self.denominator(m)

    def gradient(self, m: np.ndarray) -> np.ndarray:
        den = self.denominator(m)
        num = float(self.a @ m + self.a0)
        return self.a / den - (num / den**2) * self.b


def _arm_variable_blocks(
    data: ObservedDataset, k: int, kind: str, k2: int | None = None
) -> list[np.ndarray]:
    """Per-arm row-variable matrices behind the moment vector.

    kind 'yd'  -> columns [y, d_k]
    kind 'ydt' -> columns [y, d_k, t]; t is y*1(d_k=-1) in z_k=+1 arms and
                  y*1(d_k=+1) in z_k=-1 arms (the observable noncomplier
                  outcome totals used by the adjusted center)
    kind 'yp'  -> columns [y, d_k*d_k2]
    """
    design = data.design
    g = dsg.main_effect_contrast(design, k).signs
    blocks = []
    for j in range(design.J):
        mask = data.arm == j
        n = int(mask.sum())
        if n < 2:
            raise InsufficientDataError(
                f"arm {design.assignment(j)!r} has {n} row(s); need at least 2"
            )
        y = data.outcome[mask]
        dk = data.uptake[mask, k - 1].astype(np.float64)
        if kind == "yd":
            V = np.column_stack([y, dk])
        elif kind == "ydt":
            t = y * (dk == (-1.0 if g[j] > 0 else 1.0))
            V = np.column_stack([y, dk, t])
        elif kind == "yp":
            dk2 = data.uptake[mask, k2 - 1].astype(np.float64)
            V = np.column_stack([y, dk * dk2])
        else:  # pragma: no cover
            raise ValueError(kind)
        blocks.append(V)
    return blocks


def _moment_vector(blocks: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([V.mean(axis=0) for V in blocks])


def _moment_cov_blocks(blocks: list[np.ndarray]) -> list[np.ndarray]:
    covs = []
    for V in blocks:
        n = V.shape[0]
        centered = V - V.mean(axis=0)
        covs.append((centered.T @ centered) / n / n)
    return covs


def _se_from_gradient(grad: np.ndarray, covs: list[np.ndarray], p: int) -> float:
    total = 0.0
    for j, C in enumerate(covs):
        gj = grad[p * j : p * (j + 1)]
        total += float(gj @ C @ gj)
    return math.sqrt(max(total, 0.0))


@dataclass(frozen=True)
class EndpointFunctions:
    """center/lower/upper endpoint maps plus the moment layout they expect."""

    kind: str
    p: int
    center: LinearFractional
    lower: LinearFractional
    upper: LinearFractional


def endpoint_functions(
    design: FactorialDesign,
    k: int,
    method: str,
    *,
    profile_index: int | None = None,
    t_value: float | None = None,
) -> EndpointFunctions:
    """Build the endpoint maps for a method over the arm-moment vector.

    profile_index names the chosen context (joint context for the joint
    method); t_value replaces the plug-in first stage for the conservative
    variant (then profile_index is unused).
    """
    kind_name, extra = parse_method(method)
    dsg.validate_factor(design, k)
    J = design.J
    m = J // 2
    g = dsg.main_effect_contrast(design, k).signs.astype(np.float64)

    if kind_name == "joint":
        (k2,) = extra
        gf = dsg.interaction_contrast(design, (k, k2)).signs.astype(np.float64)
        p = 2
        size = p * J
        a_center = np.zeros(size)
        a_center[0::p] = gf
        b = np.zeros(size)
        j_mm, j_pm, j_mp, j_pp = dsg.joint_context_arms(design, k, k2, profile_index)
        for j, q in ((j_pp, 1.0), (j_mm, 1.0), (j_mp, -1.0), (j_pm, -1.0)):
            b[p * j + 1] += q * m / 4.0
        half = np.zeros(size)
        half[1::p] = gf / 2.0
        half -= b
        return EndpointFunctions(
            kind="yp",
            p=p,
            center=LinearFractional(a_center, 0.0, b, 0.0),
            lower=LinearFractional(a_center - half, 0.0, b, 0.0),
            upper=LinearFractional(a_center + half, 0.0, b, 0.0),
        )

    kind = "ydt" if kind_name == "adjusted" else "yd"
    p = 3 if kind == "ydt" else 2
    size = p * J

    b = np.zeros(size)
    b0 = 0.0
    if t_value is not None:
        b0 = m * t_value
    else:
        j_minus, j_plus = dsg.context_arms(design, k, profile_index)
        b[p * j_plus + 1] += m / 2.0
        b[p * j_minus + 1] -= m / 2.0

    if kind_name == "interaction":
        gnum = dsg.interaction_contrast(design, extra).signs.astype(np.float64)
    else:
        gnum = g
    a_center = np.zeros(size)
    a_center[0::p] = gnum
    if kind_name == "adjusted":
        a_center[2::p] = -g

    if kind_name == "simple":
        # half = (1 - nu) / nu, numerator m - m*nu
        half_lo = np.zeros(size)
        half_lo -= b
        h0_lo = float(m) - b0
        half_up, h0_up = half_lo, h0_lo
    elif kind_name == "adjusted":
        # lower: S + A - m*nu; upper: S + B - m*nu
        s_vec = np.zeros(size)
        s_vec[1::p] = g / 2.0
        a_vec = np.zeros(size)
        a_vec[1::p] = (g < 0).astype(np.float64) / 2.0
        b_vec = np.zeros(size)
        b_vec[1::p] = (g > 0).astype(np.float64) / -2.0
        half_lo = s_vec + a_vec - b
        h0_lo = m / 2.0 - b0
        half_up = s_vec + b_vec - b
        h0_up = m / 2.0 - b0
    else:
        # exclusion / interaction / conservative-style: S - m*nu (or S - m*t)
        s_vec = np.zeros(size)
        s_vec[1::p] = g / 2.0
        half_lo = s_vec - b
        h0_lo = -b0
        half_up, h0_up = half_lo, h0_lo

    return EndpointFunctions(
        kind=kind,
        p=p,
        center=LinearFractional(a_center, 0.0, b, b0),
        lower=LinearFractional(a_center - half_lo, -h0_lo, b, b0),
        upper=LinearFractional(a_center + half_up, h0_up, b, b0),
    )


# --- estimates ----------------------------------------------------------------


@dataclass(frozen=True)
class BoundsEstimate:
    method: str
    factor: int
    contexts: tuple[Context, ...]
    nu_hat: tuple[float, ...]
    center: float
    half_width_lower: float
    half_width_upper: float
    raw_lower: float
    raw_upper: float
    clipped_lower: float
    clipped_upper: float
    se_lower: float
    se_upper: float
    profile_policy: str
    profile_context: Context
    ci_level: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None

    def with_ci(self, ci: "ConfidenceInterval") -> "BoundsEstimate":
        return replace(self, ci_level=ci.level, ci_lower=ci.lower, ci_upper=ci.upper)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "factor": self.factor,
            "contexts": [list(c) for c in self.contexts],
            "nu_hat": list(self.nu_hat),
            "center": self.center,
            "half_width_lower": self.half_width_lower,
            "half_width_upper": self.half_width_upper,
            "raw_lower": self.raw_lower,
            "raw_upper": self.raw_upper,
            "clipped_lower": self.clipped_lower,
            "clipped_upper": self.clipped_upper,
            "se_lower": self.se_lower,
            "se_upper": self.se_upper,
            "ci_level": self.ci_level,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "profile_policy": self.profile_policy,
            "profile_context": list(self.profile_context),
        }


def _resolve_profile(
    data: ObservedDataset, k: int, kind: str, extra: tuple[int, ...], profile
) -> tuple[str, Context, int, tuple[Context, ...], np.ndarray]:
    """Returns (policy, context, context index, contexts, nu table)."""
    if kind == "joint":
        contexts, nu = joint_nu_hat_table(data, k, extra[0])
    else:
        contexts, nu = nu_hat_table(data, k)
    if isinstance(profile, str):
        policy, ctx = parse_profile(profile, len(contexts[0]))
    else:
        policy, ctx = "declared", tuple(profile)
    if policy == "min":
        i = int(np.argmin(nu))
        ctx = contexts[i]
    else:
        try:
            i = contexts.index(ctx)
        except ValueError:
            raise InvalidInputError(f"declared profile {ctx!r} is not a context of the design") from None
    return policy, ctx, i, contexts, nu


def estimate_bounds(
    data: ObservedDataset, k: int, method: str, *, profile="min"
) -> BoundsEstimate:
    """Plug-in interval for one factor and method.

    profile is 'min', 'declared:<levels>', or a context tuple. The clipped
    interval is ordered then intersected with [-1, 1]; raw endpoints are the
    faithful plug-ins (a declared non-minimal profile can invert them).
    """
    kind, extra = parse_method(method)
    dsg.validate_factor(data.design, k)
    if kind == "interaction" and k not in extra:
        raise InvalidFactorError(f"anchor factor {k} must belong to the interaction set {extra!r}")
    if kind == "joint":
        k2 = extra[0]
        dsg.validate_factor(data.design, k2)
        if k2 == k:
            raise InvalidFactorError("joint method needs a partner distinct from the anchor factor")
    policy, ctx, c_index, contexts, nu = _resolve_profile(data, k, kind, extra, profile)
    nu_tilde = float(nu[c_index])
    if nu_tilde <= 0.0:
        table = {contexts[i]: float(nu[i]) for i in range(len(contexts))}
        raise WeakFirstStageError(
            f"factor {k}: estimated first stage at {ctx!r} is {nu_tilde}; table {table!r}"
        )
    funcs = endpoint_functions(data.design, k, method, profile_index=c_index)
    blocks = _arm_variable_blocks(data, k, funcs.kind, k2=extra[0] if kind == "joint" else None)
    mvec = _moment_vector(blocks)
    covs = _moment_cov_blocks(blocks)
    center = funcs.center.value(mvec)
    raw_lower = funcs.lower.value(mvec)
    raw_upper = funcs.upper.value(mvec)
    se_lower = _se_from_gradient(funcs.lower.gradient(mvec), covs, funcs.p)
    se_upper = _se_from_gradient(funcs.upper.gradient(mvec), covs, funcs.p)
    lo, hi = (raw_lower, raw_upper) if raw_lower <= raw_upper else (raw_upper, raw_lower)
    return BoundsEstimate(
        method=method,
        factor=k,
        contexts=contexts,
        nu_hat=tuple(float(v) for v in nu),
        center=center,
        half_width_lower=center - raw_lower,
        half_width_upper=raw_upper - center,
        raw_lower=raw_lower,
        raw_upper=raw_upper,
        clipped_lower=min(1.0, max(-1.0, lo)),
        clipped_upper=min(1.0, max(-1.0, hi)),
        se_lower=se_lower,
        se_upper=se_upper,
        profile_policy=policy,
        profile_context=ctx,
    )


def endpoint_ses(data: ObservedDataset, k: int, method: str, profile="min") -> tuple[float, float]:
    est = estimate_bounds(data, k, method, profile=profile)
    return est.se_lower, est.se_upper


# --- Imbens-Manski confidence intervals ---------------------------------------


@dataclass(frozen=True)
class ConfidenceInterval:
    level: float
    lower: float
    upper: float
    critical_value: float


def im_critical_value(width_over_se: float, alpha: float) -> float:
    """Solve Phi(C + w) - Phi(-C) = 1 - alpha for C, w = (U-L)/max SE >= 0.

    The root lies between the one-sided and two-sided quantiles; bisection
    runs on a slightly padded bracket to tolerance 1e-10.
    """
    if not (0.0 < alpha < 1.0):
        raise InvalidInputError(f"alpha must be in (0, 1), got {alpha!r}")
    if not np.isfinite(width_over_se) or width_over_se < 0.0:
        raise InvalidInputError(f"width/SE ratio must be finite and >= 0, got {width_over_se!r}")
    nd = NormalDist()
    lo = nd.inv_cdf(1.0 - alpha) - 0.1
    hi = nd.inv_cdf(1.0 - alpha / 2.0) + 0.1
    target = 1.0 - alpha

    def f(c: float) -> float:
        return _phi(c + width_over_se) - _phi(-c) - target

    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def imbens_manski_ci(
    est: BoundsEstimate, ses: tuple[float, float] | None = None, alpha: float = 0.05
) -> ConfidenceInterval:
    """CI on the raw endpoints, then intersected with [-1, 1]."""
    se_lower, se_upper = ses if ses is not None else (est.se_lower, est.se_upper)
    L, U = est.raw_lower, est.raw_upper
    for v in (L, U, se_lower, se_upper):
        if not np.isfinite(v):
            raise InvalidInputError(f"nonfinite input to the confidence interval: {v!r}")
    if se_lower < 0.0 or se_upper < 0.0:
        raise InvalidInputError("standard errors must be nonnegative")
    if not (0.0 < alpha < 1.0):
        raise InvalidInputError(f"alpha must be in (0, 1), got {alpha!r}")
    max_se = max(se_lower, se_upper)
    nd = NormalDist()
    if max_se == 0.0:
        C = nd.inv_cdf(1.0 - alpha) if U > L else nd.inv_cdf(1.0 - alpha / 2.0)
        lo, hi = (L, U) if L <= U else (U, L)
    else:
        width = max(0.0, U - L)
        C = im_critical_value(width / max_se, alpha)
        lo = L - C * se_lower
        hi = U + C * se_upper
    lo = min(1.0, max(-1.0, lo))
    hi = min(1.0, max(-1.0, hi))
    if lo > hi:  # only possible from inverted raw endpoints with zero SEs
        lo, hi = hi, lo
    return ConfidenceInterval(level=1.0 - alpha, lower=lo, upper=hi, critical_value=C)


# --- Wald reference ------------------------------------------------------------


@dataclass(frozen=True)
class WaldEstimate:
    factor: int
    point: float
    se: float
    label: str = "requires strong treatment exclusion"

    def to_dict(self) -> dict:
        return {"factor": self.factor, "point": self.point, "se": self.se, "label": self.label}


def wald_reference(data: ObservedDataset, k: int) -> WaldEstimate:
    """Ratio of the marginal outcome ITT to the marginal uptake ITT."""
    dsg.validate_factor(data.design, k)
    design = data.design
    g = dsg.main_effect_contrast(design, k).signs.astype(np.float64)
    p = 2
    size = p * design.J
    a = np.zeros(size)
    a[0::p] = 2.0 * g
    b = np.zeros(size)
    b[1::p] = g
    func = LinearFractional(a, 0.0, b, 0.0)
    blocks = _arm_variable_blocks(data, k, "yd")
    mvec = _moment_vector(blocks)
    if func.denominator(mvec) == 0.0:
        raise WeakFirstStageError(f"factor {k}: marginal uptake ITT is zero")
    covs = _moment_cov_blocks(blocks)
    se = _se_from_gradient(func.gradient(mvec), covs, p)
    return WaldEstimate(factor=k, point=func.value(mvec), se=se)
