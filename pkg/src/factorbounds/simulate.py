"""Population generation, randomization, and Monte Carlo coverage studies.

Compliance generation is worst-context-first: each unit draws its type at a
declared least compliant pattern of the factors its compliance may depend
on, and noncompliers there can only upgrade to compliers elsewhere. That
construction gives monotonicity (no defiers drawn) and a uniform least
compliant profile for free; weak exclusion for factor k holds whenever no
other factor lists k in depends_on. Assumption violations are deterministic
surgeries on the type tensor, and every generated population is re-verified
against the config's require/violate tokens before it is returned, with a
bounded retry for the stochastic requirements (e.g. a positive share of
constant compliers at small N).

All randomness flows from the config seed through named substreams
([seed, purpose, replication, attempt]) so reports are bit-reproducible
and replications are independent.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from . import design as dsg
from . import estimate as est
from . import oracle
from . import population as popmod
from .data import ObservedDataset
from .design import FactorialDesign, enumerate_assignments
from .errors import (
    FactorBoundsError,
    GenerationError,
    InvalidDesignError,
    InvalidInputError,
)
from .population import (
    ALWAYS_TAKER,
    COMPLIER,
    DEFIER,
    NEVER_TAKER,
    Population,
)

# uptake level by (type code, assigned level mapped to 0/1)
_UPTAKE_TABLE = np.array(
    [[-1, 1], [1, 1], [-1, -1], [1, -1]], dtype=np.int8
)  # complier, always, never, defier

_REQUIRE_TOKENS = (
    "monotone",
    "profile",
    "exclusion",
    "cross_exclusion",
    "joint_profile",
    "first_stage",
    "joint_first_stage",
)
_VIOLATE_TOKENS = ("monotone", "profile", "exclusion", "cross_exclusion", "joint_profile")


@dataclass(frozen=True)
class FactorSpec:
    """Compliance distribution for one factor.

    complier/always/never probabilities apply at the worst pattern of the
    depends_on factors (never = 1 - complier - always; always = 0 gives
    one-sided noncompliance). At every other pattern, a worst-pattern
    noncomplier independently upgrades to complier with probability
    ``upgrade``; worst-pattern compliers comply everywhere.
    """

    complier: float
    always: float = 0.0
    upgrade: float = 0.0
    depends_on: tuple[int, ...] = ()
    worst: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.complier <= 1.0 and 0.0 <= self.always <= 1.0):
            raise InvalidInputError("type probabilities must lie in [0, 1]")
        if self.complier + self.always > 1.0 + 1e-12:
            raise InvalidInputError("complier + always-taker probability exceeds 1")
        if not (0.0 <= self.upgrade <= 1.0):
            raise InvalidInputError("upgrade probability must lie in [0, 1]")
        dep = tuple(self.depends_on)
        if len(set(dep)) != len(dep) or dep != tuple(sorted(dep)):
            raise InvalidInputError("depends_on must be sorted and duplicate-free")
        object.__setattr__(self, "depends_on", dep)
        if self.worst is not None:
            w = tuple(self.worst)
            if len(w) != len(dep) or any(v not in (-1, 1) for v in w):
                raise InvalidInputError("worst pattern must give one -1/+1 level per depends_on factor")
            object.__setattr__(self, "worst", w)

    def worst_pattern(self) -> tuple[int, ...]:
        return self.worst if self.worst is not None else tuple(-1 for _ in self.depends_on)

    def to_dict(self) -> dict:
        return {
            "complier": self.complier,
            "always": self.always,
            "upgrade": self.upgrade,
            "depends_on": list(self.depends_on),
            "worst": list(self.worst) if self.worst is not None else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "FactorSpec":
        _check_keys(d, {"complier", "always", "upgrade", "depends_on", "worst"}, "factor spec")
        return FactorSpec(
            complier=float(d["complier"]),
            always=float(d.get("always", 0.0)),
            upgrade=float(d.get("upgrade", 0.0)),
            depends_on=tuple(int(v) for v in d.get("depends_on", ())),
            worst=tuple(int(v) for v in d["worst"]) if d.get("worst") is not None else None,
        )


@dataclass(frozen=True)
class OutcomeSpec:
    """Outcome model. m1: per-unit clamped linear index in the 0/1 uptake
    indicators (plus optional pairwise products); m2 thresholds the m1 value
    against a per-unit uniform cut for binary outcomes."""

    model: str = "m1"
    alpha: tuple[float, float] = (0.2, 0.4)
    beta: tuple[tuple[float, float], ...] = ()
    eta: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.model not in ("m1", "m2"):
            raise InvalidInputError(f"unknown outcome model {self.model!r}; expected m1 or m2")
        for name, rng_ in (("alpha", self.alpha), ("eta", self.eta), *(
            (f"beta[{i}]", r) for i, r in enumerate(self.beta)
        )):
            lo, hi = rng_
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
                raise InvalidInputError(f"{name} range ({lo}, {hi}) must be finite with max >= min")
        object.__setattr__(self, "alpha", tuple(map(float, self.alpha)))
        object.__setattr__(self, "eta", tuple(map(float, self.eta)))
        object.__setattr__(
            self, "beta", tuple(tuple(map(float, r)) for r in self.beta)
        )

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "alpha": list(self.alpha),
            "beta": [list(r) for r in self.beta],
            "eta": list(self.eta),
        }

    @staticmethod
    def from_dict(d: dict) -> "OutcomeSpec":
        _check_keys(d, {"model", "alpha", "beta", "eta"}, "outcome spec")
        return OutcomeSpec(
            model=d.get("model", "m1"),
            alpha=tuple(d.get("alpha", (0.2, 0.4))),
            beta=tuple(tuple(r) for r in d.get("beta", ())),
            eta=tuple(d.get("eta", (0.0, 0.0))),
        )


@dataclass(frozen=True)
class TargetSpec:
    """One (factor, method, profile policy) combination to track in a study."""

    factor: int
    method: str = "exclusion"
    profile: str = "min"
    alpha: float = 0.05

    def __post_init__(self) -> None:
        est.parse_method(self.method)
        if not (0.0 < self.alpha < 1.0):
            raise InvalidInputError(f"alpha must be in (0, 1), got {self.alpha!r}")

    @property
    def label(self) -> str:
        return f"factor{self.factor}:{self.method}[{self.profile}]"

    def to_dict(self) -> dict:
        return {"factor": self.factor, "method": self.method, "profile": self.profile, "alpha": self.alpha}

    @staticmethod
    def from_dict(d: dict) -> "TargetSpec":
        _check_keys(d, {"factor", "method", "profile", "alpha"}, "target spec")
        return TargetSpec(
            factor=int(d["factor"]),
            method=d.get("method", "exclusion"),
            profile=d.get("profile", "min"),
            alpha=float(d.get("alpha", 0.05)),
        )


def _check_keys(d: dict, allowed: set, what: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise InvalidInputError(f"unknown {what} keys: {sorted(extra)!r}")


def _parse_token(token: str, K: int, allowed: tuple[str, ...]) -> tuple[str, tuple[int, ...]]:
    name, _, args = token.partition(":")
    if name not in allowed:
        raise InvalidInputError(f"unknown assumption token {token!r}; allowed {allowed!r}")
    try:
        ks = tuple(int(v) for v in args.split(",")) if args else ()
    except ValueError:
        raise InvalidInputError(f"bad factor list in token {token!r}") from None
    want = 2 if name in ("cross_exclusion", "joint_profile", "joint_first_stage") else 1
    if len(ks) != want or any(not 1 <= k <= K for k in ks) or len(set(ks)) != len(ks):
        raise InvalidInputError(f"token {token!r} needs {want} distinct factor(s) in 1..{K}")
    return name, ks


@dataclass(frozen=True)
class ScenarioConfig:
    K: int
    N: int
    factors: tuple[FactorSpec, ...]
    outcome: OutcomeSpec
    seed: int
    arm_sizes: tuple[int, ...] | None = None
    require: tuple[str, ...] = ()
    violate: tuple[str, ...] = ()
    population_mode: str = "fresh"
    clone_factor: int = 1
    targets: tuple[TargetSpec, ...] = ()

    def __post_init__(self) -> None:
        design = enumerate_assignments(self.K)  # validates K
        if self.N < 1:
            raise InvalidInputError(f"N must be positive, got {self.N}")
        if len(self.factors) != self.K:
            raise InvalidInputError(f"{len(self.factors)} factor specs for K={self.K}")
        for k, spec in enumerate(self.factors, start=1):
            for f in spec.depends_on:
                if not 1 <= f <= self.K or f == k:
                    raise InvalidInputError(
                        f"factor {k}: depends_on entry {f} must name a different factor in 1..{self.K}"
                    )
        if self.outcome.beta and len(self.outcome.beta) != self.K:
            raise InvalidInputError("outcome beta needs one range per factor")
        if self.seed < 0:
            raise InvalidInputError("seed must be a nonnegative integer")
        if self.arm_sizes is not None:
            sizes = tuple(int(v) for v in self.arm_sizes)
            if len(sizes) != design.J:
                raise InvalidDesignError(f"{len(sizes)} arm sizes for J={design.J}")
            if sum(sizes) != self.N:
                raise InvalidDesignError(f"arm sizes sum to {sum(sizes)}, not N={self.N}")
            if min(sizes) < 2:
                raise InvalidDesignError("every arm needs at least 2 units")
            object.__setattr__(self, "arm_sizes", sizes)
        if self.population_mode not in ("fresh", "fixed", "clone"):
            raise InvalidInputError(f"unknown population_mode {self.population_mode!r}")
        if self.clone_factor < 1:
            raise InvalidInputError("clone_factor must be >= 1")
        for token in self.require:
            _parse_token(token, self.K, _REQUIRE_TOKENS)
        for token in self.violate:
            _parse_token(token, self.K, _VIOLATE_TOKENS)
        object.__setattr__(self, "require", tuple(self.require))
        object.__setattr__(self, "violate", tuple(self.violate))
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "targets", tuple(self.targets))

    def resolved_arm_sizes(self) -> tuple[int, ...]:
        J = 1 << self.K
        if self.arm_sizes is not None:
            return self.arm_sizes
        base, rem = divmod(self.N, J)
        sizes = tuple(base + 1 if j < rem else base for j in range(J))
        if min(sizes) < 2:
            raise InvalidDesignError(f"N={self.N} cannot give every one of {J} arms 2 units")
        return sizes

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "N": self.N,
            "factors": [f.to_dict() for f in self.factors],
            "outcome": self.outcome.to_dict(),
            "seed": self.seed,
            "arm_sizes": list(self.arm_sizes) if self.arm_sizes is not None else None,
            "require": list(self.require),
            "violate": list(self.violate),
            "population_mode": self.population_mode,
            "clone_factor": self.clone_factor,
            "targets": [t.to_dict() for t in self.targets],
        }

    @staticmethod
    def from_dict(d: dict) -> "ScenarioConfig":
        _check_keys(
            d,
            {
                "K",
                "N",
                "factors",
                "outcome",
                "seed",
                "arm_sizes",
                "require",
                "violate",
                "population_mode",
                "clone_factor",
                "targets",
            },
            "scenario",
        )
        return ScenarioConfig(
            K=int(d["K"]),
            N=int(d["N"]),
            factors=tuple(FactorSpec.from_dict(f) for f in d["factors"]),
            outcome=OutcomeSpec.from_dict(d["outcome"]) if "outcome" in d else OutcomeSpec(),
            seed=int(d["seed"]),
            arm_sizes=tuple(int(v) for v in d["arm_sizes"]) if d.get("arm_sizes") is not None else None,
            require=tuple(d.get("require", ())),
            violate=tuple(d.get("violate", ())),
            population_mode=d.get("population_mode", "fresh"),
            clone_factor=int(d.get("clone_factor", 1)),
            targets=tuple(TargetSpec.from_dict(t) for t in d.get("targets", ())),
        )


def load_scenario(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(d, dict):
        raise InvalidInputError(f"{path}: scenario file must hold a JSON object")
    return ScenarioConfig.from_dict(d)


def save_scenario(config: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(config: ScenarioConfig) -> str:
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# --- population generation -----------------------------------------------------


def _pattern_columns(design: FactorialDesign, k: int, dep: tuple[int, ...]):
    """Group factor-k context indices by the levels of the dep factors.

    Yields (pattern, column indices) in lexicographic pattern order.
    """
    others = [f for f in range(1, design.K + 1) if f != k]
    pos = [others.index(f) for f in dep]
    contexts = dsg.contexts_for(design, k)
    groups: dict[tuple[int, ...], list[int]] = {}
    for c_index, ctx in enumerate(contexts):
        pat = tuple(ctx[p] for p in pos)
        groups.setdefault(pat, []).append(c_index)
    for pat in sorted(groups):
        yield pat, groups[pat]


def _draw_types(config: ScenarioConfig, design: FactorialDesign, rng: np.random.Generator) -> np.ndarray:
    N, K = config.N, config.K
    C = 1 << (K - 1)
    types = np.empty((N, K, C), dtype=np.int8)
    for k in range(1, K + 1):
        spec = config.factors[k - 1]
        u = rng.random(N)
        base = np.where(
            u < spec.complier, COMPLIER, np.where(u < spec.complier + spec.always, ALWAYS_TAKER, NEVER_TAKER)
        ).astype(np.int8)
        types[:, k - 1, :] = base[:, None]
        if spec.depends_on:
            worst = spec.worst_pattern()
            noncomplier = base != COMPLIER
            for pat, cols in _pattern_columns(design, k, spec.depends_on):
                if pat == worst:
                    continue
                up = (rng.random(N) < spec.upgrade) & noncomplier
                if up.any():
                    types[np.ix_(up, [k - 1], cols)] = COMPLIER
    return types


def _apply_violations(config: ScenarioConfig, design: FactorialDesign, types: np.ndarray) -> None:
    K, N = config.K, config.N
    C = types.shape[2]
    others_of = {k: [f for f in range(1, K + 1) if f != k] for k in range(1, K + 1)}
    for token in config.violate:
        name, ks = _parse_token(token, K, _VIOLATE_TOKENS)
        if name == "monotone":
            (k,) = ks
            types[0, k - 1, 0] = DEFIER
        elif name == "profile":
            (k,) = ks
            if C < 2 or N < 2:
                raise GenerationError(f"{token}: needs K >= 2 and N >= 2 (no second context or unit)")
            types[0, k - 1, :] = NEVER_TAKER
            types[0, k - 1, 0] = COMPLIER
            types[1, k - 1, :] = COMPLIER
            types[1, k - 1, 0] = NEVER_TAKER
        elif name == "exclusion":
            (k,) = ks
            if K < 2:
                raise GenerationError(f"{token}: needs a second factor")
            k2 = 1 if k != 1 else 2
            types[0, k - 1, :] = NEVER_TAKER
            pos = others_of[k2].index(k)
            for c_index, ctx in enumerate(dsg.contexts_for(design, k2)):
                types[0, k2 - 1, c_index] = COMPLIER if ctx[pos] == 1 else NEVER_TAKER
        elif name == "cross_exclusion":
            k, k2 = ks
            pos = others_of[k].index(k2)
            for c_index, ctx in enumerate(dsg.contexts_for(design, k)):
                types[0, k - 1, c_index] = COMPLIER if ctx[pos] == 1 else NEVER_TAKER
        elif name == "joint_profile":
            k, k2 = ks
            if K < 3:
                raise GenerationError(f"{token}: needs a third factor to vary the joint profile")
            if N < 2:
                raise GenerationError(f"{token}: needs at least 2 units")
            k3 = min(f for f in range(1, K + 1) if f not in (k, k2))
            for unit, want in ((0, -1), (1, 1)):
                for kk in (k, k2):
                    pos = others_of[kk].index(k3)
                    for c_index, ctx in enumerate(dsg.contexts_for(design, kk)):
                        types[unit, kk - 1, c_index] = (
                            COMPLIER if ctx[pos] == want else NEVER_TAKER
                        )


def _materialize_uptake(design: FactorialDesign, types: np.ndarray) -> np.ndarray:
    N, K, _ = types.shape
    uptake = np.empty((N, design.J, K), dtype=np.int8)
    for k in range(1, K + 1):
        for j in range(design.J):
            z = design.assignment(j)
            c = dsg.context_index(design, k, dsg.strip_factor(z, k))
            lvl = (z[k - 1] + 1) // 2
            uptake[:, j, k - 1] = _UPTAKE_TABLE[types[:, k - 1, c], lvl]
    return uptake


def _draw_outcomes(
    config: ScenarioConfig, design: FactorialDesign, uptake: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    spec = config.outcome
    N, K = config.N, config.K
    alpha = rng.uniform(spec.alpha[0], spec.alpha[1], N)
    beta_ranges = spec.beta if spec.beta else tuple((0.2, 0.4) for _ in range(K))
    beta = np.column_stack([rng.uniform(lo, hi, N) for lo, hi in beta_ranges])
    pairs = list(combinations(range(1, K + 1), 2))
    eta = np.column_stack([rng.uniform(spec.eta[0], spec.eta[1], N) for _ in pairs]) if pairs else None
    u = (uptake.astype(np.float64) + 1.0) / 2.0  # (N, J, K) 0/1 indicators
    lin = alpha[:, None] + np.einsum("nk,njk->nj", beta, u)
    if pairs:
        for idx, (a, b) in enumerate(pairs):
            lin += eta[:, idx][:, None] * u[:, :, a - 1] * u[:, :, b - 1]
    y = np.clip(lin, 0.0, 1.0)
    if spec.model == "m2":
        tau = rng.uniform(0.0, 1.0, N)
        y = (y >= tau[:, None]).astype(np.float64)
    return y


def _token_passes(pop: Population, name: str, ks: tuple[int, ...]) -> bool:
    if name == "monotone":
        return not popmod.check_conditional_monotonicity(pop, ks[0])
    if name == "profile":
        return bool(popmod.check_least_compliant_profile(pop, ks[0]))
    if name == "exclusion":
        return not popmod.check_weak_treatment_exclusion(pop, ks[0])
    if name == "cross_exclusion":
        return not popmod.check_conditional_treatment_exclusion(pop, ks[0], ks[1])
    if name == "joint_profile":
        return bool(popmod.check_joint_least_compliant(pop, ks[0], ks[1]))
    if name == "first_stage":
        return popmod.constant_complier_count(pop, ks[0]) > 0
    if name == "joint_first_stage":
        mask = popmod.classify(pop, ks[0]).constant_complier_mask() & popmod.classify(
            pop, ks[1]
        ).constant_complier_mask()
        return bool(mask.any())
    raise InvalidInputError(name)  # pragma: no cover


_RETRY_CAP = 100


def generate_population(config: ScenarioConfig, rep: int = 0) -> Population:
    """Draw a population honoring the config's require/violate toggles.

    Deterministic given (config.seed, rep). Stochastic requirements get up
    to 100 fresh draws; a config whose toggles can never hold fails loudly.
    """
    design = enumerate_assignments(config.K)
    last_miss = ""
    for attempt in range(_RETRY_CAP):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0, rep, attempt]))
        types = _draw_types(config, design, rng)
        _apply_violations(config, design, types)
        uptake = _materialize_uptake(design, types)
        outcome = _draw_outcomes(config, design, uptake, rng)
        pop = Population(design=design, uptake=uptake, outcome=outcome)
        misses = []
        for token in config.require:
            name, ks = _parse_token(token, config.K, _REQUIRE_TOKENS)
            if not _token_passes(pop, name, ks):
                misses.append(f"require {token}")
        for token in config.violate:
            name, ks = _parse_token(token, config.K, _VIOLATE_TOKENS)
            if _token_passes(pop, name, ks):
                misses.append(f"violate {token} (check still passes)")
        if not misses:
            return pop
        last_miss = "; ".join(misses)
    raise GenerationError(
        f"no draw satisfied the toggles after {_RETRY_CAP} attempts; last miss: {last_miss}"
    )


def complete_randomization(N: int, arm_sizes, seed) -> np.ndarray:
    """Uniformly random partition of N units into arms with fixed sizes.

    Returns the arm index per unit. seed may be an int, SeedSequence, or
    Generator.
    """
    sizes = tuple(int(v) for v in arm_sizes)
    if sum(sizes) != N:
        raise InvalidDesignError(f"arm sizes sum to {sum(sizes)}, not N={N}")
    if min(sizes) < 2:
        raise InvalidDesignError("every arm needs at least 2 units")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(N)
    arm = np.empty(N, dtype=np.intp)
    start = 0
    for j, nz in enumerate(sizes):
        arm[perm[start : start + nz]] = j
        start += nz
    return arm


def observe(pop: Population, allocation) -> ObservedDataset:
    """Read off each unit's realized row under its assigned arm."""
    alloc = np.asarray(allocation, dtype=np.intp)
    if alloc.shape != (pop.N,):
        raise InvalidInputError(f"allocation shape {alloc.shape} does not cover N={pop.N} units")
    idx = np.arange(pop.N)
    return ObservedDataset(
        design=pop.design,
        arm=alloc,
        uptake=pop.uptake[idx, alloc, :],
        outcome=pop.outcome[idx, alloc],
    )


def census_dataset(pop: Population) -> ObservedDataset:
    """Every unit observed in every arm; sample moments equal population
    moments exactly."""
    J = pop.design.J
    arm = np.repeat(np.arange(J, dtype=np.intp), pop.N)
    uptake = np.concatenate([pop.uptake[:, j, :] for j in range(J)])
    outcome = np.concatenate([pop.outcome[:, j] for j in range(J)])
    return ObservedDataset(design=pop.design, arm=arm, uptake=uptake, outcome=outcome)


# --- Monte Carlo ----------------------------------------------------------------


def _target_truth(pop: Population, target: TargetSpec) -> float:
    kind, extra = est.parse_method(target.method)
    if kind in ("adjusted", "simple", "exclusion"):
        return oracle.main_effect(pop, target.factor)
    if kind == "interaction":
        return oracle.interaction_effect(pop, extra, target.factor)
    return oracle.joint_interaction_effect(pop, target.factor, extra[0])


def _target_oracle_interval(pop: Population, target: TargetSpec):
    """Oracle raw endpoints at the declared profile, or at a true least
    compliant profile under the min policy. None when the method's
    assumptions fail for this population."""
    kind, extra = est.parse_method(target.method)
    ctx_len = pop.design.K - (2 if kind == "joint" else 1)
    policy, ctx = est.parse_profile(target.profile, ctx_len)
    try:
        if kind == "joint":
            if policy == "min":
                valid = popmod.check_joint_least_compliant(pop, target.factor, extra[0])
                if not valid:
                    return None
                ctx = valid[0]
            iv = oracle.joint_bounds(pop, target.factor, extra[0], ctx)
        else:
            if policy == "min":
                valid = popmod.check_least_compliant_profile(pop, target.factor)
                if not valid:
                    return None
                ctx = valid[0]
            if kind == "adjusted":
                iv = oracle.adjusted_bounds(pop, target.factor, ctx)
            elif kind == "simple":
                iv = oracle.simple_bounds(pop, target.factor, ctx)
            elif kind == "exclusion":
                iv = oracle.exclusion_bounds(pop, target.factor, ctx)
            else:
                iv = oracle.interaction_bounds(pop, extra, target.factor, ctx)
    except FactorBoundsError:
        return None
    return iv.raw_lower, iv.raw_upper


@dataclass(frozen=True)
class TargetReport:
    label: str
    target: TargetSpec
    n_reps: int
    n_ok: int
    n_oracle: int
    failures: dict
    truth_mean: float | None
    coverage_bounds: float | None
    coverage_bounds_mcse: float | None
    coverage_ci: float | None
    coverage_ci_mcse: float | None
    mean_width: float | None
    mean_raw_width: float | None
    mean_lower: float | None
    mean_upper: float | None
    bias_lower: float | None
    bias_upper: float | None
    sd_lower: float | None
    sd_upper: float | None
    mean_se_lower: float | None
    mean_se_upper: float | None
    endpoint_err_mean: float | None
    endpoint_err_p95: float | None

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "target": self.target.to_dict(),
            "n_reps": self.n_reps,
            "n_ok": self.n_ok,
            "n_oracle": self.n_oracle,
            "failures": dict(sorted(self.failures.items())),
        }
        for name in (
            "truth_mean",
            "coverage_bounds",
            "coverage_bounds_mcse",
            "coverage_ci",
            "coverage_ci_mcse",
            "mean_width",
            "mean_raw_width",
            "mean_lower",
            "mean_upper",
            "bias_lower",
            "bias_upper",
            "sd_lower",
            "sd_upper",
            "mean_se_lower",
            "mean_se_upper",
            "endpoint_err_mean",
            "endpoint_err_p95",
        ):
            d[name] = getattr(self, name)
        return d


@dataclass(frozen=True)
class CoverageReport:
    config: ScenarioConfig
    replications: int
    targets: tuple[TargetReport, ...]

    def to_dict(self) -> dict:
        return {
            "schema": "factorbounds-coverage-v1",
            "config": self.config.to_dict(),
            "config_hash": config_hash(self.config),
            "replications": self.replications,
            "targets": [t.to_dict() for t in self.targets],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _prop_mcse(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n)) if n > 0 else float("nan")


def _mean_or_none(xs: list) -> float | None:
    return float(np.mean(xs)) if xs else None


def monte_carlo(
    config: ScenarioConfig,
    R: int,
    targets: tuple[TargetSpec, ...] | None = None,
    base_population: Population | None = None,
) -> CoverageReport:
    """Replicate generate/randomize/observe/estimate and tally coverage.

    population_mode 'fresh' regenerates the population each replication
    (the superpopulation sampling model the SEs assume); 'fixed' draws one
    population and varies only the allocation; 'clone' additionally stacks
    clone_factor copies of it. An explicit base_population substitutes for
    the generated one in the fixed/clone modes.
    """
    if R < 1:
        raise InvalidInputError(f"R must be >= 1, got {R}")
    tlist = tuple(targets) if targets is not None else config.targets
    if not tlist:
        raise InvalidInputError("no targets: pass some or set them in the scenario")
    mode = config.population_mode
    if base_population is not None and mode == "fresh":
        raise InvalidInputError("base_population requires population_mode fixed or clone")
    base = None
    if mode in ("fixed", "clone"):
        base = base_population if base_population is not None else generate_population(config, rep=0)
        if base.design.K != config.K:
            raise InvalidInputError("base population K does not match the scenario")
        if base.N != config.N:
            raise InvalidInputError("base population N does not match the scenario")
        if mode == "clone" and config.clone_factor > 1:
            base = base.clone(config.clone_factor)
    sizes = config.resolved_arm_sizes()
    if mode == "clone":
        sizes = tuple(s * config.clone_factor for s in sizes)

    acc = {
        t: {
            "cover_b": 0,
            "cover_ci": 0,
            "failures": Counter(),
            "truth": [],
            "width": [],
            "raw_width": [],
            "lo": [],
            "hi": [],
            "se_lo": [],
            "se_hi": [],
            "d_lo": [],
            "d_hi": [],
            "err": [],
        }
        for t in tlist
    }

    for rep in range(R):
        pop = base if base is not None else generate_population(config, rep=rep)
        alloc = complete_randomization(pop.N, sizes, np.random.SeedSequence([config.seed, 1, rep]))
        data = observe(pop, alloc)
        for t in tlist:
            a = acc[t]
            try:
                truth = _target_truth(pop, t)
                estimate = est.estimate_bounds(data, t.factor, t.method, profile=t.profile)
                ci = est.imbens_manski_ci(estimate, alpha=t.alpha)
            except FactorBoundsError as e:
                a["failures"][type(e).__name__] += 1
                continue
            a["truth"].append(truth)
            if estimate.clipped_lower <= truth <= estimate.clipped_upper:
                a["cover_b"] += 1
            if ci.lower <= truth <= ci.upper:
                a["cover_ci"] += 1
            a["width"].append(estimate.clipped_upper - estimate.clipped_lower)
            a["raw_width"].append(estimate.raw_upper - estimate.raw_lower)
            a["lo"].append(estimate.raw_lower)
            a["hi"].append(estimate.raw_upper)
            a["se_lo"].append(estimate.se_lower)
            a["se_hi"].append(estimate.se_upper)
            ref = _target_oracle_interval(pop, t)
            if ref is not None:
                a["d_lo"].append(estimate.raw_lower - ref[0])
                a["d_hi"].append(estimate.raw_upper - ref[1])
                a["err"].append(
                    max(abs(estimate.raw_lower - ref[0]), abs(estimate.raw_upper - ref[1]))
                )

    reports = []
    for t in tlist:
        a = acc[t]
        n_ok = len(a["truth"])
        cov_b = a["cover_b"] / n_ok if n_ok else None
        cov_ci = a["cover_ci"] / n_ok if n_ok else None
        reports.append(
            TargetReport(
                label=t.label,
                target=t,
                n_reps=R,
                n_ok=n_ok,
                n_oracle=len(a["err"]),
                failures=dict(a["failures"]),
                truth_mean=_mean_or_none(a["truth"]),
                coverage_bounds=cov_b,
                coverage_bounds_mcse=_prop_mcse(cov_b, n_ok) if n_ok else None,
                coverage_ci=cov_ci,
                coverage_ci_mcse=_prop_mcse(cov_ci, n_ok) if n_ok else None,
                mean_width=_mean_or_none(a["width"]),
                mean_raw_width=_mean_or_none(a["raw_width"]),
                mean_lower=_mean_or_none(a["lo"]),
                mean_upper=_mean_or_none(a["hi"]),
                bias_lower=_mean_or_none(a["d_lo"]),
                bias_upper=_mean_or_none(a["d_hi"]),
                sd_lower=float(np.std(a["lo"], ddof=1)) if n_ok >= 2 else None,
                sd_upper=float(np.std(a["hi"], ddof=1)) if n_ok >= 2 else None,
                mean_se_lower=_mean_or_none(a["se_lo"]),
                mean_se_upper=_mean_or_none(a["se_hi"]),
                endpoint_err_mean=_mean_or_none(a["err"]),
                endpoint_err_p95=float(np.percentile(a["err"], 95)) if a["err"] else None,
            )
        )
    return CoverageReport(config=config, replications=R, targets=tuple(reports))
