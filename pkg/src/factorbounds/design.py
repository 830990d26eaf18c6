"""Two-level factorial designs and their contrast vectors.

Assignments live on the grid {-1, +1}^K. The canonical enumeration puts
factor 1 on the fastest-varying bit: assignment j (0-based) has factor k
at +1 exactly when bit k-1 of j is set. For K=2 the order is
(-1,-1), (+1,-1), (-1,+1), (+1,+1).

Contrast vectors are length-J sign vectors. The main-effect contrast for
factor k carries the level of factor k in each assignment; an interaction
contrast is the entrywise product of the main-effect contrasts of its
factor set. Any two distinct contrasts are orthogonal, and every contrast
has exactly J/2 entries of each sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDesignError, InvalidFactorError

MAX_FACTORS = 16

Assignment = tuple[int, ...]
Context = tuple[int, ...]


@dataclass(frozen=True)
class FactorialDesign:
    """Complete enumeration of a 2^K design in canonical order."""

    K: int
    levels: np.ndarray  # (J, K) int8, row j = assignment j

    def __post_init__(self) -> None:
        self.levels.setflags(write=False)

    @property
    def J(self) -> int:
        return 1 << self.K

    def assignment(self, j: int) -> Assignment:
        if not 0 <= j < self.J:
            raise InvalidDesignError(f"assignment index {j} outside 0..{self.J - 1}")
        return tuple(int(v) for v in self.levels[j])

    def assignments(self) -> list[Assignment]:
        return [self.assignment(j) for j in range(self.J)]

    def index(self, z: Assignment) -> int:
        """Canonical index of an assignment tuple."""
        if len(z) != self.K:
            raise InvalidDesignError(f"assignment {z!r} has length {len(z)}, design has K={self.K}")
        j = 0
        for k, level in enumerate(z):
            if level == 1:
                j |= 1 << k
            elif level != -1:
                raise InvalidDesignError(f"assignment levels must be -1 or +1, got {z!r}")
        return j


@dataclass(frozen=True)
class ContrastVector:
    """Signs over the J arms for one factorial effect."""

    factors: tuple[int, ...]
    signs: np.ndarray  # (J,) int8

    def __post_init__(self) -> None:
        self.signs.setflags(write=False)
        total = int(self.signs.size)
        plus = int(np.sum(self.signs == 1))
        minus = int(np.sum(self.signs == -1))
        if plus != minus or plus + minus != total:
            raise InvalidDesignError(
                f"contrast for factors {self.factors} is unbalanced: {plus} plus, {minus} minus of {total}"
            )

    @property
    def order(self) -> int:
        return len(self.factors)


def enumerate_assignments(K: int) -> FactorialDesign:
    """Build the canonical 2^K design.

    K must be between 1 and MAX_FACTORS; beyond that the dense enumeration
    is no longer a sensible representation.
    """
    if not isinstance(K, int) or isinstance(K, bool):
        raise InvalidDesignError(f"K must be an integer, got {K!r}")
    if not 1 <= K <= MAX_FACTORS:
        raise InvalidDesignError(f"K must be in 1..{MAX_FACTORS}, got {K}")
    J = 1 << K
    j = np.arange(J, dtype=np.int64)
    levels = np.empty((J, K), dtype=np.int8)
    for k in range(K):
        levels[:, k] = np.where((j >> k) & 1 == 1, 1, -1)
    return FactorialDesign(K=K, levels=levels)


def validate_factor(design: FactorialDesign, k: int) -> None:
    if not isinstance(k, int) or isinstance(k, bool) or not 1 <= k <= design.K:
        raise InvalidFactorError(f"factor {k!r} outside 1..{design.K}")


def main_effect_contrast(design: FactorialDesign, k: int) -> ContrastVector:
    validate_factor(design, k)
    return ContrastVector(factors=(k,), signs=design.levels[:, k - 1].copy())


def interaction_contrast(design: FactorialDesign, factors) -> ContrastVector:
    """Entrywise product of main-effect contrasts over a factor set."""
    fs = tuple(factors)
    if len(fs) == 0:
        raise InvalidFactorError("interaction needs at least one factor")
    if len(set(fs)) != len(fs):
        raise InvalidFactorError(f"duplicate factors in {fs!r}")
    for k in fs:
        validate_factor(design, k)
    fs = tuple(sorted(fs))
    signs = np.ones(design.J, dtype=np.int8)
    for k in fs:
        signs = (signs * design.levels[:, k - 1]).astype(np.int8)
    return ContrastVector(factors=fs, signs=signs)


def set_factor(z: Assignment, k: int, level: int) -> Assignment:
    """Copy of z with factor k forced to the given level."""
    if not 1 <= k <= len(z):
        raise InvalidFactorError(f"factor {k} outside 1..{len(z)}")
    if level not in (-1, 1):
        raise InvalidDesignError(f"level must be -1 or +1, got {level!r}")
    out = list(z)
    out[k - 1] = level
    return tuple(out)


def strip_factor(z: Assignment, k: int) -> Context:
    """Drop factor k's coordinate, leaving the context over the others."""
    if not 1 <= k <= len(z):
        raise InvalidFactorError(f"factor {k} outside 1..{len(z)}")
    return tuple(z[:k - 1]) + tuple(z[k:])


def _insert_bit(c: int, pos: int, value: int) -> int:
    low = c & ((1 << pos) - 1)
    high = c >> pos
    return low | (value << pos) | (high << (pos + 1))


def contexts_for(design: FactorialDesign, k: int) -> list[Context]:
    """All contexts over the factors other than k, in canonical order.

    Context index c sets the m-th remaining factor (ascending) to +1 when
    bit m-1 of c is set, mirroring the assignment enumeration.
    """
    validate_factor(design, k)
    n = 1 << (design.K - 1)
    out: list[Context] = []
    for c in range(n):
        ctx = []
        for m in range(design.K - 1):
            ctx.append(1 if (c >> m) & 1 else -1)
        out.append(tuple(ctx))
    return out


def context_arms(design: FactorialDesign, k: int, c_index: int) -> tuple[int, int]:
    """Arm indices (z_k=-1, z_k=+1) for context index c_index."""
    validate_factor(design, k)
    if not 0 <= c_index < (1 << (design.K - 1)):
        raise InvalidDesignError(f"context index {c_index} outside range for K={design.K}")
    pos = k - 1
    return _insert_bit(c_index, pos, 0), _insert_bit(c_index, pos, 1)


def context_index(design: FactorialDesign, k: int, context: Context) -> int:
    """Canonical index of a context tuple over the factors other than k."""
    validate_factor(design, k)
    if len(context) != design.K - 1:
        raise InvalidFactorError(
            f"context {context!r} has length {len(context)}, expected {design.K - 1}"
        )
    c = 0
    for m, level in enumerate(context):
        if level == 1:
            c |= 1 << m
        elif level != -1:
            raise InvalidDesignError(f"context levels must be -1 or +1, got {context!r}")
    return c


def joint_contexts_for(design: FactorialDesign, k: int, k2: int) -> list[Context]:
    """Contexts over the factors other than k and k2, canonical order."""
    validate_factor(design, k)
    validate_factor(design, k2)
    if k == k2:
        raise InvalidFactorError(f"joint contexts need two distinct factors, got {k} twice")
    n = 1 << (design.K - 2) if design.K >= 2 else 0
    out: list[Context] = []
    for c in range(n):
        ctx = []
        for m in range(design.K - 2):
            ctx.append(1 if (c >> m) & 1 else -1)
        out.append(tuple(ctx))
    return out


def joint_context_arms(design: FactorialDesign, k: int, k2: int, c_index: int) -> tuple[int, int, int, int]:
    """Arm indices for (z_k, z_k2) = (-,-), (+,-), (-,+), (+,+) at a joint context."""
    validate_factor(design, k)
    validate_factor(design, k2)
    if k == k2:
        raise InvalidFactorError("joint context arms need two distinct factors")
    if design.K < 2 or not 0 <= c_index < (1 << (design.K - 2)):
        raise InvalidDesignError(f"joint context index {c_index} invalid for K={design.K}")
    p_low, p_high = sorted((k - 1, k2 - 1))
    arms = []
    for s2 in (0, 1):          # level of k2
        for s1 in (0, 1):      # level of k, fastest
            bits = {k - 1: s1, k2 - 1: s2}
            j = _insert_bit(c_index, p_low, bits[p_low])
            j = _insert_bit(j, p_high, bits[p_high])
            arms.append(j)
    return tuple(arms)  # type: ignore[return-value]


def joint_context_index(design: FactorialDesign, k: int, k2: int, context: Context) -> int:
    if design.K < 2:
        raise InvalidDesignError("joint contexts need K >= 2")
    if len(context) != design.K - 2:
        raise InvalidFactorError(
            f"joint context {context!r} has length {len(context)}, expected {design.K - 2}"
        )
    c = 0
    for m, level in enumerate(context):
        if level == 1:
            c |= 1 << m
        elif level != -1:
            raise InvalidDesignError(f"context levels must be -1 or +1, got {context!r}")
    return c
