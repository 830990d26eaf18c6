"""Observed-data container and CSV input/output.

CSV schema: header ``z1,...,zK,d1,...,dK,y``; assignment and uptake entries
are -1/+1 (or 0/1 with binary coding, 0 mapped to -1); y is numeric in
[0, 1] after optional affine rescaling. Parse errors carry the 1-based line
number (header is line 1) and the column name.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .design import FactorialDesign, enumerate_assignments
from .errors import InvalidInputError


@dataclass(frozen=True)
class ObservedDataset:
    """One row per unit: realized arm, uptake vector, outcome.

    Arms are indices into design.assignments(). Outcomes are on the analysis
    scale: when a load rescaled them into [0, 1], the affine map is kept in
    ``rescale`` so reports can echo it.
    """

    design: FactorialDesign
    arm: np.ndarray
    uptake: np.ndarray
    outcome: np.ndarray
    rescale: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        arm = np.ascontiguousarray(np.asarray(self.arm, dtype=np.intp))
        uptake = np.ascontiguousarray(np.asarray(self.uptake, dtype=np.int8))
        outcome = np.ascontiguousarray(np.asarray(self.outcome, dtype=np.float64))
        if arm.ndim != 1 or arm.shape[0] == 0:
            raise InvalidInputError("dataset needs a nonempty 1-d arm index array")
        n = arm.shape[0]
        if uptake.shape != (n, self.design.K):
            raise InvalidInputError(
                f"uptake shape {uptake.shape} does not match (n={n}, K={self.design.K})"
            )
        if outcome.shape != (n,):
            raise InvalidInputError(f"outcome shape {outcome.shape} does not match (n={n},)")
        if arm.min() < 0 or arm.max() >= self.design.J:
            raise InvalidInputError("arm indices out of range for the design")
        if not np.isin(uptake, (-1, 1)).all():
            raise InvalidInputError("uptake entries must be -1 or +1")
        if not np.isfinite(outcome).all() or outcome.min() < 0.0 or outcome.max() > 1.0:
            raise InvalidInputError("outcomes must lie in [0, 1]")
        for arr in (arm, uptake, outcome):
            arr.setflags(write=False)
        object.__setattr__(self, "arm", arm)
        object.__setattr__(self, "uptake", uptake)
        object.__setattr__(self, "outcome", outcome)

    @property
    def n(self) -> int:
        return self.arm.shape[0]

    def arm_counts(self) -> np.ndarray:
        return np.bincount(self.arm, minlength=self.design.J)

    def assignment_rows(self) -> np.ndarray:
        """(n, K) matrix of assigned levels, one row per unit."""
        return self.design.levels[self.arm]


def expected_header(K: int) -> list[str]:
    return [f"z{k}" for k in range(1, K + 1)] + [f"d{k}" for k in range(1, K + 1)] + ["y"]


def _infer_k(header: list[str]) -> int:
    names = [h.strip() for h in header]
    if len(names) < 3 or len(names) % 2 == 0:
        raise InvalidInputError(
            f"line 1: header has {len(names)} columns; expected z1..zK,d1..dK,y"
        )
    K = (len(names) - 1) // 2
    want = expected_header(K)
    if names != want:
        raise InvalidInputError(f"line 1: header {names!r} does not match {want!r}")
    return K


def _parse_level(token: str, line: int, col: str, binary_coding: bool) -> int:
    try:
        v = int(token.strip())
    except ValueError:
        raise InvalidInputError(f"line {line}, column {col}: {token!r} is not an integer") from None
    if binary_coding:
        if v in (0, 1):
            return -1 if v == 0 else 1
        raise InvalidInputError(f"line {line}, column {col}: {v} is not 0/1 (binary coding)")
    if v in (-1, 1):
        return v
    raise InvalidInputError(f"line {line}, column {col}: {v} is not -1/+1")


def load_csv(
    path,
    *,
    binary_coding: bool = False,
    rescale: tuple[float, float] | None = None,
) -> ObservedDataset:
    if rescale is not None:
        lo, hi = float(rescale[0]), float(rescale[1])
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise InvalidInputError(f"rescale range ({lo}, {hi}) must be finite with max > min")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file, no header") from None
        K = _infer_k(header)
        design = enumerate_assignments(K)
        arms: list[int] = []
        uptake_rows: list[list[int]] = []
        outcomes: list[float] = []
        for line, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2 * K + 1:
                raise InvalidInputError(
                    f"line {line}: {len(row)} fields; expected {2 * K + 1}"
                )
            z = tuple(
                _parse_level(row[k - 1], line, f"z{k}", binary_coding) for k in range(1, K + 1)
            )
            d = [
                _parse_level(row[K + k - 1], line, f"d{k}", binary_coding)
                for k in range(1, K + 1)
            ]
            tok = row[2 * K].strip()
            try:
                y = float(tok)
            except ValueError:
                raise InvalidInputError(f"line {line}, column y: {tok!r} is not numeric") from None
            if rescale is not None:
                y = (y - lo) / (hi - lo)
            if not np.isfinite(y) or y < 0.0 or y > 1.0:
                raise InvalidInputError(
                    f"line {line}, column y: value {y} outside [0, 1]"
                    + (" after rescale" if rescale is not None else "")
                )
            arms.append(design.index(z))
            uptake_rows.append(d)
            outcomes.append(y)
    if not arms:
        raise InvalidInputError(f"{path}: no data rows")
    return ObservedDataset(
        design=design,
        arm=np.asarray(arms, dtype=np.intp),
        uptake=np.asarray(uptake_rows, dtype=np.int8),
        outcome=np.asarray(outcomes, dtype=np.float64),
        rescale=(lo, hi) if rescale is not None else None,
    )


def save_csv(data: ObservedDataset, path) -> None:
    """Write in the load_csv schema with -1/+1 coding; floats via repr so a
    reload reproduces them bit-exactly."""
    K = data.design.K
    zrows = data.assignment_rows()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(expected_header(K))
        for i in range(data.n):
            row = [int(v) for v in zrows[i]] + [int(v) for v in data.uptake[i]]
            row.append(repr(float(data.outcome[i])))
            writer.writerow(row)
