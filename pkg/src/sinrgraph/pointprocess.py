"""Seeded sampling of the marked Poisson point process.

Positions follow a Poisson process with intensity lambda times normalized
Lebesgue measure on the domain, so the point count is Poisson(lambda)
regardless of the domain's volume. Marks are i.i.d. exponential. Streams
are derived from a (master seed, replicate) pair with a counter-based
generator, so replicates are order-independent and safe to run in
parallel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain


def replicate_rng(master_seed: int, replicate: int = 0) -> np.random.Generator:
    """Stream for one replicate, derived from (master_seed, replicate)."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(replicate,))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class ExponentialMarks:
    """Exponential mark law with rate c (mean 1/c)."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(scale=1.0 / self.c, size=n)

    def cdf(self, x) -> np.ndarray:
        return -np.expm1(-self.c * np.asarray(x, dtype=float))

    def interval_prob(self, a: float, b: float) -> float:
        """Probability mass of (a, b]; b may be inf."""
        lo = np.exp(-self.c * a)
        hi = 0.0 if np.isinf(b) else np.exp(-self.c * b)
        return float(lo - hi)

    def quantile(self, p: float) -> float:
        return float(-np.log1p(-p) / self.c)

    def interval_mean(self, a: float, b: float) -> float:
        """Conditional mean of the mark given it falls in (a, b]."""
        if np.isinf(b):
            return a + 1.0 / self.c
        ea, eb = np.exp(-self.c * a), np.exp(-self.c * b)
        return 1.0 / self.c + (a * ea - b * eb) / (ea - eb)

    @property
    def mean(self) -> float:
        return 1.0 / self.c


@dataclass(frozen=True)
class MarkedConfiguration:
    """One realized draw of the marked point process.

    ``positions`` is an (n, dim) array, ``marks`` an (n,) array of positive
    reals. ``seed_record`` documents how the draw was produced; it is not
    consumed by any computation.
    """

    domain: Domain
    lam: float
    positions: np.ndarray
    marks: np.ndarray
    seed_record: tuple = field(default=())

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, self.domain.dim)
        marks = np.asarray(self.marks, dtype=float).reshape(-1)
        if len(pos) != len(marks):
            raise ValueError("positions and marks must have equal length")
        if len(marks) and np.any(marks <= 0):
            raise ValueError("marks must be positive")
        if len(pos) and not np.all(self.domain.contains(pos)):
            raise ValueError("all positions must lie inside the domain")
        pos.setflags(write=False)
        marks.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "marks", marks)

    @property
    def n_points(self) -> int:
        return len(self.marks)

    def with_extra_points(self, positions, marks) -> "MarkedConfiguration":
        """New configuration with additional points appended at the end."""
        extra_pos = np.atleast_2d(np.asarray(positions, dtype=float))
        extra_marks = np.atleast_1d(np.asarray(marks, dtype=float))
        return MarkedConfiguration(
            domain=self.domain,
            lam=self.lam,
            positions=np.vstack([self.positions, extra_pos]),
            marks=np.concatenate([self.marks, extra_marks]),
            seed_record=self.seed_record + ("appended",),
        )


def sample_count(lam: float, rng: np.random.Generator) -> int:
    """Poisson(lam) point count (normalized reference measure)."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return int(rng.poisson(lam))


def sample_configuration(
    domain: Domain,
    lam: float,
    mark_law: ExponentialMarks,
    rng: np.random.Generator,
    seed_record: tuple = (),
) -> MarkedConfiguration:
    """Draw count ~ Poisson(lam), positions i.i.d. uniform on the domain,
    marks i.i.d. from the mark law."""
    n = sample_count(lam, rng)
    positions = domain.sample_uniform(rng, n)
    # coincident coordinates are a probability-zero event; redraw if seen
    while n > 1 and len(np.unique(positions, axis=0)) != n:
        dup = np.ones(n, dtype=bool)
        _, first = np.unique(positions, axis=0, return_index=True)
        dup[first] = False
        positions[dup] = domain.sample_uniform(rng, int(dup.sum()))
    marks = mark_law.sample(rng, n)
    return MarkedConfiguration(
        domain=domain, lam=lam, positions=positions, marks=marks, seed_record=seed_record
    )


def sample_replicate(
    domain: Domain,
    lam: float,
    mark_law: ExponentialMarks,
    master_seed: int,
    replicate: int,
) -> MarkedConfiguration:
    rng = replicate_rng(master_seed, replicate)
    return sample_configuration(
        domain, lam, mark_law, rng, seed_record=(master_seed, replicate)
    )


# ---------------------------------------------------------------------------
# CSV round trip


def save_configuration_csv(config: MarkedConfiguration, path) -> None:
    dim = config.domain.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx"] + [f"x{k + 1}" for k in range(dim)] + ["mark"])
        for i in range(config.n_points):
            row = [i] + [repr(float(v)) for v in config.positions[i]] + [
                repr(float(config.marks[i]))
            ]
            writer.writerow(row)


def load_configuration_csv(path, domain: Domain, lam: float) -> MarkedConfiguration:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 2
        if dim != domain.dim:
            raise ValueError(
                f"file has {dim} coordinate columns, domain has dimension {domain.dim}"
            )
        positions = []
        marks = []
        for row in reader:
            positions.append([float(v) for v in row[1 : 1 + dim]])
            marks.append(float(row[1 + dim]))
    return MarkedConfiguration(
        domain=domain,
        lam=lam,
        positions=np.asarray(positions, dtype=float).reshape(-1, dim),
        marks=np.asarray(marks, dtype=float),
    )
