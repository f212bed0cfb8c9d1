"""Supervised data ``(x_i, y_i)`` and the affine measuring function ``g``.

The input measure is the empirical uniform measure over the stored samples,
so every expectation over ``x`` is an arithmetic mean over rows.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ParseError

LABEL_RULES = ("teacher-net", "trig", "constant")


@dataclass(frozen=True)
class MeasuringFunction:
    """``g(z) = w . z + c``; ``|w|`` must be strictly positive."""

    w: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise ContractViolation("measuring weight must be a finite non-empty vector")
        if not np.linalg.norm(w) > 0:
            raise ContractViolation("measuring weight must have positive norm")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c", float(self.c))

    @property
    def d(self):
        return self.w.size

    def __call__(self, z):
        return eval_g(self, z)

    def to_dict(self):
        return {"w": self.w.tolist(), "c": self.c}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["w"], dtype=float), float(data.get("c", 0.0)))

    @classmethod
    def first_coordinate(cls, d):
        w = np.zeros(d)
        w[0] = 1.0
        return cls(w, 0.0)


def eval_g(g: MeasuringFunction, z):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != g.d:
        raise ContractViolation(f"state dimension {z.shape[-1]} does not match g (d={g.d})")
    return z @ g.w + g.c


def grad_g(g: MeasuringFunction, z=None):
    """Gradient of the affine ``g``; independent of ``z``."""
    if z is not None and np.shape(z)[-1] != g.d:
        raise ContractViolation(f"state dimension {np.shape(z)[-1]} does not match g (d={g.d})")
    return g.w.copy()


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    radius: float = field(default=None)

    def __post_init__(self):
        x = np.array(self.x, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.shape[0] == 0:
            raise ContractViolation("empty dataset")
        if x.shape[0] != y.shape[0]:
            raise ContractViolation(f"{x.shape[0]} inputs but {y.shape[0]} labels")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ContractViolation("dataset contains non-finite values")
        norms = np.linalg.norm(x, axis=1)
        radius = (float(norms.max()) or 1.0) if self.radius is None else float(self.radius)
        if not radius > 0:
            raise ContractViolation("radius must be positive")
        if np.any(norms > radius * (1 + 1e-12)):
            raise ContractViolation(f"sample outside the ball of radius {radius}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "radius", radius)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)

    def checksum(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()

    def with_labels(self, y):
        return Dataset(self.x, y, self.radius)


def sample_ball(rng, n, d, radius):
    """Uniform samples from the closed ball of the given radius in R^d."""
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    return direction * r[:, None]


def trig_labels(x):
    return np.sin(np.pi * x[:, 0]) + 0.5 * np.cos(np.pi * x.sum(axis=1))


def generate(seed, n, d, R, label_rule="trig", *, g=None, family=None, teacher=None, constant=0.0):
    """Draw ``n`` inputs uniformly from the ball of radius ``R`` and label them.

    ``teacher-net`` labels are ``g(Z(1; x))`` for ``teacher``, which may be a
    :class:`~resnet_lab.discrete.ParamGrid` or a
    :class:`~resnet_lab.continuum.ParamPathEnsemble`.  When no teacher is given
    a small random grid (L=4, M=4) is drawn from the same generator.
    """
    if n < 1:
        raise ContractViolation(f"need at least one sample, got n={n}")
    if not R > 0:
        raise ContractViolation(f"radius must be positive, got R={R}")
    if label_rule not in LABEL_RULES:
        raise ContractViolation(f"unknown label rule {label_rule!r}; expected one of {LABEL_RULES}")
    rng = np.random.default_rng(seed)
    x = sample_ball(rng, n, d, R)
    if label_rule == "constant":
        y = np.full(n, float(constant))
    elif label_rule == "trig":
        y = trig_labels(x)
    else:
        from . import continuum, discrete
        from .activation import ActivationFamily

        family = family or ActivationFamily(d=d)
        g = g or MeasuringFunction.first_coordinate(d)
        if teacher is None:
            teacher = discrete.ParamGrid(rng.normal(scale=1.0, size=(4, 4, family.k)))
        if isinstance(teacher, continuum.ParamPathEnsemble):
            zT = continuum.forward_oie(teacher, family, x)[-1]
        else:
            zT = discrete.forward(teacher, family, x)[-1]
        y = eval_g(g, zT)
    return Dataset(x, y, R)


def save_csv(data: Dataset, path):
    d = data.d
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(d)] + ["y"])
        for xi, yi in zip(data.x, data.y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def load_csv(path, radius=None):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty dataset")
    header = rows[0]
    if len(header) < 2 or header[-1] != "y" or header[:-1] != [f"x{j}" for j in range(len(header) - 1)]:
        raise ParseError(f"bad header {header!r}; expected x0,...,x{{d-1}},y", row=0)
    body = rows[1:]
    if not body:
        raise ParseError("empty dataset")
    width = len(header)
    values = []
    for i, row in enumerate(body, start=1):
        if len(row) != width:
            raise ParseError(f"row {i}: expected {width} columns, got {len(row)}", row=i)
        try:
            values.append([float(v) for v in row])
        except ValueError as exc:
            raise ParseError(f"row {i}: {exc}", row=i) from None
    arr = np.array(values)
    return Dataset(arr[:, :-1], arr[:, -1], radius)
