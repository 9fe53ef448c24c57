"""Domain types for CP slice models and partially observed slices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from olstec.errors import StructuralError


@dataclass
class FactorModel:
    """CP slice model ``X_t = A diag(b) C^T``.

    ``A`` is L x R (row factor), ``C`` is W x R (column factor) and ``b``
    holds the weights of the current slice.
    """

    A: np.ndarray
    C: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.A.ndim != 2 or self.C.ndim != 2 or self.b.ndim != 1:
            raise StructuralError("A and C must be matrices and b a vector")
        R = self.A.shape[1]
        if self.C.shape[1] != R or self.b.shape[0] != R:
            raise StructuralError(
                f"rank mismatch: A has {R} columns, C has {self.C.shape[1]}, "
                f"b has length {self.b.shape[0]}"
            )

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape[0], self.C.shape[0]

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.A).all() and np.isfinite(self.C).all() and np.isfinite(self.b).all()
        )

    def copy(self) -> FactorModel:
        return FactorModel(self.A.copy(), self.C.copy(), self.b.copy())


@dataclass
class MaskedSlice:
    """One L x W observation with its boolean mask.

    Values at unobserved positions are forced to exactly zero.
    """

    values: np.ndarray
    mask: np.ndarray
    t: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise StructuralError(
                f"values {values.shape} and mask {mask.shape} must be equal-shape matrices"
            )
        values[~mask] = 0.0
        self.values = values
        self.mask = mask

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def full(cls, values, t=0) -> MaskedSlice:
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones(values.shape, dtype=bool), t)


@dataclass(frozen=True)
class TrackerParams:
    """Forgetting factor, ridge weight and initial inverse scale of the tracker.

    ``col_uses_updated_a`` switches the column update to use the freshly
    updated row factor instead of the previous one.
    """

    rank: int
    lam: float = 0.88
    mu: float = 1e-9
    gamma: float = 100.0
    col_uses_updated_a: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise StructuralError(f"rank must be positive, got {self.rank}")
        if not 0.0 < self.lam <= 1.0:
            raise StructuralError(f"lambda must lie in (0, 1], got {self.lam}")
        if not self.mu >= 0.0:
            raise StructuralError(f"mu must be nonnegative, got {self.mu}")
        if not self.gamma > 0.0:
            raise StructuralError(f"gamma must be positive, got {self.gamma}")


@dataclass
class StreamSource:
    """An ordered, finite collection of masked slices.

    ``truth`` holds the noiseless slices when the generator knows them.
    """

    L: int
    W: int
    slices: list[MaskedSlice] = field(default_factory=list)
    truth: list[np.ndarray] | None = None

    def __post_init__(self):
        for s in self.slices:
            if s.shape != (self.L, self.W):
                raise StructuralError(f"slice {s.t} has shape {s.shape}, expected {(self.L, self.W)}")
        if self.truth is not None and len(self.truth) != len(self.slices):
            raise StructuralError("truth and slices differ in length")

    def __len__(self):
        return len(self.slices)

    def __iter__(self):
        truth = self.truth if self.truth is not None else [None] * len(self.slices)
        return iter(zip(self.slices, truth))

    @property
    def has_truth(self) -> bool:
        return self.truth is not None


def reconstruct_slice(model: FactorModel) -> np.ndarray:
    """Return ``A diag(b) C^T`` as a dense L x W matrix."""
    return (model.A * model.b) @ model.C.T


def masked_residual(slice_: MaskedSlice, X: np.ndarray) -> float:
    """Sum of squared errors between ``slice_`` and ``X`` over observed entries."""
    X = np.asarray(X, dtype=float)
    if X.shape != slice_.shape:
        raise StructuralError(f"estimate shape {X.shape} does not match slice {slice_.shape}")
    diff = np.where(slice_.mask, slice_.values - X, 0.0)
    return float(np.sum(diff * diff))
