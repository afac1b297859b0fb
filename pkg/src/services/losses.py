"""
Training objectives as differentiable torch functions.

Every loss returns a tensor that autograd can differentiate; gradients are
obtained with ``loss.backward()`` and verified against finite differences in
the test suite.
"""
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from src.app.models.features import StyleFeatureStack
from src.services.utils.exceptions import (
    ConfigurationError,
    DegenerateInputError,
    InputValidationError,
    NumericError,
)

NORM_EPS = 1e-12
PROBABILITY_EPS = 1e-7

LossValue = torch.Tensor


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _validate_labels(labels: torch.Tensor) -> None:
    if not bool(((labels == 0) | (labels == 1)).all()):
        raise InputValidationError("Labels must be 0 (fake-real) or 1 (real-real)")


@dataclass
class PairBatch:
    """N reference/suspicious stacks sharing one layer layout, with pair labels."""
    ref: torch.Tensor
    sus: torch.Tensor
    labels: torch.Tensor
    layer_offsets: list[tuple[int, int]]
    layer_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.ref, self.sus, self.labels = _as_tensor(self.ref), _as_tensor(self.sus), _as_tensor(self.labels)
        if self.ref.ndim != 2 or self.ref.shape != self.sus.shape:
            raise InputValidationError(
                "Reference and suspicious stacks must be N x D with equal shapes",
                details={"ref": list(self.ref.shape), "sus": list(self.sus.shape)},
            )
        if self.labels.shape != (self.ref.shape[0],):
            raise InputValidationError("One label per pair is required")
        _validate_labels(self.labels)
        if not self.layer_ids:
            self.layer_ids = [f"layer{i}" for i in range(len(self.layer_offsets))]

    @property
    def size(self) -> int:
        return int(self.ref.shape[0])

    @classmethod
    def from_stacks(
        cls,
        ref_stacks: Sequence[StyleFeatureStack],
        sus_stacks: Sequence[StyleFeatureStack],
        labels: Sequence[int],
    ) -> "PairBatch":
        offsets = ref_stacks[0].layer_offsets
        for stack in list(ref_stacks) + list(sus_stacks):
            if stack.layer_offsets != offsets:
                raise InputValidationError("All stacks in a batch must share identical layer offsets")
        return cls(
            ref=torch.as_tensor(np.stack([s.stacked for s in ref_stacks])),
            sus=torch.as_tensor(np.stack([s.stacked for s in sus_stacks])),
            labels=torch.as_tensor(np.asarray(labels, dtype=np.float64)),
            layer_offsets=list(offsets),
            layer_ids=list(ref_stacks[0].layer_ids),
        )


def cosine_similarity(a, b, eps: float = NORM_EPS) -> torch.Tensor:
    """a.b / (|a||b|) over the last dimension; near-zero norms are an error, never a silent 0."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise InputValidationError("Cosine similarity needs equal shapes")
    norm_a, norm_b = a.norm(dim=-1), b.norm(dim=-1)
    if bool((norm_a <= eps).any()) or bool((norm_b <= eps).any()):
        raise DegenerateInputError("Cosine similarity of a near-zero vector is undefined")
    return (a * b).sum(dim=-1) / (norm_a * norm_b)


def stacked_identity_loss(batch: PairBatch, eps: float = NORM_EPS) -> LossValue:
    """
    Mean over pairs of the per-layer sum
    y * (1 - cos(f1l, f2l)) + (1 - y) * cos(f1l, f2l).

    The value lies in [-L, 2L]; the fake-real term may be negative.
    """
    y = batch.labels.to(batch.ref.dtype)
    total = torch.zeros_like(y)
    for layer_id, (start, end) in zip(batch.layer_ids, batch.layer_offsets):
        ref, sus = batch.ref[:, start:end], batch.sus[:, start:end]
        norm_ref, norm_sus = ref.norm(dim=1), sus.norm(dim=1)
        degenerate = (norm_ref <= eps) | (norm_sus <= eps)
        if bool(degenerate.any()):
            index = int(degenerate.nonzero()[0])
            raise DegenerateInputError(
                f"Degenerate feature vector for pair {index} at layer '{layer_id}'",
                details={"pair_index": index, "layer_id": layer_id},
            )
        cos = (ref * sus).sum(dim=1) / (norm_ref * norm_sus)
        total = total + y * (1 - cos) + (1 - y) * cos
    return total.mean()


def bce_loss(predictions, labels, eps: float = PROBABILITY_EPS) -> LossValue:
    """Binary cross entropy on probabilities clamped to [eps, 1 - eps]."""
    predictions, labels = _as_tensor(predictions), _as_tensor(labels)
    if predictions.shape != labels.shape:
        raise InputValidationError("One prediction per label is required")
    _validate_labels(labels)
    labels = labels.to(predictions.dtype)
    p = predictions.clamp(eps, 1 - eps)
    return -(labels * torch.log(p) + (1 - labels) * torch.log(1 - p)).mean()


def final_loss(bce, sil, alpha: float) -> LossValue:
    """L_BCE + alpha * L_SIL."""
    if alpha < 0:
        raise ConfigurationError("alpha must be non-negative", details={"alpha": alpha})
    bce, sil = _as_tensor(bce), _as_tensor(sil)
    if not bool(torch.isfinite(bce).all()) or not bool(torch.isfinite(sil).all()):
        raise NumericError("Loss components must be finite")
    return bce + alpha * sil


def reconstruction_loss(x1, x2, x_hat) -> LossValue:
    """|x1 - x_hat|^2 + |x2 - x_hat|^2 over the last dimension (one value per pair)."""
    x1, x2, x_hat = _as_tensor(x1), _as_tensor(x2), _as_tensor(x_hat)
    if not (x1.shape == x2.shape == x_hat.shape):
        raise InputValidationError(
            "Reconstruction inputs must have equal lengths",
            details={"x1": list(x1.shape), "x2": list(x2.shape), "x_hat": list(x_hat.shape)},
        )
    return ((x1 - x_hat) ** 2).sum(dim=-1) + ((x2 - x_hat) ** 2).sum(dim=-1)


def ensure_finite(loss: torch.Tensor, **context) -> torch.Tensor:
    """Raise NumericError (with epoch/batch context) on a non-finite loss."""
    if not bool(torch.isfinite(loss).all()):
        where = ", ".join(f"{k}={v}" for k, v in context.items())
        raise NumericError(f"Non-finite loss ({where})", details=context)
    return loss
