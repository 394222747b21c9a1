import numpy as np

from ..errors import DomainError, ShapeError


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def mse_loss(pred, target):
    """Mean over all elements; returns ``(loss, d loss / d pred)``."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def cross_entropy_loss(logits, labels):
    """Batch-mean of ``-log softmax(logits)[label]``; returns ``(loss, d loss / d logits)``."""
    labels = np.asarray(labels)
    n, classes = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= classes):
        raise DomainError(f"labels must lie in [0, {classes})")
    logp = log_softmax(logits)
    loss = -float(logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
