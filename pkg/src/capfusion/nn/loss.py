import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError(f"logits must be [B, K] with B targets; got {list(logits.shape)} and {list(targets.shape)}")
    B, K = logits.shape
    bad = (targets < 0) | (targets >= K)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"target {int(targets[i])} at row {i} outside [0, {K})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(B)
    loss = float(np.mean(log_norm - z[rows, targets]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, targets] -= 1.0
    return loss, grad / B
