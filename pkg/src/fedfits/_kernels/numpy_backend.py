"""Reference training/evaluation kernels in pure numpy.

The compiled extension (`fedfits._kernels._fast`) exposes the same API and the
same semantics. The two backends may disagree in the last few ULPs because
BLAS and sequential C loops reduce sums in different orders; each backend is
individually bit-reproducible.

Model kinds:
  0 = multinomial logistic regression
  1 = one-hidden-layer ReLU MLP with softmax output

Flat weight layout (layer-major, weights before biases):
  logreg: W (input_dim x num_classes, row-major), b (num_classes)
  mlp1:   W1 (input_dim x hidden_dim), b1 (hidden_dim),
          W2 (hidden_dim x num_classes), b2 (num_classes)
"""

from __future__ import annotations

import numpy as np

NAME = "python"

KIND_LOGREG = 0
KIND_MLP1 = 1


def _forward(kind, w, input_dim, hidden_dim, num_classes, X):
    """Logits plus the hidden activations needed for the backward pass."""
    if kind == KIND_LOGREG:
        wc = input_dim * num_classes
        W = w[:wc].reshape(input_dim, num_classes)
        b = w[wc : wc + num_classes]
        return X @ W + b, None
    if kind == KIND_MLP1:
        o1 = input_dim * hidden_dim
        W1 = w[:o1].reshape(input_dim, hidden_dim)
        b1 = w[o1 : o1 + hidden_dim]
        o2 = o1 + hidden_dim
        W2 = w[o2 : o2 + hidden_dim * num_classes].reshape(hidden_dim, num_classes)
        b2 = w[o2 + hidden_dim * num_classes :]
        hidden = np.maximum(X @ W1 + b1, 0.0)
        return hidden @ W2 + b2, hidden
    raise ValueError(f"unknown model kind {kind}")


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict_proba(kind, w, input_dim, hidden_dim, num_classes, X):
    logits, _ = _forward(kind, w, input_dim, hidden_dim, num_classes, X)
    return np.exp(_log_softmax(logits))


def evaluate_model(kind, w, input_dim, hidden_dim, num_classes, X, y):
    """(mean cross-entropy in nats, accuracy). Argmax ties go to the lowest class."""
    logits, _ = _forward(kind, w, input_dim, hidden_dim, num_classes, X)
    logp = _log_softmax(logits)
    n = X.shape[0]
    loss = -float(logp[np.arange(n), y].mean())
    acc = float((logits.argmax(axis=1) == y).mean())
    return loss, acc


def gradient_model(kind, w, input_dim, hidden_dim, num_classes, X, y):
    """Analytic gradient of the mean cross-entropy, flat layout matching `w`."""
    logits, hidden = _forward(kind, w, input_dim, hidden_dim, num_classes, X)
    n = X.shape[0]
    delta = np.exp(_log_softmax(logits))
    delta[np.arange(n), y] -= 1.0
    delta /= n
    if kind == KIND_LOGREG:
        gW = X.T @ delta
        gb = delta.sum(axis=0)
        return np.concatenate([gW.reshape(-1), gb])
    o1 = input_dim * hidden_dim
    o2 = o1 + hidden_dim
    W2 = w[o2 : o2 + hidden_dim * num_classes].reshape(hidden_dim, num_classes)
    gW2 = hidden.T @ delta
    gb2 = delta.sum(axis=0)
    # ReLU derivative taken as 0 at exactly 0, matching the compiled kernel.
    dhidden = (delta @ W2.T) * (hidden > 0.0)
    gW1 = X.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return np.concatenate([gW1.reshape(-1), gb1, gW2.reshape(-1), gb2])


def sgd_epochs(kind, w, input_dim, hidden_dim, num_classes, X, y, lr, batch_size, perms):
    """Minibatch SGD over precomputed per-epoch permutations.

    `perms` is an (epochs, n) int64 array fixing batch composition, so the
    trajectory is identical under every backend. Returns the updated weight
    vector; `w` itself is not modified.
    """
    w = w.copy()
    n = X.shape[0]
    for e in range(perms.shape[0]):
        perm = perms[e]
        for bi, start in enumerate(range(0, n, batch_size)):
            idx = perm[start : start + batch_size]
            g = gradient_model(kind, w, input_dim, hidden_dim, num_classes, X[idx], y[idx])
            w -= lr * g
            if not np.isfinite(w).all():
                raise ValueError(f"non-finite update at epoch {e + 1}, batch {bi + 1}")
    return w
