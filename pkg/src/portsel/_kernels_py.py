"""Pure-Python/numpy versions of the hot loops.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the extension is tested against.
"""

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF
# second salt for the sign hash
SIGN_SALT = 0x9E3779B97F4A7C15

PROB_EPS = 1e-12


def fnv1a64(data: bytes, state: int = FNV_OFFSET) -> int:
    for byte in data:
        state = ((state ^ byte) * FNV_PRIME) & MASK64
    return state


def salted_basis(seed: int) -> int:
    """FNV state after absorbing the seed as 8 little-endian bytes."""
    return fnv1a64((seed & MASK64).to_bytes(8, "little"))


def hashed_counts(tokens, orders, seed, dim):
    """Signed hashed n-gram counts (unnormalized), float64 vector of length ``dim``.

    Each n-gram is its tokens joined by a single space, UTF-8 encoded.
    The bucket comes from FNV-1a salted with ``seed``; the sign from bit 63
    of FNV-1a salted with ``seed ^ SIGN_SALT``.
    """
    out = np.zeros(dim, dtype=np.float64)
    encoded = [t.encode("utf-8") for t in tokens]
    b_bucket = salted_basis(seed)
    b_sign = salted_basis(seed ^ SIGN_SALT)
    n_tok = len(encoded)
    for n in orders:
        for i in range(n_tok - n + 1):
            gram = b" ".join(encoded[i:i + n])
            h = fnv1a64(gram, b_bucket)
            s = fnv1a64(gram, b_sign)
            out[h % dim] += -1.0 if s >> 63 else 1.0
    return out


def softmax(z):
    e = np.exp(z - np.max(z))
    return e / e.sum()


def sigmoid(z):
    # split by sign so neither branch overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dlogits_multiclass(z, target):
    """d(-log softmax(z)[target]) / dz; the loss-value clamp is not differentiated."""
    g = softmax(z)
    g[target] -= 1.0
    return g


def dlogits_multilabel(z, y, recall_weight):
    """Gradient of the recall-weighted mean BCE with respect to the logits.

    Per label: ((1 + (w - 1) * y) * s - w * y) / n with s = sigmoid(z).
    """
    s = sigmoid(z)
    return ((1.0 + (recall_weight - 1.0) * y) * s - recall_weight * y) / s.shape[0]


def sgd_epoch(W, b, X, targets, order, lr, multilabel, recall_weight):
    """One pass of single-sample SGD over ``order``; updates W and b in place."""
    for k in order:
        x = X[k]
        z = W @ x + b
        if multilabel:
            g = dlogits_multilabel(z, targets[k], recall_weight)
        else:
            g = dlogits_multiclass(z, int(targets[k]))
        W -= lr * np.outer(g, x)
        b -= lr * g
