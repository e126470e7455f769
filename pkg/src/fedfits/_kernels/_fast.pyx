# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled training/evaluation kernels.

Same API and semantics as `fedfits._kernels.numpy_backend`; see that module
for the layout contract. Sequential C loops replace BLAS calls, so the two
backends can differ in the last few ULPs while each stays bit-reproducible.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, isfinite

cnp.import_array()

NAME = "cython"

KIND_LOGREG = 0
KIND_MLP1 = 1

cdef int _LOGREG = 0


cdef void _row_logits(int kind, const double[::1] w, const double[:, ::1] X,
                      Py_ssize_t row, int D, int H, int C,
                      double[::1] hid, double[::1] z) noexcept nogil:
    cdef Py_ssize_t j, h, c
    cdef double acc
    cdef Py_ssize_t o1, o2
    if kind == _LOGREG:
        for c in range(C):
            z[c] = w[D * C + c]
        for j in range(D):
            for c in range(C):
                z[c] += X[row, j] * w[j * C + c]
    else:
        o1 = D * H
        o2 = o1 + H
        for h in range(H):
            acc = w[o1 + h]
            for j in range(D):
                acc += X[row, j] * w[j * H + h]
            hid[h] = acc if acc > 0.0 else 0.0
        for c in range(C):
            z[c] = w[o2 + H * C + c]
        for h in range(H):
            for c in range(C):
                z[c] += hid[h] * w[o2 + h * C + c]


cdef double _log_sum_exp(const double[::1] z, int C, double* out_max) noexcept nogil:
    cdef Py_ssize_t c
    cdef double m = z[0]
    cdef double s = 0.0
    for c in range(1, C):
        if z[c] > m:
            m = z[c]
    for c in range(C):
        s += exp(z[c] - m)
    out_max[0] = m
    return log(s)


def predict_proba(int kind, const double[::1] w, int input_dim, int hidden_dim,
                  int num_classes, const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, num_classes))
    cdef double[:, ::1] probs = out
    cdef double[::1] z = np.empty(num_classes)
    cdef double[::1] hid = np.empty(max(hidden_dim, 1))
    cdef Py_ssize_t i, c
    cdef double m, lse
    for i in range(n):
        _row_logits(kind, w, X, i, input_dim, hidden_dim, num_classes, hid, z)
        lse = _log_sum_exp(z, num_classes, &m)
        for c in range(num_classes):
            probs[i, c] = exp(z[c] - m - lse)
    return out


def evaluate_model(int kind, const double[::1] w, int input_dim, int hidden_dim,
                   int num_classes, const double[:, ::1] X, const cnp.int64_t[::1] y):
    """(mean cross-entropy in nats, accuracy). Argmax ties go to the lowest class."""
    cdef Py_ssize_t n = X.shape[0]
    cdef double[::1] z = np.empty(num_classes)
    cdef double[::1] hid = np.empty(max(hidden_dim, 1))
    cdef double loss_sum = 0.0
    cdef Py_ssize_t correct = 0
    cdef Py_ssize_t i, c, pred
    cdef double m, lse, best
    for i in range(n):
        _row_logits(kind, w, X, i, input_dim, hidden_dim, num_classes, hid, z)
        lse = _log_sum_exp(z, num_classes, &m)
        loss_sum += -(z[y[i]] - m - lse)
        pred = 0
        best = z[0]
        for c in range(1, num_classes):
            if z[c] > best:
                best = z[c]
                pred = c
        if pred == y[i]:
            correct += 1
    return loss_sum / n, correct / <double> n


cdef void _accumulate_grad(int kind, const double[::1] w, const double[:, ::1] X,
                           const cnp.int64_t[::1] y, const cnp.int64_t[::1] idx,
                           Py_ssize_t start, Py_ssize_t stop, int D, int H, int C,
                           double[::1] hid, double[::1] z, double[::1] delta,
                           double[::1] dh, double[::1] g) noexcept nogil:
    """Mean cross-entropy gradient over rows idx[start:stop], written into g."""
    cdef Py_ssize_t m_batch = stop - start
    cdef Py_ssize_t i, row, j, h, c
    cdef double mx, lse, acc
    cdef Py_ssize_t o1 = D * H
    cdef Py_ssize_t o2 = o1 + H
    for j in range(g.shape[0]):
        g[j] = 0.0
    for i in range(start, stop):
        row = idx[i]
        _row_logits(kind, w, X, row, D, H, C, hid, z)
        lse = _log_sum_exp(z, C, &mx)
        for c in range(C):
            delta[c] = exp(z[c] - mx - lse)
        delta[y[row]] -= 1.0
        for c in range(C):
            delta[c] /= m_batch
        if kind == _LOGREG:
            for j in range(D):
                for c in range(C):
                    g[j * C + c] += X[row, j] * delta[c]
            for c in range(C):
                g[D * C + c] += delta[c]
        else:
            for h in range(H):
                for c in range(C):
                    g[o2 + h * C + c] += hid[h] * delta[c]
            for c in range(C):
                g[o2 + H * C + c] += delta[c]
            # ReLU derivative taken as 0 at exactly 0.
            for h in range(H):
                if hid[h] > 0.0:
                    acc = 0.0
                    for c in range(C):
                        acc += delta[c] * w[o2 + h * C + c]
                    dh[h] = acc
                else:
                    dh[h] = 0.0
            for j in range(D):
                for h in range(H):
                    g[j * H + h] += X[row, j] * dh[h]
            for h in range(H):
                g[o1 + h] += dh[h]


def gradient_model(int kind, const double[::1] w, int input_dim, int hidden_dim,
                   int num_classes, const double[:, ::1] X, const cnp.int64_t[::1] y):
    """Analytic gradient of the mean cross-entropy, flat layout matching `w`."""
    cdef Py_ssize_t n = X.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(w.shape[0])
    cdef double[::1] g = out
    cdef double[::1] z = np.empty(num_classes)
    cdef double[::1] hid = np.empty(max(hidden_dim, 1))
    cdef double[::1] delta = np.empty(num_classes)
    cdef double[::1] dh = np.empty(max(hidden_dim, 1))
    cdef cnp.int64_t[::1] idx = np.arange(n, dtype=np.int64)
    _accumulate_grad(kind, w, X, y, idx, 0, n, input_dim, hidden_dim, num_classes,
                     hid, z, delta, dh, g)
    return out


def sgd_epochs(int kind, const double[::1] w, int input_dim, int hidden_dim,
               int num_classes, const double[:, ::1] X, const cnp.int64_t[::1] y,
               double lr, Py_ssize_t batch_size, const cnp.int64_t[:, ::1] perms):
    """Minibatch SGD over precomputed per-epoch permutations.

    `perms` is an (epochs, n) int64 array fixing batch composition, so the
    trajectory is identical under every backend. Returns the updated weight
    vector; `w` itself is not modified.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_params = w.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.array(w, copy=True)
    cdef double[::1] wv = out
    cdef double[::1] g = np.empty(n_params)
    cdef double[::1] z = np.empty(num_classes)
    cdef double[::1] hid = np.empty(max(hidden_dim, 1))
    cdef double[::1] delta = np.empty(num_classes)
    cdef double[::1] dh = np.empty(max(hidden_dim, 1))
    cdef Py_ssize_t e, start, stop, p, bi
    cdef bint bad
    for e in range(perms.shape[0]):
        bi = 0
        start = 0
        while start < n:
            stop = start + batch_size
            if stop > n:
                stop = n
            bad = False
            with nogil:
                _accumulate_grad(kind, wv, X, y, perms[e], start, stop,
                                 input_dim, hidden_dim, num_classes,
                                 hid, z, delta, dh, g)
                for p in range(n_params):
                    wv[p] -= lr * g[p]
                    if not isfinite(wv[p]):
                        bad = True
            if bad:
                raise ValueError(f"non-finite update at epoch {e + 1}, batch {bi + 1}")
            start = stop
            bi += 1
    return out
