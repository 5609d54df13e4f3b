"""Hot numeric loops, each with a numba kernel and a pure-numpy twin.

The numba path is used when numba imports and ``LABELGRAIN_DISABLE_NUMBA`` is
unset (or ``0``). Both paths consume identical inputs, including pre-drawn
dropout masks, so they agree to floating-point summation order. Results are
bit-reproducible within one backend, not across backends.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba.typed import List as _TypedList
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

HAVE_NUMBA = numba is not None
_DISABLED = os.environ.get("LABELGRAIN_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")
_backend = "numba" if HAVE_NUMBA and not _DISABLED else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


# --- confusion counting -----------------------------------------------------

def tally_confusion_numpy(true, pred, k):
    flat = np.bincount(true * k + pred, minlength=k * k)
    return flat.reshape(k, k).astype(np.int64)


def pair_sums_numpy(counts, groups):
    """(intra_sum, inter_sum) over off-diagonal entries."""
    same = groups[:, None] == groups[None, :]
    np.fill_diagonal(same, False)
    off = ~np.eye(len(groups), dtype=bool)
    intra = int(counts[same].sum())
    inter = int(counts[off & ~same].sum())
    return intra, inter


# --- forward / backward -------------------------------------------------------

def forward_numpy(weights, biases, X, mask=None):
    """Return (probs, inputs_per_layer, hidden_pre_mask).

    ``inputs_per_layer[l]`` is what layer ``l`` consumed (after dropout for the
    output layer). ``mask`` multiplies the penultimate activation.
    """
    shifted, inputs, hidden = _shifted_logits(weights, biases, X, mask)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True), inputs, hidden


def _shifted_logits(weights, biases, X, mask):
    # logits minus their row max, so exp never overflows
    n_layers = len(weights)
    inputs = []
    hidden = []
    a = X
    for l in range(n_layers - 1):
        inputs.append(a)
        a = np.maximum(a @ weights[l] + biases[l], 0.0)
        hidden.append(a)
    if mask is not None:
        a = a * mask
    inputs.append(a)
    logits = a @ weights[-1] + biases[-1]
    logits -= logits.max(axis=1, keepdims=True)
    return logits, inputs, hidden


def forward_backward_numpy(weights, biases, X, y, mask=None):
    """Mean cross-entropy and its gradients for one batch."""
    shifted, inputs, hidden = _shifted_logits(weights, biases, X, mask)
    e = np.exp(shifted)
    total = e.sum(axis=1)
    b = X.shape[0]
    rows = np.arange(b)
    # log-softmax form: a confident wrong answer gives a large loss, not inf
    loss = float((np.log(total) - shifted[rows, y]).sum() / b)
    d = e / total[:, None]
    d[rows, y] -= 1.0
    d /= b
    n_layers = len(weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        gw[l] = inputs[l].T @ d
        gb[l] = d.sum(axis=0)
        if l > 0:
            d = d @ weights[l].T
            if l == n_layers - 1 and mask is not None:
                d = d * mask
            d = d * (hidden[l - 1] > 0.0)
    return loss, gw, gb


def sgd_epoch_numpy(weights, biases, vel_w, vel_b, X, y, order, batch_size, lr, momentum, wd, mask):
    """One epoch of momentum SGD in place. Returns (mean_loss, failed_step).

    ``mask`` is an (n, width) array aligned with ``order`` positions, or an
    empty array for no dropout. ``failed_step`` is -1 unless a batch loss
    was non-finite, in which case the epoch stops there.
    """
    # overflow on the way to divergence is reported through failed_step
    with np.errstate(over="ignore", invalid="ignore"):
        return _sgd_epoch_numpy(weights, biases, vel_w, vel_b, X, y, order, batch_size, lr, momentum, wd, mask)


def _sgd_epoch_numpy(weights, biases, vel_w, vel_b, X, y, order, batch_size, lr, momentum, wd, mask):
    n = order.shape[0]
    use_mask = mask.size > 0
    total = 0.0
    step = 0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        m = mask[start:start + idx.shape[0]] if use_mask else None
        loss, gw, gb = forward_backward_numpy(weights, biases, X[idx], y[idx], m)
        if not np.isfinite(loss):
            return float("nan"), step
        total += loss * idx.shape[0]
        for l in range(len(weights)):
            vel_w[l] *= momentum
            vel_w[l] -= lr * (gw[l] + wd * weights[l])
            weights[l] += vel_w[l]
            vel_b[l] *= momentum
            vel_b[l] -= lr * (gb[l] + wd * biases[l])
            biases[l] += vel_b[l]
        step += 1
    return total / n, -1


# --- numba twins ----------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _tally_confusion_nb(true, pred, k):
        out = np.zeros((k, k), dtype=np.int64)
        for t in range(true.shape[0]):
            out[true[t], pred[t]] += 1
        return out

    @numba.njit(cache=True)
    def _pair_sums_nb(counts, groups):
        k = counts.shape[0]
        intra = 0
        inter = 0
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                if groups[i] == groups[j]:
                    intra += counts[i, j]
                else:
                    inter += counts[i, j]
        return intra, inter

    @numba.njit(cache=True)
    def _sgd_epoch_nb(weights, biases, vel_w, vel_b, X, y, order, batch_size, lr, momentum, wd, mask):
        n = order.shape[0]
        n_layers = len(weights)
        use_mask = mask.shape[0] > 0
        total = 0.0
        step = 0
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            b = stop - start
            idx = order[start:stop]
            a = np.ascontiguousarray(X[idx])
            inputs = [a]
            hidden = [a]
            for l in range(n_layers - 1):
                z = np.dot(a, weights[l])
                bl = biases[l]
                for i in range(b):
                    for j in range(z.shape[1]):
                        v = z[i, j] + bl[j]
                        z[i, j] = v if v > 0.0 else 0.0
                hidden.append(z)
                a = z
                if l < n_layers - 2:
                    inputs.append(a)
            if use_mask:
                a = a * mask[start:stop]
            if n_layers > 1:
                inputs.append(a)
            else:
                inputs[0] = a
            wo = weights[n_layers - 1]
            d = np.dot(a, wo)
            bo = biases[n_layers - 1]
            batch_loss = 0.0
            for i in range(b):
                mx = -np.inf
                for j in range(d.shape[1]):
                    d[i, j] += bo[j]
                    if d[i, j] > mx:
                        mx = d[i, j]
                s = 0.0
                zy = d[i, y[idx[i]]] - mx
                for j in range(d.shape[1]):
                    d[i, j] = np.exp(d[i, j] - mx)
                    s += d[i, j]
                for j in range(d.shape[1]):
                    d[i, j] /= s
                batch_loss += np.log(s) - zy
                d[i, y[idx[i]]] -= 1.0
            batch_loss /= b
            if not np.isfinite(batch_loss):
                return np.nan, step
            total += batch_loss * b
            d /= b
            gws = []
            gbs = []
            for l in range(n_layers - 1, -1, -1):
                gws.append(np.dot(inputs[l].T, d))
                gbs.append(d.sum(axis=0))
                if l > 0:
                    d = np.dot(d, weights[l].T)
                    if l == n_layers - 1 and use_mask:
                        d = d * mask[start:stop]
                    h = hidden[l]
                    for i in range(b):
                        for j in range(d.shape[1]):
                            if not h[i, j] > 0.0:
                                d[i, j] = 0.0
            for l in range(n_layers):
                gw = gws[n_layers - 1 - l]
                gb = gbs[n_layers - 1 - l]
                w = weights[l]
                vw = vel_w[l]
                for i in range(w.shape[0]):
                    for j in range(w.shape[1]):
                        vw[i, j] = momentum * vw[i, j] - lr * (gw[i, j] + wd * w[i, j])
                        w[i, j] += vw[i, j]
                bb = biases[l]
                vb = vel_b[l]
                for j in range(bb.shape[0]):
                    vb[j] = momentum * vb[j] - lr * (gb[j] + wd * bb[j])
                    bb[j] += vb[j]
            step += 1
        return total / n, -1

    def tally_confusion_numba(true, pred, k):
        return _tally_confusion_nb(true, pred, k)

    def pair_sums_numba(counts, groups):
        intra, inter = _pair_sums_nb(counts, groups)
        return int(intra), int(inter)

    def sgd_epoch_numba(weights, biases, vel_w, vel_b, X, y, order, batch_size, lr, momentum, wd, mask):
        args = [_TypedList(p) for p in (weights, biases, vel_w, vel_b)]
        if mask.size == 0:
            mask = np.zeros((0, 0))
        loss, step = _sgd_epoch_nb(
            *args, X, y, order, int(batch_size), float(lr), float(momentum), float(wd), mask
        )
        return float(loss), int(step)

else:  # pragma: no cover
    tally_confusion_numba = pair_sums_numba = sgd_epoch_numba = None


def tally_confusion(true, pred, k):
    if _backend == "numba":
        return tally_confusion_numba(true, pred, k)
    return tally_confusion_numpy(true, pred, k)


def pair_sums(counts, groups):
    if _backend == "numba":
        return pair_sums_numba(counts, groups)
    return pair_sums_numpy(counts, groups)


def sgd_epoch(weights, biases, vel_w, vel_b, X, y, order, batch_size, lr, momentum, wd, mask):
    if _backend == "numba":
        return sgd_epoch_numba(weights, biases, vel_w, vel_b, X, y, order, batch_size, lr, momentum, wd, mask)
    return sgd_epoch_numpy(weights, biases, vel_w, vel_b, X, y, order, batch_size, lr, momentum, wd, mask)
