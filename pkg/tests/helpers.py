import numpy as np


def central_difference(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` w.r.t. every entry of array ``x`` (in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def max_rel_error(a, b, floor=1e-6):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def param_gradcheck(net, loss_fn, h=1e-5, max_coords=None, rng=None):
    """Compare backprop gradients of ``loss_fn()`` (a Tensor) with central differences.

    With ``max_coords`` only a random subset of coordinates per parameter is
    checked, to keep wide networks affordable.
    """
    net.zero_grad()
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for p in net.params:
        analytic = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False)
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            fp = loss_fn().item()
            flat[i] = old - h
            fm = loss_fn().item()
            flat[i] = old
            numeric[j] = (fp - fm) / (2 * h)
        worst = max(worst, max_rel_error(analytic.reshape(-1)[idx], numeric))
    net.zero_grad()
    return worst
