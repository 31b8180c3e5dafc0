"""Independent reference implementations used as test oracles."""

import numpy as np
import torch


def finite_difference_gradients(model, x, y, loss_fn, step=1e-4):
    """Central differences of ``loss_fn(model(x), y)`` for every parameter element."""
    model.train()
    grads = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                up = loss_fn(model(x), y).item()
                flat[i] = orig - step
                down = loss_fn(model(x), y).item()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * step)
            grads[name] = g
    return grads


def relative_errors(analytic, numeric, floor=1e-8):
    out = []
    for name in analytic:
        a = analytic[name].reshape(-1).double()
        n = numeric[name].reshape(-1).double()
        denom = torch.clamp(torch.maximum(a.abs(), n.abs()), min=floor)
        out.append(((a - n).abs() / denom).numpy())
    return np.concatenate(out)


def brute_erode(mask, k):
    """Pixel-by-pixel minimum over the k x k window; off-grid pixels count as 0."""
    h, w = mask.shape
    r = k // 2
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            v = 1
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    v = min(v, mask[ii, jj] if 0 <= ii < h and 0 <= jj < w else 0)
            out[i, j] = v
    return out


def brute_dilate(mask, k):
    h, w = mask.shape
    r = k // 2
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            v = 0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w:
                        v = max(v, mask[ii, jj])
            out[i, j] = v
    return out


def count_confusion(pred, truth):
    tp = fp = fn = tn = 0
    for p, t in zip(pred.ravel().tolist(), truth.ravel().tolist()):
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn
