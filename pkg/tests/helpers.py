"""Independent finite-difference gradient oracle for the gradient-check tests."""

import numpy as np
import torch


def finite_difference_error(loss_fn, params, n_coords=24, h=1e-5, seed=0):
    """Relative error between autograd and central differences on sampled coordinates.

    ``loss_fn()`` must rebuild the scalar loss from the current parameter values.
    Returns ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||) over the
    sampled coordinates, so tiny individual entries do not dominate.
    """
    params = [p for p in params if p.requires_grad]
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic_all = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    rng = np.random.default_rng(seed)
    sizes = np.array([p.numel() for p in params])
    picks = rng.choice(sizes.sum(), size=min(n_coords, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    analytic, numeric = [], []
    with torch.no_grad():
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            idx = int(flat - offsets[k])
            view = params[k].view(-1)
            orig = view[idx].item()
            view[idx] = orig + h
            up = loss_fn().item()
            view[idx] = orig - h
            down = loss_fn().item()
            view[idx] = orig
            numeric.append((up - down) / (2 * h))
            analytic.append(analytic_all[k].view(-1)[idx].item())
    a, n = np.array(analytic), np.array(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale), a, n
