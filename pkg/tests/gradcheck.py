"""Finite-difference checking for whole models with ReLU and max-pool kinks.

A central difference is only meaningful where the loss is smooth on
[w - h, w + h]. Coordinates whose probes change any ReLU mask or pooling
argmax relative to the unperturbed pass are excluded and counted.
"""

import numpy as np

from oracles import rel_error
from sertk.nn import MaxPool1D, ReLU


def activation_pattern(model):
    parts = []
    for _, layer in model.body:
        if isinstance(layer, ReLU):
            parts.append(layer._mask.tobytes())
        elif isinstance(layer, MaxPool1D):
            parts.append(layer._cache[0].tobytes())
    return b"".join(parts)


def model_gradcheck(model, loss, h=1e-5, sample=None, rng=None):
    """Returns ({tensor: rel_error}, n_checked, n_excluded).

    ``loss()`` must run forward+backward and return the scalar loss.
    ``sample`` is the fraction of each tensor's entries probed (all if None),
    at least one per tensor.
    """
    loss()
    base = activation_pattern(model)
    analytic = {k: v.copy() for k, v in model.grads().items()}
    errors, checked, excluded = {}, 0, 0
    for name, p in model.params().items():
        flat = list(np.ndindex(p.shape))
        if sample is not None:
            k = max(1, int(round(sample * len(flat))))
            pick = rng.choice(len(flat), size=k, replace=False)
            flat = [flat[i] for i in sorted(pick)]
        a, n = [], []
        for idx in flat:
            orig = p[idx]
            p[idx] = orig + h
            fp = loss()
            ok = activation_pattern(model) == base
            p[idx] = orig - h
            fm = loss()
            ok = ok and activation_pattern(model) == base
            p[idx] = orig
            if not ok:
                excluded += 1
                continue
            a.append(analytic[name][idx])
            n.append((fp - fm) / (2 * h))
        checked += len(a)
        if a:
            errors[name] = rel_error(np.array(a), np.array(n))
    loss()
    return errors, checked, excluded
