"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np


def numeric_grad(fn, arr, eps=1e-5, indices=None):
    """d fn() / d arr at ``indices`` (all elements if None); ``arr`` is perturbed in place."""
    flat = arr.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = {}
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        up = fn()
        flat[i] = orig - eps
        down = fn()
        flat[i] = orig
        out[i] = (up - down) / (2 * eps)
    if indices is None:
        return np.array([out[i] for i in range(flat.size)]).reshape(arr.shape)
    return out


def max_rel_error(analytic, numeric):
    """Largest absolute deviation scaled by the largest gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(numeric).max(), np.abs(analytic).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


NETWORKS = ("me", "mvp", "mv", "mc", "rp", "res", "lf")


def end_to_end_probe(seed=0, per_network=5, size=16, lam=2048.0, eps=1e-6):
    """Finite-difference probe of the full P-frame rate-distortion loss at float64.

    Zero-initialised tensors are given small random values first so every
    network passes gradient upstream. Returns {network: (analytic, numeric)}.
    """
    from lvcodec import tensor as T
    from lvcodec.codecnets import Buffers, CodecModel
    from lvcodec.tensor import Tensor
    from lvcodec.training import RDLossConfig, rd_loss

    rng = np.random.default_rng(seed)
    model = CodecModel(seed=seed, dtype=np.float64)
    for name, t in model.weights.items():
        if name.endswith("weight") and not t.data.any():
            t.data[...] = rng.normal(0, 0.02, t.shape)

    def image():
        base = rng.random((1, 3, size // 4, size // 4))
        return np.clip(np.kron(base, np.ones((4, 4))) + rng.normal(0, 0.05, (1, 3, size, size)), 0.05, 0.95)

    buf = Buffers([Tensor(image()) for _ in range(4)],
                  [Tensor(rng.normal(0, 0.7, (1, 2, size, size))) for _ in range(3)],
                  [Tensor(rng.normal(0, 0.05, (1, 3, size, size))) for _ in range(4)])
    x = Tensor(image())
    cfg = RDLossConfig(lam)

    def loss():
        out = model.forward(x, buf, "train", np.random.default_rng(seed + 1))
        return rd_loss([x], [out.x_hat], out.rate, cfg)[0]

    for t in model.weights.tensors.values():
        t.grad = None
    T.backward(loss())

    def f():
        with T.no_grad():
            return loss().item()

    results = {}
    for net in NETWORKS:
        names = [k for k, t in model.weights.items() if k.startswith(net + ".") and t.grad is not None
                 and np.abs(t.grad).max() > 0]
        ana, num = [], []
        for _ in range(per_network):
            t = model.weights.tensors[names[int(rng.integers(len(names)))]]
            flat_grad = np.abs(t.grad.reshape(-1))
            # favour entries that actually carry gradient
            i = int(rng.choice(t.size, p=flat_grad / flat_grad.sum()))
            num.append(numeric_grad(f, t.data, eps=eps, indices=[i])[i])
            ana.append(float(t.grad.reshape(-1)[i]))
        results[net] = (np.array(ana), np.array(num))
    return results
