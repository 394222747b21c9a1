"""Minibatch training loop shared by the estimator and the beam classifiers."""

import numpy as np

from .nn import make_optimizer


def stream(seed, tag):
    """Named child RNG stream; keeps init, dropout and shuffling independent."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(tag,)))


def batched_forward(network, x, batch_size=1024):
    outs = [network.forward(x[i:i + batch_size], training=False) for i in range(0, len(x), batch_size)]
    return np.concatenate(outs) if outs else network.forward(x[:0], training=False)


def fit(network, x, y, loss_fn, optimizer_config, epochs, batch_size, seed,
        x_test=None, y_test=None, eval_train=False, target_loss=None, metrics=None):
    """Train in place and return the per-epoch trace.

    Each trace entry has ``epoch``, ``lr``, ``train_loss`` (mean minibatch
    loss with dropout active) and, when requested, ``train_eval_loss`` and
    ``test_loss`` (dropout off). ``metrics`` maps names to
    ``f(network) -> float`` evaluated after every epoch. Training stops early
    once ``train_eval_loss`` drops below ``target_loss``.
    """
    opt = make_optimizer(optimizer_config)
    network.reseed_dropout(stream(seed, 2))
    shuffle = stream(seed, 3)
    n = len(x)
    trace = []
    for epoch in range(epochs):
        order = shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            out = network.forward(x[idx], training=True)
            loss, grad = loss_fn(out, y[idx])
            network.backward(grad)
            opt.step(network.parameters(), network.gradients(), epoch)
            total += loss * len(idx)
        entry = {"epoch": epoch, "lr": optimizer_config.lr_at(epoch), "train_loss": total / n}
        if eval_train or target_loss is not None:
            entry["train_eval_loss"] = loss_fn(batched_forward(network, x), y)[0]
        if x_test is not None and len(x_test):
            entry["test_loss"] = loss_fn(batched_forward(network, x_test), y_test)[0]
        for name, fn in (metrics or {}).items():
            entry[name] = fn(network)
        trace.append(entry)
        if target_loss is not None and entry["train_eval_loss"] < target_loss:
            break
    return trace
