"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
reference the extension is tested against.
"""

import numpy as np


def conv2d_forward(x, w, b):
    """Valid, stride-1 cross-correlation. x: (B,H,W,Ci), w: (kh,kw,Ci,Co)."""
    kh, kw = w.shape[:2]
    n, h, wd, _ = x.shape
    ho, wo = h - kh + 1, wd - kw + 1
    out = np.empty((n, ho, wo, w.shape[3]))
    out[...] = b
    for i in range(kh):
        for j in range(kw):
            out += x[:, i:i + ho, j:j + wo, :] @ w[i, j]
    return out


def conv2d_backward(x, w, grad_out):
    kh, kw = w.shape[:2]
    ho, wo = grad_out.shape[1:3]
    dx = np.zeros_like(x)
    dw = np.empty_like(w)
    g2 = grad_out.reshape(-1, grad_out.shape[3])
    for i in range(kh):
        for j in range(kw):
            xs = x[:, i:i + ho, j:j + wo, :]
            dw[i, j] = xs.reshape(-1, x.shape[3]).T @ g2
            dx[:, i:i + ho, j:j + wo, :] += grad_out @ w[i, j].T
    db = g2.sum(axis=0)
    return dx, dw, db


def maxpool2d_forward(x, kh, kw):
    """Non-overlapping max pooling; returns output and in-window argmax (first on ties)."""
    n, h, wd, c = x.shape
    ho, wo = h // kh, wd // kw
    win = x.reshape(n, ho, kh, wo, kw, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, kh * kw)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2d_backward(grad_out, idx, kh, kw):
    n, ho, wo, c = grad_out.shape
    win = np.zeros((n, ho, wo, c, kh * kw))
    np.put_along_axis(win, idx[..., None], grad_out[..., None], axis=-1)
    return win.reshape(n, ho, wo, c, kh, kw).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * kh, wo * kw, c)


def beam_rates(h, beams, snr):
    """Sum-over-subcarrier rates of every beam. h: (S,K,N), beams: (B,N) -> (S,B)."""
    gain = np.abs(np.conj(h) @ beams.T) ** 2
    return np.log1p(snr * gain).sum(axis=1) / np.log(2.0)
