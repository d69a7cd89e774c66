"""Numba twins of the kernels in ``kernels``.

Loop nests are ordered so every output element accumulates its terms in
exactly the same sequence as the numpy reference, keeping the two backends
bit-identical.
"""

import math

import numpy as np
from numba import njit

from .kernels import ADAPT_WINDOW, LOG_SIGMA_MAX, LOG_SIGMA_MIN


@njit(cache=True, nogil=True)
def conv2d_forward_nb(x, kern, bias, stride):
    C, H, W = x.shape
    F, _, kh, kw = kern.shape
    ho = (H - kh) // stride + 1
    wo = (W - kw) // stride + 1
    out = np.empty((F, ho, wo))
    for f in range(F):
        for i in range(ho):
            for j in range(wo):
                acc = bias[f]
                for c in range(C):
                    for di in range(kh):
                        for dj in range(kw):
                            acc += kern[f, c, di, dj] * x[c, i * stride + di, j * stride + dj]
                out[f, i, j] = acc
    return out


@njit(cache=True, nogil=True)
def conv2d_input_grad_nb(g_out, kern, in_shape, stride):
    C = in_shape[0]
    H = in_shape[1]
    W = in_shape[2]
    F, _, kh, kw = kern.shape
    ho, wo = g_out.shape[1], g_out.shape[2]
    g_in = np.zeros((C, H, W))
    for f in range(F):
        for c in range(C):
            for di in range(kh):
                for dj in range(kw):
                    w = kern[f, c, di, dj]
                    for i in range(ho):
                        for j in range(wo):
                            g_in[c, i * stride + di, j * stride + dj] += w * g_out[f, i, j]
    return g_in


@njit(cache=True, nogil=True)
def conv2d_param_grad_nb(x, g_out, kern_shape, stride):
    F = kern_shape[0]
    C = kern_shape[1]
    kh = kern_shape[2]
    kw = kern_shape[3]
    ho, wo = g_out.shape[1], g_out.shape[2]
    g_kern = np.zeros((F, C, kh, kw))
    g_bias = np.zeros(F)
    for i in range(ho):
        for j in range(wo):
            for f in range(F):
                g = g_out[f, i, j]
                for c in range(C):
                    for di in range(kh):
                        for dj in range(kw):
                            g_kern[f, c, di, dj] += g * x[c, i * stride + di, j * stride + dj]
                g_bias[f] += g
    return g_kern, g_bias


@njit(cache=True, nogil=True)
def maxpool2x2_forward_nb(x):
    C, H, W = x.shape
    ho, wo = H // 2, W // 2
    out = np.empty((C, ho, wo))
    idx = np.empty((C, ho, wo), dtype=np.int64)
    for c in range(C):
        for i in range(ho):
            for j in range(wo):
                best = x[c, 2 * i, 2 * j]
                arg = 0
                k = 0
                for r in range(2):
                    for s in range(2):
                        v = x[c, 2 * i + r, 2 * j + s]
                        if v > best:
                            best = v
                            arg = k
                        k += 1
                out[c, i, j] = best
                idx[c, i, j] = arg
    return out, idx


@njit(cache=True, nogil=True)
def maxpool2x2_backward_nb(g_out, idx, in_shape):
    C = in_shape[0]
    H = in_shape[1]
    W = in_shape[2]
    ho, wo = H // 2, W // 2
    g_in = np.zeros((C, H, W))
    for c in range(C):
        for i in range(ho):
            for j in range(wo):
                k = idx[c, i, j]
                g_in[c, 2 * i + k // 2, 2 * j + k % 2] = g_out[c, i, j]
    return g_in


@njit(cache=True, nogil=True)
def _log_post_nb(mu, x, m, s1, s2, prior_mu_var, prior_sigma_var):
    sig2 = math.exp(2.0 * x)
    quad = s2 - 2.0 * mu * s1 + m * mu * mu
    return (-0.5 * mu * mu / prior_mu_var
            - 0.5 * sig2 / prior_sigma_var
            + x
            - m * x
            - 0.5 * quad / sig2)


@njit(cache=True, nogil=True)
def mh_chain_nb(m, s1, s2, n_keep, n_warm, target_accept,
                mu0, x0, prior_mu_var, prior_sigma_var,
                scale_mu, scale_x, z, logu):
    mu = mu0
    x = x0
    scale = 1.0
    lp = _log_post_nb(mu, x, m, s1, s2, prior_mu_var, prior_sigma_var)
    mu_draws = np.empty(n_keep)
    sigma_draws = np.empty(n_keep)
    accepted = 0
    window_acc = 0
    for t in range(n_warm + n_keep):
        mu_p = mu + scale * scale_mu * z[t, 0]
        x_p = x + scale * scale_x * z[t, 1]
        if x_p >= LOG_SIGMA_MIN and x_p <= LOG_SIGMA_MAX:
            lp_p = _log_post_nb(mu_p, x_p, m, s1, s2, prior_mu_var, prior_sigma_var)
            if logu[t] < lp_p - lp:
                mu, x, lp = mu_p, x_p, lp_p
                accepted += 1
                window_acc += 1
        if t < n_warm:
            if (t + 1) % ADAPT_WINDOW == 0:
                rate = window_acc / ADAPT_WINDOW
                scale *= math.exp(rate - target_accept)
                scale = min(max(scale, 1e-6), 1e6)
                window_acc = 0
        else:
            mu_draws[t - n_warm] = mu
            sigma_draws[t - n_warm] = math.exp(x)
    return mu_draws, sigma_draws, accepted


IMPLS = {
    "conv2d_forward": conv2d_forward_nb,
    "conv2d_input_grad": conv2d_input_grad_nb,
    "conv2d_param_grad": conv2d_param_grad_nb,
    "maxpool2x2_forward": maxpool2x2_forward_nb,
    "maxpool2x2_backward": maxpool2x2_backward_nb,
    "mh_chain": mh_chain_nb,
}
