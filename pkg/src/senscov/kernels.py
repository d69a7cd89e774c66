"""Hot numeric kernels with numpy reference implementations.

Each kernel here has an ``@njit`` twin in ``_kernels_numba``. The numpy
versions accumulate in the same element order as the compiled loops, so the
two backends agree bit for bit (asserted in tests and the benchmark).
"""

import math

import numpy as np

from .backend import resolve_backend

# log-sigma bounds for the Metropolis chain; proposals outside are rejected
LOG_SIGMA_MIN = math.log(1e-8)
LOG_SIGMA_MAX = math.log(1e8)
ADAPT_WINDOW = 50


# ---------------------------------------------------------------------------
# numpy reference implementations


def conv2d_forward_np(x, kern, bias, stride):
    C, H, W = x.shape
    F, _, kh, kw = kern.shape
    ho = (H - kh) // stride + 1
    wo = (W - kw) // stride + 1
    out = np.empty((F, ho, wo))
    out[:] = bias[:, None, None]
    for c in range(C):
        for di in range(kh):
            for dj in range(kw):
                patch = x[c, di : di + (ho - 1) * stride + 1 : stride,
                          dj : dj + (wo - 1) * stride + 1 : stride]
                out += kern[:, c, di, dj][:, None, None] * patch[None, :, :]
    return out


def conv2d_input_grad_np(g_out, kern, in_shape, stride):
    C, H, W = in_shape
    F, _, kh, kw = kern.shape
    ho, wo = g_out.shape[1], g_out.shape[2]
    g_in = np.zeros((C, H, W))
    for f in range(F):
        for c in range(C):
            for di in range(kh):
                for dj in range(kw):
                    g_in[c, di : di + (ho - 1) * stride + 1 : stride,
                         dj : dj + (wo - 1) * stride + 1 : stride] += (
                        kern[f, c, di, dj] * g_out[f]
                    )
    return g_in


def conv2d_param_grad_np(x, g_out, kern_shape, stride):
    F, C, kh, kw = kern_shape
    ho, wo = g_out.shape[1], g_out.shape[2]
    g_kern = np.zeros((F, C, kh, kw))
    g_bias = np.zeros(F)
    for i in range(ho):
        for j in range(wo):
            patch = x[:, i * stride : i * stride + kh, j * stride : j * stride + kw]
            g_kern += g_out[:, i, j][:, None, None, None] * patch[None, :, :, :]
            g_bias += g_out[:, i, j]
    return g_kern, g_bias


def maxpool2x2_forward_np(x):
    C, H, W = x.shape
    ho, wo = H // 2, W // 2
    cells = x.reshape(C, ho, 2, wo, 2).transpose(0, 1, 3, 2, 4).reshape(C, ho, wo, 4)
    idx = np.argmax(cells, axis=3)  # first max wins, matches the scan order
    out = np.take_along_axis(cells, idx[..., None], axis=3)[..., 0]
    return out, idx.astype(np.int64)


def maxpool2x2_backward_np(g_out, idx, in_shape):
    C, H, W = in_shape
    ho, wo = H // 2, W // 2
    g_cells = np.zeros((C, ho, wo, 4))
    np.put_along_axis(g_cells, idx[..., None], g_out[..., None], axis=3)
    return g_cells.reshape(C, ho, wo, 2, 2).transpose(0, 1, 3, 2, 4).reshape(C, H, W)


def mh_chain_np(m, s1, s2, n_keep, n_warm, target_accept,
                mu0, x0, prior_mu_var, prior_sigma_var,
                scale_mu, scale_x, z, logu):
    """Adaptive random-walk Metropolis over (mu, log sigma).

    Likelihood is Normal(mu, sigma^2) over the observed samples, reduced to
    sufficient statistics (m, s1, s2). All randomness comes in pre-drawn:
    ``z`` holds proposal normals, ``logu`` log acceptance uniforms.
    """
    mu = mu0
    x = x0
    scale = 1.0
    lp = _log_post(mu, x, m, s1, s2, prior_mu_var, prior_sigma_var)
    mu_draws = np.empty(n_keep)
    sigma_draws = np.empty(n_keep)
    accepted = 0
    window_acc = 0
    for t in range(n_warm + n_keep):
        mu_p = mu + scale * scale_mu * z[t, 0]
        x_p = x + scale * scale_x * z[t, 1]
        if LOG_SIGMA_MIN <= x_p <= LOG_SIGMA_MAX:
            lp_p = _log_post(mu_p, x_p, m, s1, s2, prior_mu_var, prior_sigma_var)
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


def _log_post(mu, x, m, s1, s2, prior_mu_var, prior_sigma_var):
    sig2 = math.exp(2.0 * x)
    quad = s2 - 2.0 * mu * s1 + m * mu * mu
    return (-0.5 * mu * mu / prior_mu_var
            - 0.5 * sig2 / prior_sigma_var
            + x
            - m * x
            - 0.5 * quad / sig2)


# ---------------------------------------------------------------------------
# dispatch

_NUMPY_IMPLS = {
    "conv2d_forward": conv2d_forward_np,
    "conv2d_input_grad": conv2d_input_grad_np,
    "conv2d_param_grad": conv2d_param_grad_np,
    "maxpool2x2_forward": maxpool2x2_forward_np,
    "maxpool2x2_backward": maxpool2x2_backward_np,
    "mh_chain": mh_chain_np,
}

_numba_impls = None


def _impl(name):
    if resolve_backend() == "numba":
        global _numba_impls
        if _numba_impls is None:
            from . import _kernels_numba

            _numba_impls = _kernels_numba.IMPLS
        return _numba_impls[name]
    return _NUMPY_IMPLS[name]


def conv2d_forward(x, kern, bias, stride):
    return _impl("conv2d_forward")(x, kern, bias, stride)


def conv2d_input_grad(g_out, kern, in_shape, stride):
    return _impl("conv2d_input_grad")(g_out, kern, in_shape, stride)


def conv2d_param_grad(x, g_out, kern_shape, stride):
    return _impl("conv2d_param_grad")(x, g_out, kern_shape, stride)


def maxpool2x2_forward(x):
    return _impl("maxpool2x2_forward")(x)


def maxpool2x2_backward(g_out, idx, in_shape):
    return _impl("maxpool2x2_backward")(g_out, idx, in_shape)


def mh_chain(m, s1, s2, n_keep, n_warm, target_accept, mu0, x0,
             prior_mu_var, prior_sigma_var, scale_mu, scale_x, z, logu):
    return _impl("mh_chain")(
        float(m), float(s1), float(s2), int(n_keep), int(n_warm),
        float(target_accept), float(mu0), float(x0),
        float(prior_mu_var), float(prior_sigma_var),
        float(scale_mu), float(scale_x), z, logu,
    )
