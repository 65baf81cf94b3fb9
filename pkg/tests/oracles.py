"""Independent reference implementations used as test oracles.

These deliberately avoid the package's own helpers: loops instead of
vectorized numpy, quaternions instead of rotation matrices, and direct DFT
sums instead of matrix factorizations.
"""

import math

import numpy as np


# --- rotations via unit quaternions ---------------------------------------------


def quat_from_axis_angle(r):
    r = [float(x) for x in r]
    theta = math.sqrt(sum(x * x for x in r))
    if theta == 0.0:
        return (1.0, 0.0, 0.0, 0.0)
    s = math.sin(theta / 2.0) / theta
    return (math.cos(theta / 2.0), r[0] * s, r[1] * s, r[2] * s)


def quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return (w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2)


def quat_conj(q):
    return (q[0], -q[1], -q[2], -q[3])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_geodesic_angle(r_a, r_b):
    """Rotation angle in [0, pi] of q_a * conj(q_b)."""
    q = quat_mul(quat_from_axis_angle(r_a), quat_conj(quat_from_axis_angle(r_b)))
    vec = math.sqrt(q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
    return 2.0 * math.atan2(vec, abs(q[0]))


# --- keyframe extraction, literally ----------------------------------------------------


def brute_variation_head(head_pose):
    T = len(head_pose)
    out = [0.0] * T
    for t in range(1, T):
        ang = quat_geodesic_angle(head_pose[t][:3], head_pose[t - 1][:3])
        step = math.sqrt(sum((head_pose[t][j] - head_pose[t - 1][j]) ** 2 for j in range(3, 9)))
        out[t] = ang + step
    return out


def brute_variation_expr(expr):
    T = len(expr)
    out = [0.0] * T
    for t in range(1, T):
        out[t] = math.sqrt(sum((expr[t][j] - expr[t - 1][j]) ** 2 for j in range(len(expr[t]))))
    return out


def brute_smooth(v, sigma):
    """Truncated Gaussian with half-sample symmetric reflection at the edges."""
    T = len(v)
    radius = math.ceil(3 * sigma)
    weights = [math.exp(-0.5 * (k / sigma) ** 2) for k in range(-radius, radius + 1)]
    total = sum(weights)
    weights = [w / total for w in weights]

    def at(i):
        # reflect repeatedly: ... 1 0 | 0 1 2 ... T-1 | T-1 T-2 ...
        while i < 0 or i >= T:
            i = -i - 1 if i < 0 else 2 * T - i - 1
        return v[i]

    return [sum(weights[k + radius] * at(t + k) for k in range(-radius, radius + 1))
            for t in range(T)]


def brute_select(v, sigma, alpha):
    T = len(v)
    flags = [0] * T
    if T < 3:
        return flags
    s = brute_smooth(v, sigma)
    mean = sum(s) / T
    std = math.sqrt(sum((x - mean) ** 2 for x in s) / T)
    tau = mean + alpha * std
    for t in range(1, T - 1):
        if s[t] > s[t - 1] and s[t] >= s[t + 1] and s[t] > tau:
            flags[t] = 1
    return flags


def brute_extract(head_pose, expr, sigma=2.0, alpha=0.5):
    return (brute_select(brute_variation_head(head_pose), sigma, alpha),
            brute_select(brute_variation_expr(expr), sigma, alpha))


# --- spectra --------------------------------------------------------------------------


def naive_stft_mag(x, window_len, hop):
    """Reflect-padded, Hann-windowed magnitude spectrogram by direct DFT sums."""
    x = list(x)
    T = len(x)
    pad = window_len // 2

    def at(i):
        if i < 0:
            return x[-i]
        if i >= T:
            return x[2 * (T - 1) - i]
        return x[i]

    padded = [at(i) for i in range(-pad, T + pad)]
    win = [0.5 - 0.5 * math.cos(2 * math.pi * n / window_len) for n in range(window_len)]
    frames = []
    start = 0
    while start + window_len <= len(padded):
        seg = [padded[start + n] * win[n] for n in range(window_len)]
        row = []
        for k in range(window_len // 2 + 1):
            re = sum(seg[n] * math.cos(2 * math.pi * k * n / window_len) for n in range(window_len))
            im = -sum(seg[n] * math.sin(2 * math.pi * k * n / window_len) for n in range(window_len))
            row.append(math.hypot(re, im))
        frames.append(row)
        start += hop
    return np.array(frames)


def naive_mr_stft(x_hat, x, resolutions):
    """Sum over usable resolutions of the channel-averaged mean | |S(x_hat)| - |S(x)| | distance."""
    T, C = x.shape
    per_res = []
    for w, hop in resolutions:
        if w > T:
            continue
        chans = []
        for c in range(C):
            a = naive_stft_mag(x_hat[:, c], w, hop)
            b = naive_stft_mag(x[:, c], w, hop)
            chans.append(np.mean(np.abs(a - b)))
        per_res.append(sum(chans) / C)
    return sum(per_res)


# --- linear algebra -----------------------------------------------------------------------


def naive_matmul(a, b):
    n, k = len(a), len(a[0])
    m = len(b[0])
    return np.array([[sum(a[i][p] * b[p][j] for p in range(k)) for j in range(m)]
                     for i in range(n)])


def direct_conv(x, kernel, dilation):
    """Same-length, zero-padded, centered depthwise dilated convolution."""
    T, D = x.shape
    k = kernel.shape[0]
    half = (k - 1) // 2
    out = np.zeros((T, D))
    for t in range(T):
        for d in range(D):
            acc = 0.0
            for j in range(k):
                src = t + (j - half) * dilation
                if 0 <= src < T:
                    acc += kernel[j, d] * x[src, d]
            out[t, d] = acc
    return out
