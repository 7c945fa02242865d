"""Independent reference implementations used by the tests.

Everything here is written for clarity, not speed, and shares no code with
the package beyond plain data containers.
"""
from __future__ import annotations

import numpy as np
from scipy.signal import resample, resample_poly


def min_pair_distance(points: np.ndarray) -> float:
    best = np.inf
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            best = min(best, float(np.linalg.norm(points[i] - points[j])))
    return best


def phase_slope_delay(a: np.ndarray, b: np.ndarray, fs: float, band=(300.0, 4500.0)) -> float:
    """Delay of b relative to a (samples) from a power-weighted cross-spectrum phase fit."""
    n = len(a)
    fa, fb = np.fft.rfft(a), np.fft.rfft(b)
    cross = np.conj(fa) * fb
    f = np.fft.rfftfreq(n, 1 / fs)
    sel = (f >= band[0]) & (f <= band[1])
    w = np.abs(cross[sel])
    phi = np.angle(cross[sel])
    omega = 2 * np.pi * f[sel]
    # least squares phi = -omega * tau through the origin
    tau = -np.sum(w * omega * phi) / np.sum(w * omega**2)
    return tau * fs


def xcorr_lag(a: np.ndarray, b: np.ndarray, up: int = 16) -> float:
    """Lag of b relative to a in original samples, via upsampled cross-correlation."""
    au = resample_poly(a, up, 1)
    bu = resample_poly(b, up, 1)
    n = len(au) + len(bu)
    c = np.fft.irfft(np.conj(np.fft.rfft(au, n)) * np.fft.rfft(bu, n), n)
    lag = int(np.argmax(c))
    if lag > n // 2:
        lag -= n
    return lag / up


def _fractional_delay_bank(phases: int, half: int, beta: float = 8.0) -> np.ndarray:
    """Kaiser-windowed sinc taps h[q, k] with sum_k x[n + k - half] h[q, k] ~ x(n + q / phases).

    The window is centred on the fractional delay, not on tap 0.
    """
    t = np.arange(-half, half + 1)[None, :] - np.arange(phases)[:, None] / phases
    win = np.i0(beta * np.sqrt(np.clip(1 - (t / (half + 1)) ** 2, 0, None))) / np.i0(beta)
    return np.sinc(t) * win


def time_domain_das(samples: np.ndarray, delays: np.ndarray, fs: float, band, frame: int,
                    frame_len: int = 1000, up: int = 4, phases: int = 128, half: int = 32):
    """Time-domain delay-and-sum band energy of one analysis frame, per look direction.

    samples (M, N); delays (P, M) seconds as used by the steering grid (a
    mic's signal is read tau later). Each channel's frame is Hann-windowed,
    zero-extended and band-limited upsampled by ``up``; each delay is split into whole
    upsampled samples plus a fraction quantised to 1/``phases``, applied with a
    windowed-sinc fractional-delay filter. The delayed channels are averaged and
    the band energy is read off a DFT whose bins coincide with a
    ``frame_len``-rate 1024-point FFT, rescaled to the original sample rate.
    """
    m, n = samples.shape
    s0 = frame * frame_len
    xf = np.zeros((m, frame_len))
    avail = max(0, min(frame_len, n - s0))
    xf[:, :avail] = samples[:, s0:s0 + avail]
    win = np.hanning(frame_len + 1)[:-1]  # periodic Hann, as scipy's get_window
    ext = 32
    xw = np.pad(xf * win[None, :], ((0, 0), (ext, ext)))
    x = resample(xw, xw.shape[1] * up, axis=1)  # band-limited interpolation; the frame is zero at both ends
    t = delays * fs * up
    whole = np.floor(t).astype(int)
    q = np.rint((t - whole) * phases).astype(int)
    whole += q // phases
    q %= phases
    lo, hi = int(whole.min()), int(whole.max())
    if max(-lo, hi) + half >= ext * up // 2:
        raise ValueError("delays exceed the oracle's zero extension")
    bank = _fractional_delay_bank(phases, half)
    taps = np.lib.stride_tricks.sliding_window_view(x, 2 * half + 1, axis=1)  # (M, L, taps)
    out_len = taps.shape[1] - (hi - lo)
    acc = np.zeros((delays.shape[0], out_len), dtype=np.float32)
    for mi in range(m):
        shifted = (bank @ np.ascontiguousarray(taps[mi]).T).astype(np.float32)  # (Q, L); index l is x time l + half
        view = np.lib.stride_tricks.sliding_window_view(shifted, out_len, axis=1)
        acc += view[q[:, mi], whole[:, mi] - lo]
    acc = acc.astype(np.float64) / m
    nfft = 2048 * up
    spec = np.fft.rfft(acc, n=nfft, axis=1)[:, ::2]
    f = np.arange(spec.shape[1]) * fs / 1024
    sel = (f >= band[0]) & (f <= band[1]) & (f > 0)
    return (np.abs(spec[:, sel]) ** 2).sum(axis=1) / up**2


def dense_mfcc(spectrum: np.ndarray, freqs: np.ndarray, n_mels: int, n_coeffs: int, floor: float = 1e-10):
    """Explicit mel triangle + DCT-II matrices, built entry by entry."""
    def mel(f):
        return 2595.0 * np.log10(1 + f / 700.0)

    def imel(m):
        return 700.0 * (10 ** (m / 2595.0) - 1)

    k = len(freqs)
    edges = [imel(v) for v in np.linspace(mel(0.0), mel(freqs[-1]), n_mels + 2)]
    fb = np.zeros((n_mels, k))
    for i in range(n_mels):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        for j, fj in enumerate(freqs):
            if lo < fj <= mid:
                fb[i, j] = (fj - lo) / (mid - lo)
            elif mid < fj < hi:
                fb[i, j] = (hi - fj) / (hi - mid)
        fb[i] /= fb[i].sum()
    dctm = np.zeros((n_coeffs, n_mels))
    for q in range(n_coeffs):
        scale = np.sqrt(1 / n_mels) if q == 0 else np.sqrt(2 / n_mels)
        for i in range(n_mels):
            dctm[q, i] = scale * np.cos(np.pi * q * (2 * i + 1) / (2 * n_mels))
    return dctm @ np.log(np.maximum(fb @ spectrum, floor))


def naive_conv1d(x, w, b, stride, padding):
    n, length, cin = x.shape
    k, _, cout = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (0, 0)))
    lo = (length + 2 * padding - k) // stride + 1
    out = np.zeros((n, lo, cout))
    for i in range(n):
        for t in range(lo):
            for co in range(cout):
                acc = 0.0 if b is None else b[co]
                for j in range(k):
                    for ci in range(cin):
                        acc += xp[i, t * stride + j, ci] * w[j, ci, co]
                out[i, t, co] = acc
    return out


def naive_conv2d(x, w, b, stride, padding):
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, ho, wo, cout))
    for i in range(n):
        for r in range(ho):
            for c in range(wo):
                patch = xp[i, r * stride:r * stride + kh, c * stride:c * stride + kw, :]
                for co in range(cout):
                    out[i, r, c, co] = np.sum(patch * w[..., co]) + (0.0 if b is None else b[co])
    return out


def naive_maxpool1d(x, window, stride, pad_lo, pad_hi):
    n, length, c = x.shape
    xp = np.full((n, length + pad_lo + pad_hi, c), -np.inf)
    xp[:, pad_lo:pad_lo + length] = x
    lo = (xp.shape[1] - window) // stride + 1
    out = np.zeros((n, lo, c))
    for t in range(lo):
        out[:, t] = xp[:, t * stride:t * stride + window].max(axis=1)
    return out


def brute_knn(train_x, train_y, test_x, k):
    """All-pairs Euclidean k-NN; ties in distance by class then train index, votes by smallest class."""
    preds = []
    for q in test_x:
        d = [(float(np.sum((q - t) ** 2)), int(train_y[i]), i) for i, t in enumerate(train_x)]
        d.sort()
        votes = {}
        for _, _, i in d[:k]:
            votes[int(train_y[i])] = votes.get(int(train_y[i]), 0) + 1
        best = max(votes.values())
        preds.append(min(c for c, v in votes.items() if v == best))
    return np.asarray(preds)


def finite_difference(f, x: np.ndarray, index, eps: float = 1e-6) -> float:
    old = x[index]
    x[index] = old + eps
    hi = f()
    x[index] = old - eps
    lo = f()
    x[index] = old
    return (hi - lo) / (2 * eps)


def gradcheck(build, arrays, samples: int = 12, seed: int = 0, eps: float = 1e-6):
    """Compare reverse-mode gradients of sum(build(*tensors) * R) with central differences.

    ``arrays`` are float64 inputs (perturbed in place and restored). Up to
    ``samples`` entries per input are checked. Returns the worst relative
    error ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
    """
    from acoustic_kd.nn import as_tensor, backward, parameter

    rng = np.random.default_rng(seed)
    tensors = [parameter(a) for a in arrays]
    out = build(*tensors)
    proj = rng.standard_normal(out.shape)
    loss = (out * as_tensor(proj)).sum()
    grads = backward(loss, {str(i): t for i, t in enumerate(tensors)})

    def f():
        return float(np.sum(build(*[as_tensor(a) for a in arrays]).data * proj))

    worst = 0.0
    for i, a in enumerate(arrays):
        flat = [np.unravel_index(j, a.shape) for j in rng.choice(a.size, min(samples, a.size), replace=False)]
        ana = np.array([grads[str(i)][idx] for idx in flat])
        num = np.array([finite_difference(f, a, idx, eps) for idx in flat])
        scale = max(np.linalg.norm(ana), np.linalg.norm(num), 1e-12)
        worst = max(worst, float(np.linalg.norm(ana - num) / scale))
    return worst
