"""Iterative radix-2 Cooley-Tukey FFT (power-of-two lengths only), plain numpy.

Butterflies run on the last axis with ping-pong buffers; real input uses the
half-length packing trick (even samples as real part, odd as imaginary).
"""

from functools import lru_cache

import numpy as np

from ..exceptions import ShapeError


def _check_pow2(n, op):
    if n < 1 or n & (n - 1):
        raise ShapeError(f"{op} (length must be a power of two)", (n,))


@lru_cache(maxsize=None)
def _bitrev(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m, inverse, dtype):
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(m // 2) / m).astype(dtype)


def _complex_dtype(dt):
    return np.complex64 if dt in (np.float32, np.complex64) else np.complex128


def _fft_last(a, inverse):
    """Unnormalised transform of the last axis of complex ``a`` (returns a new array)."""
    n = a.shape[-1]
    a = a[..., _bitrev(n)].reshape(-1, n)
    buf = np.empty_like(a)
    m = 2
    while m <= n:
        h = m // 2
        av = a.reshape(-1, n // m, m)
        bv = buf.reshape(-1, n // m, m)
        if m == 2:
            t = av[..., 1:]
        else:
            t = av[..., h:] * _twiddles(m, inverse, a.dtype.type)
        np.add(av[..., :h], t, out=bv[..., :h])
        np.subtract(av[..., :h], t, out=bv[..., h:])
        a, buf = buf, a
        m *= 2
    return a


def fft(x, axis=-1, inverse=False):
    """Unnormalised DFT along ``axis``; ``inverse`` flips the twiddle sign and divides by n."""
    a = np.moveaxis(np.asarray(x), axis, -1)
    n = a.shape[-1]
    _check_pow2(n, "fft")
    lead = a.shape[:-1]
    a = a.astype(_complex_dtype(a.dtype), copy=False)
    out = _fft_last(a, inverse).reshape(*lead, n)
    if inverse:
        out /= n
    return np.moveaxis(out, -1, axis)


def ifft(x, axis=-1):
    return fft(x, axis, inverse=True)


@lru_cache(maxsize=None)
def _rfft_post(n, dtype):
    k = np.arange(n // 2 + 1)
    return np.exp(-2j * np.pi * k / n).astype(dtype)


def rfft(x, axis=-1):
    """Non-negative-frequency half (``n//2 + 1`` bins) of the DFT of real input."""
    a = np.moveaxis(np.asarray(x), axis, -1)
    n = a.shape[-1]
    _check_pow2(n, "rfft")
    cdt = _complex_dtype(a.dtype)
    if n == 1:
        return np.moveaxis(a.astype(cdt), -1, axis)
    lead = a.shape[:-1]
    h = n // 2
    z = np.empty(lead + (h,), dtype=cdt)
    z.real = a[..., 0::2]
    z.imag = a[..., 1::2]
    Z = _fft_last(z.reshape(-1, h), False).reshape(*lead, h)
    Zext = np.concatenate([Z, Z[..., :1]], axis=-1)          # Z_k for k = 0..h (Z_h = Z_0)
    Zrev = np.conj(Zext[..., ::-1])                           # conj(Z_{h-k})
    even = 0.5 * (Zext + Zrev)
    odd = -0.5j * (Zext - Zrev)
    out = even + _rfft_post(n, cdt) * odd
    return np.moveaxis(out, -1, axis)


def irfft(X, n, axis=-1):
    """Real inverse of a half spectrum; bins beyond ``X.shape[axis]`` are taken as zero.

    Imaginary parts of the DC and Nyquist bins are ignored.
    """
    _check_pow2(n, "irfft")
    Xm = np.moveaxis(np.asarray(X), axis, -1)
    m = Xm.shape[-1]
    h = n // 2
    if m > h + 1:
        raise ShapeError("irfft (too many modes)", Xm.shape, (n,))
    cdt = _complex_dtype(Xm.dtype)
    lead = Xm.shape[:-1]
    if n == 1:
        return np.moveaxis(Xm.real.astype(cdt(0).real.dtype), -1, axis)
    full = np.zeros(lead + (h + 1,), dtype=cdt)
    full[..., :m] = Xm
    full[..., 0] = full[..., 0].real
    full[..., h] = full[..., h].real
    rev = np.conj(full[..., ::-1])                      # conj(X_{h-k})
    even = 0.5 * (full + rev)
    odd = 0.5 * (full - rev) * np.conj(_rfft_post(n, cdt))
    Z = (even + 1j * odd)[..., :h]
    z = _fft_last(np.ascontiguousarray(Z).reshape(-1, h), True).reshape(*lead, h) / h
    out = np.empty(lead + (n,), dtype=z.real.dtype)
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return np.moveaxis(out, -1, axis)


# Truncated transforms: with only m << n/2 retained bins a dense (n x m) DFT
# product beats the butterfly passes, so spectral layers use these.


@lru_cache(maxsize=None)
def _dft_basis(n, m, dtype):
    ang = 2 * np.pi * np.outer(np.arange(n), np.arange(m)) / n
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


@lru_cache(maxsize=None)
def _idft_basis(n, m, dtype):
    c = np.full(m, 2.0)
    c[0] = 1.0
    if m == n // 2 + 1:
        c[-1] = 1.0
    cos, sin = _dft_basis(n, m, np.float64)
    return (cos * c / n).T.astype(dtype), (sin * c / n).T.astype(dtype)


def _use_dense(n, m):
    return 4 * m <= n


def rfft_modes(x, m, axis=-1):
    """Lowest ``m`` bins of :func:`rfft`."""
    a = np.moveaxis(np.asarray(x), axis, -1)
    n = a.shape[-1]
    if not _use_dense(n, m):
        return np.moveaxis(rfft(a, -1)[..., :m], -1, axis)
    cos, sin = _dft_basis(n, m, a.dtype.type)
    out = np.empty(a.shape[:-1] + (m,), dtype=_complex_dtype(a.dtype))
    out.real = a @ cos
    out.imag = -(a @ sin)
    return np.moveaxis(out, -1, axis)


def irfft_modes(X, n, axis=-1):
    """:func:`irfft` of ``m`` low bins (higher bins zero)."""
    Xm = np.moveaxis(np.asarray(X), axis, -1)
    m = Xm.shape[-1]
    if not _use_dense(n, m):
        return irfft(X, n, axis)
    rdt = Xm.real.dtype
    cos, sin = _idft_basis(n, m, rdt.type)
    out = np.ascontiguousarray(Xm.real) @ cos - np.ascontiguousarray(Xm.imag) @ sin
    return np.moveaxis(out, -1, axis)
