"""
A module containing the complex array container conventions, the centered orthonormal Fourier transforms and the
elementwise algebra shared by every other module.

Images and k-space are `complex128` NumPy arrays whose last two axes are (phase-encode `ny`, readout `nx`). Leading
axes (coils, slices, batches) broadcast through every operation.
"""

from __future__ import annotations

import numpy as np

from ._helper import export, verify_ndim, verify_same_shape
from .typing import ArrayLike, SeedLike


def as_complex(x: ArrayLike, name: str = "x") -> np.ndarray:
    """
    Coerces an array-like object into a `complex128` array.
    """
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.number):
        raise TypeError(f"Argument {name!r} must be numeric, not dtype {x.dtype}.")
    x = x.astype(np.complex128, copy=False)
    return x


###############################################################################
# Centered orthonormal Fourier transforms
###############################################################################


@export
def fft2c(img: ArrayLike) -> np.ndarray:
    r"""
    Computes the centered, orthonormal 2-D DFT over the last two axes.

    Arguments:
        img: The image-domain array with shape `(..., ny, nx)`.

    Returns:
        The k-space array with the DC component at index `(ny // 2, nx // 2)`.

    Notes:
        The transform is $\mathrm{fftshift} \circ \mathrm{FFT} \circ \mathrm{ifftshift}$ with $1/\sqrt{n_y n_x}$
        scaling, so Parseval's theorem holds symmetrically for :func:`fft2c` and :func:`ifft2c`.

    Examples:
        .. ipython:: python

            x = np.zeros((4, 4)); x[2, 2] = 1
            smsdiff.fft2c(x).real

    Group:
        transforms
    """
    img = as_complex(img, "img")
    verify_ndim(img, 2, "img", at_least=True)
    axes = (-2, -1)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(img, axes=axes), axes=axes, norm="ortho"), axes=axes)


@export
def ifft2c(ksp: ArrayLike) -> np.ndarray:
    r"""
    Computes the centered, orthonormal 2-D inverse DFT over the last two axes.

    Arguments:
        ksp: The k-space array with shape `(..., ny, nx)` and DC at the array center.

    Returns:
        The image-domain array. `ifft2c(fft2c(x))` equals `x` to rounding error.

    Group:
        transforms
    """
    ksp = as_complex(ksp, "ksp")
    verify_ndim(ksp, 2, "ksp", at_least=True)
    axes = (-2, -1)
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(ksp, axes=axes), axes=axes, norm="ortho"), axes=axes)


@export
def fftc(x: ArrayLike, axis: int = -2) -> np.ndarray:
    """
    Computes the centered, orthonormal 1-D DFT along one axis.

    Group:
        transforms
    """
    x = as_complex(x)
    return np.fft.fftshift(np.fft.fft(np.fft.ifftshift(x, axes=axis), axis=axis, norm="ortho"), axes=axis)


@export
def ifftc(x: ArrayLike, axis: int = -2) -> np.ndarray:
    """
    Computes the centered, orthonormal 1-D inverse DFT along one axis.

    Group:
        transforms
    """
    x = as_complex(x)
    return np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(x, axes=axis), axis=axis, norm="ortho"), axes=axis)


def centered_frequencies(n: int) -> np.ndarray:
    """
    Returns the integer frequency of each centered k-space index, i.e. `k - n // 2`.
    """
    return np.arange(n) - n // 2


###############################################################################
# Elementwise algebra
###############################################################################


@export
def add(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """
    Adds two complex arrays of matching shape.

    Group:
        algebra
    """
    a, b = as_complex(a, "a"), as_complex(b, "b")
    verify_same_shape(a, b)
    return a + b


@export
def sub(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """
    Subtracts two complex arrays of matching shape.

    Group:
        algebra
    """
    a, b = as_complex(a, "a"), as_complex(b, "b")
    verify_same_shape(a, b)
    return a - b


@export
def hadamard(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """
    Multiplies two complex arrays of matching shape elementwise.

    Group:
        algebra
    """
    a, b = as_complex(a, "a"), as_complex(b, "b")
    verify_same_shape(a, b)
    return a * b


@export
def scale(a: ArrayLike, alpha: complex) -> np.ndarray:
    """
    Multiplies a complex array by a scalar.

    Group:
        algebra
    """
    return as_complex(a, "a") * alpha


@export
def conj(a: ArrayLike) -> np.ndarray:
    """
    Returns the elementwise complex conjugate.

    Group:
        algebra
    """
    return np.conj(as_complex(a, "a"))


@export
def norm2(a: ArrayLike) -> float:
    """
    Returns the $\\ell_2$ norm of the flattened array.

    Group:
        algebra
    """
    return float(np.linalg.norm(as_complex(a, "a").ravel()))


@export
def rss(coil_images: ArrayLike, axis: int = -3) -> np.ndarray:
    """
    Root-sum-of-squares combination along the coil axis.

    Group:
        algebra
    """
    coil_images = as_complex(coil_images, "coil_images")
    return np.sqrt(np.sum(np.abs(coil_images) ** 2, axis=axis))


###############################################################################
# Randomness
###############################################################################


def make_rng(seed: SeedLike):
    """
    Returns the noise source selected by `seed`, see :obj:`smsdiff.typing.SeedLike`.
    """
    if hasattr(seed, "standard_normal"):
        return seed
    return np.random.default_rng(seed)


def complex_normal(rng, shape) -> np.ndarray:
    """
    Draws circular complex white noise with unit expected power, E|n|^2 = 1.
    """
    shape = tuple(shape)
    real = np.asarray(rng.standard_normal(size=shape), dtype=np.float64)
    imag = np.asarray(rng.standard_normal(size=shape), dtype=np.float64)
    return (real + 1j * imag) / np.sqrt(2)
