"""
A module that contains the k-space kernel dispatchers. The dispatcher classes have snake_case naming because they act
like functions.
"""

from __future__ import annotations

from typing import Callable

import numba
import numpy as np
from numba import complex128, int64

from ._helper import verify_ndim
from ._options import get_options
from ._tensor import as_complex


class Function:
    """
    A function dispatcher for k-space kernel loops. The dispatcher invokes a JIT-compiled or pure-Python function
    depending on the package `compile` option.
    """

    _CACHE = {}  # A cache of compiled functions

    def __call__(self):
        """
        Invokes the function, either JIT-compiled or pure-Python, performing necessary input/output conversion.
        """
        raise NotImplementedError

    _SIGNATURE: numba.types.FunctionType
    """The function's Numba signature."""

    _PARALLEL = False
    """Indicates if parallel processing should be performed."""

    implementation: Callable
    """The function's implementation in pure Python."""

    @property
    def key(self):
        return (str(self.__class__), self._PARALLEL)

    @property
    def function(self):
        """
        Returns a JIT-compiled or pure-Python function based on the package options.
        """
        if get_options()["compile"] == "python":
            return self.python
        return self.jit

    @property
    def jit(self) -> numba.types.FunctionType:
        """
        Returns the JIT-compiled function, compiling it on first use.
        """
        if self.key not in self._CACHE:
            func = numba.jit(self._SIGNATURE.signature, parallel=self._PARALLEL, nopython=True)(self.implementation)
            self._CACHE[self.key] = func

        return self._CACHE[self.key]

    @property
    def python(self) -> Callable:
        """
        Returns the pure-Python function.
        """
        return self.implementation


class correlate_coils(Function):
    r"""
    Function dispatcher for the circular multi-coil k-space correlation

    $$y_o[k_y, k_x] = \sum_c \sum_{m, n} w_{o,c}[m, n]\, x_c[k_y + (m - h_y) d, k_x + n - h_x]$$

    where $h_y$, $h_x$ are the kernel half-sizes and $d$ is the phase-encode tap spacing. Indices wrap around the array
    edges. This is the application rule of GRAPPA-type kernels: the taps of one output sample are its neighbors.
    """

    def __call__(self, src: np.ndarray, weights: np.ndarray, dilation: int = 1) -> np.ndarray:
        src = as_complex(src, "src")
        weights = as_complex(weights, "weights")
        verify_ndim(src, 3, "src")
        verify_ndim(weights, 4, "weights")
        if not weights.shape[1] == src.shape[0]:
            raise ValueError(
                f"The kernel has {weights.shape[1]} source coils, the data has {src.shape[0]} coils (shape {src.shape})."
            )
        if not dilation >= 1:
            raise ValueError(f"Argument 'dilation' must be at least 1, not {dilation}.")

        # Numba signatures only match writable C-order arrays, frozen kernel weights are copied
        src = np.require(src, requirements=["C", "W"])
        weights = np.require(weights, requirements=["C", "W"])

        return self.function(src, weights, np.int64(dilation))

    _SIGNATURE = numba.types.FunctionType(complex128[:, :, :](complex128[:, :, :], complex128[:, :, :, :], int64))
    _PARALLEL = True

    @staticmethod
    def implementation(src, weights, dilation):  # pragma: no cover
        nc, ny, nx = src.shape
        n_out, _, kh, kw = weights.shape
        hh, hw = kh // 2, kw // 2
        out = np.zeros((n_out, ny, nx), dtype=np.complex128)

        for o in numba.prange(n_out):
            for c in range(nc):
                for m in range(kh):
                    oy = (m - hh) * dilation
                    for n in range(kw):
                        w = weights[o, c, m, n]
                        if w == 0:
                            continue
                        ox = n - hw
                        for y in range(ny):
                            yy = (y + oy) % ny
                            for x in range(nx):
                                out[o, y, x] += w * src[c, yy, (x + ox) % nx]

        return out


# Module-level instance, the dispatcher holds no per-call state
correlate = correlate_coils()
