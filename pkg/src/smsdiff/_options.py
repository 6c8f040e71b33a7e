"""
A module to get or set package-wide options.
"""

from __future__ import annotations

import contextlib
from typing import Any, Dict, Generator

import numba
from typing_extensions import Literal

from ._helper import export, verify_isinstance, verify_literal

# The current options for the package
OPTIONS = {}


@export
def set_options(
    threads: int | None = None,
    progress: bool = False,
    compile: Literal["jit", "python"] = "jit",
):
    """
    Modifies the runtime options for the package.

    Arguments:
        threads: The maximum number of worker threads used by the JIT-compiled kernels and by the score network.
            The default is `None` which leaves the Numba and Torch defaults untouched.
        progress: Indicates whether to display progress bars during training and sampling. The default is `False`.
        compile: Whether the k-space kernel loops run JIT-compiled (`"jit"`, default) or as plain Python (`"python"`).
            The pure-Python path is only practical for small arrays and exists for debugging.

    See Also:
        get_options, options

    Examples:
        .. ipython:: python

            smsdiff.set_options(threads=2)
            smsdiff.get_options()
            @suppress
            smsdiff.set_options()

    Group:
        config
    """
    verify_isinstance(threads, int, optional=True)
    verify_isinstance(progress, bool)
    verify_literal(compile, ["jit", "python"])
    if threads is not None and not threads >= 1:
        raise ValueError(f"Argument 'threads' must be at least 1, not {threads}.")

    if threads is not None:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        import torch

        torch.set_num_threads(threads)

    OPTIONS["threads"] = threads
    OPTIONS["progress"] = progress
    OPTIONS["compile"] = compile


# Update the global options with the default values
set_options()


@export
def get_options() -> Dict[str, Any]:
    """
    Returns the current runtime options for the package.

    Returns:
        A dictionary of current options.

    See Also:
        set_options, options

    Group:
        config
    """
    return OPTIONS.copy()


@export
@contextlib.contextmanager
def options(**kwargs) -> Generator[None, None, None]:
    """
    A context manager to temporarily modify the runtime options for the package.

    See :func:`~smsdiff.set_options` for the full list of available options.

    Returns:
        A context manager for use in a `with` statement. The options are only modified inside the `with` block.

    Examples:
        Run the kernel loops without JIT compilation inside the block only.

        .. ipython:: python

            with smsdiff.options(compile="python"):
                smsdiff.get_options()
            smsdiff.get_options()

    Group:
        config
    """
    current = get_options()
    set_options(**{**current, **kwargs})
    try:
        yield
    finally:
        set_options(**current)
