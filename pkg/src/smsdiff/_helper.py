"""
A module containing various helper functions for the library.
"""

from __future__ import annotations

import builtins
import inspect
import sys

import numpy as np

SPHINX_BUILD = hasattr(builtins, "__sphinx_build__")


def _calling_argument_name() -> str:
    """
    Returns the name of the first argument passed to the `verify_*` function two frames up.
    """
    frame = inspect.currentframe()
    frame = inspect.getouterframes(frame)[2]
    context = inspect.getframeinfo(frame[0]).code_context
    if not context:
        return "argument"
    string = context[0].strip()
    args = string[string.find("(") + 1 : -1].split(",")
    return args[0]


def verify_isinstance(argument, types, optional=False):
    """
    Verifies that the argument is an instance of the type(s).
    """
    if optional and argument is None:
        return

    if not isinstance(argument, types):
        argument_name = _calling_argument_name()
        raise TypeError(f"Argument {argument_name!r} must be an instance of {types}, not {type(argument)}.")


def verify_literal(argument, literals):
    if not argument in literals:
        argument_name = _calling_argument_name()
        raise ValueError(f"Argument {argument_name!r} must be one of {literals}, not {argument!r}.")


def verify_ndim(argument: np.ndarray, ndim: int, name: str, at_least: bool = False):
    """
    Verifies the number of dimensions of an array, raising the shape error used throughout the library.
    """
    if at_least:
        if not argument.ndim >= ndim:
            raise ValueError(f"Argument {name!r} must have at least {ndim} dimensions, not shape {argument.shape}.")
    elif not argument.ndim == ndim:
        raise ValueError(f"Argument {name!r} must have {ndim} dimensions, not shape {argument.shape}.")


def verify_same_shape(a: np.ndarray, b: np.ndarray):
    if not a.shape == b.shape:
        raise ValueError(f"Operands must have matching shapes, not {a.shape} and {b.shape}.")


def export(obj):
    """
    Marks an object for exporting into the public API.

    This decorator appends the object's name to the private module's __all__ list. The private module should
    then be imported in smsdiff/__init__.py using from ._private_module import *. It also modifies the object's
    __module__ to "smsdiff".
    """
    # Determine the private module that defined the object
    module = sys.modules[obj.__module__]

    if not SPHINX_BUILD:
        # Set the object's module to the package name. This way the REPL will display the object
        # as smsdiff.obj and not smsdiff._private_module.obj
        obj.__module__ = "smsdiff"

    # Append this object to the private module's "all" list
    public_members = getattr(module, "__all__", [])
    public_members.append(obj.__name__)
    module.__all__ = public_members

    return obj
