"""
A public module containing type hints for the :obj:`smsdiff` library.
"""
# ruff: noqa: F821

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence, Union

import numpy as np

# Obtain forward references
if TYPE_CHECKING:
    from ._sim import CoilSensitivities

ArrayLike = Union[Sequence[complex], Sequence["ArrayLike"], np.ndarray]
"""
A :obj:`~typing.Union` representing objects that can be coerced into a complex array.

:group: arrays

.. rubric:: Union

- :obj:`~typing.Sequence` [ :obj:`complex` ]: A (nested) sequence of real or complex scalars.
- :obj:`~numpy.ndarray`: A NumPy array of any real or complex dtype. It is converted to `complex128`.

.. rubric:: Alias
"""


SeedLike = Union[int, Sequence[int], np.random.SeedSequence, np.random.Generator, None]
"""
A :obj:`~typing.Union` representing objects that select a random stream.

:group: arrays

.. rubric:: Union

- :obj:`int` or :obj:`~typing.Sequence` [ :obj:`int` ]: Entropy for a new :obj:`numpy.random.Generator`. Sequences
  such as `(seed, slice_idx)` give independent per-slice streams.
- :obj:`~numpy.random.SeedSequence`: A seed sequence, spawned by the caller.
- :obj:`~numpy.random.Generator`: An existing generator. It is used, and advanced, in place.
- `None`: Fresh OS entropy. Results are not reproducible.

Any object with a `standard_normal(size)` method is also accepted and used as the noise source.

.. rubric:: Alias
"""


MapsLike = Union["CoilSensitivities", Sequence["CoilSensitivities"]]
"""
A :obj:`~typing.Union` representing coil sensitivities shared by all slices or given one set per slice.

:group: arrays

.. rubric:: Alias
"""
