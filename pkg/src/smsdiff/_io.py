"""
A module containing the array interchange format: a JSON header and a raw little-endian binary payload per array.
"""

from __future__ import annotations

import json
import logging
import pathlib

import numpy as np

from ._errors import ArrayFormatError
from ._helper import export

logger = logging.getLogger(__name__)

DTYPES = {
    "complex64": np.dtype("<c8"),
    "float32": np.dtype("<f4"),
}


def array_paths(path: str | pathlib.Path) -> tuple[pathlib.Path, pathlib.Path]:
    """
    Returns the `(NAME.json, NAME.bin)` pair for an array base path. A trailing `.json` or `.bin` is ignored.
    """
    path = pathlib.Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    return path.parent / (path.name + ".json"), path.parent / (path.name + ".bin")


@export
def write_array(path: str | pathlib.Path, array: np.ndarray) -> pathlib.Path:
    """
    Writes an array in the interchange format.

    Arguments:
        path: The base path `NAME`. The files `NAME.json` and `NAME.bin` are written, and parent directories are
            created.
        array: The array. Complex arrays are stored as `complex64` (interleaved real and imaginary parts), real and
            boolean arrays as `float32`.

    Returns:
        The header path.

    Notes:
        The header holds `{"byte_order": "little", "dtype": ..., "order": "row-major", "shape": [...]}` with sorted
        keys, so equal arrays give byte-identical file pairs.

    Examples:
        .. ipython:: python

            import tempfile, pathlib
            tmp = pathlib.Path(tempfile.mkdtemp())
            smsdiff.write_array(tmp / "x", np.arange(4) + 1j)
            smsdiff.read_array(tmp / "x")

    Group:
        io
    """
    array = np.asarray(array)
    if np.iscomplexobj(array):
        dtype_name = "complex64"
    elif array.dtype == np.bool_ or np.issubdtype(array.dtype, np.number):
        dtype_name = "float32"
    else:
        raise TypeError(f"Argument 'array' must be a numeric array, not {array.dtype}.")

    header_path, payload_path = array_paths(path)
    header_path.parent.mkdir(parents=True, exist_ok=True)

    data = np.ascontiguousarray(array, dtype=DTYPES[dtype_name])
    header = {
        "dtype": dtype_name,
        "shape": list(data.shape),
        "order": "row-major",
        "byte_order": "little",
    }
    header_path.write_text(json.dumps(header, sort_keys=True) + "\n")
    payload_path.write_bytes(data.tobytes(order="C"))
    logger.debug("Wrote %s %s to %s", dtype_name, tuple(data.shape), header_path)

    return header_path


@export
def read_array(path: str | pathlib.Path) -> np.ndarray:
    """
    Reads an array written in the interchange format.

    Arguments:
        path: The base path `NAME` (or either file of the pair).

    Returns:
        A `complex64` or `float32` array, value-exact to what was written.

    Raises:
        ArrayFormatError: If a file is missing, the header is malformed or names an unsupported layout, or the
            payload size does not match the header.

    Group:
        io
    """
    header_path, payload_path = array_paths(path)
    for file in (header_path, payload_path):
        if not file.is_file():
            raise ArrayFormatError(file, "file not found")

    try:
        header = json.loads(header_path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ArrayFormatError(header_path, f"header is not valid JSON ({e})") from None
    if not isinstance(header, dict):
        raise ArrayFormatError(header_path, "header is not a JSON object")

    for field in ("dtype", "shape", "order", "byte_order"):
        if field not in header:
            raise ArrayFormatError(header_path, f"missing field {field!r}")
    if header["dtype"] not in DTYPES:
        raise ArrayFormatError(header_path, f"unsupported dtype {header['dtype']!r}")
    if not header["order"] == "row-major":
        raise ArrayFormatError(header_path, f"unsupported order {header['order']!r}")
    if not header["byte_order"] == "little":
        raise ArrayFormatError(header_path, f"unsupported byte order {header['byte_order']!r}")
    shape = header["shape"]
    if not (isinstance(shape, list) and all(isinstance(n, int) and n >= 0 for n in shape)):
        raise ArrayFormatError(header_path, f"invalid shape {shape!r}")

    dtype = DTYPES[header["dtype"]]
    payload = payload_path.read_bytes()
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if not len(payload) == expected:
        raise ArrayFormatError(payload_path, f"payload has {len(payload)} bytes, header implies {expected}")

    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
