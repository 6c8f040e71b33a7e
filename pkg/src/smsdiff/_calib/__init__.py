"""
A subpackage containing kernel and coil-sensitivity calibration from ACS data.
"""

from ._grappa import *
from ._matrix import *
from ._sensitivity import *
from ._spirit import *
