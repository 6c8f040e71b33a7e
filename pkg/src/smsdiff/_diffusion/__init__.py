"""
A subpackage containing the k-space heat-diffusion machinery: attenuation schedule, score models, predictor and
corrector steps, and the desk-scale score network.
"""

from ._network import *
from ._sampling import *
from ._schedule import *
from ._score import *
