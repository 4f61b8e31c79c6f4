"""Noise-averaged adversarial attacks on small dense-network ensembles."""

from noiseavg._core import *  # noqa: F401,F403
from noiseavg._core import __version__  # noqa: F401
