"""Capacity bounds for Gaussian channels whose state is scaled by fast fading.

The channel is Y = X + c·A∘S + Z with the state S known at the transmitter
and the fading A known at the receiver.
"""

from .bounds import BoundReport, Theorem, evaluate
from .errors import WFFDError
from .fading import FadingDistribution, from_spec

__all__ = ["BoundReport", "FadingDistribution", "Theorem", "WFFDError", "evaluate", "from_spec"]
__version__ = "0.1.0"
