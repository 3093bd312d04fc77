"""Multi-paradigm transferable adversarial attacks on multimodal models."""

from ._core import *  # noqa: F401,F403
from ._core import (
    AttackConfig,
    EncoderSuite,
    ParadigmEncoder,
    run_attack,
    run_batch,
)

__version__ = "0.1.0"
