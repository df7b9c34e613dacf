"""Slice-aware mobility robustness optimization.

Subpackages and modules: :mod:`samro.sim` (network simulator),
:mod:`samro.handover`, :mod:`samro.mdp`, :mod:`samro.env`, :mod:`samro.nn`,
:mod:`samro.actions`, :mod:`samro.td3`, :mod:`samro.energy`,
:mod:`samro.transfer`, :mod:`samro.experiments` and :mod:`samro.cli`.
"""

from .actions import ActionGrid
from .config import ExperimentConfig, load_config
from .energy import EnergyModel
from .env import NetworkEnv
from .experiments import run
from .td3 import Td3Agent

__version__ = "0.1.0"

__all__ = ["ActionGrid", "EnergyModel", "ExperimentConfig", "NetworkEnv", "Td3Agent",
           "load_config", "run", "__version__"]
