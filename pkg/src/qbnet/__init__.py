"""Quantum and classical Bayesian/Markov networks over discrete variables.

Graph separation, four flavours of conditional independence, amplitude
factorization, purification and entanglement-zero certificates, checked
numerically on small networks.
"""

from qbnet.config import Settings, get_settings, settings_override
from qbnet.errors import QbnetError
from qbnet.graph import Dag, Independency, ISet, Ug, VariableSpace, build_dag, build_ug

__version__ = "0.1.0"

__all__ = [
    "Dag",
    "ISet",
    "Independency",
    "QbnetError",
    "Settings",
    "Ug",
    "VariableSpace",
    "build_dag",
    "build_ug",
    "get_settings",
    "settings_override",
]
