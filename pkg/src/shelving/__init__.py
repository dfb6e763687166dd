"""Monte Carlo simulation and analysis of electron-shelved qubit state detection."""
from .mc import Label, Protocol, ProtocolConfig, run_batch, simulate_trial

__version__ = "0.1.0"
__all__ = ["Label", "Protocol", "ProtocolConfig", "run_batch", "simulate_trial"]
