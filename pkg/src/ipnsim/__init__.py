"""Deterministic simulator of a delay-tolerant interplanetary network."""

from .contactplan import AllowedPair, Contact, ContactPlan, Node, compute_contacts
from .ephemeris import Ephemeris, OrbitSpec
from .linkmodel import BandSpec
from .routing import EndpointId, best_route
from .scenario import ScenarioConfig, load_scenario, run_scenario
from .simcore import Simulator

__version__ = "0.1.0"

__all__ = [
    "AllowedPair", "BandSpec", "Contact", "ContactPlan", "EndpointId", "Ephemeris", "Node",
    "OrbitSpec", "ScenarioConfig", "Simulator", "best_route", "compute_contacts", "load_scenario",
    "run_scenario",
]
