"""Leader-follower formation maneuver control on complex Laplacians."""

from .control import GainConfig, certify_gain
from .errors import FormationError, ScenarioValidationError
from .graph import FormationGraph, build_graph, is_two_reachable
from .laplacian import LaplacianBlocks, NominalConfig, assemble, localizable
from .scenario_io import bundled_path, load_scenario, parse_scenario, serialize_scenario
from .sim import Scenario, SimTrace, collision_certificate, integrate, validate_scenario

__version__ = "0.1.0"
