from .scenario import (BoundarySet, Circle, ConfigError, ScenarioConfig, SliceSpec,
                       UserGroupSpec, desk_scenario, full_scenario)
from .world import StepResult, World, build_scenario, run_agent_step, tick

__all__ = [
    "BoundarySet", "Circle", "ConfigError", "ScenarioConfig", "SliceSpec", "UserGroupSpec",
    "desk_scenario", "full_scenario", "StepResult", "World", "build_scenario",
    "run_agent_step", "tick",
]
