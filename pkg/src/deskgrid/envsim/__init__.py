"""Simulated desktop environments with a hybrid API-GUI action space."""

from .actions import (Action, GRID_H, GRID_W, api_call, click, done,
                      format_action, key, parse_action, scroll, type_text)
from .apis import ApiDescriptor, PRIMITIVES, app_apis, default_registry
from .candidates import (MAX_CANDIDATES, build_context, context_segments,
                         enumerate_candidates)
from .env import CELL_H, CELL_W, DesktopEnv, StepOutcome, create_env
from .rewards import SUCCESS_ACCURACY, assign_rewards
from .state import (EnvState, build_state, observation_api_names,
                    parse_observation, serialize_observation)
from .suite import DOMAINS, solve_api, solve_gui, task_suite
from .tasks import TaskSpec, dump_tasks, load_tasks
from . import verify

__all__ = [
    "Action", "ApiDescriptor", "CELL_H", "CELL_W", "DOMAINS", "DesktopEnv",
    "EnvState", "GRID_H", "GRID_W", "MAX_CANDIDATES", "PRIMITIVES",
    "StepOutcome", "SUCCESS_ACCURACY", "TaskSpec", "api_call", "app_apis",
    "assign_rewards", "build_context", "build_state", "click",
    "context_segments", "create_env", "default_registry", "done",
    "dump_tasks", "enumerate_candidates", "format_action", "key",
    "load_tasks", "observation_api_names", "parse_action",
    "parse_observation", "scroll", "serialize_observation", "solve_api",
    "solve_gui", "task_suite", "type_text", "verify",
]
