from .env import (
    ACTION_NAMES,
    COOK_TIME,
    FEATURE_NAMES,
    HORIZON,
    ITEM_NAMES,
    N_ACTIONS,
    N_FEATURES,
    OBS_DIM,
    AgentState,
    KitchenState,
    PotState,
    StepOutcome,
    VecKitchen,
    densify,
    observe,
    reset,
    step,
)
from .layout import BUNDLED, Layout, bundled_layout, get_layout, load_layout, load_layout_file

__all__ = [
    "ACTION_NAMES", "COOK_TIME", "FEATURE_NAMES", "HORIZON", "ITEM_NAMES", "N_ACTIONS",
    "N_FEATURES", "OBS_DIM", "AgentState", "KitchenState", "PotState", "StepOutcome",
    "VecKitchen", "densify", "observe", "reset", "step", "BUNDLED", "Layout",
    "bundled_layout", "get_layout", "load_layout", "load_layout_file",
]
