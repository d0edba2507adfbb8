from .actors import CloudNode, EdgeNode, ModelRegistry, RetrainTrigger, TwinError, model_digest
from .config import TwinConfig, default_soc_learner, default_soh_learner
from .log import TwinEvent, TwinRunLog, check_invariants
from .messages import MessageError, TwinMessage
from .runtime import CycleReport, TwinRunResult, bootstrap, run_twin
from .staleness import StalenessResult, evaluate_staleness, nearest_cycles
