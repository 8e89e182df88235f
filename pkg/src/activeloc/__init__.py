"""Active localization with soft-resampling particle filters on occupancy grids."""

from .worldmap import CellCode, OccupancyGrid, Pose, load_map, save_map, wrap_angle
from .pfilter import FilterConfig, ParticleSet, estimate_pose, pose_loss, soft_resample
from .simulator import Action, SimConfig
from .tasks import TaskKind, TaskSpec

__version__ = "0.1.0"
