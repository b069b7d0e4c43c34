"""Deterministic two-agent driving world: scenes, trajectories, rendering, clips."""

from .clips import (CLIP_FRAMES, ClipPair, clip_offsets, clip_pairs, generate_clips, read_clip,
                    read_dataset, simulation_clips, write_clip, write_dataset)
from .render import (VIEWS, Body, assemble_four_view, box_downsample2, camera_rig, raycast,
                     render_agent_views, render_view, rig_track, yaw_rotation)
from .scene import WEATHERS, Box, Scene, generate_scene
from .storage import (BadMagicError, DataError, DataIOError, DimensionMismatchError,
                      SizeMismatchError, read_svt, write_svt)
from .trajectory import (AgentState, InfeasiblePattern, TrajectoryPattern, in_front_frustum,
                         longest_visible_run, simulate_pair)
