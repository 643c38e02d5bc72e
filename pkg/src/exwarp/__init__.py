"""Warp/extrapolate temporal supersampling simulator.

A library plus CLI that renders synthetic ground-truth sequences with
G-buffers, synthesizes intermediate frames by motion-vector warping or
multi-frame extrapolation under a latency model, and trains and evaluates
a Q-network that picks between the two at each decision node to upsample
30 fps streams toward 120 fps.
"""

__version__ = "0.1.0"

from .dataset import Episode, load_dataset, load_episode, save_dataset
from .extrapolate import (ExtrapolatedFrame, LatencyModel, StageLatency,
                          default_latency_model, extrapolate_frame, total_latency)
from .features import (EnvVector, StateVector, TemporalVector, assemble_state,
                       buffer_emd, count_dynamic_objects, env_vector, motion_variance)
from .metrics import QualityPair, aggregate_report, psnr, ssim
from .policies import FixedPolicy, OraclePolicy, TrainedPolicy, make_policy
from .predictor import (Experience, QNetwork, ReplayBuffer, TrainConfig,
                        compute_reward, forward, load_checkpoint, save_checkpoint,
                        select_action, td_loss, train_step)
from .scenegen import (CameraSpec, Frame, GBufferSet, LinearPath, ObjectSpec,
                       PiecewiseLinearPath, SceneSpec, SinusoidalPath, render_episode)
from .scheduler import (DecisionTrace, FpsReport, classify_scenario, run_episode,
                        run_interval)
from .training import SceneFamily, cross_validate, evaluate_policy, train_policy
from .warp import WarpedFrame, hole_histogram, warp_frame
