"""Feedback cooling of harmonic-oscillator tree networks.

Semi-classical stochastic quadrature dynamics with phase-modulated
parametric kicks on leaf nodes, an analytic baseline controller, a
from-scratch soft actor-critic agent, quantum-jump trajectories for the
single-oscillator quantum regime, and the ensemble statistics used to
report cooling performance.
"""

from .control import (AnalyticController, FixedPhaseController, PhaseKick,
                      RandomController, UndefinedStateError, baseline_policy,
                      optimal_phase)
from .dynamics import (BathParams, FeedbackDrive, NumericalBlowupError,
                       QuadratureState, drift, energies, euler_maruyama_step,
                       feedback_strength, integrate_interval, measure,
                       tau, thermal_state)
from .env import (BatchEnv, ConfigError, EpisodeConfig, EpisodeFinishedError,
                  OscillatorEnv, StepResult)
from .metrics import (IQRSummary, LearningCurve, block_mean_rewards, iqr,
                      time_to_threshold)
from .quantum import (CutoffTooSmallError, FockState, QuantumEpisodeConfig,
                      QuantumOps, TimestepTooLargeError, build_operators,
                      expectations, mcwf_step, quantum_episode)
from .rewards import (InvalidEnergyError, RewardSpec, aggregate,
                      difference_reward, gaussian_reward, inverse_reward)
from .sac import (GaussianPolicy, MLPParams, ReplayBuffer, SACHyper,
                  SACTrainer, TrainingDivergedError, load_checkpoint,
                  sample_action, save_checkpoint, soft_update, train)
from .topology import (InvalidNetworkError, InvalidSequenceError,
                       InvalidSizeError, LeafPartition, OscillatorNetwork,
                       decode_pruefer, encode_pruefer, partition_leaves,
                       sample_frequencies, validate_tree)

__version__ = "0.1.0"
