"""CPU differentiable Gaussian splatting with reconstruction-aware pruning
and 3D difference-of-Gaussians primitives."""

from .camera import Camera, ring_cameras
from .config import TrainConfig, desk_preset, load_config
from .dog_control import activate_dog, degrade_step
from .losses import MetricsReport, loss, psnr, ssim
from .pruning import (ScoreVector, accumulate_scores, combine_sps,
                      opacity_rank_prune, rank_and_prune)
from .rasterizer import (GradientBundle, RenderResult, backward, render_naive,
                         render_tiled, render_with_capture)
from .scene import (SceneModel, build_covariance, build_pseudo_covariance,
                    eval_color, pseudo_opacity)
from .scheduler import Action, Phase, SchedulerState
from .spectral import (FrequencyWeightGrid, fft2, ifft2, radial_weights,
                       spectral_score_direct, spectral_score_filtered)
from .trainer import (TrainResult, evaluate, full_train_l1,
                      make_synthetic_scene, train)

__version__ = "0.1.0"
