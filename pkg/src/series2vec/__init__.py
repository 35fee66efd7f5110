"""Similarity-preserving self-supervised representation learning for time series."""

from .attention import AttentionParams, batch_attend, init_attention, permutation_equivariance_check
from .data import Dataset, load_csv_dir, load_ts_sktime, make_synthetic, split, write_csv_dir
from .encoder import EncoderConfig, EncoderParams, encode, init_params
from .evaluation import ProbeResult, average_rank, linear_probe, low_label_curve
from .loss import LossBreakdown, representation_similarity, sim_loss, smooth_l1, total_loss
from .numerics import Tensor, backward
from .similarity import PairwiseDistanceMatrix, SoftDtwConfig, euclidean_spectral, pairwise_targets, point_cost, soft_dtw
from .spectral import SpectralSeries, real_dft_magnitude
from .training import ModelState, TrainConfig, adam_step, extract_representations, finetune, pretrain

__version__ = "0.1.0"
