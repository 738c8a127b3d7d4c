"""Feedback-based modal mutual search (FMMS) on toy image-text retrieval models."""

from .attacks import Budgets, ImageAttackBudget, TextAttackBudget, run_baseline, substitution_attack
from .augment import ScaleSet, scale_image
from .config import Config, config_from_dict, load_config
from .data import DataConfig, Dataset, generate_dataset
from .evaluation import attack_success_rate, recall_at_k, run_experiment
from .losses import FULL, MATCHED_ONLY, image_set_loss
from .models import ALIGNED, FUSED, I2T, T2I, ModelConfig, TrainConfig, init_model, rank, score, train_contrastive
from .search import AttackOutcome, SearchConfig, fmms_attack

__version__ = "0.1.0"
