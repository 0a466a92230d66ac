"""Boltzmann-machine defences against adversarial attacks: library and CLI."""

__version__ = "0.1.0"

from .attacks import AttackResult, AttackSpec, CwConfig, carlini_wagner_l2, deepfool, fgsm
from .bench import BenchmarkConfig, BenchmarkReport, CellResult, emit_report, run_matrix
from .classifiers import (
    BaselineConfig,
    BaselineNet,
    FreeEnergyClassifier,
    accuracy,
    baseline_train,
    predict,
)
from .data import (
    Dataset,
    Image,
    VisibleVector,
    batches,
    concat_label,
    downscale_binarize,
    load_dataset,
    load_idx,
    save_dataset,
    visible_matrix,
    write_idx,
)
from .defences import DefenceSpec, adversarial_training, apply_defence, feature_squeeze, spatial_smooth
from .rbm import GradientEstimate, Moments, Rbm, init_rbm, load_rbm, loss_gradient, nll_loss, partition_function, save_rbm
from .samplers import (
    AnnealerConfig,
    ChainState,
    IsingModel,
    SamplerSpec,
    annealer_sample,
    cd_k,
    exact_model_moments,
    from_ising,
    gibbs_step,
    pcd_step,
    spin_reversal_transform,
    to_ising,
)
from .trainer import AdamState, TrainConfig, TrainHistory, adam_update, train
