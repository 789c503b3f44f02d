from .metrics import micro_macro_f1
from .model import AugmentSpec, LinearModel, TrainConfig, loss_and_grad, predict, propagate_features, train
from .protocol import MetricsReport, TaskResult, leave_one_domain_out
from .synth import DomainDataset, load_dataset, save_dataset, synthesize_ood_benchmark
