from .linear import (
    LinearProbe,
    ProbeReport,
    fit_action_probe,
    fit_probe,
    fit_reward_probe,
    fit_reward_regression,
    focal_loss,
    reward_probe_loss,
)
from .metrics import binary_f1, multiclass_weighted_f1
from .predictive import prediction_features, probe_predictions
