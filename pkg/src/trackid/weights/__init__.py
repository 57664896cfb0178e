"""Affinity model between tracklets and identities."""
from .emission import (EmissionModel, EmissionSample, FitWarning, GaussianBlock, OutlierModel,
                       bb_log_density, fit_emission, fit_outlier)
from .grid import COLS, N_CELLS, ROWS, AntennaGrid, cell_at, cell_col, cell_row, context_vector
from .model import (PickupTrace, Scorer, WeightModel, fit_weight_model, hidden_tracklet_weight,
                    logsumexp, outlier_weight, per_frame_weight, tracklet_weight)
from .visibility import (FrequencyTableVisibility, ProbabilityTableVisibility, VisibilityModel,
                         VisibilityState, fit_visibility)

__all__ = [
    "AntennaGrid", "COLS", "EmissionModel", "EmissionSample", "FitWarning",
    "FrequencyTableVisibility", "GaussianBlock", "N_CELLS", "OutlierModel", "PickupTrace",
    "ProbabilityTableVisibility", "ROWS", "Scorer", "VisibilityModel", "VisibilityState",
    "WeightModel", "bb_log_density", "cell_at", "cell_col", "cell_row", "context_vector",
    "fit_emission", "fit_outlier", "fit_visibility", "fit_weight_model",
    "hidden_tracklet_weight", "logsumexp", "outlier_weight", "per_frame_weight",
    "tracklet_weight",
]
