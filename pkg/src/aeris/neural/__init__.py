"""Gradient-trained forecasters built on :mod:`aeris.numcore`."""
from aeris.neural.layers import (  # noqa: F401
    KanEdge, KANLayer, conv1d_forward, gru_cell_step, kan_edge, kan_edge_eval, lstm_cell_step,
    patch_embed, scaled_dot_attention,
)
from aeris.neural.models import (  # noqa: F401
    ARCHITECTURES, AttentionConfig, ModelSpec, build_model, mlp_parameter_count,
)
from aeris.neural.train import (  # noqa: F401
    NotFittedError, TrainedModel, TrainingError, load_checkpoint, predict, save_checkpoint, train_model,
)
