import time

import pytest

from lsdgnn.datasets import SynthConfig, generate_synthetic
from lsdgnn.harness.config import RunConfig
from lsdgnn.harness.training import eval_loss, train

OVERFIT_DATA = SynthConfig(num_conversations=20, speakers=(2, 3), utterances=(6, 10), num_classes=6,
                           separation=4.0, noise_std=1.0, modality_dims={"text": 16}, seed=0)
OVERFIT_RUN = {
    "model": {"hidden_dim": 16, "num_layers": 4, "omega_long": 5, "dropout": 0.0},
    "optimizer": {"kind": "adam", "learning_rate": 1e-3},
    "curriculum": {"enabled": False},
    "epochs": 300,
    "batch_size": 4,
    "seed": 0,
}


@pytest.fixture(scope="session")
def overfit_data():
    return generate_synthetic(OVERFIT_DATA)


@pytest.fixture(scope="session")
def overfit_run(overfit_data):
    """The 300-epoch overfit fixture, trained once per session."""
    start = time.perf_counter()
    result = train(RunConfig.from_dict(OVERFIT_RUN), overfit_data)
    elapsed = time.perf_counter() - start
    final = eval_loss(result.params, result.model_config, overfit_data.conversations)
    return result, elapsed, final
