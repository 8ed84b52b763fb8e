"""Shared fixtures: small trained models reused across test modules."""

import pytest

from eocsearch.oracles import gen_dataset
from eocsearch.training import GuideConfig, TrainConfig, ValueConfig, pretrain_guide, train_value

from helpers import make_case


def diamond_case():
    """4-bus meshed case; small enough that k=1 training solves it outright."""
    return make_case(
        "diamond", 4,
        [(0, 1, 0.1), (1, 2, 0.18), (2, 3, 0.12), (3, 0, 0.2), (1, 3, 0.26)],
        [(0, 1.0, 0.07), (2, 1.0, 0.13)],
    )


DIAMOND_K1_CONFIG = TrainConfig(
    guide=GuideConfig(batch=32, train_size=120, verify_size=10, test_size=30,
                      learning_rate=1e-3, epochs=250, conv_widths=(16, 16), dense_widths=(64,)),
    value=ValueConfig(batch=64, alpha=0.9, epsilon=0.3, explore_n=4, learning_rate=1e-3,
                      memory=3000, lr_decay=0.31622776601683794, lr_step=30,
                      initial_guided_percentage=0.8, percentage_step=0.02,
                      episodes_per_round=80, rounds=60, snapshot_samples=0,
                      conv_widths=(32,), dense_widths=(96, 48)),
    k_max=1,
    seed=8,
    initial_outage_limit=1,
)


@pytest.fixture(scope="session")
def diamond_k1():
    """(case, guide_params, value_params) trained for single-trip search."""
    case = diamond_case()
    dataset = gen_dataset(case, 160, 1, 1, seed=21)
    guide, _, _ = pretrain_guide(case, dataset, DIAMOND_K1_CONFIG)
    value, _ = train_value(case, guide, DIAMOND_K1_CONFIG)
    return case, guide, value
