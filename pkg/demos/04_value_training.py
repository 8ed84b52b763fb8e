"""Stage two: guided learning and free exploration for the value network.

Early rounds follow the pretrained guide with high probability; the
guided fraction decays every round until the dueling double-Q network
explores on its own. The per-round accuracy probe compares greedy
rollouts against enumeration on a fixed set of conditions.

A short schedule keeps this demo around a minute; the accuracy column is
already well above chance when it ends. tests/test_acceptance.py runs the
full-length schedule.
"""

from eocsearch.cases import toy6
from eocsearch.oracles import gen_dataset
from eocsearch.training import (
    GuideConfig,
    TrainConfig,
    ValueConfig,
    pretrain_guide,
    train_value,
)

case = toy6()
dataset = gen_dataset(case, 320, initial_outage_limit=2, k=2, seed=11)

config = TrainConfig(
    guide=GuideConfig(batch=64, train_size=260, verify_size=20, test_size=40,
                      learning_rate=1e-3, epochs=150, conv_widths=(32, 32), dense_widths=(128,)),
    value=ValueConfig(batch=64, alpha=0.9, epsilon=0.25, explore_n=4, learning_rate=1e-3,
                      memory=8000, lr_decay=0.31622776601683794, lr_step=15,
                      initial_guided_percentage=0.9, percentage_step=0.03,
                      episodes_per_round=50, rounds=30, snapshot_samples=40,
                      conv_widths=(32, 32), dense_widths=(128, 64)),
    k_max=2,
    seed=5,
    initial_outage_limit=2,
)

print("pretraining the guide...")
guide, guide_acc, _ = pretrain_guide(case, dataset, config)
print(f"guide exact-match accuracy: {guide_acc:.3f}\n")

print("value training (round, guided fraction, loss, probe accuracy):")

def show(row):
    if row.round % 3 == 0 or row.round == config.value.rounds - 1:
        print(f"  {row.round:3d}  guided={row.guided_fraction:.2f}  "
              f"loss={row.loss:.5f}  acc={row.accuracy:.3f}")

value, report = train_value(case, guide, config, progress=show)
print(f"\nwall time: {report.wall_time_s:.1f} s")
