"""Stage one of the training framework: supervised guide pretraining.

Enumeration labels a few hundred random initial conditions with their
extreme-condition trip sets; the guide network learns to predict the
out-of-service vector with a multi-label sigmoid head.
"""

from eocsearch.cases import toy6
from eocsearch.oracles import gen_dataset
from eocsearch.training import GuideConfig, TrainConfig, ValueConfig, pretrain_guide

case = toy6()
print("labeling 600 samples by global enumeration...")
dataset = gen_dataset(case, 600, initial_outage_limit=2, k=2, seed=11)

config = TrainConfig(
    guide=GuideConfig(batch=64, train_size=480, verify_size=40, test_size=80,
                      learning_rate=1e-3, epochs=200, conv_widths=(32, 32), dense_widths=(128,)),
    value=ValueConfig(batch=64, alpha=0.9, epsilon=0.2, explore_n=3, learning_rate=1e-3,
                      memory=1000, lr_decay=0.316, lr_step=50, initial_guided_percentage=0.9,
                      percentage_step=0.03),
    k_max=2,
    seed=3,
    initial_outage_limit=2,
)

def show(epoch, row):
    if epoch % 40 == 0:
        print(f"  epoch {row[0]:4d}: loss {row[1]:.4f}, verify exact-match {row[2]:.3f}")

params, accuracy, history = pretrain_guide(case, dataset, config, progress=show)
print(f"test exact-match accuracy: {accuracy:.3f}")
print("(an exact match requires reproducing the whole out-of-service vector)")
