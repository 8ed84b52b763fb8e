"""Evaluate a trained value network: scenario accuracy, speed, selectivity.

Trains a short-schedule model first (about a minute), then runs the
scenario-1 protocol against enumeration, times both searchers, and checks
the pickup-current margin over all N-2 initial conditions of one relay.
"""

from eocsearch.cases import toy6
from eocsearch.evaluation import EvalConfig, benchmark, run_scenario, selectivity_check
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
                      episodes_per_round=50, rounds=30, snapshot_samples=0,
                      conv_widths=(32, 32), dense_widths=(128, 64)),
    k_max=2, seed=5, initial_outage_limit=2,
)
print("training a short-schedule model...")
guide, _, _ = pretrain_guide(case, dataset, config)
value, _ = train_value(case, guide, config)

print("\nscenario 1 against global enumeration:")
report = run_scenario(value, case, EvalConfig(scenario=1, n1=150, k=2, seed=99, initial_outage_limit=2))
print(f"  accuracy:    {report.accuracy:.3f}")
for i, e in enumerate(report.config.e_levels):
    print(f"  {e:.0%}-accuracy: {report.e_accuracy(i):.3f}")
print(f"  mean rollout time:     {report.mean_model_time_s * 1e3:.2f} ms")
print(f"  mean enumeration time: {report.mean_oracle_time_s * 1e3:.2f} ms")

print("\nmethod comparison on a shared sample set:")
for row in benchmark(value, case, ("graph-d3qn", "global-enum", "local-enum", "ga"),
                     sample_count=30, k=2, seed=17, local_radius=1, initial_outage_limit=2):
    print(f"  {row.method:12s} accuracy={row.accuracy:.3f} 1%-acc={row.e1_accuracy:.3f} "
          f"mean={row.mean_time_s * 1e3:.2f} ms")

relay = case.relay(2, "from")
sel = selectivity_check(value, case, relay, K=1.2, k=2, outage_limit=2)
print(f"\npickup margin (K=1.2) for relay 2:from over all N-2 conditions: "
      f"{sel.satisfied}/{sel.conditions} satisfied ({sel.fraction:.1%})")
