"""
Federated averaging on simulated devices
========================================

Train the emoji model with FedAvg and compare two client batch sizes.
Runs in about three minutes. Held-out accuracy is noisy from one evaluation to
the next at this scale; AUC is the steadier signal.
"""

from fedemoji.fedsim import FederatedRun, FederationConfig, train_federated
from fedemoji.optim import ClientOptConfig
from fedemoji.recipes import emoji_init, format_sweep, run_sweep, synthetic_task

task = synthetic_task(seed=0)
cfg = task.model_config(embed_dim=16, hidden_dim=32, num_layers=2)
print(len(task.train_population), "training devices,", len(task.eval_population), "held out")

base = FederatedRun(emoji_init(task, cfg, seed=0), task.train_population, task.eval_population,
                    client=ClientOptConfig(client_lr=3.0, batch_size=50),
                    federation=FederationConfig(devices_per_round=10, total_rounds=100,
                                                eval_every=25, eval_clients=50),
                    server_rule="nesterov", server_lr=1.0, momentum=0.9)

result = train_federated(base)
for ev in result.evals:
    print("round %3d  acc@1 %.3f  auc %.3f" % (ev.round, ev.accuracy_at_1, ev.auc))

# The same run with single-example client batches, side by side.
rows = run_sweep(base, "B", [1, 50])
print(format_sweep("B", rows))
