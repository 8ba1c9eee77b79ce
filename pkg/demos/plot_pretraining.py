"""
Language-model pretraining
==========================

Pretrain a next-word model federatedly, then start emoji training from its
embedding and recurrent layers and compare with a random start.
"""

from fedemoji.fedsim import FederatedRun, FederationConfig, train_federated
from fedemoji.optim import ClientOptConfig
from fedemoji.recipes import (emoji_init, lm_next_word_accuracy, lm_population, pretrain_lm,
                              synthetic_task)

task = synthetic_task(seed=0, unk_keep_fraction=0.1)
cfg = task.model_config(embed_dim=16, hidden_dim=32, num_layers=2)
client = ClientOptConfig(client_lr=1.0, batch_size=50)

lm = pretrain_lm(task, cfg, client, FederationConfig(10, 100, 100, 1, seed=0), seed=0,
                 server_rule="nesterov", server_lr=1.0, momentum=0.9)
held = lm_population(task.eval_population, task.vocab, task.inventory)
print("next-word accuracy@1 on held-out devices: %.3f" % lm_next_word_accuracy(lm, held))

for name, init in (("random", emoji_init(task, cfg, 0)), ("pretrained", emoji_init(task, cfg, 0, lm))):
    run = FederatedRun(init, task.train_population, task.eval_population, client,
                       FederationConfig(10, 30, 5, 50, seed=0), "nesterov", 1.0, 0.9)
    curve = [(ev.round, round(ev.accuracy_at_1, 3)) for ev in train_federated(run).evals]
    print(name, curve)
