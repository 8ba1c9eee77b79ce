"""
Serving: incremental decoding, triggering and diversification
=============================================================

Type a sentence one word at a time, reuse the recurrent state between
keystrokes, and decide whether and what to suggest.
"""

import numpy as np

from fedemoji.fedsim import FederatedRun, FederationConfig, train_federated
from fedemoji.inference import (Session, TriggerConfig, diversify, fit_diversifier,
                                predict_incremental, should_trigger)
from fedemoji.optim import ClientOptConfig
from fedemoji.recipes import emoji_init, synthetic_task
from fedemoji.synth import default_template

task = synthetic_task(seed=0, unk_keep_fraction=0.1)
cfg = task.model_config(16, 32, 2)
run = FederatedRun(emoji_init(task, cfg, 0), task.train_population, task.eval_population,
                   ClientOptConfig(1.0, 50), FederationConfig(10, 60, 60, 50), "nesterov", 1.0, 0.9)
params = train_federated(run).params

trigger = TriggerConfig(threshold=0.5)
div = fit_diversifier(task.train_examples(), task.inventory.num_emoji, alpha=0.7)
emoji = task.inventory.emoji
print("empirical emoji frequencies:", np.round(div.empirical_probs, 3))

# The same template the task was generated from; borrow one of its trigger
# phrases for a rarer emoji so the diversified ranking has something to do.
tmpl = default_template(10, 200 * 60, 0.03, 0.3, seed=0)
phrase = tmpl.trigger_phrases[4][0]
print("typing:", phrase, "(usually followed by %s)" % emoji[4])

session = Session.fresh(params)
for word in phrase.split():
    probs, session = predict_incremental(params, session, task.vocab.id_of(word))
    fired = should_trigger(probs, trigger)
    top = [(emoji[c], round(s, 3)) for c, s in diversify(probs, div)[:3]]
    print("%-10s p(UNK)=%.3f  show=%s  %s" % (word, probs[-1], fired, top))
