"""
Synthetic chat corpus and simulated devices
===========================================

Generate a toy chat corpus, split it across simulated phones and look at the
training examples each phone ends up holding.
"""

import numpy as np

from fedemoji.corpus import (EmojiInventory, PartitionSpec, build_vocab, partition_clients,
                             tokenize, words_only)
from fedemoji.synth import default_template, synth_corpus

# A template fixes the emoji inventory, their frequencies and the phrases
# that tend to precede each of them. Only 3% of sentences carry an emoji.
tmpl = default_template(num_emoji=10, num_sentences=6000, emoji_sentence_fraction=0.03)
sentences = synth_corpus(tmpl, seed=0)
inventory = EmojiInventory(tmpl.emoji)
print("\n".join(sentences[:5]))
print(sum(any(e in s for e in inventory.emoji) for s in sentences), "emoji sentences")

# The vocabulary keeps the most frequent words; ids 0 and 1 are reserved.
vocab = build_vocab((words_only(tokenize(s, inventory), inventory) for s in sentences), 300)
print(vocab.words[:12])

# Split across 60 devices. Skew pushes each device towards one favourite emoji,
# and unk_keep_fraction downsamples the no-emoji examples at training time.
spec = PartitionSpec(60, (100.0, 20.0), 0.03, skew=0.5, seed=0, unk_keep_fraction=0.2)
clients = partition_clients(sentences, spec, vocab, inventory)
sizes = np.array([len(c.sentences) for c in clients])
print("sentences per device: min %d, mean %.1f, max %d" % (sizes.min(), sizes.mean(), sizes.max()))

c = clients[0]
for ex in c.examples[:6]:
    label = "UNK" if ex.label == inventory.unk_class else inventory.emoji[ex.label]
    print(label, ex.weight, [vocab.words[t] for t in ex.tokens])
print("effective examples on device 0:", c.num_effective, "of", len(c.examples))
