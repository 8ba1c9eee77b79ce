import numpy as np

from fedemoji.corpus import EmojiInventory, sentence_label
from fedemoji.synth import default_template, light_tailed_freqs, synth_corpus


def test_synth_is_deterministic():
    spec = default_template(num_sentences=500)
    a = "\n".join(synth_corpus(spec, 7)).encode("utf-8")
    b = "\n".join(synth_corpus(spec, 7)).encode("utf-8")
    assert a == b
    assert a != "\n".join(synth_corpus(spec, 8)).encode("utf-8")


def test_light_tailed_freqs():
    f = light_tailed_freqs(10, 0.3)
    assert abs(sum(f) - 1) < 1e-12
    assert abs(f[0] - 0.3) < 1e-9
    assert all(a > b for a, b in zip(f, f[1:]))


def test_top_emoji_share_is_realised():
    spec = default_template(num_sentences=12_000, emoji_sentence_fraction=1.0, top_share=0.3)
    inv = EmojiInventory(spec.emoji)
    labels = [sentence_label(s, inv) for s in synth_corpus(spec, 1)]
    labels = [lab for lab in labels if lab is not None]
    assert len(labels) >= 10_000
    share = np.bincount(labels, minlength=inv.num_emoji).max() / len(labels)
    assert abs(share - 0.3) <= 0.02


def test_emoji_sentence_fraction_is_realised():
    spec = default_template(num_sentences=10_000, emoji_sentence_fraction=0.03)
    inv = EmojiInventory(spec.emoji)
    sents = synth_corpus(spec, 2)
    frac = np.mean([sentence_label(s, inv) is not None for s in sents])
    assert abs(frac - 0.03) <= 0.005


def test_emoji_follow_their_trigger_phrases():
    spec = default_template(num_sentences=2000, emoji_sentence_fraction=0.5)
    inv = EmojiInventory(spec.emoji)
    for s in synth_corpus(spec, 3):
        lab = sentence_label(s, inv)
        if lab is None:
            continue
        body = s.rsplit(" ", 1)[0]
        assert any(body.endswith(p) for p in spec.trigger_phrases[lab])
