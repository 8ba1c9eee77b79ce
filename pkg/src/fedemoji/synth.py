"""Synthetic keyboard-style corpus with topic-linked emoji.

Each emoji owns a topic: a pool of topic words and a few trigger phrases.
Emoji sentences are topical filler followed by one of the topic's trigger
phrases and the emoji. Plain sentences are filler only, occasionally with a
trigger phrase buried mid-sentence. Filler mixes topic words with common
words drawn from a Zipf law, so a language model learns topic structure
from plain text alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedemoji.seeding import TAG_SYNTH, rng_for

EMOJI = (
    "😂", "❤️", "😍", "🎉", "😴", "☀️", "😘", "💔", "😉", "😕",
    "🔥", "😭", "👍", "🙏", "😊", "😎", "🤔", "😡", "🎂", "🍕",
)

_SEED_TRIGGERS = {
    "😂": ["that is hilarious", "lol you are so funny"],
    "❤️": ["love you so much", "love you"],
    "😍": ["so beautiful", "look at that"],
    "🎉": ["congrats to you", "congrats"],
    "😴": ["ended up falling asleep", "so tired"],
    "☀️": ["good morning sunshine", "good morning"],
    "😘": ["miss you xx", "kisses"],
    "💔": ["so sorry sweetie", "my heart hurts"],
    "😉": ["take it easy", "you know what i mean"],
    "😕": ["not sure what happened", "that is weird"],
    "🔥": ["this party is lit", "on fire"],
    "😭": ["i cannot stop crying", "so sad"],
}

COMMON_WORDS = tuple(
    "the to i you and a it is so that in my me of for on this just we be have "
    "at but not with are was do what can get all like out up if your they "
    "go now will know no one about how day when time did there then back "
    "see here want today really well still going think got need some make "
    "he she her him them too good its from by more right oh yeah much come "
    "say way us let our who why off over last tell feel very".split()
)

_SYLLABLES = ("ka ri mo te lu na si po ve da mi ro fa ne zu bi lo ta ge pu "
              "sha vo ki du ma le ti ra so nu").split()


def _pseudo_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < count:
        w = "".join(rng.choice(_SYLLABLES, size=int(rng.integers(2, 4))))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


@dataclass(frozen=True)
class TemplateSpec:
    emoji: tuple[str, ...]
    emoji_freqs: tuple[float, ...]
    topic_words: tuple[tuple[str, ...], ...]
    trigger_phrases: tuple[tuple[str, ...], ...]
    common_words: tuple[str, ...] = COMMON_WORDS
    num_sentences: int = 10_000
    emoji_sentence_fraction: float = 0.03
    filler_length: tuple[int, int] = (2, 8)
    topic_word_prob: float = 0.4
    decoy_prob: float = 0.1
    zipf_exponent: float = 1.0

    def __post_init__(self):
        n = len(self.emoji)
        if not (len(self.emoji_freqs) == len(self.topic_words) == len(self.trigger_phrases) == n):
            raise ValueError("per-emoji fields must all have one entry per emoji")
        if not 0.0 <= self.emoji_sentence_fraction <= 1.0:
            raise ValueError("emoji_sentence_fraction must lie in [0, 1]")
        if any(f < 0 for f in self.emoji_freqs) or sum(self.emoji_freqs) <= 0:
            raise ValueError("emoji_freqs must be non-negative with positive sum")


def light_tailed_freqs(num_emoji: int, top_share: float = 0.3) -> tuple[float, ...]:
    """Geometric emoji frequencies whose most common class has ``top_share``.

    Mimics the head-heavy usage curve of keyboard emoji.
    """
    if num_emoji == 1:
        return (1.0,)

    def share(r):
        return 1.0 / sum(r ** k for k in range(num_emoji))

    lo, hi = 1e-9, 1.0
    if share(hi) > top_share:
        raise ValueError("top_share below uniform share")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if share(mid) > top_share:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    raw = [r ** k for k in range(num_emoji)]
    s = sum(raw)
    return tuple(x / s for x in raw)


def default_template(num_emoji: int = 10, num_sentences: int = 10_000,
                     emoji_sentence_fraction: float = 0.03, top_share: float = 0.3,
                     topic_size: int = 8, seed: int = 0, **overrides) -> TemplateSpec:
    """Ready-made template: real emoji with hand-written triggers where available."""
    rng = rng_for(seed, TAG_SYNTH, 0)
    emoji = list(EMOJI[:num_emoji])
    while len(emoji) < num_emoji:
        emoji.append(chr(0x1F680 + len(emoji)))
    taken = set(COMMON_WORDS)
    for phrases in _SEED_TRIGGERS.values():
        for p in phrases:
            taken.update(p.split())
    topics, triggers = [], []
    for e in emoji:
        topics.append(tuple(_pseudo_words(rng, topic_size, taken)))
        if e in _SEED_TRIGGERS:
            triggers.append(tuple(_SEED_TRIGGERS[e]))
        else:
            a, b, c = _pseudo_words(rng, 3, taken)
            triggers.append((f"{a} {b}", f"so {c}"))
    return TemplateSpec(
        emoji=tuple(emoji),
        emoji_freqs=light_tailed_freqs(num_emoji, top_share),
        topic_words=tuple(topics),
        trigger_phrases=tuple(triggers),
        num_sentences=num_sentences,
        emoji_sentence_fraction=emoji_sentence_fraction,
        **overrides,
    )


def synth_corpus(spec: TemplateSpec, seed: int) -> list[str]:
    """Deterministic corpus of ``spec.num_sentences`` sentences."""
    rng = rng_for(seed, TAG_SYNTH, 1)
    n_emoji = int(round(spec.emoji_sentence_fraction * spec.num_sentences))
    has_emoji = np.zeros(spec.num_sentences, dtype=bool)
    has_emoji[rng.choice(spec.num_sentences, size=n_emoji, replace=False)] = True

    freqs = np.asarray(spec.emoji_freqs, dtype=float)
    freqs = freqs / freqs.sum()
    ranks = np.arange(1, len(spec.common_words) + 1, dtype=float)
    common_p = ranks ** -spec.zipf_exponent
    common_p /= common_p.sum()
    lo, hi = spec.filler_length

    def filler(topic: int, n: int) -> list[str]:
        words = []
        topical = rng.random(n) < spec.topic_word_prob
        for use_topic in topical:
            if use_topic:
                pool = spec.topic_words[topic]
                words.append(pool[int(rng.integers(len(pool)))])
            else:
                words.append(spec.common_words[int(rng.choice(len(common_p), p=common_p))])
        return words

    def phrase(topic: int) -> list[str]:
        options = spec.trigger_phrases[topic]
        return options[int(rng.integers(len(options)))].split()

    out = []
    for emoji_here in has_emoji:
        topic = int(rng.choice(len(freqs), p=freqs))
        words = filler(topic, int(rng.integers(lo, hi + 1)))
        if emoji_here:
            words += phrase(topic) + [spec.emoji[topic]]
        elif rng.random() < spec.decoy_prob:
            cut = int(rng.integers(0, len(words) + 1))
            words = words[:cut] + phrase(topic) + filler(topic, int(rng.integers(1, 4))) + words[cut:]
        out.append(" ".join(words))
    return out
