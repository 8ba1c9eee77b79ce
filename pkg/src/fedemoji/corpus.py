"""Corpus ingestion, vocabularies, example extraction and client partitioning.

Sentences are plain strings. Emoji are recognised by membership in an
:class:`EmojiInventory`; everything else is a word.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fedemoji.seeding import TAG_DOWNWEIGHT, TAG_PARTITION, TAG_TRUNCATE, rng_for

OOV = "<oov>"
PAD = "<pad>"
OOV_ID = 0
PAD_ID = 1
DEFAULT_MAX_LEN = 20

_TRAILING_PUNCT = string.punctuation


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]

    def __post_init__(self):
        if self.words[:2] != (OOV, PAD):
            raise ValueError("vocabulary must start with OOV and PAD markers")
        if len(set(self.words)) != len(self.words):
            raise ValueError("duplicate vocabulary entries")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    @property
    def size(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        return self._index.get(word, OOV_ID)

    def encode(self, words: Iterable[str]) -> list[int]:
        return [self.id_of(w) for w in words]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index


@dataclass(frozen=True)
class EmojiInventory:
    emoji: tuple[str, ...]

    def __post_init__(self):
        if not self.emoji:
            raise ValueError("inventory needs at least one emoji")
        if len(set(self.emoji)) != len(self.emoji):
            raise ValueError("duplicate emoji in inventory")
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(self.emoji)})

    @property
    def num_emoji(self) -> int:
        return len(self.emoji)

    @property
    def unk_class(self) -> int:
        return len(self.emoji)

    @property
    def num_classes(self) -> int:
        return len(self.emoji) + 1

    def class_of(self, token: str) -> int | None:
        return self._index.get(token)

    def __contains__(self, token):
        return token in self._index


@dataclass(frozen=True)
class Example:
    tokens: tuple[int, ...]
    label: int
    weight: float = 1.0

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("example has no tokens")
        if self.weight < 0:
            raise ValueError("negative example weight")


@dataclass
class ClientDataset:
    client_id: int
    examples: list[Example]
    sentences: list[str] = field(default_factory=list)

    @property
    def num_effective(self) -> int:
        return sum(1 for e in self.examples if e.weight > 0)

    def __len__(self):
        return len(self.examples)


@dataclass(frozen=True)
class PartitionSpec:
    """How sentences are spread over simulated devices.

    ``skew`` in [0, 1] mixes each client's emoji-label distribution between
    the global one (0) and a single preferred emoji (1).
    """

    num_clients: int
    sentences_per_client: tuple[float, float] = (100.0, 0.0)
    emoji_sentence_fraction: float = 0.03
    skew: float = 0.0
    seed: int = 0
    unk_keep_fraction: float = 1.0
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        mean, disp = self.sentences_per_client
        if mean <= 0 or disp < 0:
            raise ValueError("sentences_per_client needs mean > 0 and dispersion >= 0")
        if not 0.0 <= self.skew <= 1.0:
            raise ValueError("skew must lie in [0, 1]")
        if not 0.0 < self.unk_keep_fraction <= 1.0:
            raise ValueError("unk_keep_fraction must lie in (0, 1]")


# -- tokenization -----------------------------------------------------------


def tokenize(sentence: str, inventory: EmojiInventory | None = None) -> list[str]:
    """Lowercase, split on whitespace, strip trailing punctuation from words."""
    out = []
    for raw in sentence.split():
        if inventory is not None and raw in inventory:
            out.append(raw)
            continue
        word = raw.lower().rstrip(_TRAILING_PUNCT)
        if word:
            out.append(word)
    return out


def words_only(tokens: Sequence[str], inventory: EmojiInventory) -> list[str]:
    return [t for t in tokens if t not in inventory]


def sentence_label(sentence: str, inventory: EmojiInventory) -> int | None:
    """Class of the first inventory emoji in ``sentence``, or None."""
    for tok in sentence.split():
        cls = inventory.class_of(tok)
        if cls is not None:
            return cls
    return None


# -- vocabulary ---------------------------------------------------------------


def build_vocab(sentences: Iterable[Sequence[str]], target_size: int) -> Vocabulary:
    if target_size < 3:
        raise ValueError("target_size must leave room for OOV and PAD")
    counts: Counter[str] = Counter()
    for sent in sentences:
        counts.update(w for w in sent if w not in (OOV, PAD))
    if not counts:
        raise ValueError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [w for w, _ in ranked[: target_size - 2]]
    return Vocabulary((OOV, PAD, *keep))


# -- examples -----------------------------------------------------------------


def extract_examples(
    sentence: str | Sequence[str],
    vocab: Vocabulary,
    inventory: EmojiInventory,
    rng: np.random.Generator,
    max_len: int = DEFAULT_MAX_LEN,
) -> list[Example]:
    """Turn one sentence into (context -> emoji or UNK) examples.

    Every inventory emoji preceded by at least one word yields an example whose
    context is all words before it (most recent ``max_len`` kept). A sentence
    without inventory emoji yields a single UNK example truncated to a random
    length in ``[1, number of words]``.
    """
    tokens = tokenize(sentence, inventory) if isinstance(sentence, str) else list(sentence)
    if not tokens:
        raise ValueError("empty sentence")
    words: list[int] = []
    found_emoji = False
    out = []
    for tok in tokens:
        cls = inventory.class_of(tok)
        if cls is None:
            words.append(vocab.id_of(tok))
            continue
        found_emoji = True
        if words:
            out.append(Example(tuple(words[-max_len:]), cls, 1.0))
    if found_emoji or not words:
        return out
    cut = int(rng.integers(1, len(words) + 1))
    return [Example(tuple(words[:cut][-max_len:]), inventory.unk_class, 1.0)]


def lm_example(sentence: str, vocab: Vocabulary, inventory: EmojiInventory,
               max_len: int = DEFAULT_MAX_LEN) -> Example | None:
    """Next-word training sequence (words only); None when shorter than 2."""
    ids = vocab.encode(words_only(tokenize(sentence, inventory), inventory))[: max_len + 1]
    if len(ids) < 2:
        return None
    return Example(tuple(ids), 0, 1.0)


def downweight_unk(examples: Sequence[Example], keep_fraction: float,
                   rng: np.random.Generator, unk_class: int) -> list[Example]:
    """Zero the weight of each UNK example with probability ``1 - keep_fraction``."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    out = []
    for ex in examples:
        if ex.label == unk_class:
            # one draw per UNK example keeps streams aligned across keep fractions
            keep = rng.random() < keep_fraction
            out.append(replace(ex, weight=1.0 if keep else 0.0))
        else:
            out.append(ex)
    return out


# -- partitioning -------------------------------------------------------------


def _largest_remainder(raw: np.ndarray, total: int, minimum: int = 0) -> np.ndarray:
    """Integer allocation of ``total`` proportional to ``raw``, each >= minimum."""
    n = len(raw)
    base = np.full(n, minimum, dtype=np.int64)
    rest = total - minimum * n
    if rest <= 0:
        return base
    share = raw / raw.sum() * rest
    alloc = np.floor(share).astype(np.int64)
    short = rest - alloc.sum()
    order = np.argsort(-(share - alloc), kind="stable")
    alloc[order[:short]] += 1
    return base + alloc


def client_sizes(num_sentences: int, spec: PartitionSpec) -> np.ndarray:
    """Per-client sentence counts summing exactly to ``num_sentences``."""
    if num_sentences < spec.num_clients:
        raise ValueError("population underfilled")
    mean, disp = spec.sentences_per_client
    rng = rng_for(spec.seed, TAG_PARTITION, 0)
    if disp == 0:
        raw = np.full(spec.num_clients, 1.0)
    else:
        raw = np.clip(rng.normal(mean, disp, size=spec.num_clients), 1.0, None)
    return _largest_remainder(raw, num_sentences, minimum=1)


def assign_sentences(sentences: Sequence[str], spec: PartitionSpec,
                     inventory: EmojiInventory) -> list[list[int]]:
    """Sentence indices per client; every index appears exactly once.

    Emoji sentences are handed out round-robin; each slot draws a label from
    the client's mixture of the global label distribution and its preferred
    emoji. Plain sentences fill the remaining capacity.
    """
    sizes = client_sizes(len(sentences), spec)
    rng = rng_for(spec.seed, TAG_PARTITION, 1)
    n_emoji = inventory.num_emoji

    labels = [sentence_label(s, inventory) for s in sentences]
    order = rng.permutation(len(sentences))
    pools: list[list[int]] = [[] for _ in range(n_emoji)]
    plain: list[int] = []
    for idx in order:
        lab = labels[idx]
        (plain if lab is None else pools[lab]).append(int(idx))
    total_emoji = sum(len(p) for p in pools)

    emoji_slots = np.minimum(_largest_remainder(sizes.astype(float), total_emoji), sizes)
    # minimum(...) can strand a few emoji sentences; hand them to clients with room
    stranded = total_emoji - int(emoji_slots.sum())
    for k in np.argsort(-(sizes - emoji_slots), kind="stable"):
        if stranded <= 0:
            break
        room = min(int(sizes[k] - emoji_slots[k]), stranded)
        emoji_slots[k] += room
        stranded -= room

    glob = np.array([len(p) for p in pools], dtype=float)
    glob = glob / glob.sum() if glob.sum() > 0 else np.full(n_emoji, 1.0 / n_emoji)
    preferred = rng.choice(n_emoji, size=spec.num_clients, p=glob)
    mix = (1.0 - spec.skew) * glob[None, :] + spec.skew * np.eye(n_emoji)[preferred]

    assigned: list[list[int]] = [[] for _ in range(spec.num_clients)]
    cursor = [0] * n_emoji
    remaining = np.array([len(p) for p in pools])
    for r in range(int(emoji_slots.max(initial=0))):
        for k in range(spec.num_clients):
            if r >= emoji_slots[k]:
                continue
            lab = int(rng.choice(n_emoji, p=mix[k]))
            if remaining[lab] == 0:
                lab = int(np.argmax(remaining))
            assigned[k].append(pools[lab][cursor[lab]])
            cursor[lab] += 1
            remaining[lab] -= 1

    pos = 0
    for k in range(spec.num_clients):
        need = int(sizes[k]) - len(assigned[k])
        assigned[k].extend(plain[pos:pos + need])
        pos += need
        assigned[k].sort()
    return assigned


def partition_clients(sentences: Sequence[str], spec: PartitionSpec, vocab: Vocabulary,
                      inventory: EmojiInventory) -> list[ClientDataset]:
    """Spread sentences over ``spec.num_clients`` non-IID client caches.

    Truncation and UNK down-weighting draw from per-client streams, so a
    client's examples depend only on (seed, client id, its sentences).
    """
    clients = []
    for k, idxs in enumerate(assign_sentences(sentences, spec, inventory)):
        sents = [sentences[i] for i in idxs]
        trunc_rng = rng_for(spec.seed, TAG_TRUNCATE, k)
        examples = []
        for s in sents:
            if s.strip():
                examples.extend(extract_examples(s, vocab, inventory, trunc_rng, spec.max_len))
        if spec.unk_keep_fraction < 1.0:
            examples = downweight_unk(examples, spec.unk_keep_fraction,
                                      rng_for(spec.seed, TAG_DOWNWEIGHT, k), inventory.unk_class)
        clients.append(ClientDataset(k, examples, sents))
    return clients


def split_ids(num_clients: int, holdout_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Disjoint (train, eval) client index lists, each in ascending order."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in (0, 1)")
    n_eval = max(1, int(round(holdout_fraction * num_clients)))
    if n_eval >= num_clients:
        raise ValueError("population too small to hold out eval clients")
    perm = rng_for(seed, TAG_PARTITION, 2).permutation(num_clients)
    held = sorted(int(i) for i in perm[:n_eval])
    held_set = set(held)
    return [i for i in range(num_clients) if i not in held_set], held


def split_population(clients: Sequence[ClientDataset], holdout_fraction: float,
                     seed: int) -> tuple[list[ClientDataset], list[ClientDataset]]:
    """Disjoint (train, eval) client populations."""
    train, held = split_ids(len(clients), holdout_fraction, seed)
    return [clients[i] for i in train], [clients[i] for i in held]


# -- file formats -------------------------------------------------------------


def read_lines(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [line for line in text.splitlines()]


def read_corpus(path: str | Path) -> list[str]:
    return [s for s in read_lines(path) if s.strip()]


def write_corpus(path: str | Path, sentences: Iterable[str]) -> None:
    Path(path).write_text("".join(s + "\n" for s in sentences), encoding="utf-8")


def read_inventory(path: str | Path) -> EmojiInventory:
    return EmojiInventory(tuple(s.strip() for s in read_lines(path) if s.strip()))


def write_inventory(path: str | Path, inventory: EmojiInventory) -> None:
    write_corpus(path, inventory.emoji)


def read_vocab(path: str | Path) -> Vocabulary:
    return Vocabulary(tuple(read_lines(path)))


def write_vocab(path: str | Path, vocab: Vocabulary) -> None:
    write_corpus(path, vocab.words)
