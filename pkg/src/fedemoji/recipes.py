"""End-to-end recipes: build a task, pretrain, train, sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from fedemoji.corpus import (ClientDataset, EmojiInventory, PartitionSpec, Vocabulary,
                             assign_sentences, build_vocab, lm_example, partition_clients,
                             split_ids, split_population,
                             tokenize, words_only)
from fedemoji.fedsim import FederatedResult, FederatedRun, FederationConfig, train_federated
from fedemoji.model import ModelConfig, Parameters, init_params, transfer_from_lm
from fedemoji.optim import ClientOptConfig

log = logging.getLogger(__name__)


@dataclass
class Task:
    vocab: Vocabulary
    inventory: EmojiInventory
    train_population: list[ClientDataset]
    eval_population: list[ClientDataset]

    def model_config(self, embed_dim: int, hidden_dim: int, num_layers: int) -> ModelConfig:
        return ModelConfig(self.vocab.size, embed_dim, num_layers, hidden_dim,
                           self.inventory.num_classes)

    def train_examples(self):
        return [e for c in self.train_population for e in c.examples]

    def eval_examples(self):
        return [e for c in self.eval_population for e in c.examples]


def build_task(sentences: Sequence[str], inventory: EmojiInventory, partition: PartitionSpec,
               holdout_fraction: float, vocab: Vocabulary | None = None,
               vocab_size: int = 400) -> Task:
    """Partition a corpus into disjoint train/eval client populations.

    The vocabulary, when not supplied, is built from the training clients only.
    """
    if vocab is None:
        groups = assign_sentences(sentences, partition, inventory)
        train_ids, _ = split_ids(len(groups), holdout_fraction, partition.seed)
        vocab = build_vocab((words_only(tokenize(sentences[i], inventory), inventory)
                             for k in train_ids for i in groups[k]), vocab_size)
    clients = partition_clients(sentences, partition, vocab, inventory)
    train, held = split_population(clients, holdout_fraction, partition.seed)
    return Task(vocab, inventory, train, held)


def lm_population(clients: Sequence[ClientDataset], vocab: Vocabulary,
                  inventory: EmojiInventory, max_len: int = 20) -> list[ClientDataset]:
    """Same clients, holding next-word sequences built from every sentence."""
    out = []
    for c in clients:
        seqs = [lm_example(s, vocab, inventory, max_len) for s in c.sentences]
        seqs = [e for e in seqs if e is not None]
        if seqs:
            out.append(ClientDataset(c.client_id, seqs, c.sentences))
    return out


def pretrain_lm(task: Task, config: ModelConfig, client: ClientOptConfig,
                federation: FederationConfig, seed: int, server_rule: str = "sgd",
                server_lr: float = 1.0, momentum: float = 0.0,
                out_dir: Path | None = None) -> Parameters:
    """Federated next-word pretraining on the training clients' text.

    Returns language-model parameters for ``config.as_lm()``.
    """
    pop = lm_population(task.train_population, task.vocab, task.inventory)
    run = FederatedRun(init_params(config.as_lm(), seed), pop, [], client, federation,
                       server_rule, server_lr, momentum, out_dir)
    return train_federated(run).params


def lm_next_word_accuracy(params: Parameters, clients: Sequence[ClientDataset]) -> float:
    from fedemoji.model import lm_forward

    hits = total = 0
    for c in clients:
        for e in c.examples:
            logits = lm_forward(params, e.tokens)
            pred = np.argmax(logits[:-1], axis=1)
            hits += int(np.sum(pred == np.asarray(e.tokens[1:])))
            total += len(e.tokens) - 1
    return hits / total if total else float("nan")


def emoji_init(task: Task, config: ModelConfig, seed: int,
               lm_params: Parameters | None = None) -> Parameters:
    if lm_params is None:
        return init_params(config, seed)
    return transfer_from_lm(lm_params, config, seed)


def parse_server_opt(value: str) -> tuple[str, float, float]:
    """``"sgd:2.0"`` or ``"nesterov:1.0"`` -> (rule, server_lr, momentum)."""
    rule, _, lr = value.partition(":")
    rule = rule.strip().lower()
    lr_val = float(lr) if lr else 1.0
    if rule in ("sgd",):
        return "sgd", lr_val, 0.0
    if rule in ("nesterov", "momentum"):
        return "nesterov", lr_val, 0.9
    raise ValueError(f"unknown server optimizer {value!r}")


@dataclass
class SweepRow:
    value: str
    accuracy_at_1: float
    auc: float
    result: FederatedResult


def run_sweep(base: FederatedRun, axis: str, values: Sequence[str | int | float],
              out_dir: Path | None = None) -> list[SweepRow]:
    """One full federated run per value of ``axis`` (``B``, ``K`` or ``server_opt``)."""
    rows = []
    for value in values:
        run = _with_axis(base, axis, value)
        if out_dir is not None:
            run = replace(run, out_dir=Path(out_dir) / f"{axis}={value}")
        result = train_federated(run)
        final = result.final_eval
        acc = final.accuracy_at_1 if final else float("nan")
        auc = final.auc if final else float("nan")
        rows.append(SweepRow(str(value), acc, auc, result))
        log.info("sweep %s=%s acc@1 %.4f auc %.4f", axis, value, acc, auc)
    return rows


def _with_axis(run: FederatedRun, axis: str, value) -> FederatedRun:
    if axis == "B":
        return replace(run, client=replace(run.client, batch_size=int(value)))
    if axis == "K":
        return replace(run, federation=replace(run.federation, devices_per_round=int(value)))
    if axis == "server_opt":
        rule, lr, mu = parse_server_opt(str(value))
        return replace(run, server_rule=rule, server_lr=lr, momentum=mu)
    raise ValueError(f"unknown sweep axis {axis!r}")


def format_sweep(axis: str, rows: Sequence[SweepRow]) -> str:
    lines = [f"{axis}\taccuracy_at_1\tauc"]
    lines += [f"{r.value}\t{r.accuracy_at_1:.4f}\t{r.auc:.4f}" for r in rows]
    return "\n".join(lines) + "\n"


def synthetic_task(seed: int, num_emoji: int = 10, num_clients: int = 200,
                   sentences_per_client: int = 60, emoji_fraction: float = 0.03,
                   holdout_fraction: float = 0.25, skew: float = 0.0,
                   unk_keep_fraction: float = 1.0, vocab_size: int = 400,
                   top_share: float = 0.3) -> Task:
    """Desk-scale task: synthetic corpus partitioned over simulated devices."""
    from fedemoji.synth import default_template, synth_corpus

    tmpl = default_template(num_emoji, num_clients * sentences_per_client, emoji_fraction,
                            top_share, seed=seed)
    sentences = synth_corpus(tmpl, seed)
    spec = PartitionSpec(num_clients, (float(sentences_per_client), 0.0), emoji_fraction, skew,
                         seed, unk_keep_fraction)
    return build_task(sentences, EmojiInventory(tmpl.emoji), spec, holdout_fraction,
                      vocab_size=vocab_size)
