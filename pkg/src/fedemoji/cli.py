"""``fedemoji`` command line: one binary, subcommand style.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path


from fedemoji import corpus as corp
from fedemoji.config import ConfigError, RunConfig, dump_config, load_config, parse_overrides
from fedemoji.corpus import EmojiInventory, PartitionSpec
from fedemoji.fedsim import (FederatedRun, FederationConfig, evaluate_examples,
                             train_central, train_federated)
from fedemoji.inference import (Prediction, TriggerConfig, diversify, fit_diversifier,
                                run_session, should_trigger, top_k)
from fedemoji.model import load_checkpoint, save_checkpoint
from fedemoji.optim import ClientOptConfig
from fedemoji.recipes import (Task, build_task, emoji_init, format_sweep, lm_next_word_accuracy,
                              lm_population, pretrain_lm, run_sweep)
from fedemoji.synth import default_template, synth_corpus

log = logging.getLogger("fedemoji")

COMMANDS = ("synth-corpus", "build-vocab", "pretrain-lm", "train-fed", "train-central",
            "eval", "predict", "sweep")


# -- config -> objects --------------------------------------------------------


def load_sentences(cfg: RunConfig) -> tuple[list[str], EmojiInventory]:
    if cfg.corpus:
        if not cfg.inventory:
            raise ConfigError("inventory: required when corpus is given")
        return corp.read_corpus(_existing(cfg.corpus, "corpus")), \
            corp.read_inventory(_existing(cfg.inventory, "inventory"))
    tmpl = default_template(cfg.num_emoji, cfg.num_sentences, cfg.emoji_fraction,
                            cfg.top_emoji_share, seed=cfg.seed)
    inventory = EmojiInventory(tmpl.emoji)
    if cfg.inventory:
        inventory = corp.read_inventory(_existing(cfg.inventory, "inventory"))
    return synth_corpus(tmpl, cfg.seed), inventory


def _existing(path: str, key: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{key}: file not found: {path}")
    return p


def partition_spec(cfg: RunConfig) -> PartitionSpec:
    return PartitionSpec(cfg.num_clients, (cfg.sentences_per_client, cfg.sentences_dispersion),
                         cfg.emoji_fraction, cfg.skew, cfg.seed, cfg.unk_keep_fraction, cfg.max_len)


def build_run_task(cfg: RunConfig) -> Task:
    sentences, inventory = load_sentences(cfg)
    vocab = corp.read_vocab(_existing(cfg.vocab, "vocab")) if cfg.vocab else None
    return build_task(sentences, inventory, partition_spec(cfg), cfg.holdout_fraction,
                      vocab=vocab, vocab_size=cfg.vocab_size)


def client_config(cfg: RunConfig, lr: float | None = None) -> ClientOptConfig:
    return ClientOptConfig(cfg.client_lr if lr is None else lr, cfg.batch_size, cfg.epochs,
                           cfg.clip_norm)


def federation_config(cfg: RunConfig, rounds: int | None = None) -> FederationConfig:
    return FederationConfig(cfg.devices_per_round, cfg.rounds if rounds is None else rounds,
                            cfg.eval_every, cfg.eval_clients, cfg.seed, cfg.holdout_fraction,
                            cfg.availability)


def federated_run(cfg: RunConfig, task: Task, out: Path | None) -> FederatedRun:
    model_cfg = task.model_config(cfg.embed_dim, cfg.hidden_dim, cfg.num_layers)
    lm = load_checkpoint(_existing(cfg.pretrained, "pretrained")) if cfg.pretrained else None
    momentum = cfg.momentum if cfg.server_opt == "nesterov" else 0.0
    return FederatedRun(emoji_init(task, model_cfg, cfg.seed, lm), task.train_population,
                        task.eval_population, client_config(cfg), federation_config(cfg),
                        cfg.server_opt, cfg.server_lr, momentum, out, cfg.workers)


# -- commands -----------------------------------------------------------------


def cmd_synth_corpus(cfg: RunConfig, out: Path, args) -> None:
    sentences, inventory = load_sentences(cfg.replace(corpus=""))
    corp.write_corpus(out / "corpus.txt", sentences)
    corp.write_inventory(out / "inventory.txt", inventory)
    print(f"wrote {len(sentences)} sentences to {out / 'corpus.txt'}")


def cmd_build_vocab(cfg: RunConfig, out: Path, args) -> None:
    task = build_run_task(cfg.replace(vocab=""))
    corp.write_vocab(out / "vocab.txt", task.vocab)
    print(f"wrote {task.vocab.size} words to {out / 'vocab.txt'}")


def cmd_pretrain_lm(cfg: RunConfig, out: Path, args) -> None:
    task = build_run_task(cfg)
    model_cfg = task.model_config(cfg.embed_dim, cfg.hidden_dim, cfg.num_layers)
    lm = pretrain_lm(task, model_cfg, client_config(cfg, cfg.lm_client_lr),
                     federation_config(cfg, cfg.pretrain_rounds), cfg.seed,
                     cfg.server_opt, cfg.server_lr,
                     cfg.momentum if cfg.server_opt == "nesterov" else 0.0)
    save_checkpoint(out / "lm.ckpt", lm)
    acc = lm_next_word_accuracy(lm, lm_population(task.eval_population, task.vocab, task.inventory))
    print(f"lm next-word accuracy@1 {acc:.4f}; wrote {out / 'lm.ckpt'}")


def cmd_train_fed(cfg: RunConfig, out: Path, args) -> None:
    task = build_run_task(cfg)
    result = train_federated(federated_run(cfg, task, out), resume=args.resume)
    final = result.final_eval
    if final is not None:
        print(f"round {final.round}\taccuracy_at_1 {final.accuracy_at_1:.4f}\tauc {final.auc:.4f}")
    print(f"checkpoints and metrics.tsv in {out}")


def cmd_train_central(cfg: RunConfig, out: Path, args) -> None:
    task = build_run_task(cfg)
    run = federated_run(cfg, task, None)
    result = train_central(task.train_examples(), cfg.central_epochs, run.client, run.init, cfg.seed)
    eval_examples = task.eval_examples()
    lines = []
    for epoch, params in enumerate(result.checkpoints):
        save_checkpoint(out / f"central_{epoch}.ckpt", params)
        if epoch == 0:
            continue
        ev = evaluate_examples(params, eval_examples, epoch)
        lines.append(f"{epoch}\t{result.epoch_losses[epoch - 1]!r}\t{ev.accuracy_at_1!r}\t{ev.auc!r}\n")
    (out / "metrics.tsv").write_text("".join(lines), encoding="utf-8")
    print(lines[-1].rstrip("\n") if lines else "no epochs")


def _checkpoint(cfg: RunConfig):
    if not cfg.checkpoint:
        raise ConfigError("checkpoint: required for this command")
    return load_checkpoint(_existing(cfg.checkpoint, "checkpoint"))


def cmd_eval(cfg: RunConfig, out: Path, args) -> None:
    params = _checkpoint(cfg)
    task = build_run_task(cfg)
    ev = evaluate_examples(params, task.eval_examples())
    print("accuracy_at_1\tauc\tnum_emoji_examples\tnum_total_examples")
    print(f"{ev.accuracy_at_1!r}\t{ev.auc!r}\t{ev.num_emoji_examples}\t{ev.num_total_examples}")


def cmd_predict(cfg: RunConfig, out: Path, args) -> None:
    params = _checkpoint(cfg)
    task = build_run_task(cfg)
    div = fit_diversifier(task.train_examples(), task.inventory.num_emoji, cfg.alpha, cfg.smoothing)
    raw_div = replace(div, alpha=0.0)
    trigger = TriggerConfig(cfg.threshold)
    emoji = task.inventory.emoji
    for line in sys.stdin:
        words = corp.words_only(corp.tokenize(line, task.inventory), task.inventory)
        if not words:
            print("triggered=0\t(empty)")
            continue
        probs, _ = run_session(params, task.vocab.encode(words))
        fired = should_trigger(probs, trigger)
        ranked = top_k(Prediction(tuple(diversify(probs, div)), fired), cfg.top_k).ranked
        raw = dict(diversify(probs, raw_div))
        cells = [f"{emoji[c]} raw={raw[c]:.4f} div={s:.4f}" for c, s in ranked]
        print(f"triggered={int(fired)}\tp_unk={probs[-1]:.4f}\t" + "\t".join(cells))


def cmd_sweep(cfg: RunConfig, out: Path, args) -> None:
    task = build_run_task(cfg)
    values = [v.strip() for v in cfg.sweep_values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep_values: no values given")
    rows = run_sweep(federated_run(cfg, task, None), cfg.sweep_axis, values, out_dir=out)
    table = format_sweep(cfg.sweep_axis, rows)
    (out / "sweep.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)


HANDLERS = {
    "synth-corpus": cmd_synth_corpus,
    "build-vocab": cmd_build_vocab,
    "pretrain-lm": cmd_pretrain_lm,
    "train-fed": cmd_train_fed,
    "train-central": cmd_train_central,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedemoji", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key; repeatable")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "train-fed":
            p.add_argument("--resume", action="store_true",
                           help="continue from the latest checkpoint in --out")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    pairs = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        pairs[key.strip()] = value
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    if args.out is not None:
        pairs["out"] = args.out
    return parse_overrides(pairs, cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        resolved = dump_config(cfg)
        (out / "config.ini").write_text(resolved, encoding="utf-8")
        log.info("resolved config:\n%s", resolved)
        HANDLERS[args.command](cfg, out, args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
