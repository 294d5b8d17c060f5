"""Command line entry points.

Subcommands cover the full workflow: synth (make a toy corpus),
preprocess (build the turn cache), train, eval, ablate (config grid),
serve (HTTP chat service), and chat (terminal REPL). All of them read
the same INI config; flags override the few per-run knobs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import AppConfig, default_config_text, load_config
from .corpus import (
    Corpus,
    build_matcher,
    build_multiwoz_ontology,
    build_vocab,
    load_cache,
    load_corpus,
    save_cache,
    scan_act_labels,
)
from .errors import ConfigError, DataError, TaskdialError
from .kb import KB
from .model import DialogueModel, ModelConfig
from .synthetic import SyntheticSpec, synthetic_ontology, write_corpus
from .trainer import TrainConfig, format_ablation_table, run_ablation, train


def _ontology_for(data_path: Path, acts_hint=None):
    """Pick the ontology matching the data file.

    A generator manifest next to data.json marks the toy corpus; anything
    else is treated as the published-dataset layout, with act labels
    scanned from the annotations.
    """
    if (data_path.parent / "synthetic.json").exists():
        return synthetic_ontology()
    acts = acts_hint if acts_hint is not None else scan_act_labels(data_path)
    return build_multiwoz_ontology(acts=tuple(acts))


def _load_kb(ontology, db_dir: str) -> KB:
    if not db_dir:
        raise ConfigError("no db_dir configured ([paths] db_dir)")
    path = Path(db_dir)
    if not path.is_dir():
        raise DataError(f"database directory not found: {path}")
    return KB.from_dir(ontology, path)


def _prepare(cfg: AppConfig, refresh: bool = False):
    """Load (corpus, ontology, kb, src_vocab, res_vocab), via the cache.

    The cache is rebuilt when absent, when refresh is set, or when it
    fails its own fingerprint check.
    """
    cache_dir = cfg.paths.cache_dir
    if cache_dir and not refresh and (Path(cache_dir) / "manifest.json").exists():
        corpus, ontology, src_vocab, res_vocab, _ = load_cache(cache_dir)
        kb = _load_kb(ontology, cfg.paths.db_dir)
        return corpus, ontology, kb, src_vocab, res_vocab

    data_path = Path(cfg.paths.data)
    if not data_path.exists():
        raise DataError(f"data file not found: {data_path}")
    ontology = _ontology_for(data_path)
    kb = _load_kb(ontology, cfg.paths.db_dir)
    corpus = load_corpus(data_path, ontology, build_matcher(kb))
    src_vocab, res_vocab = build_vocab(corpus, ontology, min_count=cfg.data.min_count)
    if cache_dir:
        save_cache(cache_dir, corpus, ontology, src_vocab, res_vocab, source_note=str(data_path))
    return corpus, ontology, kb, src_vocab, res_vocab


def _read_id_list(path: str) -> set:
    return {line.strip() for line in Path(path).read_text().splitlines() if line.strip()}


def _split(corpus: Corpus, cfg: AppConfig):
    """Partition dialogues into train/val/test id sets.

    List files win when configured; otherwise every k-th dialogue id (in
    sorted order) goes to validation, which keeps the split stable
    across runs.
    """
    ids = sorted(corpus.dialogues)
    val_ids = set()
    test_ids = set()
    if cfg.paths.val_list:
        val_ids = _read_id_list(cfg.paths.val_list)
    if cfg.paths.test_list:
        test_ids = _read_id_list(cfg.paths.test_list)
    if not val_ids:
        k = max(2, int(round(1.0 / max(cfg.data.val_fraction, 1e-9))))
        val_ids = {d for i, d in enumerate(ids) if i % k == 0 and d not in test_ids}
    train_ids = [d for d in ids if d not in val_ids and d not in test_ids]
    return train_ids, sorted(val_ids & set(ids)), sorted(test_ids & set(ids))


def _turns_for(corpus: Corpus, ids) -> list:
    out = []
    for d in ids:
        out.extend(corpus.dialogues[d])
    return out


def _restore(checkpoint_path: str):
    ckpt = load_checkpoint(checkpoint_path)
    model = ckpt.build_model()
    model.eval_mode()
    return ckpt, model


# -- subcommands --------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_dialogues=args.dialogues,
        rows_per_domain=args.rows,
        multi_domain_every=args.multi_every,
        seed=args.seed,
    )
    bundle = write_corpus(args.out, spec)
    n = len(bundle["data"])
    print(f"wrote {n} dialogues to {args.out}/data.json (db tables: {', '.join(sorted(bundle['tables']))})")
    return 0


def cmd_init(args) -> int:
    path = Path(args.out)
    if path.exists() and not args.force:
        print(f"error: {path} already exists (use --force to overwrite)", file=sys.stderr)
        return 2
    path.write_text(default_config_text())
    print(f"wrote config template to {path}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = load_config(args.config)
    if not cfg.paths.cache_dir:
        raise ConfigError("preprocess needs [paths] cache_dir")
    manifest_path = Path(cfg.paths.cache_dir) / "manifest.json"
    before = manifest_path.read_text() if manifest_path.exists() else None
    corpus, _, _, src_vocab, res_vocab = _prepare(cfg, refresh=True)
    after = manifest_path.read_text()
    status = "unchanged" if before == after else "written"
    print(f"cache {status}: {cfg.paths.cache_dir}")
    print(f"dialogues: {corpus.n_dialogues}  turns: {len(corpus.turns)}  skipped: {len(corpus.skipped)}")
    print(f"source vocab: {len(src_vocab)}  response vocab: {len(res_vocab)}")
    for dialogue_id, reason in corpus.skipped:
        print(f"skipped {dialogue_id}: {reason}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.mode:
        cfg.model.mode = args.mode
        cfg.model.__post_init__()
    corpus, ontology, kb, src_vocab, res_vocab = _prepare(cfg)
    train_ids, val_ids, _ = _split(corpus, cfg)
    train_turns = _turns_for(corpus, train_ids)
    val_turns = _turns_for(corpus, val_ids)
    print(f"training on {len(train_turns)} turns ({len(train_ids)} dialogues), "
          f"validating on {len(val_turns)} ({len(val_ids)})")

    model = DialogueModel(cfg.model, ontology, src_vocab, res_vocab)
    ckpt_path = args.checkpoint or cfg.paths.checkpoint
    log_path = Path(cfg.paths.out_dir) / "train_log.tsv" if cfg.paths.out_dir else None
    if log_path:
        log_path.parent.mkdir(parents=True, exist_ok=True)
    log_file = open(log_path, "w") if log_path else None
    try:
        result = train(model, train_turns, val_turns, kb, cfg.train,
                       checkpoint_path=ckpt_path, log_file=log_file, quiet=False)
    finally:
        if log_file:
            log_file.close()
    print(f"best validation loss {result.best_val_loss:.4f} at epoch {result.best_epoch}")
    if ckpt_path:
        print(f"checkpoint: {result.checkpoint_path}")
    else:
        save_checkpoint("model.ckpt", model)
        print("checkpoint: model.ckpt (no path configured)")
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate_model

    cfg = load_config(args.config)
    ckpt_path = args.checkpoint or cfg.paths.checkpoint
    if not ckpt_path:
        raise ConfigError("no checkpoint given (flag --checkpoint or [paths] checkpoint)")
    _, model = _restore(ckpt_path)
    corpus, _, kb, _, _ = _prepare(cfg)
    train_ids, val_ids, test_ids = _split(corpus, cfg)
    chosen = {"train": train_ids, "val": val_ids, "test": test_ids or val_ids}[args.split]
    turns = _turns_for(corpus, chosen)
    if not turns:
        raise DataError(f"split {args.split!r} selects no dialogues")
    print(f"evaluating {model.cfg.mode} checkpoint on {len(chosen)} dialogues ({len(turns)} turns)")
    report = evaluate_model(model, turns, kb, beam_size=args.beam)
    print(report.format_table())
    if cfg.paths.out_dir:
        out = Path(cfg.paths.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "eval_report.tsv"]
        written[0].write_text(report.to_tsv())
        for name, tsv in report.curves_tsv().items():
            if "\n" not in tsv:
                continue  # header only: this mode has no such curve
            path = out / f"{name}.tsv"
            path.write_text(tsv + "\n")
            written.append(path)
        print("wrote " + ", ".join(str(p) for p in written))
    return 0


def _grid_configs(base: AppConfig, grid: list):
    """Expand grid rows into (label, TrainConfig-or-None, error) triples.

    Each row may override any [model] or [train] key. A row that fails
    to expand carries its error instead of aborting the whole grid.
    """
    train_keys = {"epochs", "batch_size", "peak_lr", "warmup_steps"}
    out = []
    for i, row in enumerate(grid):
        label = str(row.get("label", f"run{i}")) if isinstance(row, dict) else f"run{i}"
        try:
            if not isinstance(row, dict):
                raise ConfigError(f"grid row {i} is not an object")
            overrides = row.get("overrides", {})
            if not isinstance(overrides, dict):
                raise ConfigError("overrides must be an object")
            model_kwargs = base.model.to_dict()
            tc = TrainConfig(model=base.model, epochs=base.train.epochs,
                             batch_size=base.train.batch_size, peak_lr=base.train.peak_lr,
                             warmup_steps=base.train.warmup_steps)
            for key, value in overrides.items():
                if key in train_keys:
                    setattr(tc, key, type(getattr(tc, key))(value))
                elif key in model_kwargs:
                    model_kwargs[key] = value
                else:
                    raise ConfigError(f"unknown key {key!r}")
            tc.model = ModelConfig.from_dict(model_kwargs)
            out.append((label, tc, None))
        except TaskdialError as e:
            out.append((label, None, f"{type(e).__name__}: {e}"))
    return out


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    try:
        grid = json.loads(Path(args.grid).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read grid file {args.grid}: {e}") from e
    if not isinstance(grid, list):
        raise ConfigError("grid file must hold a JSON list of rows")
    expanded = _grid_configs(cfg, grid)
    corpus, ontology, kb, src_vocab, res_vocab = _prepare(cfg)
    train_ids, val_ids, _ = _split(corpus, cfg)
    runnable = [(label, tc) for label, tc, err in expanded if tc is not None]
    run_rows = run_ablation([tc for _, tc in runnable], _turns_for(corpus, train_ids),
                            _turns_for(corpus, val_ids), kb, ontology, src_vocab, res_vocab,
                            labels=[label for label, _ in runnable])
    by_label = {r["label"]: r for r in run_rows}
    rows = []
    for label, tc, err in expanded:
        if tc is None:
            rows.append({"label": label, "error": err})
        else:
            rows.append(by_label[label])
    table = format_ablation_table(rows)
    print(table)
    if cfg.paths.out_dir:
        out = Path(cfg.paths.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.tsv").write_text(table + "\n")
        print(f"wrote {out / 'ablation.tsv'}")
    return 0


def cmd_serve(args) -> int:
    from .service import run_server

    cfg = load_config(args.config)
    ckpt_path = args.checkpoint or cfg.paths.checkpoint
    if not ckpt_path:
        raise ConfigError("no checkpoint given (flag --checkpoint or [paths] checkpoint)")
    _, model = _restore(ckpt_path)
    kb = _load_kb(model.ontology, cfg.paths.db_dir)
    if args.port:
        cfg.service.port = args.port
    run_server(model, kb, cfg.service)
    return 0


def cmd_chat(args) -> int:
    from .inference import Session

    cfg = load_config(args.config)
    ckpt_path = args.checkpoint or cfg.paths.checkpoint
    if not ckpt_path:
        raise ConfigError("no checkpoint given (flag --checkpoint or [paths] checkpoint)")
    _, model = _restore(ckpt_path)
    kb = _load_kb(model.ontology, cfg.paths.db_dir)
    session = Session(model, kb)
    print(f"chat with a {model.cfg.mode} model ({len(model.ontology.domains)} domains); "
          "empty line or 'quit' to stop")
    while True:
        try:
            text = input("usr> ")
        except EOFError:
            print()
            break
        if not text.strip() or text.strip().lower() in ("quit", "exit"):
            break
        record = session.step_turn(text)
        print(f"sys> {record.response}")
        state_bits = [f"{d}.{s}={' '.join(v)}" for d, slots in sorted(record.state.inform.items())
                      for s, v in sorted(slots.items())]
        if state_bits:
            print("     state: " + "; ".join(state_bits))
        acts = [f"{a} ({p:.2f})" for a, p in record.acts if p >= model.cfg.act_threshold]
        if acts:
            print("     acts: " + ", ".join(acts))
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskdial",
        description="Multi-domain task-oriented dialogue: train, evaluate, chat.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a small synthetic corpus with databases")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dialogues", type=int, default=30)
    p.add_argument("--rows", type=int, default=8, help="entity rows per domain")
    p.add_argument("--multi-every", type=int, default=3, help="every k-th dialogue spans two domains")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("init", help="write a commented config template")
    p.add_argument("--out", default="taskdial.ini")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("preprocess", help="build the preprocessed turn cache")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model and keep the best checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", help="override checkpoint output path")
    p.add_argument("--mode", choices=("dst", "c2t", "e2e"), help="override model mode")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"), default="val")
    p.add_argument("--beam", type=int, default=None, help="beam size override")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score a grid of config variants")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True, help="JSON list of {label, overrides} rows")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="run the HTTP chat service")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("chat", help="interactive terminal chat with a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_chat)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TaskdialError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print(file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
