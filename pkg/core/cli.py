"""
Feedback Classifier - Command Line
==================================
Entry point tying the pipeline together.

Verbs:
    train       fit a model and write a model directory
    evaluate    score a model directory against a test TSV
    predict     tag sentences from --text or --file
    gen-data    write a synthetic train/dev/test corpus
    grad-check  compare backward passes against finite differences

Exit codes:
    0  success
    1  malformed data, unreadable checkpoint or file system error
    2  configuration error or vocabulary mismatch
    3  numerical divergence or failed gradient check

Usage:
    python -m core.cli train --preset en --train train.tsv --dev dev.tsv --out models/en
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .checkpoint import FINAL_CHECKPOINT, BEST_CHECKPOINT, HISTORY_FILE, ModelManifest, load_model_dir, write_model_dir
from .config import load_config
from .corpus import (
    build_vocabulary, compute_max_len, encode_split, generate_synthetic, load_embeddings,
    load_tsv, pad_encode, random_embedding_table, tag_distribution, tokenize, write_tsv,
)
from .errors import (
    CheckpointError, ConfigError, DataFormatError, DivergenceError, FeedbackError, VocabularyMismatchError,
)
from .evaluation import format_report, score, write_report
from .logging_manager import close_all_loggers, get_logging_manager, get_phase_logger
from .models import build_model, predict
from .numerics import spawn_rngs
from .persistence_manager import RunPersistence
from .run_db import RunStatus, close_db
from .training import EpochReport, gradient_check_run, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


# ==================== TRAIN ====================

def run_train(args: argparse.Namespace) -> int:
    overrides = {
        "architecture": args.architecture,
        "seed": args.seed,
        "max_epochs": args.max_epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "keep_prob": args.keep_prob,
        "embeddings_path": args.embeddings_path,
    }
    config = load_config(args.preset, args.config, overrides)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manager = get_logging_manager(run_name=f"{config.preset}_{config.architecture}",
                                  base_dir=Path(config.log_dir) if config.log_dir else out_dir, tz=args.tz)
    phase_logger = get_phase_logger("train")
    logger.info(f"📋 Configuration: {json.dumps(config.to_dict(), sort_keys=True)}")

    train_split = load_tsv(args.train, "train")
    dev_split = load_tsv(args.dev, "dev")
    logger.info(f"📊 Tag distribution:\n{tag_distribution([train_split, dev_split]).to_string()}")

    vocab = build_vocabulary(train_split.records, config.min_count, config.tokenizer)
    max_len = config.max_len or compute_max_len(train_split.records, config.tokenizer)
    max_len = max(max_len, config.min_sentence_length)
    logger.info(f"📊 Vocabulary {vocab.size} tokens, max_len {max_len}")

    init_rng, train_rng = spawn_rngs(config.seed, 2)
    if config.embeddings == "pretrained" and config.embeddings_path:
        embedding = load_embeddings(config.embeddings_path, vocab, config.embedding_dim, init_rng)
    else:
        if config.embeddings == "pretrained":
            logger.warning("⚠️ Preset asks for pretrained embeddings but no embeddings_path is set, using random")
        embedding = random_embedding_table(vocab, config.embedding_dim, init_rng, config.embedding_init_scale)
    model = build_model(config, embedding, init_rng)

    train_examples = encode_split(train_split, vocab, max_len, config.tokenizer, expand=True)
    dev_examples = encode_split(dev_split, vocab, max_len, config.tokenizer, expand=False)

    persistence = RunPersistence(out_dir, config.to_dict()) if config.record_runs else None
    history_path = out_dir / HISTORY_FILE

    with open(history_path, "w", encoding="utf-8", newline="\n") as history:
        def write_history(report: EpochReport):
            history.write(json.dumps(report.to_record(), sort_keys=True) + "\n")
            history.flush()
            phase_logger.info(str(report))

        callbacks = [write_history] + ([persistence.record_epoch] if persistence else [])
        try:
            trained = train(model, train_examples, dev_examples, config, rng=train_rng,
                            epoch_callbacks=callbacks, checkpoint_dir=out_dir)
        except DivergenceError as e:
            if persistence:
                persistence.close_run(RunStatus.DIVERGED, notes=str(e))
            raise

    manifest = ModelManifest(
        architecture=config.architecture,
        config=config.to_dict(),
        max_len=max_len,
        tokenizer=config.tokenizer,
        vocab_hash=vocab.fingerprint(),
        vocab_size=vocab.size,
        best_epoch=trained.best_epoch,
        best_dev_accuracy=trained.best_dev_accuracy,
    )
    write_model_dir(out_dir, manifest, vocab)
    if persistence:
        persistence.close_run(RunStatus.COMPLETED, trained.best_epoch, trained.best_dev_accuracy)

    manager.log_to_both("train", "info", f"✅ Model written to {out_dir} "
                                         f"(best epoch {trained.best_epoch}, dev {trained.best_dev_accuracy:.4f})")
    return EXIT_OK


# ==================== EVALUATE ====================

def run_evaluate(args: argparse.Namespace) -> int:
    get_logging_manager(run_name="evaluate", tz=args.tz)
    loaded = load_model_dir(args.model, FINAL_CHECKPOINT if args.final else BEST_CHECKPOINT)
    manifest = loaded.manifest

    test_split = load_tsv(args.test, "test")
    examples = encode_split(test_split, loaded.vocab, manifest.max_len, manifest.tokenizer, expand=False)
    predictions = [predict(loaded.model.forward(example, "infer").probs) for example in examples]
    report = score(predictions, [record.tags for record in test_split.records])

    text = write_report(report, args.report) if args.report else format_report(report)[0]
    sys.stdout.write(text + "\n")
    logger.info(f"✅ Exact accuracy {report.exact_accuracy:.4f} on {report.n_examples} examples")
    return EXIT_OK


# ==================== PREDICT ====================

def _read_lines(path: str) -> List[str]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        content = f.read()
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.rstrip("\r") for line in lines]


def format_prediction(prediction) -> str:
    distribution = " ".join(f"{p:.6f}" for p in prediction.distribution)
    return f"{prediction.tag}\t{prediction.confidence:.6f}\t{distribution}"


def run_predict(args: argparse.Namespace) -> int:
    get_logging_manager(run_name="predict", tz=args.tz)
    loaded = load_model_dir(args.model, FINAL_CHECKPOINT if args.final else BEST_CHECKPOINT)
    manifest = loaded.manifest

    if args.text is not None:
        # a blank --text is empty input, no output line
        sentences = [args.text] if args.text.strip() else []
    else:
        sentences = _read_lines(args.file)
    for sentence in sentences:
        example = pad_encode(tokenize(sentence, manifest.tokenizer), loaded.vocab, manifest.max_len)
        sys.stdout.write(format_prediction(predict(loaded.model.forward(example, "infer").probs)) + "\n")
    logger.debug(f"Tagged {len(sentences)} sentence(s)")
    return EXIT_OK


# ==================== GEN-DATA ====================

def run_gen_data(args: argparse.Namespace) -> int:
    get_logging_manager(run_name="gen_data", tz=args.tz)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for split in generate_synthetic(args.seed, args.per_class, args.noise):
        write_tsv(split, out_dir / f"{split.role}.tsv")
    logger.info(f"💾 Synthetic corpus written to {out_dir}")
    return EXIT_OK


# ==================== GRAD-CHECK ====================

def parse_corruption(items: Optional[Sequence[str]]) -> Dict[str, float]:
    """Parse PREFIX=FACTOR pairs"""
    corrupt: Dict[str, float] = {}
    for item in items or ():
        prefix, sep, factor = item.partition("=")
        if not sep or not prefix:
            raise ConfigError(f"--corrupt expects PREFIX=FACTOR, got {item!r}")
        try:
            corrupt[prefix] = float(factor)
        except ValueError as e:
            raise ConfigError(f"--corrupt factor must be a number, got {factor!r}") from e
    return corrupt


def run_grad_check(args: argparse.Namespace) -> int:
    get_logging_manager(run_name="grad_check", tz=args.tz)
    report = gradient_check_run(args.architecture, args.seed, corrupt=parse_corruption(args.corrupt))
    sys.stdout.write(report.format() + "\n")
    return EXIT_OK if report.passed else EXIT_NUMERIC


# ==================== PARSER ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feedback", description="Customer feedback classifier")
    parser.add_argument("--tz", default="UTC", help="Timezone for log folder dates")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="Train a model")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--preset", choices=["en", "es", "fr", "jp", "custom"])
    p.add_argument("--train", required=True, help="Training TSV")
    p.add_argument("--dev", required=True, help="Dev TSV")
    p.add_argument("--out", required=True, help="Model directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--architecture", choices=["cnn", "cnn_gru"])
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--keep-prob", type=float)
    p.add_argument("--embeddings-path")
    p.set_defaults(handler=run_train)

    p = sub.add_parser("evaluate", help="Score a model on a test TSV")
    p.add_argument("--model", required=True, help="Model directory")
    p.add_argument("--test", required=True, help="Test TSV")
    p.add_argument("--report", help="JSON report path (text table written alongside)")
    p.add_argument("--final", action="store_true", help="Use final.ckpt instead of best.ckpt")
    p.set_defaults(handler=run_evaluate)

    p = sub.add_parser("predict", help="Tag sentences")
    p.add_argument("--model", required=True, help="Model directory")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--text", help="One sentence")
    source.add_argument("--file", help="One sentence per line")
    p.add_argument("--final", action="store_true", help="Use final.ckpt instead of best.ckpt")
    p.set_defaults(handler=run_predict)

    p = sub.add_parser("gen-data", help="Write a synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--noise", type=int, default=3, help="Filler words per sentence")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_gen_data)

    p = sub.add_parser("grad-check", help="Check gradients against finite differences")
    p.add_argument("--architecture", choices=["cnn", "cnn_gru"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="append", metavar="PREFIX=FACTOR",
                   help="Scale analytic gradients of matching groups")
    p.set_defaults(handler=run_grad_check)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one verb and map failures to exit codes"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG

    try:
        return args.handler(args)
    except (ConfigError, VocabularyMismatchError) as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG
    except DivergenceError as e:
        logger.error(f"❌ {e}")
        return EXIT_NUMERIC
    except (DataFormatError, CheckpointError, OSError) as e:
        logger.error(f"❌ {e}")
        return EXIT_DATA
    except FeedbackError as e:
        logger.error(f"❌ {e}")
        return EXIT_DATA
    except KeyboardInterrupt:
        logger.warning("⚠️  Interrupted by user")
        return 130
    finally:
        close_db()
        close_all_loggers()


if __name__ == "__main__":
    sys.exit(main())
