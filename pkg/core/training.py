"""
Training
========
Mini-batch SGD over encoded examples, per-epoch dev monitoring with
best-dev model selection, and the gradient-check harness that compares
every backward pass against central finite differences.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .checkpoint import BEST_CHECKPOINT, FINAL_CHECKPOINT, save_checkpoint
from .corpus import NUM_TAGS, EmbeddingTable, EncodedExample
from .errors import ConfigError, DataFormatError, DivergenceError, NumericalError, ShapeError
from .layers import DropoutMask
from .models import (
    ARCHITECTURES, ClassifierModel, GradientSet, build_model, cross_entropy_loss, model_backward,
    zero_gradients,
)
from .numerics import finite_difference_gradient, make_rng, relative_error, spawn_rngs

logger = logging.getLogger(__name__)

PRESETS = ("en", "es", "fr", "jp", "custom")
TOKENIZERS = ("word", "char")
EMBEDDING_SOURCES = ("pretrained", "random")

EpochCallback = Callable[["EpochReport"], None]


# ==================== CONFIGURATION ====================

@dataclass
class TrainConfig:
    """Hyperparameters and data settings for one training run"""
    architecture: str = "cnn"
    max_epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.05
    keep_prob: float = 0.5
    seed: int = 0
    embedding_dim: int = 300
    filters: int = 128
    region_sizes: Tuple[int, ...] = (3, 4, 5)
    gru_hidden: int = 300
    gru_region_size: int = 3
    gru_pool_stride: int = 2

    preset: str = "custom"
    language: str = "en"
    tokenizer: str = "word"
    min_count: int = 1
    max_len: Optional[int] = None
    embeddings: str = "random"
    embeddings_path: Optional[str] = None
    embedding_init_scale: float = 0.25
    record_runs: bool = True
    log_dir: Optional[str] = None

    def __post_init__(self):
        self.region_sizes = tuple(int(h) for h in self.region_sizes)

    def validate(self, allow_zero_learning_rate: bool = False) -> "TrainConfig":
        """
        Check every field invariant.

        Args:
            allow_zero_learning_rate: accept lr == 0 (a frozen-model run); config
                files and flags always require lr > 0

        Raises:
            ConfigError: naming the offending field
        """
        def require(ok: bool, message: str):
            if not ok:
                raise ConfigError(message)

        require(self.architecture in ARCHITECTURES,
                f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        require(self.max_epochs >= 1, f"max_epochs must be >= 1, got {self.max_epochs}")
        require(self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}")
        if allow_zero_learning_rate:
            require(self.learning_rate >= 0, f"learning_rate must be >= 0, got {self.learning_rate}")
        else:
            require(self.learning_rate > 0, f"learning_rate must be > 0, got {self.learning_rate}")
        require(0.0 < self.keep_prob <= 1.0, f"keep_prob must be in (0, 1], got {self.keep_prob}")
        require(self.embedding_dim >= 1, f"embedding_dim must be >= 1, got {self.embedding_dim}")
        require(self.filters >= 1, f"filters must be >= 1, got {self.filters}")
        require(len(self.region_sizes) >= 1 and all(h >= 1 for h in self.region_sizes),
                f"region_sizes must be positive, got {list(self.region_sizes)}")
        require(len(set(self.region_sizes)) == len(self.region_sizes),
                f"region_sizes must be distinct, got {list(self.region_sizes)}")
        require(self.gru_hidden >= 1, f"gru_hidden must be >= 1, got {self.gru_hidden}")
        require(self.gru_region_size >= 1, f"gru_region_size must be >= 1, got {self.gru_region_size}")
        require(self.gru_pool_stride >= 1, f"gru_pool_stride must be >= 1, got {self.gru_pool_stride}")
        require(self.preset in PRESETS, f"preset must be one of {PRESETS}, got {self.preset!r}")
        require(self.tokenizer in TOKENIZERS, f"tokenizer must be one of {TOKENIZERS}, got {self.tokenizer!r}")
        require(self.min_count >= 1, f"min_count must be >= 1, got {self.min_count}")
        require(self.max_len is None or self.max_len >= 1, f"max_len must be >= 1, got {self.max_len}")
        require(self.embeddings in EMBEDDING_SOURCES,
                f"embeddings must be one of {EMBEDDING_SOURCES}, got {self.embeddings!r}")
        require(self.embedding_init_scale > 0,
                f"embedding_init_scale must be > 0, got {self.embedding_init_scale}")
        return self

    @property
    def min_sentence_length(self) -> int:
        """Shortest padded length every filter (and the GRU path) can handle"""
        if self.architecture == "cnn_gru":
            return self.gru_region_size
        return max(self.region_sizes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["region_sizes"] = list(self.region_sizes)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**dict(data))


# ==================== REPORTS ====================

@dataclass
class EpochReport:
    """Per-epoch training summary"""
    epoch: int
    mean_loss: float
    train_accuracy: float
    dev_accuracy: float
    wall_time: float

    def to_record(self) -> Dict[str, Any]:
        return asdict(self)

    def __str__(self) -> str:
        return (f"epoch {self.epoch:>3}  loss {self.mean_loss:.4f}  "
                f"train {self.train_accuracy:.4f}  dev {self.dev_accuracy:.4f}  ({self.wall_time:.1f}s)")


@dataclass(eq=False)
class TrainedModel:
    """
    Outcome of a training run.

    `model` holds the best-dev parameters; `final_parameters` keeps a copy of
    the last epoch's.
    """
    model: ClassifierModel
    config: TrainConfig
    history: List[EpochReport] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_accuracy: float = 0.0
    final_parameters: Dict[str, np.ndarray] = field(default_factory=dict)
    best_checkpoint: Optional[Path] = None
    final_checkpoint: Optional[Path] = None

    @property
    def loss_history(self) -> List[float]:
        return [r.mean_loss for r in self.history]


# ==================== SGD ====================

def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
             learning_rate: float) -> Mapping[str, np.ndarray]:
    """
    In-place update θ ← θ − lr · g for every named tensor.

    No weight decay and no norm clipping.

    Raises:
        ShapeError: grads missing a parameter or shaped differently
    """
    if set(grads) != set(params):
        raise ShapeError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        if learning_rate != 0.0:
            p -= learning_rate * g
    return params


def accuracy(model: ClassifierModel, examples: Sequence[EncodedExample]) -> float:
    """Fraction of examples whose infer-mode prediction is in the gold tag set"""
    if not examples:
        return 0.0
    correct = 0
    for example in examples:
        probs = model.forward(example, "infer").probs
        if int(np.argmax(probs)) in example.gold_set:
            correct += 1
    return correct / len(examples)


# ==================== TRAINING LOOP ====================

def _snapshot(model: ClassifierModel) -> Dict[str, np.ndarray]:
    return {name: p.copy() for name, p in model.parameters().items()}


def _restore(model: ClassifierModel, snapshot: Mapping[str, np.ndarray]) -> None:
    for name, p in model.parameters().items():
        p[...] = snapshot[name]


def train(model: ClassifierModel, train_examples: Sequence[EncodedExample],
          dev_examples: Sequence[EncodedExample], config: TrainConfig,
          rng: Optional[np.random.Generator] = None,
          epoch_callbacks: Sequence[EpochCallback] = (),
          checkpoint_dir: Optional[Union[str, Path]] = None) -> TrainedModel:
    """
    Train with mini-batch SGD for config.max_epochs epochs.

    Each epoch shuffles the training examples with the run generator, walks
    them in batches of batch_size (the last one may be smaller), draws a fresh
    dropout mask per example and applies the batch-mean gradient. Dev accuracy
    (membership rule) is measured after every epoch; the parameters of the
    first epoch reaching the best dev accuracy are kept. With an empty dev
    split, training accuracy drives the selection instead.

    Args:
        model: Model to train in place
        train_examples: Encoded, label-expanded training examples
        dev_examples: Encoded dev examples (not expanded)
        config: Run hyperparameters
        rng: Run generator; derived from config.seed when omitted
        epoch_callbacks: Called with each EpochReport
        checkpoint_dir: Where best.ckpt / final.ckpt go; nothing written when None

    Returns:
        TrainedModel whose model carries the best-dev parameters

    Raises:
        DataFormatError: empty training split
        DivergenceError: non-finite loss or activations
    """
    config.validate(allow_zero_learning_rate=True)
    if not train_examples:
        raise DataFormatError("training split is empty")
    if rng is None:
        rng = spawn_rngs(config.seed, 2)[1]

    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    params = model.parameters()
    n_params = sum(p.size for p in params.values())
    grads = zero_gradients(model)
    n = len(train_examples)
    n_batches = -(-n // config.batch_size)

    logger.info(f"📋 Training {model.architecture}: {n} examples, {len(dev_examples)} dev, "
                f"{n_batches} batches/epoch, lr {config.learning_rate}, keep {config.keep_prob}")

    result = TrainedModel(model=model, config=config)
    best_score = -1.0
    best_snapshot: Optional[Dict[str, np.ndarray]] = None

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n)
        total_loss = 0.0

        for batch_index, start in enumerate(range(0, n, config.batch_size), start=1):
            batch = order[start:start + config.batch_size]
            for g in grads.values():
                g.fill(0.0)

            for i in batch:
                example = train_examples[i]
                try:
                    cache = model.forward(example, "train", rng)
                except NumericalError as e:
                    raise DivergenceError(epoch, batch_index, float("nan")) from e
                loss = cross_entropy_loss(cache.probs, example.label_index)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, batch_index, loss)
                model_backward(cache, example.label_index, model, grads)
                total_loss += loss

            scale = 1.0 / len(batch)
            for g in grads.values():
                g *= scale
            sgd_step(params, grads, config.learning_rate)

        train_acc = accuracy(model, train_examples)
        dev_acc = accuracy(model, dev_examples)
        report = EpochReport(epoch=epoch, mean_loss=total_loss / n, train_accuracy=train_acc,
                             dev_accuracy=dev_acc, wall_time=time.perf_counter() - started)
        result.history.append(report)
        logger.info(f"📈 {report}")

        score = dev_acc if dev_examples else train_acc
        if score > best_score:
            best_score = score
            best_snapshot = _snapshot(model)
            result.best_epoch = epoch
            result.best_dev_accuracy = dev_acc
            if ckpt_dir is not None:
                result.best_checkpoint = ckpt_dir / BEST_CHECKPOINT
                save_checkpoint(params, result.best_checkpoint)
                logger.debug(f"💾 New best at epoch {epoch} (dev {dev_acc:.4f})")

        for callback in epoch_callbacks:
            callback(report)

    if sum(p.size for p in params.values()) != n_params:
        raise ShapeError("parameter count changed during training")

    result.final_parameters = _snapshot(model)
    if ckpt_dir is not None:
        result.final_checkpoint = ckpt_dir / FINAL_CHECKPOINT
        save_checkpoint(params, result.final_checkpoint)

    _restore(model, best_snapshot)
    logger.info(f"✅ Training finished: best epoch {result.best_epoch}, dev {result.best_dev_accuracy:.4f}")
    return result


# ==================== GRADIENT CHECK ====================

GRADIENT_CHECK_EPS = 1e-4
GRADIENT_CHECK_TOLERANCE = 1e-4
GRADIENT_CHECK_VOCAB = 20
GRADIENT_CHECK_MAX_LEN = 12


def gradient_check_config(architecture: str) -> TrainConfig:
    """The small configuration the gradient check runs at"""
    return TrainConfig(architecture=architecture, embedding_dim=8, filters=2, region_sizes=(3, 4, 5),
                       gru_hidden=8, gru_region_size=3, gru_pool_stride=2, keep_prob=0.5,
                       max_len=GRADIENT_CHECK_MAX_LEN, preset="custom")


@dataclass
class GroupCheck:
    """Worst disagreement between analytic and numeric gradients in one tensor"""
    name: str
    max_relative_error: float
    worst_index: Tuple[int, ...]
    analytic: float
    numeric: float
    checked: int
    skipped: int
    tolerance: float = GRADIENT_CHECK_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


@dataclass
class GradientCheckReport:
    architecture: str
    seed: int
    groups: List[GroupCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    @property
    def failed_groups(self) -> List[str]:
        return [g.name for g in self.groups if not g.passed]

    def format(self) -> str:
        lines = [f"gradient check: {self.architecture} seed {self.seed}"]
        for g in self.groups:
            status = "ok" if g.passed else "FAIL"
            lines.append(f"  {g.name:<16} max_rel_err {g.max_relative_error:.3e}  worst {g.worst_index}  "
                         f"analytic {g.analytic:+.6e}  numeric {g.numeric:+.6e}  "
                         f"checked {g.checked}  skipped {g.skipped}  {status}")
        lines.append("PASSED" if self.passed else f"FAILED: {', '.join(self.failed_groups)}")
        return "\n".join(lines)


def _gradient_check_instance(architecture: str, rng: np.random.Generator):
    config = gradient_check_config(architecture)
    weights = rng.uniform(-1.0, 1.0, size=(GRADIENT_CHECK_VOCAB, config.embedding_dim))
    model = build_model(config, EmbeddingTable.with_frozen_pad(weights), rng)
    for name, p in model.parameters().items():
        if name.endswith("bias") or name.endswith(".b_z") or name.endswith(".b_r") or name.endswith(".b"):
            p[...] = rng.uniform(-0.1, 0.1, size=p.shape)

    true_length = int(rng.integers(max(config.region_sizes), GRADIENT_CHECK_MAX_LEN + 1))
    indices = np.zeros(GRADIENT_CHECK_MAX_LEN, dtype=np.int64)
    indices[:true_length] = rng.integers(1, GRADIENT_CHECK_VOCAB, size=true_length)
    gold = int(rng.integers(0, NUM_TAGS))
    example = EncodedExample(indices=indices, true_length=true_length, label_index=gold,
                             gold=frozenset({gold}))
    return model, example


def gradient_check_run(architecture: str, seed: int,
                       corrupt: Optional[Mapping[str, float]] = None,
                       eps: float = GRADIENT_CHECK_EPS,
                       tolerance: float = GRADIENT_CHECK_TOLERANCE) -> GradientCheckReport:
    """
    Compare model_backward against finite differences for every parameter group.

    Dropout is frozen to the identity. A coordinate whose ±eps evaluations
    change the ReLU pattern or any pooling argmax sits on a kink and is skipped;
    the frozen PAD embedding row is excluded.

    Args:
        architecture: "cnn" or "cnn_gru"
        seed: Seeds the random instance
        corrupt: Group-name prefix → factor applied to the analytic gradient

    Returns:
        GradientCheckReport; failures are entries, never exceptions
    """
    model, example = _gradient_check_instance(architecture, make_rng(seed))
    mask = DropoutMask.identity(model.penultimate_dim)
    gold = example.label_index

    baseline = model.forward(example, "infer", mask=mask)
    analytic_grads: GradientSet = model_backward(baseline, gold, model)
    base_signature = baseline.activation_signature()

    report = GradientCheckReport(architecture=architecture, seed=seed)
    for name, param in model.parameters().items():
        analytic = analytic_grads[name].copy()
        for prefix, factor in (corrupt or {}).items():
            if name.startswith(prefix):
                analytic *= factor

        original = param.copy()
        signatures: List[bytes] = []

        def loss_at(theta: np.ndarray) -> float:
            param[...] = theta
            cache = model.forward(example, "infer", mask=mask)
            signatures.append(cache.activation_signature())
            return cross_entropy_loss(cache.probs, gold)

        try:
            numeric = finite_difference_gradient(loss_at, original, eps)
        finally:
            param[...] = original

        stable = np.array([signatures[2 * i] == base_signature and signatures[2 * i + 1] == base_signature
                           for i in range(param.size)]).reshape(param.shape)
        if name == "embedding":
            stable &= model.embedding.trainable[:, None]

        errors = np.where(stable, relative_error(analytic, numeric), 0.0)
        worst = np.unravel_index(int(np.argmax(errors)), errors.shape)
        report.groups.append(GroupCheck(
            name=name,
            max_relative_error=float(errors[worst]),
            worst_index=tuple(int(i) for i in worst),
            analytic=float(analytic[worst]),
            numeric=float(numeric[worst]),
            checked=int(np.sum(stable)),
            skipped=int(param.size - np.sum(stable)),
            tolerance=tolerance,
        ))

    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, f"{'✅' if report.passed else '❌'} Gradient check {architecture} seed {seed}: "
                      f"{len(report.groups)} groups, failed {report.failed_groups or 'none'}")
    return report
