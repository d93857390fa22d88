"""
Classifier Models
=================
End-to-end feedback classifiers assembled from core.layers.

- CnnModel:    embed → conv (sizes 3,4,5) + ReLU → max-over-time → concat → dropout → softmax
- CnnGruModel: embed → single-size conv + ReLU → stride-2 temporal max pool
               → bidirectional GRU → concat final states → dropout → softmax

Both expose forward (returning a cache), backward (exact gradients of the
cross-entropy loss for every trainable tensor) and parameters() keyed by name.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Literal, Optional, Union

import numpy as np

from .corpus import NUM_TAGS, TAGS, EmbeddingTable, EncodedExample
from .errors import MissingCacheError, ShapeError
from .layers import (
    BiGruCache, ConvFilterBank, DenseSoftmaxLayer, DropoutMask, FeatureMaps, GruParameters, GRU_FIELDS, Mode,
    bigru_backward, bigru_forward, conv_backward, conv_forward, dense_softmax_backward,
    dense_softmax_forward, draw_dropout_mask, embed_backward, embed_sentence, pool_feature_maps,
    pool_feature_maps_backward, temporal_max_pool, temporal_max_pool_backward,
)

if TYPE_CHECKING:
    from .training import TrainConfig

logger = logging.getLogger(__name__)

Architecture = Literal["cnn", "cnn_gru"]
ARCHITECTURES = ("cnn", "cnn_gru")

PROB_FLOOR = 1e-12
NORMALIZATION_TOLERANCE = 1e-6

GradientSet = Dict[str, np.ndarray]


# ==================== PREDICTIONS & LOSS ====================

@dataclass(frozen=True)
class Prediction:
    """Most probable tag, its probability and the full distribution"""
    label_index: int
    confidence: float
    distribution: np.ndarray

    @property
    def tag(self) -> str:
        return TAGS[self.label_index]


def _check_distribution(probs: np.ndarray) -> None:
    if probs.shape != (NUM_TAGS,):
        raise ValueError(f"expected a distribution over {NUM_TAGS} tags, got shape {probs.shape}")
    total = float(np.sum(probs))
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise ValueError(f"distribution sums to {total}, not 1")


def predict(probs: np.ndarray) -> Prediction:
    """Argmax (lowest index on ties) with its probability as confidence"""
    probs = np.asarray(probs, dtype=np.float64)
    _check_distribution(probs)
    label = int(np.argmax(probs))
    return Prediction(label_index=label, confidence=float(probs[label]), distribution=probs.copy())


def cross_entropy_loss(probs: np.ndarray, gold: int) -> float:
    """−ln p[gold], with p clamped below at 1e−12"""
    if not 0 <= gold < NUM_TAGS:
        raise ValueError(f"gold label {gold} outside 0..{NUM_TAGS - 1}")
    return float(-np.log(max(float(probs[gold]), PROB_FLOOR)))


# ==================== CACHES ====================

@dataclass(eq=False)
class CnnCache:
    """Everything the CNN backward pass needs from one forward pass"""
    example: EncodedExample
    sentence: np.ndarray
    conv: Dict[int, FeatureMaps]
    pool_argmax: Dict[int, np.ndarray]
    penultimate: np.ndarray
    mask: DropoutMask
    features: np.ndarray
    probs: np.ndarray

    def activation_signature(self) -> bytes:
        """ReLU on/off pattern plus every pooling argmax"""
        parts = []
        for h, out in self.conv.items():
            parts.append(np.packbits(out.pre_activation > 0).tobytes())
            parts.append(self.pool_argmax[h].tobytes())
        return b"|".join(parts)


@dataclass(eq=False)
class CnnGruCache:
    """Everything the CNN+GRU backward pass needs from one forward pass"""
    example: EncodedExample
    sentence: np.ndarray
    conv: FeatureMaps
    pool_argmax: np.ndarray
    gru: BiGruCache
    penultimate: np.ndarray
    mask: DropoutMask
    features: np.ndarray
    probs: np.ndarray

    def activation_signature(self) -> bytes:
        return np.packbits(self.conv.pre_activation > 0).tobytes() + b"|" + self.pool_argmax.tobytes()


ForwardCache = Union[CnnCache, CnnGruCache]


def _resolve_mask(size: int, keep_prob: float, mode: Mode, rng: Optional[np.random.Generator],
                  mask: Optional[DropoutMask]) -> DropoutMask:
    if mask is not None:
        if mask.mask.shape != (size,):
            raise ShapeError(f"frozen dropout mask has shape {mask.mask.shape}, expected ({size},)")
        return mask
    if mode == "train" and keep_prob < 1.0 and rng is None:
        raise ValueError("train-mode dropout needs a generator")
    return draw_dropout_mask(size, keep_prob, mode, rng)


# ==================== CNN ====================

@dataclass(eq=False)
class CnnModel:
    """Convolutional sentence classifier"""
    embedding: EmbeddingTable
    bank: ConvFilterBank
    output: DenseSoftmaxLayer
    keep_prob: float = 0.5

    architecture = "cnn"

    def __post_init__(self):
        if self.embedding.dim != self.bank.embedding_dim:
            raise ShapeError(f"embedding dim {self.embedding.dim} != filter width {self.bank.embedding_dim}")
        if self.output.feature_dim != self.bank.feature_dim:
            raise ShapeError(f"output layer expects {self.output.feature_dim} features, "
                             f"filter bank produces {self.bank.feature_dim}")

    @property
    def penultimate_dim(self) -> int:
        return self.bank.feature_dim

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {"embedding": self.embedding.weights}
        params.update(self.bank.named_parameters("conv"))
        params.update(self.output.named_parameters("output"))
        return params

    def forward(self, example: EncodedExample, mode: Mode = "infer",
                rng: Optional[np.random.Generator] = None, mask: Optional[DropoutMask] = None) -> CnnCache:
        sentence = embed_sentence(example, self.embedding)
        conv = conv_forward(sentence, self.bank)

        pooled, pool_argmax = [], {}
        for h, out in conv.items():
            values, argmax = pool_feature_maps(out.maps)
            pooled.append(values)
            pool_argmax[h] = argmax
        penultimate = np.concatenate(pooled)

        mask = _resolve_mask(self.penultimate_dim, self.keep_prob, mode, rng, mask)
        features = mask.apply(penultimate)
        probs = dense_softmax_forward(features, self.output)
        return CnnCache(example=example, sentence=sentence, conv=conv, pool_argmax=pool_argmax,
                        penultimate=penultimate, mask=mask, features=features, probs=probs)

    def backward(self, cache: CnnCache, gold: int, grads: GradientSet) -> GradientSet:
        d_features, d_w, d_b = dense_softmax_backward(cache.features, cache.probs, gold, self.output)
        grads["output.weight"] += d_w
        grads["output.bias"] += d_b
        d_penultimate = cache.mask.backward(d_features)

        d_maps = {}
        offset = 0
        n_filters = self.bank.filters_per_size
        for h, out in cache.conv.items():
            d_pooled = d_penultimate[offset:offset + n_filters]
            d_maps[h] = pool_feature_maps_backward(d_pooled, cache.pool_argmax[h], out.maps.shape[1])
            offset += n_filters

        d_sentence, d_weights, d_biases = conv_backward(cache.sentence.shape, self.bank, cache.conv, d_maps)
        for h in self.bank.region_sizes:
            grads[f"conv.h{h}.weight"] += d_weights[h]
            grads[f"conv.h{h}.bias"] += d_biases[h]

        embed_backward(cache.example, d_sentence, self.embedding, grads["embedding"])
        return grads


# ==================== CNN + GRU ====================

@dataclass(eq=False)
class CnnGruModel:
    """Convolutional feature extractor feeding a bidirectional GRU"""
    embedding: EmbeddingTable
    conv: ConvFilterBank
    gru_fwd: GruParameters
    gru_bwd: GruParameters
    output: DenseSoftmaxLayer
    keep_prob: float = 0.5
    pool_stride: int = 2

    architecture = "cnn_gru"

    def __post_init__(self):
        if len(self.conv.region_sizes) != 1:
            raise ShapeError(f"CNN+GRU uses a single region size, got {self.conv.region_sizes}")
        if self.embedding.dim != self.conv.embedding_dim:
            raise ShapeError(f"embedding dim {self.embedding.dim} != filter width {self.conv.embedding_dim}")
        for gru in (self.gru_fwd, self.gru_bwd):
            if gru.input_dim != self.conv.filters_per_size:
                raise ShapeError(f"GRU input dim {gru.input_dim} != conv filters {self.conv.filters_per_size}")
        if self.gru_fwd.hidden != self.gru_bwd.hidden:
            raise ShapeError("forward and backward GRUs must share the hidden size")
        if self.output.feature_dim != 2 * self.gru_fwd.hidden:
            raise ShapeError(f"output layer expects {self.output.feature_dim} features, "
                             f"bidirectional GRU produces {2 * self.gru_fwd.hidden}")
        if self.pool_stride < 1:
            raise ShapeError(f"pool stride must be >= 1, got {self.pool_stride}")

    @property
    def region_size(self) -> int:
        return self.conv.region_sizes[0]

    @property
    def penultimate_dim(self) -> int:
        return 2 * self.gru_fwd.hidden

    def sequence_length(self, max_len: int) -> int:
        """GRU steps for a padded sentence of max_len tokens: ⌈(n − h + 1) / stride⌉"""
        windows = max_len - self.region_size + 1
        return -(-windows // self.pool_stride) if windows > 0 else 0

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {"embedding": self.embedding.weights}
        params.update(self.conv.named_parameters("conv"))
        params.update(self.gru_fwd.named_parameters("gru_fwd"))
        params.update(self.gru_bwd.named_parameters("gru_bwd"))
        params.update(self.output.named_parameters("output"))
        return params

    def forward(self, example: EncodedExample, mode: Mode = "infer",
                rng: Optional[np.random.Generator] = None, mask: Optional[DropoutMask] = None) -> CnnGruCache:
        if self.sequence_length(example.max_len) < 1:
            raise ShapeError(f"GRU sequence would be empty: max_len {example.max_len} < "
                             f"region size {self.region_size}")

        sentence = embed_sentence(example, self.embedding)
        conv = conv_forward(sentence, self.conv)[self.region_size]
        pooled, pool_argmax = temporal_max_pool(conv.maps.T, self.pool_stride)
        gru = bigru_forward(pooled, self.gru_fwd, self.gru_bwd)
        penultimate = gru.output

        mask = _resolve_mask(self.penultimate_dim, self.keep_prob, mode, rng, mask)
        features = mask.apply(penultimate)
        probs = dense_softmax_forward(features, self.output)
        return CnnGruCache(example=example, sentence=sentence, conv=conv, pool_argmax=pool_argmax, gru=gru,
                           penultimate=penultimate, mask=mask, features=features, probs=probs)

    def backward(self, cache: CnnGruCache, gold: int, grads: GradientSet) -> GradientSet:
        d_features, d_w, d_b = dense_softmax_backward(cache.features, cache.probs, gold, self.output)
        grads["output.weight"] += d_w
        grads["output.bias"] += d_b
        d_penultimate = cache.mask.backward(d_features)

        d_fwd = GruParameters(**{f: grads[f"gru_fwd.{f}"] for f in GRU_FIELDS})
        d_bwd = GruParameters(**{f: grads[f"gru_bwd.{f}"] for f in GRU_FIELDS})
        d_pooled = bigru_backward(cache.gru, d_penultimate, self.gru_fwd, self.gru_bwd, d_fwd, d_bwd)

        length = cache.conv.maps.shape[1]
        d_maps = temporal_max_pool_backward(d_pooled, cache.pool_argmax, length).T
        h = self.region_size
        d_sentence, d_weights, d_biases = conv_backward(cache.sentence.shape, self.conv,
                                                        {h: cache.conv}, {h: d_maps})
        grads[f"conv.h{h}.weight"] += d_weights[h]
        grads[f"conv.h{h}.bias"] += d_biases[h]

        embed_backward(cache.example, d_sentence, self.embedding, grads["embedding"])
        return grads


ClassifierModel = Union[CnnModel, CnnGruModel]


# ==================== MODULE-LEVEL API ====================

def cnn_forward(example: EncodedExample, model: CnnModel, mode: Mode = "infer",
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Tag distribution from the CNN"""
    return model.forward(example, mode, rng).probs


def cnn_gru_forward(example: EncodedExample, model: CnnGruModel, mode: Mode = "infer",
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Tag distribution from the CNN+GRU"""
    return model.forward(example, mode, rng).probs


def zero_gradients(model: ClassifierModel) -> GradientSet:
    return {name: np.zeros_like(p) for name, p in model.parameters().items()}


def model_backward(cache: Optional[ForwardCache], gold: int, model: ClassifierModel,
                   grads: Optional[GradientSet] = None) -> GradientSet:
    """
    Exact gradients of cross_entropy_loss(cache.probs, gold) for every parameter.

    The dropout mask stored in the cache is reused (frozen). Gradients are
    added into `grads` when given, otherwise into a fresh zero set. The PAD
    embedding row never receives gradient.

    Raises:
        MissingCacheError: no cache, or a cache from the other architecture
    """
    expected = CnnCache if isinstance(model, CnnModel) else CnnGruCache
    if cache is None or not isinstance(cache, expected):
        raise MissingCacheError(f"{model.architecture} backward needs a {expected.__name__} "
                                f"from its forward pass")
    if not 0 <= gold < NUM_TAGS:
        raise ValueError(f"gold label {gold} outside 0..{NUM_TAGS - 1}")
    if grads is None:
        grads = zero_gradients(model)
    return model.backward(cache, gold, grads)


def build_model(config: "TrainConfig", embedding: EmbeddingTable, rng: np.random.Generator) -> ClassifierModel:
    """Construct either architecture from a training configuration"""
    k = embedding.dim
    if config.architecture == "cnn":
        bank = ConvFilterBank.initialize(config.region_sizes, config.filters, k, rng)
        output = DenseSoftmaxLayer.initialize(bank.feature_dim, rng)
        model = CnnModel(embedding=embedding, bank=bank, output=output, keep_prob=config.keep_prob)
    elif config.architecture == "cnn_gru":
        conv = ConvFilterBank.initialize([config.gru_region_size], config.filters, k, rng)
        gru_fwd = GruParameters.initialize(config.filters, config.gru_hidden, rng)
        gru_bwd = GruParameters.initialize(config.filters, config.gru_hidden, rng)
        output = DenseSoftmaxLayer.initialize(2 * config.gru_hidden, rng)
        model = CnnGruModel(embedding=embedding, conv=conv, gru_fwd=gru_fwd, gru_bwd=gru_bwd, output=output,
                            keep_prob=config.keep_prob, pool_stride=config.gru_pool_stride)
    else:
        raise ValueError(f"unknown architecture {config.architecture!r}; expected one of {ARCHITECTURES}")

    n_params = sum(p.size for p in model.parameters().values())
    logger.info(f"🧠 Built {model.architecture} model: {n_params:,} parameters, "
                f"penultimate width {model.penultimate_dim}")
    return model
