"""
Layers
======
Differentiable building blocks with hand-derived backward passes.

- Embedding lookup (sentence matrix S, PAD rows zero)
- Convolution filter banks + ReLU feature maps
- Max-over-time pooling and strided temporal max pooling
- Inverted dropout with explicit, freezable masks
- Dense softmax output layer
- GRU cell and bidirectional GRU encoder

Shapes: S is (max_len × k); a bank's weights for region size h are
(filters × h × k); GRU input matrices are (input_dim × hidden) so gate
pre-activations read x·W + h·V + b.
"""

import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Literal, Sequence, Tuple

import numpy as np

from .corpus import NUM_TAGS, EmbeddingTable, EncodedExample
from .errors import MissingCacheError, ShapeError
from .numerics import (
    DTYPE, activate, activate_derivative, glorot_scale, random_uniform_init, softmax,
)

logger = logging.getLogger(__name__)

Mode = Literal["train", "infer"]


# ==================== EMBEDDING ====================

def embed_sentence(example: EncodedExample, table: EmbeddingTable) -> np.ndarray:
    """Stack the embedding rows of the example's indices into S (max_len × k)"""
    indices = example.indices
    if indices.size and (indices.min() < 0 or indices.max() >= table.vocab_size):
        raise ShapeError(f"token index out of range for embedding table with {table.vocab_size} rows")
    return table.weights[indices]


def embed_backward(example: EncodedExample, d_sentence: np.ndarray, table: EmbeddingTable,
                   grad: np.ndarray) -> np.ndarray:
    """Scatter-add dL/dS into the embedding gradient; frozen rows receive nothing"""
    indices = example.indices
    trainable = table.trainable[indices]
    np.add.at(grad, indices[trainable], d_sentence[trainable])
    return grad


# ==================== CONVOLUTION ====================

@dataclass(eq=False)
class ConvFilterBank:
    """Filters of one or more region sizes h, `filters_per_size` filters each"""
    weights: Dict[int, np.ndarray]
    biases: Dict[int, np.ndarray]

    def __post_init__(self):
        if not self.weights or set(self.weights) != set(self.biases):
            raise ShapeError("filter bank needs matching weights and biases for at least one region size")
        shapes = set()
        for h, w in self.weights.items():
            if h < 1 or w.ndim != 3 or w.shape[1] != h:
                raise ShapeError(f"region size {h}: weights must be (filters, {h}, k), got {w.shape}")
            if self.biases[h].shape != (w.shape[0],):
                raise ShapeError(f"region size {h}: biases must be ({w.shape[0]},), got {self.biases[h].shape}")
            shapes.add((w.shape[0], w.shape[2]))
        if len(shapes) != 1:
            raise ShapeError(f"all region sizes must share filters_per_size and k, got {sorted(shapes)}")

    @classmethod
    def initialize(cls, region_sizes: Sequence[int], filters_per_size: int, embedding_dim: int,
                   rng: np.random.Generator) -> "ConvFilterBank":
        """Uniform ±√(6/(h·k + filters)) weights, zero biases"""
        if filters_per_size < 1:
            raise ShapeError(f"filters_per_size must be >= 1, got {filters_per_size}")
        weights, biases = {}, {}
        for h in region_sizes:
            if h < 1:
                raise ShapeError(f"region size must be >= 1, got {h}")
            scale = glorot_scale(h * embedding_dim, filters_per_size)
            flat = random_uniform_init(filters_per_size, h * embedding_dim, scale, rng)
            weights[h] = flat.reshape(filters_per_size, h, embedding_dim)
            biases[h] = np.zeros(filters_per_size, dtype=DTYPE)
        return cls(weights=weights, biases=biases)

    @property
    def region_sizes(self) -> Tuple[int, ...]:
        return tuple(self.weights)

    @property
    def filters_per_size(self) -> int:
        return int(next(iter(self.weights.values())).shape[0])

    @property
    def embedding_dim(self) -> int:
        return int(next(iter(self.weights.values())).shape[2])

    @property
    def feature_dim(self) -> int:
        return self.filters_per_size * len(self.weights)

    @property
    def max_region_size(self) -> int:
        return max(self.weights)

    def named_parameters(self, prefix: str = "conv") -> Dict[str, np.ndarray]:
        params = {}
        for h in self.region_sizes:
            params[f"{prefix}.h{h}.weight"] = self.weights[h]
            params[f"{prefix}.h{h}.bias"] = self.biases[h]
        return params


@dataclass(eq=False)
class FeatureMaps:
    """Convolution output of one region size: maps[f] is filter f's feature map c"""
    region_size: int
    windows: np.ndarray          # (L, h·k) flattened sub-matrices of S
    pre_activation: np.ndarray   # (filters, L)
    maps: np.ndarray             # (filters, L), ReLU applied


def _windows(sentence: np.ndarray, h: int) -> np.ndarray:
    n, k = sentence.shape
    view = np.lib.stride_tricks.sliding_window_view(sentence, h, axis=0)  # (L, k, h)
    return view.transpose(0, 2, 1).reshape(n - h + 1, h * k)


def conv_forward(sentence: np.ndarray, bank: ConvFilterBank) -> Dict[int, FeatureMaps]:
    """
    Slide every filter over S: c_i = ReLU(w · S[i:i+h] + b), i = 0..n−h.

    Raises:
        ShapeError: S has the wrong width or fewer rows than a region size
    """
    n, k = sentence.shape
    if k != bank.embedding_dim:
        raise ShapeError(f"sentence matrix has {k} columns, filter bank expects {bank.embedding_dim}")

    outputs = {}
    for h in bank.region_sizes:
        if n < h:
            raise ShapeError(f"sentence length {n} is shorter than region size {h}")
        windows = _windows(sentence, h)
        w_flat = bank.weights[h].reshape(bank.filters_per_size, h * k)
        pre = w_flat @ windows.T + bank.biases[h][:, None]
        outputs[h] = FeatureMaps(region_size=h, windows=windows, pre_activation=pre,
                                 maps=activate(pre, "relu"))
    return outputs


def conv_backward(sentence_shape: Tuple[int, int], bank: ConvFilterBank,
                  outputs: Dict[int, FeatureMaps], d_maps: Dict[int, np.ndarray]
                  ) -> Tuple[np.ndarray, Dict[int, np.ndarray], Dict[int, np.ndarray]]:
    """
    Backward through conv + ReLU.

    Returns:
        (dL/dS, {h: dL/dw}, {h: dL/db})
    """
    n, k = sentence_shape
    d_sentence = np.zeros((n, k), dtype=DTYPE)
    d_weights, d_biases = {}, {}

    for h in bank.region_sizes:
        out = outputs[h]
        d_pre = d_maps[h] * activate_derivative(out.pre_activation, "relu")
        n_filters = bank.filters_per_size
        length = out.windows.shape[0]

        d_weights[h] = (d_pre @ out.windows).reshape(n_filters, h, k)
        d_biases[h] = d_pre.sum(axis=1)

        d_windows = (d_pre.T @ bank.weights[h].reshape(n_filters, h * k)).reshape(length, h, k)
        for offset in range(h):
            d_sentence[offset:offset + length] += d_windows[:, offset, :]

    return d_sentence, d_weights, d_biases


# ==================== POOLING ====================

def max_over_time(feature_map: np.ndarray) -> Tuple[float, int]:
    """Maximum of a feature map and its first index"""
    c = np.asarray(feature_map, dtype=DTYPE)
    if c.ndim != 1 or c.size == 0:
        raise ShapeError("max-over-time needs a non-empty feature map")
    index = int(np.argmax(c))
    return float(c[index]), index


def max_over_time_backward(upstream: float, index: int, length: int) -> np.ndarray:
    """Route the whole upstream gradient to the argmax position"""
    grad = np.zeros(length, dtype=DTYPE)
    grad[index] = upstream
    return grad


def pool_feature_maps(maps: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise max-over-time of a (filters × L) block; first index wins ties"""
    if maps.shape[1] == 0:
        raise ShapeError("max-over-time needs non-empty feature maps")
    argmax = np.argmax(maps, axis=1)
    return maps[np.arange(maps.shape[0]), argmax], argmax


def pool_feature_maps_backward(d_pooled: np.ndarray, argmax: np.ndarray, length: int) -> np.ndarray:
    d_maps = np.zeros((d_pooled.shape[0], length), dtype=DTYPE)
    d_maps[np.arange(d_pooled.shape[0]), argmax] = d_pooled
    return d_maps


def temporal_max_pool(sequence: np.ndarray, stride: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Non-overlapping max pooling along time.

    sequence is (L × features); output is (⌈L/stride⌉ × features). The last
    window may be shorter. Returns the pooled sequence and, per output cell,
    the absolute time index that won (first index on ties).
    """
    if stride < 1:
        raise ShapeError(f"pool stride must be >= 1, got {stride}")
    length, width = sequence.shape
    if length == 0:
        raise ShapeError("cannot pool an empty sequence")
    n_out = -(-length // stride)

    pooled = np.empty((n_out, width), dtype=DTYPE)
    argmax = np.empty((n_out, width), dtype=np.int64)
    for t in range(n_out):
        start = t * stride
        window = sequence[start:start + stride]
        local = np.argmax(window, axis=0)
        argmax[t] = start + local
        pooled[t] = window[local, np.arange(width)]
    return pooled, argmax


def temporal_max_pool_backward(d_pooled: np.ndarray, argmax: np.ndarray, length: int) -> np.ndarray:
    d_sequence = np.zeros((length, d_pooled.shape[1]), dtype=DTYPE)
    columns = np.broadcast_to(np.arange(d_pooled.shape[1]), argmax.shape)
    np.add.at(d_sequence, (argmax, columns), d_pooled)
    return d_sequence


# ==================== DROPOUT ====================

@dataclass(eq=False)
class DropoutMask:
    """Inverted-dropout mask: survivors scaled by 1/keep_prob; identity in infer mode"""
    keep_prob: float
    mask: np.ndarray
    mode: Mode = "train"

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.mode == "infer" or self.keep_prob == 1.0:
            return v
        if v.shape != self.mask.shape:
            raise ShapeError(f"dropout mask shape {self.mask.shape} != input shape {v.shape}")
        return v * self.mask / self.keep_prob

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return self.apply(grad)

    @classmethod
    def identity(cls, size: int) -> "DropoutMask":
        return cls(keep_prob=1.0, mask=np.ones(size, dtype=DTYPE), mode="infer")


def draw_dropout_mask(size: int, keep_prob: float, mode: Mode, rng: np.random.Generator) -> DropoutMask:
    """Draw a fresh mask; infer mode and keep_prob=1 never touch the generator"""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if mode == "infer" or keep_prob == 1.0:
        return DropoutMask(keep_prob=keep_prob, mask=np.ones(size, dtype=DTYPE), mode=mode)
    mask = (rng.random(size) < keep_prob).astype(DTYPE)
    return DropoutMask(keep_prob=keep_prob, mask=mask, mode=mode)


def dropout_apply(v: np.ndarray, keep_prob: float, mode: Mode, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout on a vector"""
    return draw_dropout_mask(v.shape[0], keep_prob, mode, rng).apply(v)


# ==================== DENSE SOFTMAX ====================

@dataclass(eq=False)
class DenseSoftmaxLayer:
    """Output layer: P(tag k | p) = softmax(pᵀw_k + z_k)"""
    weights: np.ndarray   # (feature_dim × K)
    biases: np.ndarray    # (K,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.weights.shape[1] != NUM_TAGS or self.biases.shape != (NUM_TAGS,):
            raise ShapeError(f"output layer must be (feature_dim × {NUM_TAGS}) with {NUM_TAGS} biases, "
                             f"got {self.weights.shape} and {self.biases.shape}")

    @classmethod
    def initialize(cls, feature_dim: int, rng: np.random.Generator) -> "DenseSoftmaxLayer":
        scale = glorot_scale(feature_dim, NUM_TAGS)
        return cls(weights=random_uniform_init(feature_dim, NUM_TAGS, scale, rng),
                   biases=np.zeros(NUM_TAGS, dtype=DTYPE))

    @property
    def feature_dim(self) -> int:
        return int(self.weights.shape[0])

    def named_parameters(self, prefix: str = "output") -> Dict[str, np.ndarray]:
        return {f"{prefix}.weight": self.weights, f"{prefix}.bias": self.biases}


def dense_softmax_forward(features: np.ndarray, layer: DenseSoftmaxLayer) -> np.ndarray:
    """Class distribution for a penultimate feature vector"""
    if features.shape != (layer.feature_dim,):
        raise ShapeError(f"features of shape {features.shape} do not match output layer "
                         f"feature_dim {layer.feature_dim}")
    return softmax(features @ layer.weights + layer.biases)


def dense_softmax_backward(features: np.ndarray, probs: np.ndarray, gold: int,
                           layer: DenseSoftmaxLayer) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Backward of cross-entropy through softmax and the dense layer.

    Returns:
        (dL/dfeatures, dL/dweights, dL/dbiases)
    """
    d_logits = probs.copy()
    d_logits[gold] -= 1.0
    return layer.weights @ d_logits, np.outer(features, d_logits), d_logits


# ==================== GRU ====================

GRU_FIELDS = ("W_z", "V_z", "b_z", "W_r", "V_r", "b_r", "W", "V", "b")


@dataclass(eq=False)
class GruParameters:
    """Update gate (z), reset gate (r) and candidate (W, V, b) parameters"""
    W_z: np.ndarray
    V_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    V_r: np.ndarray
    b_r: np.ndarray
    W: np.ndarray
    V: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        input_dim, hidden = self.W.shape
        for name in GRU_FIELDS:
            arr = getattr(self, name)
            expected = (input_dim, hidden) if name.startswith("W") else \
                (hidden, hidden) if name.startswith("V") else (hidden,)
            if arr.shape != expected:
                raise ShapeError(f"GRU parameter {name} must be {expected}, got {arr.shape}")

    @property
    def input_dim(self) -> int:
        return int(self.W.shape[0])

    @property
    def hidden(self) -> int:
        return int(self.W.shape[1])

    @classmethod
    def initialize(cls, input_dim: int, hidden: int, rng: np.random.Generator) -> "GruParameters":
        """Uniform ±√(6/(fan_in + fan_out)) matrices, zero biases"""
        arrays = {}
        for name in GRU_FIELDS:
            if name.startswith("W"):
                arrays[name] = random_uniform_init(input_dim, hidden, glorot_scale(input_dim, hidden), rng)
            elif name.startswith("V"):
                arrays[name] = random_uniform_init(hidden, hidden, glorot_scale(hidden, hidden), rng)
            else:
                arrays[name] = np.zeros(hidden, dtype=DTYPE)
        return cls(**arrays)

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "GruParameters":
        return cls(**{
            name: np.zeros((input_dim, hidden) if name.startswith("W") else
                           (hidden, hidden) if name.startswith("V") else hidden, dtype=DTYPE)
            for name in GRU_FIELDS
        })

    def zeros_like(self) -> "GruParameters":
        return GruParameters.zeros(self.input_dim, self.hidden)

    def named_parameters(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.{f.name}": getattr(self, f.name) for f in fields(self)}


@dataclass(eq=False)
class GruState:
    """One GRU step: new hidden state h plus the activations backprop needs"""
    h: np.ndarray
    z: np.ndarray
    r: np.ndarray
    c: np.ndarray        # candidate state c̃
    h_prev: np.ndarray
    x: np.ndarray


def gru_step(x_t: np.ndarray, h_prev: np.ndarray, params: GruParameters) -> GruState:
    """
    z = σ(x·W_z + h_prev·V_z + b_z)
    r = σ(x·W_r + h_prev·V_r + b_r)
    c̃ = tanh(x·W + (r ⊙ h_prev)·V + b)
    h = z ⊙ h_prev + (1 − z) ⊙ c̃
    """
    if x_t.shape != (params.input_dim,):
        raise ShapeError(f"GRU input has shape {x_t.shape}, expected ({params.input_dim},)")
    if h_prev.shape != (params.hidden,):
        raise ShapeError(f"GRU state has shape {h_prev.shape}, expected ({params.hidden},)")

    z = activate(x_t @ params.W_z + h_prev @ params.V_z + params.b_z, "sigmoid")
    r = activate(x_t @ params.W_r + h_prev @ params.V_r + params.b_r, "sigmoid")
    c = activate(x_t @ params.W + (r * h_prev) @ params.V + params.b, "tanh")
    h = z * h_prev + (1.0 - z) * c
    return GruState(h=h, z=z, r=r, c=c, h_prev=h_prev, x=x_t)


def gru_step_backward(state: GruState, d_h: np.ndarray, params: GruParameters,
                      grads: GruParameters) -> Tuple[np.ndarray, np.ndarray]:
    """
    Backward through one GRU step, accumulating parameter gradients into `grads`.

    Returns:
        (dL/dx_t, dL/dh_prev)
    """
    z, r, c, h_prev, x = state.z, state.r, state.c, state.h_prev, state.x

    d_z = d_h * (h_prev - c)
    d_c = d_h * (1.0 - z)
    d_h_prev = d_h * z

    # candidate
    d_a_c = d_c * (1.0 - c * c)
    reset_h = r * h_prev
    grads.W += np.outer(x, d_a_c)
    grads.V += np.outer(reset_h, d_a_c)
    grads.b += d_a_c
    d_x = params.W @ d_a_c
    d_reset_h = params.V @ d_a_c
    d_r = d_reset_h * h_prev
    d_h_prev += d_reset_h * r

    # update gate
    d_a_z = d_z * z * (1.0 - z)
    grads.W_z += np.outer(x, d_a_z)
    grads.V_z += np.outer(h_prev, d_a_z)
    grads.b_z += d_a_z
    d_x += params.W_z @ d_a_z
    d_h_prev += params.V_z @ d_a_z

    # reset gate
    d_a_r = d_r * r * (1.0 - r)
    grads.W_r += np.outer(x, d_a_r)
    grads.V_r += np.outer(h_prev, d_a_r)
    grads.b_r += d_a_r
    d_x += params.W_r @ d_a_r
    d_h_prev += params.V_r @ d_a_r

    return d_x, d_h_prev


def _gru_run(inputs: np.ndarray, params: GruParameters) -> List[GruState]:
    h = np.zeros(params.hidden, dtype=DTYPE)
    states = []
    for x_t in inputs:
        state = gru_step(x_t, h, params)
        states.append(state)
        h = state.h
    return states


@dataclass(eq=False)
class BiGruCache:
    """Forward-direction states (t=1..T) and backward-direction states (t=T..1)"""
    forward_states: List[GruState] = field(default_factory=list)
    backward_states: List[GruState] = field(default_factory=list)
    output: np.ndarray = None


def bigru_forward(inputs: np.ndarray, fwd: GruParameters, bwd: GruParameters) -> BiGruCache:
    """Run both directions from zero state; output = h_T(fwd) ⊕ h_1(bwd)"""
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ShapeError(f"bidirectional GRU needs a non-empty (T × input_dim) sequence, got {inputs.shape}")
    forward_states = _gru_run(inputs, fwd)
    backward_states = _gru_run(inputs[::-1], bwd)
    output = np.concatenate([forward_states[-1].h, backward_states[-1].h])
    return BiGruCache(forward_states=forward_states, backward_states=backward_states, output=output)


def bigru_encode(inputs: np.ndarray, fwd: GruParameters, bwd: GruParameters) -> np.ndarray:
    """Fixed-size (2 × hidden) encoding of a sequence"""
    return bigru_forward(inputs, fwd, bwd).output


def bigru_backward(cache: BiGruCache, d_output: np.ndarray, fwd: GruParameters, bwd: GruParameters,
                   d_fwd: GruParameters, d_bwd: GruParameters) -> np.ndarray:
    """
    Backward through both directions (BPTT), accumulating into d_fwd / d_bwd.

    Returns:
        dL/dinputs, (T × input_dim)
    """
    if not cache.forward_states or cache.output is None:
        raise MissingCacheError("bidirectional GRU backward needs the forward-pass states")

    steps = len(cache.forward_states)
    hidden = fwd.hidden
    d_inputs = np.zeros((steps, fwd.input_dim), dtype=DTYPE)

    d_h = d_output[:hidden].copy()
    for t in range(steps - 1, -1, -1):
        d_x, d_h = gru_step_backward(cache.forward_states[t], d_h, fwd, d_fwd)
        d_inputs[t] += d_x

    d_h = d_output[hidden:].copy()
    for s in range(steps - 1, -1, -1):
        d_x, d_h = gru_step_backward(cache.backward_states[s], d_h, bwd, d_bwd)
        d_inputs[steps - 1 - s] += d_x

    return d_inputs
