"""The nested base/sub-model family over shared canonical parameter groups.

A family with ``n`` hidden layers in the base model holds ``n + 1`` canonical
layer groups. Group 0 is the classifier head shared by every model; group g
(g >= 1) is a hidden-width square layer. Model m's layer list is

    [group m, group m-1, ..., group 0]

so model 0 is plain softmax regression and model n is the base model.
Removing the base model's first k layers yields model n-k exactly, because
the views alias one storage location per group.

Each group is "owned" by the model whose input layer it is. Updates touch
only owner slots: the pairwise-averaged gradient for group g combines model
g's input-layer gradient with model g+1's second-layer gradient, and the
base model's own input layer (group n) is updated from its single gradient,
unaveraged. This computes exactly the values that survive the per-minibatch
copy from lesser to bigger models; ``verify.LiteralFamily`` re-derives the
same trajectory the long way as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConsistencyError
from .nn import DenseLayer, LayerGrads

DEFAULT_INPUT_DIM = 784
DEFAULT_HIDDEN_DIM = 784
DEFAULT_CLASSES = 10


@dataclass
class CanonicalGroup:
    """One shared weight/bias storage location plus its owning model index."""

    id: int
    layer: DenseLayer
    owner: int


class ModelFamily:
    """n+1 nested model views over n+1 canonical parameter groups."""

    def __init__(self, n: int, groups: list[CanonicalGroup],
                 input_dim: int, hidden_dim: int, classes: int):
        if len(groups) != n + 1:
            raise ConsistencyError(f"need {n + 1} groups, got {len(groups)}")
        self.n = n
        self.groups = groups
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.classes = classes

    def view(self, m: int) -> list[DenseLayer]:
        """Model m's layer list (aliases of the shared storage)."""
        if not 0 <= m <= self.n:
            raise IndexError(f"model index {m} out of range [0, {self.n}]")
        return [self.groups[g].layer for g in range(m, -1, -1)]

    def views(self) -> list[list[DenseLayer]]:
        return [self.view(m) for m in range(self.n + 1)]


def init_layer(out_dim: int, in_dim: int, rng: np.random.Generator) -> DenseLayer:
    """Scaled-uniform init: weights in [-1/sqrt(fan_in), +1/sqrt(fan_in)],
    biases zero."""
    bound = 1.0 / np.sqrt(in_dim)
    weight = rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(np.float32)
    return DenseLayer(weight=weight, bias=np.zeros(out_dim, dtype=np.float32))


def build_family(n: int, input_dim: int = DEFAULT_INPUT_DIM,
                 hidden_dim: int = DEFAULT_HIDDEN_DIM,
                 classes: int = DEFAULT_CLASSES,
                 init_seed: int = 0) -> ModelFamily:
    """Allocate and initialize the n+1 canonical groups.

    Parameter tying forces the hidden width to equal the input width (a
    model's input layer doubles as the next model's first hidden layer).
    """
    if n < 1:
        raise ConfigError(f"family needs n >= 1 hidden layers, got {n}")
    if hidden_dim != input_dim:
        raise ConfigError(f"tying requires hidden_dim == input_dim, got "
                          f"{hidden_dim} != {input_dim}")
    groups = []
    for g in range(n + 1):
        rng = np.random.default_rng([init_seed, g])
        out_dim = classes if g == 0 else hidden_dim
        groups.append(CanonicalGroup(id=g, owner=g,
                                     layer=init_layer(out_dim, input_dim, rng)))
    return ModelFamily(n, groups, input_dim, hidden_dim, classes)


def param_count(family: ModelFamily, m: int) -> int:
    """Total weights plus biases of model m's view."""
    return sum(layer.weight.size + layer.bias.size for layer in family.view(m))


def copy_up(family: ModelFamily) -> None:
    """Enforce the lesser-to-bigger parameter copy across tied layers.

    With shared storage every tied pair aliases one array, so this is a
    consistency check rather than data movement. (The per-model-storage
    double in ``verify`` implements the actual overwrite.)
    """
    for m in range(1, family.n + 1):
        upper = family.view(m)
        lower = family.view(m - 1)
        for o, (lo, up) in enumerate(zip(lower, upper[1:])):
            if lo.weight.shape != up.weight.shape:
                raise ConsistencyError(
                    f"tied layers differ in shape at model {m}, layer {o + 2}: "
                    f"{up.weight.shape} vs {lo.weight.shape}")
            if lo is not up:
                up.weight[...] = lo.weight
                up.bias[...] = lo.bias


def paired_average_gradients(per_model_grads: list,
                             n: int | None = None) -> list[LayerGrads]:
    """Collapse per-model gradients into one gradient per canonical group.

    Group g < n averages model g's input-layer gradient with model g+1's
    second-layer gradient; group n (the base model's input layer) passes
    through unaveraged. Returns gradients indexed by group id.
    """
    if n is None:
        n = len(per_model_grads) - 1
    if len(per_model_grads) != n + 1:
        raise ConsistencyError(f"need gradients for {n + 1} models, "
                               f"got {len(per_model_grads)}")
    for m, grads in enumerate(per_model_grads):
        if len(grads) != m + 1:
            raise ConsistencyError(f"model {m} must have {m + 1} layer "
                                   f"gradients, got {len(grads)}")
    out: list[LayerGrads] = []
    for g in range(n + 1):
        own = per_model_grads[g][0]
        if g == n:
            out.append(LayerGrads(own.d_weight.copy(), own.d_bias.copy()))
            continue
        pair = per_model_grads[g + 1][1]
        if own.d_weight.shape != pair.d_weight.shape:
            raise ConsistencyError(
                f"group {g}: paired gradient shapes differ: "
                f"{own.d_weight.shape} vs {pair.d_weight.shape}")
        half = own.d_weight.dtype.type(0.5)
        out.append(LayerGrads(half * (own.d_weight + pair.d_weight),
                              half * (own.d_bias + pair.d_bias)))
    return out


def detach(family: ModelFamily, k: int) -> list[DenseLayer]:
    """The base model with its first k weight layers removed: model n-k's
    view, sharing storage with the family."""
    if not 0 <= k <= family.n:
        raise IndexError(f"cannot drop {k} layers from a base model with "
                         f"{family.n + 1}")
    return family.view(family.n - k)
