"""GCN encoder and MLP predictor: parameter containers, initialization,
forward passes over the autodiff ops, and checkpoint round-trips.

Each GCN layer computes spmm(norm_adj, H) @ W + b, batch-normalizes over
the node dimension, then applies PReLU with a learnable scalar slope.
The predictor is a two-layer MLP without normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError
from .graph import CsrMatrix

BN_MOMENTUM = 0.1
BN_VAR_FLOOR = 1e-5
PRELU_INIT = 0.25


@dataclass
class GCNLayerParams:
    """One graph-convolution layer's learnable state plus BN buffers."""

    weight: Tensor
    bias: Tensor
    prelu_slope: Tensor
    bn_gamma: Tensor
    bn_beta: Tensor
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray


@dataclass
class PredictorParams:
    """Two-layer MLP: H @ w1 + b1 -> PReLU -> @ w2 + b2."""

    w1: Tensor
    b1: Tensor
    prelu_slope: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class EncoderState:
    """Online encoder, its EMA target copy, and the online-only predictor."""

    online_layers: list[GCNLayerParams]
    target_layers: list[GCNLayerParams]
    predictor: PredictorParams

    @property
    def embed_dim(self) -> int:
        return self.online_layers[-1].weight.shape[1]

    @property
    def n_features(self) -> int:
        return self.online_layers[0].weight.shape[0]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _init_layer(rng: np.random.Generator, d_in: int, d_out: int,
                requires_grad: bool) -> GCNLayerParams:
    return GCNLayerParams(
        weight=Tensor(glorot(rng, d_in, d_out), requires_grad=requires_grad),
        bias=Tensor(np.zeros((1, d_out)), requires_grad=requires_grad),
        prelu_slope=Tensor(np.array([[PRELU_INIT]]), requires_grad=requires_grad),
        bn_gamma=Tensor(np.ones((1, d_out)), requires_grad=requires_grad),
        bn_beta=Tensor(np.zeros((1, d_out)), requires_grad=requires_grad),
        bn_running_mean=np.zeros((1, d_out)),
        bn_running_var=np.ones((1, d_out)),
    )


def clone_layers(layers: list[GCNLayerParams], requires_grad: bool) -> list[GCNLayerParams]:
    """Deep copy; the clone never shares storage with the source."""
    out = []
    for lay in layers:
        out.append(GCNLayerParams(
            weight=Tensor(lay.weight.data.copy(), requires_grad=requires_grad),
            bias=Tensor(lay.bias.data.copy(), requires_grad=requires_grad),
            prelu_slope=Tensor(lay.prelu_slope.data.copy(), requires_grad=requires_grad),
            bn_gamma=Tensor(lay.bn_gamma.data.copy(), requires_grad=requires_grad),
            bn_beta=Tensor(lay.bn_beta.data.copy(), requires_grad=requires_grad),
            bn_running_mean=lay.bn_running_mean.copy(),
            bn_running_var=lay.bn_running_var.copy(),
        ))
    return out


def init_encoder_state(n_features: int, hidden_dim: int, embed_dim: int,
                       predictor_hidden: int, rng: np.random.Generator,
                       n_layers: int = 2) -> EncoderState:
    """Glorot weights, zero biases, PReLU slopes 0.25, identity batchnorm.

    The target starts as an exact detached copy of the online encoder.
    """
    if n_layers < 1:
        raise ValueError(f"need at least one layer, got {n_layers}")
    dims = [n_features] + [hidden_dim] * (n_layers - 1) + [embed_dim]
    online = [_init_layer(rng, dims[i], dims[i + 1], True) for i in range(n_layers)]
    target = clone_layers(online, requires_grad=False)
    predictor = PredictorParams(
        w1=Tensor(glorot(rng, embed_dim, predictor_hidden), requires_grad=True),
        b1=Tensor(np.zeros((1, predictor_hidden)), requires_grad=True),
        prelu_slope=Tensor(np.array([[PRELU_INIT]]), requires_grad=True),
        w2=Tensor(glorot(rng, predictor_hidden, embed_dim), requires_grad=True),
        b2=Tensor(np.zeros((1, embed_dim)), requires_grad=True),
    )
    return EncoderState(online, target, predictor)


def gcn_forward(layers: list[GCNLayerParams], norm_adj: CsrMatrix, X,
                train_mode: bool, *, use_batchnorm: bool = True,
                update_running: bool | None = None) -> Tensor:
    """Run the stack of GCN layers on features X over norm_adj."""
    H = X if isinstance(X, Tensor) else Tensor(X)
    if norm_adj.shape[1] != H.shape[0]:
        raise ValueError(f"gcn_forward: adjacency {norm_adj.shape} vs features {H.shape}")
    for lay in layers:
        H = ad.spmm(norm_adj, H)
        H = ad.add_bias(ad.matmul(H, lay.weight), lay.bias)
        if use_batchnorm:
            H = ad.batchnorm(H, lay.bn_gamma, lay.bn_beta,
                             lay.bn_running_mean, lay.bn_running_var,
                             train_mode=train_mode, momentum=BN_MOMENTUM,
                             var_floor=BN_VAR_FLOOR, update_running=update_running)
        H = ad.prelu(H, lay.prelu_slope)
    return H


def predictor_forward(p: PredictorParams, H: Tensor) -> Tensor:
    z = ad.add_bias(ad.matmul(H, p.w1), p.b1)
    z = ad.prelu(z, p.prelu_slope)
    return ad.add_bias(ad.matmul(z, p.w2), p.b2)


def trainable_params(state: EncoderState) -> list[tuple[str, Tensor, bool]]:
    """(name, tensor, weight_decay_exempt) for every online parameter.

    Batchnorm affine parameters and PReLU slopes are decay-exempt.
    Ordering is fixed and deterministic.
    """
    out: list[tuple[str, Tensor, bool]] = []
    for i, lay in enumerate(state.online_layers):
        out.append((f"online.layer{i}.weight", lay.weight, False))
        out.append((f"online.layer{i}.bias", lay.bias, False))
        out.append((f"online.layer{i}.prelu_slope", lay.prelu_slope, True))
        out.append((f"online.layer{i}.bn_gamma", lay.bn_gamma, True))
        out.append((f"online.layer{i}.bn_beta", lay.bn_beta, True))
    p = state.predictor
    out.append(("predictor.w1", p.w1, False))
    out.append(("predictor.b1", p.b1, False))
    out.append(("predictor.prelu_slope", p.prelu_slope, True))
    out.append(("predictor.w2", p.w2, False))
    out.append(("predictor.b2", p.b2, False))
    return out


def _layer_arrays(lay: GCNLayerParams) -> list[tuple[str, np.ndarray]]:
    return [("weight", lay.weight.data), ("bias", lay.bias.data),
            ("prelu_slope", lay.prelu_slope.data),
            ("bn_gamma", lay.bn_gamma.data), ("bn_beta", lay.bn_beta.data),
            ("bn_running_mean", lay.bn_running_mean),
            ("bn_running_var", lay.bn_running_var)]


def ema_pairs(state: EncoderState) -> list[tuple[np.ndarray, np.ndarray]]:
    """(target_array, online_array) pairs covering weights, biases, slopes,
    batchnorm affine parameters and batchnorm running statistics."""
    pairs = []
    for t_lay, o_lay in zip(state.target_layers, state.online_layers):
        for (_, t_arr), (_, o_arr) in zip(_layer_arrays(t_lay), _layer_arrays(o_lay)):
            pairs.append((t_arr, o_arr))
    return pairs


def checkpoint_arrays(state: EncoderState) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for side, layers in (("online", state.online_layers), ("target", state.target_layers)):
        for i, lay in enumerate(layers):
            for name, arr in _layer_arrays(lay):
                out[f"{side}.layer{i}.{name}"] = arr
    p = state.predictor
    for name, t in (("w1", p.w1), ("b1", p.b1), ("prelu_slope", p.prelu_slope),
                    ("w2", p.w2), ("b2", p.b2)):
        out[f"predictor.{name}"] = t.data
    return out


def save_checkpoint(path: str, state: EncoderState) -> None:
    """Write every named parameter matrix to an .npz archive (value-exact)."""
    np.savez(path, **checkpoint_arrays(state))


def load_checkpoint(path: str) -> EncoderState:
    try:
        archive = np.load(path)
    except (FileNotFoundError, ValueError) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from None

    def layer_from(side: str, i: int, requires_grad: bool) -> GCNLayerParams:
        def get(name):
            key = f"{side}.layer{i}.{name}"
            if key not in archive:
                raise DataError(f"checkpoint {path} is missing array {key!r}")
            return archive[key].astype(np.float64)
        return GCNLayerParams(
            weight=Tensor(get("weight"), requires_grad=requires_grad),
            bias=Tensor(get("bias"), requires_grad=requires_grad),
            prelu_slope=Tensor(get("prelu_slope"), requires_grad=requires_grad),
            bn_gamma=Tensor(get("bn_gamma"), requires_grad=requires_grad),
            bn_beta=Tensor(get("bn_beta"), requires_grad=requires_grad),
            bn_running_mean=get("bn_running_mean"),
            bn_running_var=get("bn_running_var"),
        )

    n_layers = len({k.split(".")[1] for k in archive.files if k.startswith("online.")})
    if n_layers == 0:
        raise DataError(f"checkpoint {path} holds no online layers")
    online = [layer_from("online", i, True) for i in range(n_layers)]
    target = [layer_from("target", i, False) for i in range(n_layers)]

    def pget(name):
        key = f"predictor.{name}"
        if key not in archive:
            raise DataError(f"checkpoint {path} is missing array {key!r}")
        return archive[key].astype(np.float64)

    predictor = PredictorParams(
        w1=Tensor(pget("w1"), requires_grad=True),
        b1=Tensor(pget("b1"), requires_grad=True),
        prelu_slope=Tensor(pget("prelu_slope"), requires_grad=True),
        w2=Tensor(pget("w2"), requires_grad=True),
        b2=Tensor(pget("b2"), requires_grad=True),
    )
    return EncoderState(online, target, predictor)
