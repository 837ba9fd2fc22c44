"""Full-graph training loop.

Per epoch: draw two views, run the online encoder (and predictor) on
each, run the target encoder on the opposite view, assemble the variant
loss (symmetrized by default), backpropagate through the online branch
only, take one AdamW step, then move the target toward the online
parameters under the cosine EMA schedule. All randomness derives from the
seed; reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .augment import AugmentConfig, sample_views
from .bootstrap import EmaSchedule, ema_decay_at, ema_update
from .encoder import (EncoderState, ema_pairs, gcn_forward, init_encoder_state,
                      predictor_forward, trainable_params)
from .errors import ConfigError, DataError, NumericError, ParseError
from .evaluation import kmeans, linear_probe, nmi, random_splits
from .graph import Labels, SparseGraph, neighbor_list, normalize_adjacency
from .objective import LossConfig, loss_terms, symmetrize

LOG_COLUMNS = ("epoch", "loss", "loss_node_term", "loss_neighbor_term",
               "lr", "ema_decay", "acc", "nmi")


@dataclass
class TrainConfig:
    epochs: int = 2000
    lr: float = 5e-4
    warmup_epochs: int = 100
    weight_decay: float = 1e-5
    seed: int = 0
    eval_every: int = 250
    hidden_dim: int = 256
    embed_dim: int = 128
    predictor_hidden: int = 512
    n_layers: int = 2
    ema_t_base: float = 0.99
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be non-negative")
        if self.eval_every < 0:
            raise ConfigError(f"eval_every must be >= 0, got {self.eval_every}")
        if min(self.hidden_dim, self.embed_dim, self.predictor_hidden, self.n_layers) < 1:
            raise ConfigError("architecture sizes must be >= 1")
        if not (0.0 <= self.ema_t_base <= 1.0):
            raise ConfigError(f"ema_t_base={self.ema_t_base} outside [0, 1]")


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

_CONFIG_KEYS = {
    "epochs": int, "lr": float, "warmup_epochs": int, "weight_decay": float,
    "seed": int, "eval_every": int, "hidden_dim": int, "embed_dim": int,
    "predictor_hidden": int, "n_layers": int, "ema_t_base": float,
    "p_m1": float, "p_d1": float, "p_m2": float, "p_d2": float,
    "variant": str, "tau": float, "symmetric": bool,
    "neighbor_term_weight": float, "grad_through_scores": bool,
}


def _coerce(key: str, raw: str, path: str, lineno: int):
    kind = _CONFIG_KEYS[key]
    try:
        if kind is bool:
            word = raw.strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[word]
        return kind(raw.strip())
    except ValueError:
        raise ParseError(f"{path}:{lineno}: cannot read {key} from {raw!r}") from None


def parse_config_file(path: str) -> dict:
    """Flat `key = value` text; blank lines and # comments are skipped."""
    mapping: dict = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except FileNotFoundError:
        raise ConfigError(f"missing config file {path}") from None
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"{path}:{lineno}: expected key = value")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        mapping[key] = _coerce(key, raw, path, lineno)
    return mapping


def config_from_mapping(mapping: dict) -> TrainConfig:
    """Build a TrainConfig from a flat mapping of the documented keys."""
    unknown = set(mapping) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    aug_keys = {"p_m1", "p_d1", "p_m2", "p_d2"}
    loss_keys = {"variant", "tau", "symmetric", "neighbor_term_weight", "grad_through_scores"}
    aug = AugmentConfig(**{k: mapping[k] for k in aug_keys & set(mapping)})
    loss = LossConfig(**{k: mapping[k] for k in loss_keys & set(mapping)})
    top = {k: v for k, v in mapping.items() if k not in aug_keys | loss_keys}
    return TrainConfig(augment=aug, loss=loss, **top)


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Linear warmup from 0 over warmup_epochs, then cosine decay to 0."""
    if not (0 <= epoch < cfg.epochs):
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    w = cfg.warmup_epochs
    if epoch < w:
        return cfg.lr * epoch / w
    if cfg.epochs == w:
        return cfg.lr
    progress = (epoch - w) / (cfg.epochs - w)
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


BETA1, BETA2 = 0.9, 0.999
ADAM_EPS = 1e-8


class AdamWState:
    """First/second-moment buffers and the shared step counter."""

    def __init__(self):
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adamw_step(opt: AdamWState, params: list[tuple[str, ad.Tensor, bool]],
               grads: dict[ad.Tensor, np.ndarray], lr_t: float,
               weight_decay: float) -> None:
    """One decoupled-weight-decay Adam step, in place.

    Parameters flagged decay-exempt (batchnorm affine, PReLU slopes) skip
    the multiplicative shrink. A parameter with no gradient entry is
    treated as having a zero gradient.
    """
    opt.step += 1
    bc1 = 1.0 - BETA1 ** opt.step
    bc2 = 1.0 - BETA2 ** opt.step
    for name, tensor, exempt in params:
        g = grads.get(tensor)
        if g is None:
            g = np.zeros(tensor.shape)
        if name not in opt.m:
            opt.m[name] = np.zeros(tensor.shape)
            opt.v[name] = np.zeros(tensor.shape)
        m, v = opt.m[name], opt.v[name]
        m[:] = BETA1 * m + (1.0 - BETA1) * g
        v[:] = BETA2 * v + (1.0 - BETA2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        if not exempt and weight_decay > 0.0:
            tensor.data *= 1.0 - lr_t * weight_decay
        tensor.data -= lr_t * update


@dataclass
class TrainResult:
    state: EncoderState
    log_rows: list[dict]
    best_acc: float | None = None
    best_epoch: int | None = None

    @property
    def final_row(self) -> dict:
        return self.log_rows[-1]


def compute_embeddings(state: EncoderState, g: SparseGraph) -> np.ndarray:
    """Online-encoder embeddings of the un-augmented graph, inference mode."""
    adj = normalize_adjacency(g)
    H = gcn_forward(state.online_layers, adj, g.features, train_mode=False)
    return H.data.copy()


def _snapshot_metrics(H: np.ndarray, labels: Labels, seed: int) -> tuple[float, float]:
    split = random_splits(labels, seed=seed)
    acc = linear_probe(H, labels, split)
    assign = kmeans(H, labels.n_classes, seed=seed, n_init=3)
    return acc, nmi(labels, assign)


def _require_finite(value: float, epoch: int, node: float, nbr: float) -> None:
    if not math.isfinite(value):
        raise NumericError(
            f"non-finite loss at epoch {epoch}: total={value}, "
            f"node_term={node}, neighbor_term={nbr}")


def train(g: SparseGraph, labels: Labels | None, cfg: TrainConfig) -> TrainResult:
    """Run the configured variant on graph g. labels may be None unless
    the variant is bgrl_clean or evaluation snapshots are requested."""
    if cfg.loss.variant == "bgrl_clean" and labels is None:
        raise ConfigError("bgrl_clean requires labels")
    if cfg.eval_every > 0 and labels is None:
        raise ConfigError("evaluation snapshots (eval_every > 0) require labels")
    if labels is not None and len(labels.values) != g.n_nodes:
        raise ConfigError(f"{len(labels.values)} labels for {g.n_nodes} nodes")

    root = np.random.SeedSequence(cfg.seed)
    init_ss, aug_ss = root.spawn(2)
    state = init_encoder_state(g.n_features, cfg.hidden_dim, cfg.embed_dim,
                               cfg.predictor_hidden, np.random.default_rng(init_ss),
                               n_layers=cfg.n_layers)
    params = trainable_params(state)
    pairs = ema_pairs(state)
    opt = AdamWState()
    nbrs = neighbor_list(g)
    epoch_seeds = aug_ss.spawn(cfg.epochs)

    log_rows: list[dict] = []
    best_acc: float | None = None
    best_epoch: int | None = None

    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(epoch_seeds[epoch])
        (g1, X1), (g2, X2) = sample_views(g, g.features, cfg.augment, rng)
        adj1, adj2 = normalize_adjacency(g1), normalize_adjacency(g2)
        views = ((adj1, X1), (adj2, X2))

        term_values = []

        def direction_loss(swapped: bool):
            (adj_on, X_on), (adj_tg, X_tg) = (views[1], views[0]) if swapped else views
            H1 = gcn_forward(state.online_layers, adj_on, X_on, train_mode=True)
            Z1 = predictor_forward(state.predictor, H1)
            H2 = gcn_forward(state.target_layers, adj_tg, X_tg, train_mode=True)
            terms = loss_terms(cfg.loss, Z1, ad.detach(H2), H1, nbrs, labels)
            term_values.append((terms.node_value, terms.neighbor_value))
            return terms.total

        with ad.Tape() as _:
            loss = symmetrize(direction_loss, cfg.loss.symmetric)
        loss_value = loss.item()
        node_value = float(np.mean([t[0] for t in term_values]))
        nbr_value = float(np.mean([t[1] for t in term_values]))
        _require_finite(loss_value, epoch, node_value, nbr_value)

        grads = ad.backward(loss)
        lr_t = lr_at(cfg, epoch)
        adamw_step(opt, params, grads, lr_t, cfg.weight_decay)
        decay = ema_decay_at(EmaSchedule(cfg.ema_t_base, cfg.epochs, epoch))
        ema_update([t for t, _ in pairs], [o for _, o in pairs], decay)

        row = {"epoch": epoch, "loss": loss_value, "loss_node_term": node_value,
               "loss_neighbor_term": nbr_value, "lr": lr_t, "ema_decay": decay,
               "acc": None, "nmi": None}
        if cfg.eval_every > 0 and (epoch + 1) % cfg.eval_every == 0:
            H = compute_embeddings(state, g)
            acc, snapshot_nmi = _snapshot_metrics(H, labels, cfg.seed)
            row["acc"], row["nmi"] = acc, snapshot_nmi
            if best_acc is None or acc > best_acc:
                best_acc, best_epoch = acc, epoch
        log_rows.append(row)

    return TrainResult(state, log_rows, best_acc, best_epoch)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_log_csv(rows: list[dict], path: str) -> None:
    """Training log as CSV; metric columns are blank off-snapshot."""
    with open(path, "w") as f:
        f.write(",".join(LOG_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row[c]) for c in LOG_COLUMNS) + "\n")


def write_embeddings_csv(H: np.ndarray, path: str) -> None:
    with open(path, "w") as f:
        for row in H:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def load_embeddings_csv(path: str, n_nodes: int) -> np.ndarray:
    """Read an embeddings CSV and check it covers every node."""
    rows = []
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rows.append([float(t) for t in line.strip().split(",")])
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: non-numeric value") from None
    except FileNotFoundError:
        raise DataError(f"missing embeddings file {path}") from None
    H = np.array(rows, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != n_nodes:
        raise ParseError(f"{path}: {len(rows)} embedding rows for {n_nodes} nodes")
    return H
