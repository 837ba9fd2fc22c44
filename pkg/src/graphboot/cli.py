"""Command-line interface.

Subcommands: synth, stats, train, embed, eval, ablate. Report-producing
paths write delimited files and render a PNG figure next to each (skip
with --no-figures). Exit codes: 0 success, 1 usage/configuration error,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evaluation, plots
from .encoder import gcn_forward, load_checkpoint, save_checkpoint
from .errors import DataError, NumericError, UsageError
from .graph import edge_homophily, load_graph, neighbor_list, normalize_adjacency, save_graph
from .objective import supportiveness
from .synth import SbmConfig, generate_sbm
from .trainer import (compute_embeddings, config_from_mapping,
                      load_embeddings_csv, parse_config_file, train,
                      write_embeddings_csv, write_log_csv)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as UsageError (exit 1)."""

    def error(self, message):
        raise UsageError(message)


def _fmt(v: float) -> str:
    return repr(float(v))


def _parse_int_list(raw: str, flag: str) -> list[int]:
    try:
        values = [int(tok) for tok in raw.split(",") if tok.strip() != ""]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {raw!r}") from None
    if not values:
        raise UsageError(f"{flag} expects at least one integer")
    return values


def cmd_synth(args) -> int:
    cfg = SbmConfig(n_nodes=args.nodes, n_classes=args.classes,
                    p_intra=args.p_intra, p_inter=args.p_inter,
                    feature_dim=args.dim, class_mean_separation=args.sep,
                    noise_std=args.noise, seed=args.seed)
    g, labels = generate_sbm(cfg)
    save_graph(args.out, g, labels)
    print(f"wrote {args.out}: {g.n_nodes} nodes, {g.n_undirected_edges} undirected edges, "
          f"{g.n_features} features, {labels.n_classes} classes")
    return 0


def cmd_stats(args) -> int:
    g, labels = load_graph(args.data)
    if labels is None:
        raise DataError("stats requires labels.txt in the graph directory")
    print(f"nodes {g.n_nodes}  edges {g.n_undirected_edges} undirected "
          f"({g.n_edges} directed slots)  features {g.n_features}  classes {labels.n_classes}")
    if labels.all_known() and g.n_edges > 0:
        h = edge_homophily(g, labels)
        print(f"homophily {h:.4f} ({100.0 * h:.2f}%)")
    else:
        print("homophily n/a")
    return 0


def _train_mapping(args, labels) -> dict:
    """Defaults, then config file, then explicit flags. Snapshot
    evaluation silently turns off on unlabeled data unless asked for."""
    mapping: dict = {}
    if args.config:
        mapping.update(parse_config_file(args.config))
    for key, value in (("variant", args.variant), ("tau", args.tau),
                       ("seed", args.seed), ("epochs", args.epochs),
                       ("lr", args.lr), ("warmup_epochs", args.warmup_epochs),
                       ("eval_every", args.eval_every)):
        if value is not None:
            mapping[key] = value
    if labels is None and "eval_every" not in mapping:
        mapping["eval_every"] = 0
    return mapping


def _write_profile(out_dir: str, state, g, labels, tau: float, figures: bool) -> None:
    """Supportiveness homophily profile of the trained model, when defined."""
    if labels is None or not labels.all_known() or g.n_edges < 4:
        return
    adj = normalize_adjacency(g)
    H1 = gcn_forward(state.online_layers, adj, g.features, train_mode=False)
    H2 = gcn_forward(state.target_layers, adj, g.features, train_mode=False)
    scores = supportiveness(H1, H2, neighbor_list(g), tau)
    profiles = {}
    for key in ("weight", "cosine"):
        fractions, sizes = evaluation.weight_homophily_profile(scores, labels, n_bins=4, by=key)
        profiles[key] = (fractions, sizes)
    path = os.path.join(out_dir, "profile.csv")
    with open(path, "w") as f:
        f.write("ordering,bin,count,intra_class_fraction\n")
        for key, (fractions, sizes) in profiles.items():
            for b, (frac, size) in enumerate(zip(fractions, sizes)):
                f.write(f"{key},{b},{size},{_fmt(frac)}\n")
    if figures:
        plots.save_homophily_profile(profiles, os.path.join(out_dir, "profile.png"))


def cmd_train(args) -> int:
    g, labels = load_graph(args.data)
    cfg = config_from_mapping(_train_mapping(args, labels))
    result = train(g, labels, cfg)
    os.makedirs(args.out, exist_ok=True)
    write_log_csv(result.log_rows, os.path.join(args.out, "training_log.csv"))
    save_checkpoint(os.path.join(args.out, "checkpoint.npz"), result.state)
    H = compute_embeddings(result.state, g)
    write_embeddings_csv(H, os.path.join(args.out, "embeddings.csv"))
    if not args.no_figures:
        plots.save_training_curves(result.log_rows, os.path.join(args.out, "training_curves.png"))
    _write_profile(args.out, result.state, g, labels, cfg.loss.tau, not args.no_figures)
    final = result.final_row
    print(f"trained {cfg.loss.variant} for {cfg.epochs} epochs: "
          f"final loss {final['loss']:.6f} "
          f"(node {final['loss_node_term']:.6f}, neighbor {final['loss_neighbor_term']:.6f})")
    if result.best_acc is not None:
        print(f"best snapshot accuracy {result.best_acc:.4f} at epoch {result.best_epoch}")
    print(f"outputs in {args.out}")
    return 0


def cmd_embed(args) -> int:
    g, _ = load_graph(args.data)
    state = load_checkpoint(args.checkpoint)
    if state.n_features != g.n_features:
        raise DataError(f"checkpoint expects {state.n_features} features, "
                        f"dataset has {g.n_features}")
    H = compute_embeddings(state, g)
    write_embeddings_csv(H, args.out)
    print(f"wrote {args.out}: {H.shape[0]} x {H.shape[1]} embeddings")
    return 0


def cmd_eval(args) -> int:
    g, labels = load_graph(args.data)
    if labels is None:
        raise DataError("evaluation requires labels.txt in the graph directory")
    H = load_embeddings_csv(args.embeddings, g.n_nodes)
    ks = tuple(_parse_int_list(args.k, "--k"))
    if args.splits < 1:
        raise UsageError(f"--splits must be >= 1, got {args.splits}")
    reports = [evaluation.evaluate_embeddings(H, labels, seed, ks)
               for seed in range(args.splits)]
    rows = [row for rep in reports for row in rep.rows()]
    metrics: dict[str, list[float]] = {}
    for name, _, value in rows:
        metrics.setdefault(name, []).append(value)
    stats = {name: (float(np.mean(vals)), float(np.std(vals)))
             for name, vals in metrics.items()}
    for name, (mean, std) in stats.items():
        print(f"{name}: {mean:.4f} +/- {std:.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "report.csv")
        with open(path, "w") as f:
            f.write("metric,split_seed,value\n")
            for name, seed, value in rows:
                f.write(f"{name},{seed},{_fmt(value)}\n")
        if not args.no_figures:
            plots.save_eval_summary(stats, os.path.join(args.out, "report.png"))
        print(f"report in {args.out}")
    return 0


ABLATE_VARIANTS = ("bgrl", "blnn", "bgrl_noisy", "bgrl_clean")


def cmd_ablate(args) -> int:
    g, labels = load_graph(args.data)
    if labels is None:
        raise DataError("ablate needs labels for bgrl_clean and for evaluation")
    seeds = _parse_int_list(args.seeds, "--seeds")
    base: dict = {}
    if args.config:
        base.update(parse_config_file(args.config))
    if args.tau is not None:
        base["tau"] = args.tau
    if args.epochs is not None:
        base["epochs"] = args.epochs
    base.setdefault("eval_every", 0)  # snapshots off during sweeps

    rows: list[dict] = []
    for variant in ABLATE_VARIANTS:
        for seed in seeds:
            mapping = dict(base, variant=variant, seed=seed)
            cfg = config_from_mapping(mapping)
            result = train(g, labels, cfg)
            H = compute_embeddings(result.state, g)
            accs = [evaluation.linear_probe(H, labels, evaluation.random_splits(labels, seed=s))
                    for s in range(args.splits)]
            assign = evaluation.kmeans(H, labels.n_classes, seed=seed)
            final = result.final_row
            row = {
                "variant": variant, "seed": seed,
                "accuracy_mean": float(np.mean(accs)),
                "accuracy_std": float(np.std(accs)),
                "nmi": evaluation.nmi(labels, assign),
                "homogeneity": evaluation.homogeneity(labels, assign),
                "s_at_5": evaluation.s_at_k(H, labels, 5) if g.n_nodes > 5 else float("nan"),
                "s_at_10": evaluation.s_at_k(H, labels, 10) if g.n_nodes > 10 else float("nan"),
                "compactness": evaluation.compactness(H, labels),
                "final_loss": final["loss"],
                "final_loss_node_term": final["loss_node_term"],
                "final_loss_neighbor_term": final["loss_neighbor_term"],
            }
            rows.append(row)
            print(f"{variant} seed {seed}: accuracy {row['accuracy_mean']:.4f} "
                  f"+/- {row['accuracy_std']:.4f}, nmi {row['nmi']:.4f}")

    os.makedirs(args.out, exist_ok=True)
    columns = list(rows[0].keys())
    path = os.path.join(args.out, "ablation.csv")
    with open(path, "w") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(str(row[c]) if c in ("variant", "seed") else _fmt(row[c])
                             for c in columns) + "\n")
    if not args.no_figures:
        plots.save_ablation_summary(rows, os.path.join(args.out, "ablation.png"))
    print(f"ablation table in {path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="graphboot",
                     description="Bootstrapped graph representation learning at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a stochastic block model graph directory")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--p-intra", type=float, required=True)
    p.add_argument("--p-inter", type=float, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sep", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="print dataset statistics and homophily")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one variant and write its artifacts")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--variant", choices=ABLATE_VARIANTS, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--warmup-epochs", type=int, default=None)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed a dataset with a trained checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="evaluate an embeddings CSV against labels")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", default="5,10")
    p.add_argument("--splits", type=int, default=20)
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare all variants")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--seeds", default="0")
    p.add_argument("--splits", type=int, default=20)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
