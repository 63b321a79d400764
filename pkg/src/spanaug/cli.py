"""``spanaug`` command line: gen, scheme, sample, spectrum, casestudy, preanalysis, train, probe, verify."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines, gcl, oracle
from .augment import (AugmentationScheme, SchemeConfig, inter_intra_probability_summary, optimize_scheme,
                      sample_view, zero_scheme)
from .graph import (Graph, degree_features, generate_random_geometric, generate_sbm, load_graph,
                    read_declared_n, save_graph)
from .io import companions, read_matrix, write_csv, write_manifest, write_matrix
from .spectral import (SpectralSelection, algebraic_connectivity, connected_components_spectral,
                       diameter_bounds, graph_spectrum, spectral_distance, spectrum_norm_grad)

log = logging.getLogger("spanaug")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def load_bundle(path) -> Graph:
    """Edge list plus whichever companion CSVs sit next to it; degree features if none."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such graph file: {path}")
    comp = companions(path)
    g = load_graph(path, n=read_declared_n(path),
                   features=comp["features"] if comp["features"].exists() else None,
                   labels=comp["labels"] if comp["labels"].exists() else None)
    pos = read_matrix(comp["positions"]) if comp["positions"].exists() else None
    x = g.features if g.features is not None else degree_features(g.adjacency)
    return Graph(g.adjacency, x, g.node_labels, pos, g.meta)


def save_bundle(g: Graph, out: Path, name: str) -> list[Path]:
    """Edge list plus headerless companion CSVs (row i belongs to node i)."""
    edges = out / f"{name}.edges"
    comp = companions(edges)
    present = {"features": g.features, "labels": g.node_labels, "positions": g.positions}
    save_graph(g, edges, **{k: comp[k] for k, v in present.items() if v is not None})
    return [edges] + [comp[k] for k, v in present.items() if v is not None]


def _labels_for(g: Graph, labels_path, seed: int, k: int | None = None) -> np.ndarray:
    if labels_path:
        return read_matrix(labels_path, int)[:, 0]
    if g.node_labels is not None:
        return np.asarray(g.node_labels)
    k = k or baselines.eigengap_k(g)
    log.info("no labels given; spectral clustering with k=%d", k)
    return baselines.spectral_clustering(g, k, seed=seed)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------- commands


def cmd_gen(args, out: Path) -> None:
    if args.kind == "sbm":
        g = generate_sbm(args.n, args.k, args.p_in, args.p_out, args.seed)
    elif args.kind == "geometric":
        g = generate_random_geometric(args.n, args.radius, args.seed)
    else:
        if not args.input:
            raise UsageError("gen edgelist needs --input")
        g = load_bundle(args.input)
    for p in save_bundle(g, out, args.name):
        print(p)


def _scheme_config(args, g: Graph) -> SchemeConfig:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if args.epsilon_ratio < 0:
        raise UsageError("--epsilon-ratio must be >= 0")
    sel = None
    if args.K is not None:
        if args.K < 1:
            raise UsageError("--K must be >= 1")
        sel = SpectralSelection(args.K)
        if sel.is_full(g.n):
            log.info("K=%d covers all %d eigenvalues; using the full decomposition", args.K, g.n)
            sel = None
    return SchemeConfig(mode=args.mode, epsilon=args.epsilon_ratio * 2 * g.m, steps=args.steps, lr=args.lr,
                        selection=sel, noise_eps=args.noise, noise_seed=args.seed, init_seed=args.seed,
                        removal_only=args.removal_only, init=args.init)


def _write_trajectory(path, scheme: AugmentationScheme) -> None:
    cols = ["step", "lgs1", "lgs2", "ratio1", "ratio2", "objective"]
    write_csv(path, cols, [[r[c] for c in cols] for r in scheme.trajectory])


def cmd_scheme(args, out: Path) -> None:
    g = load_bundle(args.graph)
    scheme = optimize_scheme(g, _scheme_config(args, g))
    (out / "scheme.json").write_text(scheme.to_json(), encoding="utf-8")
    _write_trajectory(out / "trajectory.csv", scheme)
    last = scheme.trajectory[-1]
    print(f"lgs0={scheme.lgs0:.6g} ratio1={last['ratio1']:.6g} ratio2={last['ratio2']:.6g}")


def cmd_sample(args, out: Path) -> None:
    g = load_bundle(args.graph)
    scheme = AugmentationScheme.from_json(Path(args.scheme).read_text(encoding="utf-8"))
    if scheme.n != g.n:
        raise UsageError(f"scheme is for n={scheme.n}, graph has n={g.n}")
    delta = scheme.delta1 if args.branch == 1 or scheme.delta2 is None else scheme.delta2
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    for i in range(args.count):
        view = sample_view(g, delta, [args.seed, args.branch, i])
        path = out / f"view_b{args.branch}_{i}.edges"
        save_graph(view, path)
        print(path)


def cmd_spectrum(args, out: Path) -> None:
    gs = [load_bundle(p) for p in args.graphs]
    if args.compare:
        if len(gs) < 2:
            raise UsageError("--compare needs at least two graphs")
        rows = [[args.graphs[0], args.graphs[i], spectral_distance(gs[0], gs[i])] for i in range(1, len(gs))]
        write_csv(out / "distance.csv", ["graph_a", "graph_b", "spectral_distance"], rows)
    else:
        rows = [[name, k, lam] for name, g in zip(args.graphs, gs) for k, lam in enumerate(graph_spectrum(g))]
        write_csv(out / "eigenvalues.csv", ["graph", "index", "eigenvalue"], rows)
    if args.properties:
        rows = []
        for name, g in zip(args.graphs, gs):
            lam = graph_spectrum(g)
            gaps = np.diff(lam[: min(10, g.n)])
            b = diameter_bounds(g)
            rows.append([name, g.n, g.m, connected_components_spectral(g), algebraic_connectivity(g),
                         int(np.argmax(gaps)) + 1 if gaps.size else 0, float(gaps.max()) if gaps.size else 0.0,
                         b.lower, b.upper, b.exact])
        write_csv(out / "properties.csv",
                  ["graph", "n", "m", "components", "algebraic_connectivity", "eigengap_index", "eigengap",
                   "diameter_lower", "diameter_upper", "diameter_exact"], rows)


def cmd_casestudy(args, out: Path) -> None:
    if args.kind == "sbm":
        g = generate_sbm(args.n, args.k, args.p_in, args.p_out, args.seed)
        labels = g.node_labels
    else:
        g = generate_random_geometric(args.n, args.radius, args.seed)
        labels = baselines.spectral_clustering(g, args.k, seed=args.seed)
    cfg = SchemeConfig(mode="opposite", epsilon=args.epsilon_ratio * 2 * g.m, steps=args.steps, lr=args.lr,
                       noise_seed=args.seed, init_seed=args.seed)
    scheme = optimize_scheme(g, cfg)
    iu = np.triu_indices(g.n, 1)
    rows = [[i, j, int(g.adjacency[i, j]), int(labels[i] == labels[j]), scheme.delta1[i, j], scheme.delta2[i, j]]
            for i, j in zip(*iu)]
    write_csv(out / "slots.csv", ["i", "j", "edge", "same_cluster", "delta1", "delta2"], rows)
    s1 = inter_intra_probability_summary(g, scheme.delta1, labels)
    s2 = inter_intra_probability_summary(g, scheme.delta2, labels)
    summary = {"delta1": s1._asdict(), "delta2": s2._asdict(), "lgs0": scheme.lgs0,
               "ratio1": scheme.trajectory[-1]["ratio1"], "ratio2": scheme.trajectory[-1]["ratio2"]}
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    print(json.dumps(summary))


def cmd_preanalysis(args, out: Path) -> None:
    g = load_bundle(args.graph)
    # clusters always come from spectral clustering; known labels only fix k
    known = read_matrix(args.labels, int)[:, 0] if args.labels else g.node_labels
    k = len(np.unique(known)) if known is not None else baselines.eigengap_k(g)
    labels = baselines.spectral_clustering(g, k, seed=args.seed)
    rows = []
    for sigma in _floats(args.sigmas):
        schemes = {"uniform": baselines.uniform_scheme(g, sigma),
                   "clustered": baselines.clustered_scheme(g, sigma, labels)}
        for r in baselines.compare_spectral_change(g, schemes, args.samples, args.seed):
            rows.append([r["scheme"], sigma, r["mean_distance"], r["std"], r["samples"]])
    write_csv(out / "preanalysis.csv", ["scheme", "sigma", "mean_distance", "std", "samples"], rows)


def _train_config(args) -> gcl.TrainConfig:
    return gcl.TrainConfig(epochs=args.epochs, lr=args.lr, feature_mask_ratio=args.feature_mask, seed=args.seed,
                           batch_size=args.batch_size, hidden_dim=args.hidden, layers=args.layers,
                           conv_kind=args.conv, gin_epsilon=args.gin_epsilon, pool=args.pool,
                           optimizer=args.opt, negatives=args.negatives)


def cmd_train(args, out: Path) -> None:
    gs = [load_bundle(p) for p in args.graphs]
    if args.scheme:
        if len(args.scheme) != len(gs):
            raise UsageError("give one --scheme per graph")
        schemes = [AugmentationScheme.from_json(Path(p).read_text(encoding="utf-8")) for p in args.scheme]
    else:
        log.info("no scheme given; training on unperturbed views")
        schemes = [zero_scheme(g.n) for g in gs]
    cfg = _train_config(args)
    resume = None
    if args.resume:
        resume, _ = gcl.load_checkpoint(Path(args.resume).read_text(encoding="utf-8"))
    res = gcl.train(gs, schemes, cfg, resume=resume)
    (out / "checkpoint.json").write_text(gcl.save_checkpoint(res, cfg), encoding="utf-8")
    write_csv(out / "loss.csv", ["epoch", "loss"], list(enumerate(res.losses)))
    print(f"loss {res.losses[0]:.6g} -> {res.losses[-1]:.6g}")


def cmd_probe(args, out: Path) -> None:
    gs = [load_bundle(p) for p in args.graphs]
    if args.reps in ("trained", "untrained"):
        if not args.checkpoint:
            raise UsageError(f"--reps {args.reps} needs --checkpoint")
        res, cfg = gcl.load_checkpoint(Path(args.checkpoint).read_text(encoding="utf-8"))
        enc, r = res.encoder, res.readout
        if args.reps == "untrained":
            enc = gcl.init_encoder(enc.layer_weights[0].shape[0], cfg.hidden_dim, cfg.layers, cfg.conv_kind,
                                   cfg.gin_epsilon, cfg.seed)
            r = gcl.init_readout(enc.out_dim, r.pool, cfg.seed + 1)
    if args.targets:
        # graph-level: one representation and one target per graph
        y = read_matrix(args.targets)[:, 0]
        if args.reps == "raw":
            h = np.stack([g.features.sum(axis=0) for g in gs])
        else:
            h = np.stack([gcl.readout(gcl.encode(g, g.features, enc), r) for g in gs])
    else:
        if len(gs) != 1:
            raise UsageError("node-level probing takes exactly one graph")
        g = gs[0]
        y = _labels_for(g, args.labels, args.seed)
        if args.reps == "raw":
            h = np.asarray(g.features, dtype=float)
        elif args.reps == "labels":
            h = np.eye(int(y.max()) + 1)[y]
        else:
            h = gcl.encode(g, g.features, enc)
    if args.export_reps:
        write_matrix(out / "reps.csv", h, "h")
    if args.task == "classify":
        result = gcl.linear_probe(h, y.astype(int), args.l2, args.split_seed)
    else:
        result = gcl.ridge_probe(h, y, args.l2, args.split_seed)
    metrics = {"reps": args.reps, "metric": result.metric, "score": result.score,
               "l2_weight": result.l2_weight, "val_score": result.val_score}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=1) + "\n", encoding="utf-8")
    print(json.dumps(metrics))


def _sign_flipped_grad(*a, **k):
    return -spectrum_norm_grad(*a, **k)


def cmd_verify(args, out: Path) -> int:
    suites = oracle.SUITES if args.suite == "all" else (args.suite,)
    counts = {s: args.instances for s in suites} if args.instances else None
    grad_fn = _sign_flipped_grad if args.mutate else spectrum_norm_grad
    report = oracle.run_oracle_suite(args.seed, counts, suites, grad_fn)
    text = oracle.report_json(report)
    (out / "oracle_report.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK if report["ok"] else EXIT_VERIFY


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", type=Path, default=Path("."))
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="tables are CSV; JSON artifacts are always JSON")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spanaug", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", parents=[common], help="generate or import a graph")
    s.add_argument("kind", choices=("sbm", "geometric", "edgelist"))
    s.add_argument("--n", type=int, default=60)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--p-in", type=float, default=0.5)
    s.add_argument("--p-out", type=float, default=0.05)
    s.add_argument("--radius", type=float, default=0.3)
    s.add_argument("--input")
    s.add_argument("--name", default="graph")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("scheme", parents=[common], help="optimize an augmentation scheme")
    s.add_argument("graph")
    s.add_argument("--mode", choices=("single", "double", "opposite"), default="opposite")
    s.add_argument("--epsilon-ratio", type=float, default=0.05)
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--lr", type=float, default=1.0)
    s.add_argument("--K", type=int, default=None)
    s.add_argument("--noise", type=float, default=1e-6)
    s.add_argument("--init", choices=("zero_plus_jitter", "uniform_budget"), default="zero_plus_jitter")
    s.add_argument("--removal-only", action="store_true")
    s.set_defaults(func=cmd_scheme)

    s = sub.add_parser("sample", parents=[common], help="sample augmented views")
    s.add_argument("graph")
    s.add_argument("scheme")
    s.add_argument("--branch", type=int, choices=(1, 2), default=1)
    s.add_argument("--count", type=int, default=1)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("spectrum", parents=[common], help="spectra, distances and spectral properties")
    s.add_argument("graphs", nargs="+")
    s.add_argument("--compare", action="store_true")
    s.add_argument("--properties", action="store_true")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("casestudy", parents=[common], help="per-slot probabilities of an opposite scheme")
    s.add_argument("--kind", choices=("sbm", "geometric"), default="sbm")
    s.add_argument("--n", type=int, default=40)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--p-in", type=float, default=0.8)
    s.add_argument("--p-out", type=float, default=0.1)
    s.add_argument("--radius", type=float, default=0.3)
    s.add_argument("--epsilon-ratio", type=float, default=0.05)
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--lr", type=float, default=1.0)
    s.set_defaults(func=cmd_casestudy)

    s = sub.add_parser("preanalysis", parents=[common], help="uniform vs clustered removal spectral change")
    s.add_argument("graph")
    s.add_argument("--labels")
    s.add_argument("--sigmas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    s.add_argument("--samples", type=int, default=100)
    s.set_defaults(func=cmd_preanalysis)

    s = sub.add_parser("train", parents=[common], help="contrastive training")
    s.add_argument("graphs", nargs="+")
    s.add_argument("--scheme", nargs="*")
    s.add_argument("--conv", choices=("gcn", "gin"), default="gcn")
    s.add_argument("--gin-epsilon", type=float, default=0.0)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--feature-mask", type=float, default=0.2)
    s.add_argument("--hidden", type=int, default=32)
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--batch-size", type=int, default=None)
    s.add_argument("--pool", choices=("mean", "sum"), default=None)
    s.add_argument("--opt", choices=("gd", "adam"), default="gd")
    s.add_argument("--negatives", choices=gcl.NEGATIVE_MODES, default="corrupt")
    s.add_argument("--resume")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("probe", parents=[common], help="linear or ridge probe on frozen representations")
    s.add_argument("graphs", nargs="+")
    s.add_argument("--checkpoint")
    s.add_argument("--reps", choices=("trained", "untrained", "raw", "labels"), default="trained")
    s.add_argument("--labels")
    s.add_argument("--targets", help="per-graph regression/classification targets (graph-level probing)")
    s.add_argument("--task", choices=("classify", "regress"), default="classify")
    s.add_argument("--l2", type=float, default=None)
    s.add_argument("--split-seed", type=int, default=0)
    s.add_argument("--export-reps", action="store_true")
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("verify", parents=[common], help="run the oracle suite")
    s.add_argument("--suite", choices=oracle.SUITES + ("all",), default="all")
    s.add_argument("--instances", type=int, default=None)
    s.add_argument("--mutate", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("replay", help="rerun a command from its manifest")
    s.add_argument("manifest")
    s.add_argument("--out-dir", type=Path, default=None)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "replay":
        recorded = json.loads(Path(args.manifest).read_text(encoding="utf-8"))["argv"]
        if args.out_dir is not None:
            recorded = recorded + ["--out-dir", str(args.out_dir)]
        return main(recorded)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = args.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, args.command, vars(args), argv, args.seed)
        code = args.func(args, out)
    # LinAlgError subclasses ValueError, so numerical failures are matched first
    except (FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"spanaug {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, IndexError, FileNotFoundError) as exc:
        print(f"spanaug {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
