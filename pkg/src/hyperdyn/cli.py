"""Command-line front end for the simulation / learning / evaluation pipeline.

Each subcommand is driven by an INI config file (see hyperdyn.config for
the schema and defaults); --seed, --out, --workers, --order and --lambda
override the corresponding config values, as do HYPERDYN_* environment
variables. Commands are deterministic per seed, embed their resolved
configuration in every output, and overwrite outputs atomically.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .config import ConfigError, RunConfig
from .datasets import (
    Dataset,
    ERSource,
    FixedSource,
    derived_rng,
    load_dataset,
    make_point_dataset,
    make_trajectory_dataset,
    sample_initial_state,
    save_dataset,
)
from .decomposition import (
    effective_order_bound,
    log_product_update,
    pairwise_sine_kernel,
    sine_of_sums_update,
    subset_sum,
    verify_decomposition,
)
from .dynamics import (
    FAMILY_NAMES,
    integrate_euler,
    load_trajectory,
    make_family,
    save_trajectory,
)
from .evaluation import EvalReport, SuiteResult, kfold_single
from .hypergraph import generate_er_hypergraph, load_hyperedge_file, save_hyperedge_file
from .model import (
    LearnedDynamics,
    TrainConfig,
    load_model,
    predict_rhs,
    save_model,
    search_lambda,
    train,
)


def _train_config(cfg: RunConfig) -> TrainConfig:
    hidden = tuple(cfg.get_int_list("train", "hidden"))
    lr_end_raw = cfg.get("train", "lr_end", default="")
    return TrainConfig(
        lam=cfg.get_float("train", "lambda"),
        lr=cfg.get_float("train", "lr"),
        lr_end=float(lr_end_raw) if lr_end_raw else None,
        epochs=cfg.get_int("train", "epochs"),
        batch_size=cfg.get_int("train", "batch_size"),
        seed=cfg.seed(),
        hidden=hidden,
        activation=cfg.get("train", "activation"),
        l2_squared=cfg.get_bool("train", "l2_squared"),
        lambda_grid=tuple(cfg.get_float_list("train", "lambda_grid")),
    )


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("run", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _hypergraph_source(cfg: RunConfig, n_graphs: int, master_seed: int):
    section = cfg.section("hypergraph")
    if "file" in section:
        h = load_hyperedge_file(section["file"], max_size=cfg.get_int("hypergraph", "max_size"))
        return FixedSource([h], [Path(section["file"]).stem])
    return ERSource(cfg.get_int("hypergraph", "n_nodes"), cfg.probs(), n_graphs, master_seed)


def _single_hypergraph(cfg: RunConfig, seed: int):
    source = _hypergraph_source(cfg, 1, seed)
    return source.graph(0)[0]


def cmd_gen_hypergraph(args) -> int:
    cfg = RunConfig(args.config, _overrides(args))
    seed = cfg.seed()
    out = _out_dir(cfg)
    count = cfg.get_int("hypergraph", "count")
    n_nodes = cfg.get_int("hypergraph", "n_nodes")
    probs = cfg.probs()
    hg_dir = out / "hypergraphs"
    comment = "config " + cfg.provenance()
    for i in range(count):
        h = generate_er_hypergraph(n_nodes, probs, np.random.SeedSequence((seed, 0, i)))
        save_hyperedge_file(h, hg_dir / f"hg_{i:05d}.txt", comments=[comment, f"seed {seed} index {i}"])
    print(f"wrote {count} hypergraph files to {hg_dir}")
    return 0


def cmd_simulate(args) -> int:
    cfg = RunConfig(args.config, _overrides(args))
    seed = cfg.seed()
    out = _out_dir(cfg)
    family = make_family(cfg.get("dynamics", "family"), cfg.get_int("dynamics", "p"))
    h = _single_hypergraph(cfg, seed)
    rng = derived_rng(seed, 1, 0)
    x0 = sample_initial_state(family.name, h.n_nodes, rng)
    steps = cfg.get_int("simulate", "steps")
    dt = cfg.get_float("simulate", "dt")
    traj = integrate_euler(h, family, x0, steps, dt)
    path = out / "trajectory.csv"
    save_trajectory(
        traj,
        path,
        header={
            "family": family.name,
            "p": family.p,
            "seed": seed,
            "config": cfg.resolved(),
        },
    )
    print(f"wrote {path} ({steps} steps, dt={dt})")
    return 0


def _build_dataset(cfg: RunConfig, seed: int) -> Dataset:
    scenario = cfg.get("dataset", "scenario")
    family = make_family(cfg.get("dynamics", "family"), cfg.get_int("dynamics", "p"))
    if scenario == "point":
        count = cfg.get_int("dataset", "count")
        n_graphs = cfg.get_int("dataset", "n_hypergraphs", default=count)
        source = _hypergraph_source(cfg, n_graphs, seed)
        ds = make_point_dataset(source, family, count, seed)
    elif scenario == "trajectory":
        n_traj = cfg.get_int("dataset", "n_traj")
        source = _hypergraph_source(cfg, n_traj, seed)
        ds = make_trajectory_dataset(
            source,
            family,
            n_traj,
            cfg.get_int("dataset", "steps"),
            cfg.get_float("dataset", "dt"),
            seed,
        )
    else:
        raise ConfigError(f"unknown dataset scenario {scenario!r} (use point or trajectory)")
    ds.manifest["config"] = cfg.resolved()
    return ds


def cmd_make_dataset(args) -> int:
    cfg = RunConfig(args.config, _overrides(args))
    seed = cfg.seed()
    out = _out_dir(cfg)
    ds = _build_dataset(cfg, seed)
    path = out / "dataset.csv"
    save_dataset(ds, path)
    print(f"wrote {path} ({len(ds)} samples, scenario {ds.manifest['scenario']})")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig(args.config, _overrides(args))
    seed = cfg.seed()
    out = _out_dir(cfg)
    dataset_path = args.dataset or cfg.get("train", "dataset", default="")
    if not dataset_path:
        raise ConfigError("no dataset given; set [train] dataset or pass --dataset")
    ds = load_dataset(dataset_path)
    order = cfg.get_int("train", "order")
    tc = _train_config(cfg)
    sizes = sorted({d for s in ds.samples for d in s.hypergraph.edges_by_size})

    search_results = None
    if cfg.get_bool("train", "search_lambda"):
        best_lam, search_results = _run_lambda_search(ds, order, tc, cfg)
        tc = replace(tc, lam=best_lam)

    model = LearnedDynamics.create(
        order, sizes, hidden=tc.hidden, activation=tc.activation, seed=seed
    )
    curve = train(model, ds.samples, tc)
    model_path = out / "model.txt"
    save_model(
        model,
        model_path,
        manifest={
            "train_config": {
                "lam": tc.lam,
                "lr": tc.lr,
                "epochs": tc.epochs,
                "batch_size": tc.batch_size,
                "hidden": list(tc.hidden),
                "activation": tc.activation,
            },
            "seed": seed,
            "dataset": str(dataset_path),
            "dataset_fingerprint": _dataset_fingerprint(dataset_path),
            "family": ds.manifest.get("family"),
            "p": ds.manifest.get("p"),
            "config": cfg.resolved(),
        },
    )
    curve_lines = ["#config " + cfg.provenance(), "epoch,loss"]
    curve_lines += [f"{i},{v:.17g}" for i, v in enumerate(curve)]
    atomic_write_text(out / "loss_curve.csv", "\n".join(curve_lines) + "\n")
    if search_results is not None:
        lam_lines = ["#config " + cfg.provenance(), "lambda,val_mae"]
        lam_lines += [f"{lam:.17g},{err:.17g}" for lam, err in sorted(search_results.items())]
        atomic_write_text(out / "lambda_search.csv", "\n".join(lam_lines) + "\n")
    print(f"wrote {model_path} (order {order}, final loss {curve[-1]:.6g}, lambda {tc.lam:g})")
    return 0


def _run_lambda_search(ds: Dataset, order: int, tc: TrainConfig, cfg: RunConfig):
    frac = cfg.get_float("train", "val_fraction")
    groups = ds.group_ids()
    distinct = sorted(set(groups))
    rng = np.random.default_rng(np.random.SeedSequence((tc.seed, 0x5EA)))
    shuffled = [distinct[i] for i in rng.permutation(len(distinct))]
    n_val = max(1, int(round(frac * len(distinct))))
    val_groups = set(shuffled[:n_val])
    train_samples = [s for s, g in zip(ds.samples, groups) if g not in val_groups]
    val_samples = [s for s, g in zip(ds.samples, groups) if g in val_groups]
    return search_lambda(order, train_samples, val_samples, tc.lambda_grid, tc)


def _dataset_fingerprint(path: str | Path) -> str:
    import hashlib

    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return f"sha256:{digest[:16]}"


_worker_datasets: dict[str, Dataset] = {}


def _fold_task(task: tuple) -> float:
    """Evaluate one (dataset, order, fold) grid cell; runs in worker processes."""
    ds_path, k_folds, fold_idx, order, tc_kwargs, metric, eval_steps = task
    if ds_path not in _worker_datasets:
        _worker_datasets[ds_path] = load_dataset(ds_path)
    tc = TrainConfig(**{**tc_kwargs, "hidden": tuple(tc_kwargs["hidden"])})
    return kfold_single(
        _worker_datasets[ds_path], k_folds, fold_idx, order, tc, metric, eval_steps
    )


def cmd_evaluate(args) -> int:
    cfg = RunConfig(args.config, _overrides(args))
    seed = cfg.seed()
    out = _out_dir(cfg)
    workers = cfg.get_int("run", "workers")
    folds = cfg.get_int("evaluate", "folds")
    p_models = cfg.get_int_list("evaluate", "p_models")
    weight = cfg.get_float("evaluate", "complexity_weight")
    k_top = cfg.get_int("hypergraph", "max_size")
    suites = []
    for token in cfg.get("evaluate", "suites").split(","):
        token = token.strip()
        if not token:
            continue
        name, _, p = token.partition(":")
        if name not in FAMILY_NAMES:
            raise ConfigError(
                f"invalid dynamics family {name!r}; valid: {', '.join(FAMILY_NAMES)}"
            )
        suites.append((name, int(p or 2)))

    tc = _train_config(cfg)
    tc_kwargs = {
        "lam": tc.lam,
        "lr": tc.lr,
        "lr_end": tc.lr_end,
        "epochs": tc.epochs,
        "batch_size": tc.batch_size,
        "seed": tc.seed,
        "hidden": list(tc.hidden),
        "activation": tc.activation,
        "l2_squared": tc.l2_squared,
    }

    ds_dir = out / "datasets"
    ds_dir.mkdir(parents=True, exist_ok=True)
    scenario = cfg.get("dataset", "scenario")
    metric = "trajectory" if scenario == "trajectory" else "pointwise"
    eval_steps = cfg.get_int("predict", "steps") if metric == "trajectory" else None

    tasks = []
    suite_paths = {}
    for idx, (name, p) in enumerate(suites):
        suite_cfg = RunConfig(
            args.config,
            {**_overrides(args), ("dynamics", "family"): name, ("dynamics", "p"): p},
        )
        ds = _build_dataset(suite_cfg, seed + idx)
        path = ds_dir / f"{name}_p{p}.csv"
        save_dataset(ds, path)
        suite_paths[(name, p)] = str(path)
        for order in p_models:
            for fold in range(folds):
                tasks.append(
                    (str(path), folds, fold, order, tc_kwargs, metric, eval_steps)
                )

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fold_task, tasks))
    else:
        results = [_fold_task(t) for t in tasks]

    report = EvalReport([], metadata={"seed": seed, "config": cfg.resolved()})
    pos = 0
    for name, p in suites:
        fold_maes = {}
        for order in p_models:
            fold_maes[order] = results[pos: pos + folds]
            pos += folds
        suite = SuiteResult(dynamics=name, p=p, fold_maes=fold_maes)
        report.suites.append(suite.finalize(k_top, weight))

    atomic_write_text(out / "report_summary.json", report.to_json() + "\n")
    atomic_write_text(
        out / "report_folds.csv", "#config " + cfg.provenance() + "\n" + report.fold_table()
    )
    atomic_write_text(
        out / "report_scores.csv", "#config " + cfg.provenance() + "\n" + report.score_table()
    )
    for suite in report.suites:
        print(
            f"{suite.dynamics} p={suite.p}: selected order {suite.selected_order} "
            f"(mean MAE: {', '.join(f'{m}->{v:.4g}' for m, v in sorted(suite.mean_mae.items()))})"
        )
    print(f"wrote report files to {out}")
    return 0


def cmd_select_order(args) -> int:
    path = Path(args.report)
    if not path.exists():
        raise ConfigError(f"report file not found: {path}")
    report = EvalReport.from_json(path.read_text(encoding="utf-8"))
    lines = ["dynamics,p,selected_order"]
    for suite in report.suites:
        print(f"{suite.dynamics} p={suite.p}: effective order {suite.selected_order}")
        lines.append(f"{suite.dynamics},{suite.p},{suite.selected_order}")
    out_path = path.parent / "selected_orders.csv"
    provenance = json.dumps(report.metadata.get("config", {}), sort_keys=True)
    atomic_write_text(out_path, "#config " + provenance + "\n" + "\n".join(lines) + "\n")
    print(f"wrote {out_path}")
    return 0


def cmd_check_decomposition(args) -> int:
    cfg = RunConfig(args.config, _overrides(args))
    seed = cfg.seed()
    out = _out_dir(cfg)
    trials = cfg.get_int("decomposition", "trials")
    threshold = cfg.get_float("decomposition", "threshold")
    d_values = cfg.get_int_list("decomposition", "d_values")
    rows = []

    for d in d_values:
        full, pair = log_product_update(d)
        dev = verify_decomposition(
            full, pair, d, 2, trials, seed, value_range=(0.1, 3.0)
        )
        rows.append(("log_product", 2, d, dev))
        dev = verify_decomposition(
            sine_of_sums_update, pairwise_sine_kernel, d, 2, trials, seed,
            value_range=(-np.pi, np.pi),
        )
        rows.append(("sine_of_sums", 2, d, dev))

    # Shipped families at their configured order against a scaled pairwise
    # surrogate: linear consensus reduces exactly, the nonlinear ones do not.
    family = make_family(cfg.get("dynamics", "family"), cfg.get_int("dynamics", "p"))
    from math import comb

    for d in d_values:
        if family.p > d:
            continue
        mult = comb(d - 2, family.p - 2)

        def full_family(y_c, neigh, fam=family, dd=d):
            values = np.concatenate([[y_c], np.asarray(neigh)])
            from .dynamics import edge_update

            return edge_update(fam, values, 0)

        def pair_kernel(y_c, subset, fam=family, dd=d, m=mult):
            from .dynamics import kernel_eval

            pair_fam = make_family(fam.name, 2)
            return m * kernel_eval(pair_fam, y_c, subset, dd)

        lo, hi = (0.05, 0.95) if family.name in ("si", "mcm") else (-1.5, 1.5)
        dev = verify_decomposition(
            full_family, pair_kernel, d, 2, trials, seed, value_range=(lo, hi)
        )
        rows.append((family.name, family.p, d, dev))

    lines = ["#config " + cfg.provenance(), "update,p,d,deviation,decomposes"]
    for name, p, d, dev in rows:
        verdict = "yes" if dev < threshold else "no"
        print(f"{name} p={p} d={d}: deviation {dev:.3g} -> decomposes={verdict}")
        lines.append(f"{name},{p},{d},{dev:.17g},{verdict}")
    k_top = cfg.get_int("hypergraph", "max_size")
    bound = effective_order_bound(k_top, family.p)
    print(f"effective order bound for k={k_top}, p={family.p}: {bound}")
    path = out / "decomposition_report.csv"
    atomic_write_text(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def cmd_predict(args) -> int:
    cfg = RunConfig(args.config, _overrides(args))
    out = _out_dir(cfg)
    model = load_model(args.model)
    if args.hypergraph:
        h = load_hyperedge_file(args.hypergraph, max_size=cfg.get_int("hypergraph", "max_size"))
    else:
        h = _single_hypergraph(cfg, cfg.seed())
    if args.x0:
        row = Path(args.x0).read_text(encoding="utf-8").strip().splitlines()[-1]
        x0 = np.asarray([float(v) for v in row.split(",")])
    else:
        family_name = model.manifest.get("family") or cfg.get("dynamics", "family")
        x0 = sample_initial_state(family_name, h.n_nodes, derived_rng(cfg.seed(), 2, 0))
    steps = args.steps or cfg.get_int("predict", "steps")
    dt = args.dt or cfg.get_float("predict", "dt")
    traj = integrate_euler(h, None, x0, steps, dt, rhs=lambda x: predict_rhs(model, h, x))
    path = out / "prediction.csv"
    save_trajectory(
        traj,
        path,
        header={"model": str(args.model), "steps": steps, "dt": dt, "config": cfg.resolved()},
    )
    print(f"wrote {path} ({steps} predicted steps)")
    return 0


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out[("run", "seed")] = args.seed
    if getattr(args, "out", None):
        out[("run", "out")] = args.out
    if getattr(args, "workers", None) is not None:
        out[("run", "workers")] = args.workers
    if getattr(args, "order", None) is not None:
        out[("train", "order")] = args.order
    if getattr(args, "lam", None) is not None:
        out[("train", "lambda")] = args.lam
    return out


def _add_common(sub: argparse.ArgumentParser, config_required: bool = False) -> None:
    sub.add_argument("--config", default=None, required=config_required, help="INI config file")
    sub.add_argument("--seed", type=int, default=None, help="master random seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--workers", type=int, default=None, help="worker processes for grids")
    sub.add_argument("--order", type=int, default=None, help="model order override")
    sub.add_argument("--lambda", dest="lam", type=float, default=None, help="L2 penalty override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperdyn",
        description="Simulate hypergraph dynamics, learn per-edge updates, infer effective order.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    specs = [
        ("gen-hypergraph", cmd_gen_hypergraph, "generate random hypergraph files"),
        ("simulate", cmd_simulate, "integrate one trajectory of an analytical dynamics"),
        ("make-dataset", cmd_make_dataset, "generate a point or trajectory dataset"),
        ("train", cmd_train, "train a model on a dataset file"),
        ("evaluate", cmd_evaluate, "cross-validate model orders over dynamics suites"),
        ("check-decomposition", cmd_check_decomposition, "report decomposition deviations"),
    ]
    for name, func, help_text in specs:
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)
        sub.set_defaults(func=func)
        if name == "train":
            sub.add_argument("--dataset", default=None, help="dataset file to train on")

    sub = subs.add_parser("select-order", help="read a report and print the selected orders")
    sub.add_argument("report", help="report_summary.json produced by evaluate")
    sub.set_defaults(func=cmd_select_order)

    sub = subs.add_parser("predict", help="roll out a trained model from an initial state")
    _add_common(sub)
    sub.add_argument("--model", required=True, help="model bundle file")
    sub.add_argument("--hypergraph", default=None, help="hyperedge-list file to predict on")
    sub.add_argument("--x0", default=None, help="CSV file with the initial state row")
    sub.add_argument("--steps", type=int, default=None)
    sub.add_argument("--dt", type=float, default=None)
    sub.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
