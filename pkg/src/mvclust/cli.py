"""Command-line pipeline: generate datasets, run clustering methods, benchmark.

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import deepclust, ensemble, flatclust, metrics, mvnet, synthgen
from .dataio import FeatureView, MultiViewDataset, Partition, load_dataset, load_manifest, save_view
from .nnet import MlpSpec, TrainConfig, TrainingDivergedError, forward
from .seeding import named_seed

PER_VIEW_METHODS = ("km", "ac", "idec")
MULTI_VIEW_METHODS = ("cc", "mvec", "dmvc-fix", "dmvc")
ALL_METHODS = PER_VIEW_METHODS + MULTI_VIEW_METHODS

_CLUSTERER_TOKENS = {
    "km": ensemble.KMEANS,
    "ac": ensemble.AGGLOMERATIVE_WARD,
    "idec": ensemble.IDEC,
}

_PROFILES = {"small": mvnet.SMALL_HIDDEN, "full": mvnet.FULL_HIDDEN}


class ConfigError(Exception):
    """Bad flags or configuration; maps to exit code 2."""


@dataclass
class ReportRow:
    method: str
    scope: str
    k: int
    seed: int
    nmi: float | None
    seconds: float


@dataclass
class RunReport:
    rows: list[ReportRow]

    def to_tsv(self) -> str:
        lines = ["method\tscope\tk\tseed\tnmi\tseconds"]
        for r in self.rows:
            nmi = "" if r.nmi is None else f"{r.nmi:.6f}"
            lines.append(f"{r.method}\t{r.scope}\t{r.k}\t{r.seed}\t{nmi}\t{r.seconds:.3f}")
        return "\n".join(lines) + "\n"


def _write_partition(partition: Partition, path: Path) -> None:
    path.write_text("".join(f"{a}\n" for a in partition.assignments), encoding="utf-8")


def _write_log(rows, path: Path) -> None:
    lines = ["iteration\trecon_loss\tcluster_loss\tlabel_change_fraction"]
    for it, recon, cluster, change in rows:
        rtxt = "" if recon is None else f"{recon:.6g}"
        lines.append(f"{it}\t{rtxt}\t{cluster:.6g}\t{change:.6g}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.pretrain_lr,
        finetune_learning_rate=args.finetune_lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        max_updates=args.max_updates,
    )


def _dec_state(args) -> deepclust.DecState:
    interval = args.update_interval if args.update_interval > 0 else None
    return deepclust.DecState(update_interval=interval)


def _nmi_or_none(partition: Partition, dataset: MultiViewDataset) -> float | None:
    if dataset.labels is None:
        return None
    return metrics.nmi(partition.assignments, dataset.labels)


def _run_per_view(method: str, dataset: MultiViewDataset, views, k: int, seed: int,
                  args, out_dir: Path | None):
    """km/ac/idec on each selected view; one report row and partition per view."""
    rows = []
    hidden = _PROFILES[args.profile]
    for view in views:
        t0 = time.perf_counter()
        view_seed = named_seed(seed, f"{method}:{view.name}")
        embedding = None
        log_rows = None
        if method == "km":
            partition = flatclust.kmeans(view, flatclust.KMeansConfig(k=k, seed=view_seed)).partition
        elif method == "ac":
            partition = flatclust.agglomerative_features(view, flatclust.LinkageConfig(k=k, linkage=flatclust.WARD))
        else:
            config = replace(_train_config(args), seed=view_seed)
            spec = MlpSpec(layer_dims=(view.dim, *hidden, k))
            res = deepclust.idec_train(view, k, spec, config, _dec_state(args))
            partition = res.partition
            embedding = FeatureView(name=f"{method}-{view.name}-embedding", data=forward(res.encoder, view.data))
            log_rows = res.log_rows
        rows.append(ReportRow(method, f"view:{view.name}", k, seed,
                              _nmi_or_none(partition, dataset), time.perf_counter() - t0))
        if out_dir is not None:
            _write_partition(partition, out_dir / f"{method}_{view.name}.labels")
            if embedding is not None:
                save_view(embedding, out_dir / f"{method}_{view.name}_embedding.mvcv")
            if log_rows:
                _write_log(log_rows, out_dir / f"{method}_{view.name}_log.tsv")
    return rows


def _clusterer_spec(args) -> ensemble.ClustererSpec:
    return ensemble.ClustererSpec(
        algorithm=_CLUSTERER_TOKENS[args.clusterer],
        train_config=_train_config(args),
        dec_state=_dec_state(args),
        hidden_dims=_PROFILES[args.profile],
    )


def _run_multi_view(method: str, dataset: MultiViewDataset, k: int, seed: int, args,
                    out_dir: Path | None):
    hidden = _PROFILES[args.profile]
    t0 = time.perf_counter()
    rows = []
    embedding = None
    stage_logs = []
    if method == "cc":
        partition = ensemble.cc(dataset, _clusterer_spec(args), k, seed=seed)
    elif method == "mvec":
        partition = ensemble.mvec(dataset, _clusterer_spec(args), k, seed=seed)
    else:
        specs = mvnet.mvnet_spec([v.dim for v in dataset.views], k, hidden=hidden)
        config = replace(_train_config(args), seed=seed)
        if method == "dmvc-fix":
            runner = mvnet.dmvc_fix
        elif getattr(args, "from_scratch", False):
            runner = mvnet.dmvc_scratch
        else:
            runner = mvnet.dmvc
        result = runner(dataset, k, specs, config, _dec_state(args))
        partition = result.partition
        embedding = mvnet.embed(result.model, dataset)
        for stage in result.report:
            rows.append(ReportRow(method, f"stage:{stage.stage}", k, seed, stage.nmi, stage.seconds))
            stage_logs.append((stage.stage, stage.log_rows))
    rows.append(ReportRow(method, "final", k, seed, _nmi_or_none(partition, dataset),
                          time.perf_counter() - t0))
    if out_dir is not None:
        _write_partition(partition, out_dir / f"{method}.labels")
        if embedding is not None:
            save_view(embedding, out_dir / f"{method}_embedding.mvcv")
        for stage, log_rows in stage_logs:
            if log_rows:
                _write_log(log_rows, out_dir / f"{method}_{stage.replace(':', '_')}_log.tsv")
    return rows


def cmd_synth(args) -> int:
    try:
        config = synthgen.resolve_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        dataset = synthgen.generate(config)
    except (ValueError, KeyError) as e:
        raise ConfigError(str(e)) from e
    path = synthgen.save_dataset(dataset, config, args.out)
    print(path)
    return 0


def cmd_cluster(args) -> int:
    dataset = load_dataset(load_manifest(args.manifest))
    if args.k > dataset.n:
        raise ConfigError(f"k={args.k} exceeds sample count {dataset.n}")
    if args.nmi and dataset.labels is None:
        raise ConfigError("--nmi requested but the manifest declares no labels")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.view is not None:
        try:
            selected = dataset.view(args.view)
        except KeyError as e:
            raise ConfigError(str(e)) from e
    if args.method in PER_VIEW_METHODS:
        views = [selected] if args.view is not None else list(dataset.views)
        rows = _run_per_view(args.method, dataset, views, args.k, args.seed, args, out_dir)
    else:
        if args.view is not None:
            # explicit m=1 run of a multi-view method on one view
            dataset = MultiViewDataset(views=(selected,), labels=dataset.labels,
                                       sample_ids=dataset.sample_ids)
        rows = _run_multi_view(args.method, dataset, args.k, args.seed, args, out_dir)
    report = RunReport(rows=rows)
    (out_dir / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    sys.stdout.write(report.to_tsv())
    return 0


def cmd_bench(args) -> int:
    manifest_paths = [p for p in args.manifests.split(",") if p]
    methods = [m for m in args.methods.split(",") if m]
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    if not manifest_paths or not methods or not seeds:
        raise ConfigError("bench needs non-empty --manifests, --methods, and --seeds")
    normalized = []
    for token in methods:
        base = token[: -len("-best-view")] if token.endswith("-best-view") else token
        if base not in ALL_METHODS:
            raise ConfigError(f"unknown method {token!r}; expected one of {ALL_METHODS}")
        normalized.append(base)
    datasets = []
    for path in manifest_paths:
        manifest = load_manifest(path)
        dataset = load_dataset(manifest)
        if dataset.labels is None:
            raise ConfigError(f"{path}: bench requires labels")
        datasets.append((manifest.name, dataset))

    cells = {}
    for name, dataset in datasets:
        for token, method in zip(methods, normalized):
            scores = []
            for seed in seeds:
                if method in PER_VIEW_METHODS:
                    rows = _run_per_view(method, dataset, dataset.views, args.k, seed, args, None)
                    score = max(r.nmi for r in rows)
                else:
                    rows = _run_multi_view(method, dataset, args.k, seed, args, None)
                    score = rows[-1].nmi
                scores.append(score)
            cells[(token, name)] = (float(np.mean(scores)), float(np.std(scores)))

    names = [name for name, _ in datasets]
    lines = ["method\t" + "\t".join(names)]
    best = {name: max(cells[(t, name)][0] for t in methods) for name in names}
    for token in methods:
        row = [token]
        for name in names:
            mean, std = cells[(token, name)]
            mark = "*" if mean == best[name] else ""
            row.append(f"{mean:.4f}±{std:.4f}{mark}")
        lines.append("\t".join(row))
    table = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=sorted(_PROFILES), default="small",
                   help="network size profile for deep methods")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--max-updates", type=int, default=TrainConfig.max_updates)
    p.add_argument("--pretrain-lr", type=float, default=TrainConfig.learning_rate)
    # desk-scale datasets fit in one batch, so the library's one-epoch refresh
    # and conservative fine-tune rate would stall; the CLI defaults give the
    # clustering stage room to move
    p.add_argument("--finetune-lr", type=float, default=1e-3)
    p.add_argument("--update-interval", type=int, default=40,
                   help="batch updates between target refreshes (0 = one epoch)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvclust",
                                     description="Multi-view clustering over precomputed feature views")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-view dataset")
    p.add_argument("--config", required=True, help="preset name or JSON config path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster", help="run one clustering method on a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", required=True, choices=ALL_METHODS)
    p.add_argument("--view", default=None, help="restrict a per-view method to one view")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clusterer", choices=sorted(_CLUSTERER_TOKENS), default="km",
                   help="base clusterer for cc and mvec")
    p.add_argument("--nmi", action="store_true", help="require labels and report NMI")
    p.add_argument("--from-scratch", action="store_true",
                   help="diagnostic: run dmvc without staged pretraining")
    p.add_argument("--out-dir", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("bench", help="mean NMI grid over datasets x methods x seeds")
    p.add_argument("--manifests", required=True, help="comma-separated manifest paths")
    p.add_argument("--methods", required=True, help="comma-separated method names")
    p.add_argument("--seeds", required=True, help="comma-separated seeds")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--clusterer", choices=sorted(_CLUSTERER_TOKENS), default="km",
                   help="base clusterer for cc and mvec")
    p.add_argument("--out", default=None)
    _add_train_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
