"""Command-line entry point.

Subcommands cover the full workflow: generate a synthetic dataset, compute
the metric cache, run the validation loop (simulated or interactive), fit
threshold baselines, run the grid search / Pareto / method comparison /
correlation analyses, and serve the browser labeling UI.

Every subcommand accepts ``--config <file>`` (JSON, see service.config) and
``--seed <n>``; explicit flags override config values.  Exit code 0 on
success, 1 with a diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from pairval import alcore, baselines, learners
from pairval.alcore import ALConfig, SimulatedOracle
from pairval.dataio import (
    INVALID,
    METRIC_NAMES,
    VALID,
    DataError,
    atomic_write_text,
    load_manifest,
    load_metric_cache,
    save_metric_cache,
)
from pairval.evaluation import harness, results as results_mod, synth
from pairval.features.vae import VaeConfig, image_to_vae_input, train_matrix
from pairval.pipeline import MetricPipeline
from pairval.service.config import ConfigError, load_config, metric_params_from


class CliError(Exception):
    pass


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, metavar="FILE",
                        help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, metavar="N",
                        help="master random seed (default 0)")


def _pick(flag, cfg_value, default):
    if flag is not None:
        return flag
    if cfg_value is not None:
        return cfg_value
    return default


def _load_dataset(args, cfg) -> tuple:
    manifest_path = _pick(getattr(args, "manifest", None), cfg["dataset"]["manifest"], None)
    cache_path = _pick(getattr(args, "cache", None), cfg["dataset"]["cache"], None)
    if manifest_path is None:
        raise CliError("no manifest given (use --manifest or dataset.manifest in the config)")
    if cache_path is None:
        raise CliError("no metric cache given (use --cache or dataset.cache in the config)")
    manifest = load_manifest(manifest_path)
    cache = load_metric_cache(cache_path)
    return manifest, cache


def _al_config(args, cfg, seed: int) -> ALConfig:
    al = cfg["al"]
    return ALConfig(
        alpha=float(_pick(getattr(args, "alpha", None), al["alpha"], 0.9)),
        beta=float(_pick(getattr(args, "beta", None), al["beta"], 0.05)),
        dv_fraction=float(_pick(getattr(args, "dv_fraction", None), al["dv_fraction"], 0.1)),
        classifier=_pick(getattr(args, "classifier", None), cfg["classifier"]["kind"],
                         "random_forest"),
        manual_budget=_pick(getattr(args, "manual_budget", None), al["manual_budget"], None),
        seed=seed,
    )


def _emit(payload: dict, out: Path | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out is not None:
        atomic_write_text(out, text + "\n")
    print(text)


# -- subcommands -------------------------------------------------------------


def cmd_synth(args, cfg, seed: int) -> int:
    spec = synth.SyntheticSpec(
        n_pairs=args.n, image_size=args.size, valid_fraction=args.valid_fraction,
        recipe=args.recipe, seed=seed,
    )
    manifest = synth.generate_synthetic(spec, args.out)
    labels = list(manifest.labels().values())
    print(f"wrote {len(manifest)} pairs to {args.out} "
          f"({labels.count(VALID)} valid / {labels.count(INVALID)} invalid)")
    print(f"manifest: {Path(args.out) / 'manifest.csv'}")
    return 0


def cmd_metrics(args, cfg, seed: int) -> int:
    manifest_path = _pick(args.manifest, cfg["dataset"]["manifest"], None)
    if manifest_path is None:
        raise CliError("no manifest given (use --manifest or dataset.manifest in the config)")
    out = _pick(args.out, cfg["dataset"]["cache"], None)
    if out is None:
        raise CliError("no output path given (use --out or dataset.cache in the config)")
    manifest = load_manifest(manifest_path)
    pipeline = MetricPipeline.with_seed(seed, metric_params=metric_params_from(cfg))

    def progress(i, n):
        if i == n or i % 50 == 0:
            print(f"  metrics {i}/{n}", file=sys.stderr)

    cache = pipeline.compute(manifest, progress=progress if args.verbose else None)
    save_metric_cache(cache, out)
    print(f"wrote {len(cache.rows)} metric vectors to {out}")
    return 0


class _StdinOracle:
    """Interactive oracle for terminal use: prints metrics, reads v/i."""

    def __init__(self, manifest):
        self.manifest = manifest

    def label(self, ids):
        out = []
        for pid in ids:
            entry = self.manifest.entry(pid)
            print(f"\npair {pid}:")
            print(f"  original:    {entry.original_path}")
            print(f"  transformed: {entry.transformed_path}")
            while True:
                answer = input(f"label for {pid} [v=valid / i=invalid]: ").strip().lower()
                if answer in ("v", VALID):
                    out.append(VALID)
                    break
                if answer in ("i", INVALID):
                    out.append(INVALID)
                    break
                print("please answer 'v' or 'i'")
        return out


def cmd_al_run(args, cfg, seed: int) -> int:
    manifest, cache = _load_dataset(args, cfg)
    records = harness.build_records(manifest, cache)
    al_cfg = _al_config(args, cfg, seed)
    if args.oracle == "simulated":
        truth = {r.id: r.ground_truth for r in records}
        missing = [pid for pid, t in truth.items() if t is None]
        if missing:
            raise CliError(
                f"simulated oracle needs ground truth for every pair; "
                f"{len(missing)} missing (first: {missing[0]})"
            )
        oracle = SimulatedOracle(truth)
    else:
        oracle = _StdinOracle(manifest)
    result, state, log = harness.run_al_experiment(
        records, al_cfg, oracle, checkpoint_path=args.checkpoint,
    )
    if args.log_out:
        log.save(args.log_out)
    payload = result.to_record()
    payload["provenance_counts"] = {
        kind: sum(p == kind for p in state.provenance.values())
        for kind in (alcore.PROV_PRE, alcore.PROV_AUTO, alcore.PROV_MANUAL)
    }
    _emit(payload, args.out)
    return 0


def cmd_baseline(args, cfg, seed: int) -> int:
    manifest, cache = _load_dataset(args, cfg)
    labels = manifest.labels()
    missing = [pid for pid, t in labels.items() if t is None]
    if missing:
        raise CliError(f"baselines need ground truth for every pair; {len(missing)} missing")
    ids = manifest.ids()
    rng = np.random.default_rng(harness.stable_seed(seed, "baseline", args.metric))
    n_train = max(2, int(round(args.train_fraction * len(ids))))
    train_ids = sorted(str(ids[i]) for i in rng.choice(len(ids), size=n_train, replace=False))
    test_ids = [pid for pid in ids if pid not in set(train_ids)]

    if args.metric == "vae_re":
        # retrained on the training split's originals, like the method comparison
        vae_cfg = VaeConfig(seed=seed, epochs=30)
        side = vae_cfg.input_side
        x_train = np.stack([
            image_to_vae_input(manifest.load_pair(pid).original, side) for pid in train_ids
        ])
        model = train_matrix(x_train, vae_cfg)
        values = {
            pid: float(model.reconstruction_errors(
                image_to_vae_input(manifest.load_pair(pid).transformed, side)[None, :]
            )[0])
            for pid in ids
        }
    else:
        col = cache.column(args.metric, ids)
        values = {pid: float(v) for pid, v in zip(ids, col)}

    validator = baselines.fit_threshold(
        [(values[pid], labels[pid]) for pid in train_ids],
        metric=args.metric, step=args.step,
    )
    predicted = baselines.classify_batch(validator, [values[pid] for pid in test_ids])
    scores = results_mod.score(predicted, [labels[pid] for pid in test_ids])
    payload = {
        "metric": args.metric,
        "threshold": validator.threshold,
        "direction": validator.direction,
        "train_accuracy": validator.train_accuracy,
        "test_accuracy": scores.accuracy,
        "test_precision": scores.precision,
        "test_recall": scores.recall,
        "n_train": len(train_ids),
        "n_test": len(test_ids),
        "seed": seed,
    }
    _emit(payload, args.out)
    return 0


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def cmd_grid(args, cfg, seed: int) -> int:
    manifest, cache = _load_dataset(args, cfg)
    records = harness.build_records(manifest, cache)
    spec = harness.GridSpec()
    if args.classifiers:
        spec = harness.GridSpec(classifiers=tuple(args.classifiers.split(",")))
    if args.alphas:
        spec = harness.GridSpec(classifiers=spec.classifiers, alphas=_parse_floats(args.alphas),
                                betas=spec.betas, dv_fractions=spec.dv_fractions)
    if args.betas:
        spec = harness.GridSpec(classifiers=spec.classifiers, alphas=spec.alphas,
                                betas=_parse_floats(args.betas), dv_fractions=spec.dv_fractions)
    if args.dv_fractions:
        spec = harness.GridSpec(classifiers=spec.classifiers, alphas=spec.alphas,
                                betas=spec.betas, dv_fractions=_parse_floats(args.dv_fractions))

    def progress(i, n):
        if i == n or i % 20 == 0:
            print(f"  grid {i}/{n}", file=sys.stderr)

    res = harness.grid_search(records, spec, master_seed=seed, workers=args.workers,
                              progress=progress)
    results_mod.save_results(res, args.out)
    ok = [r for r in res if r.status == "ok"]
    failed = len(res) - len(ok)
    best = max((r.accuracy for r in ok if r.accuracy is not None), default=None)
    print(f"wrote {len(res)} results to {args.out} "
          f"({failed} failed, best accuracy {best})")
    return 0 if failed < len(res) else 1


def cmd_pareto(args, cfg, seed: int) -> int:
    res = results_mod.load_results(args.results)
    front = results_mod.pareto_front(res)
    results_mod.save_results(front, args.out)
    print(f"front: {len(front)} of {len(res)} runs")
    for r in front:
        print(f"  effort={r.human_effort:.4f} accuracy={r.accuracy:.4f} "
              f"{r.config.get('classifier')} alpha={r.config.get('alpha')} "
              f"beta={r.config.get('beta')} dv={r.config.get('dv_fraction')}")
    if args.svg:
        results_mod.plot_front_svg(res, front, args.svg)
        print(f"plot: {args.svg}")
    if args.md:
        atomic_write_text(args.md, results_mod.results_markdown(front, title="Pareto front"))
        print(f"table: {args.md}")
    return 0


def cmd_rq2(args, cfg, seed: int) -> int:
    manifest, cache = _load_dataset(args, cfg)
    al = cfg["al"]

    def progress(i, n):
        print(f"  comparison run {i}/{n}", file=sys.stderr)

    report = harness.rq2_protocol(
        manifest, cache,
        efforts=_parse_floats(args.efforts),
        repetitions=args.repetitions,
        seed=seed,
        alpha=float(_pick(args.alpha, al["alpha"], 0.9)),
        beta=float(_pick(args.beta, al["beta"], 0.05)),
        classifier=_pick(args.classifier, cfg["classifier"]["kind"], "random_forest"),
        progress=progress if args.verbose else None,
    )
    report.save(args.out)
    print(f"wrote comparison report to {args.out}")
    if args.md:
        atomic_write_text(args.md, report.to_markdown())
        print(f"table: {args.md}")
    return 0


def cmd_correlate(args, cfg, seed: int) -> int:
    manifest, cache = _load_dataset(args, cfg)
    labels = {pid: t for pid, t in manifest.labels().items() if t is not None}
    if not labels:
        raise CliError("correlation needs ground-truth labels in the manifest")
    report = harness.correlate_metrics(cache, labels, top_n=args.top_n)
    _emit(report, args.out)
    return 0


def cmd_serve(args, cfg, seed: int) -> int:
    manifest, cache = _load_dataset(args, cfg)
    records = harness.build_records(manifest, cache)
    al_cfg = _al_config(args, cfg, seed)
    checkpoint = args.checkpoint
    if checkpoint is None:
        cache_path = Path(_pick(args.cache, cfg["dataset"]["cache"], "session"))
        checkpoint = cache_path.with_suffix(".checkpoint.json")

    from pairval.service.server import create_app
    from pairval.service.session import LabelingEngine

    engine = LabelingEngine(manifest, records, al_cfg, checkpoint_path=checkpoint)
    static_dir = _pick(args.static_dir, cfg["server"]["static_dir"], None)
    app = create_app(engine, static_dir=static_dir)
    host = _pick(args.host, cfg["server"]["host"], "127.0.0.1")
    port = int(_pick(args.port, cfg["server"]["port"], 8000))
    engine.start()
    print(f"labeling service on http://{host}:{port} "
          f"(checkpoint: {checkpoint}, session {engine.session_id})")
    try:
        import uvicorn

        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        engine.stop()
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairval",
        description="Human-in-the-loop validation of image pairs for DL testing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--n", type=int, default=500, help="number of pairs")
    p.add_argument("--size", type=int, default=64, help="image side length")
    p.add_argument("--valid-fraction", type=float, default=0.6)
    p.add_argument("--recipe", choices=synth.RECIPES, default="default")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("metrics", help="compute the 13-metric cache for a manifest")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None, help="cache CSV path")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("al-run", help="run the confidence-gated validation loop")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--cache", type=Path, default=None)
    p.add_argument("--classifier", choices=learners.KINDS, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--dv-fraction", type=float, default=None, dest="dv_fraction")
    p.add_argument("--manual-budget", type=int, default=None, dest="manual_budget")
    p.add_argument("--oracle", choices=("simulated", "stdin"), default="simulated")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--log-out", type=Path, default=None, dest="log_out",
                   help="write the per-iteration JSONL log here")
    p.add_argument("--out", type=Path, default=None, help="write the run summary JSON here")
    p.set_defaults(func=cmd_al_run)

    p = sub.add_parser("baseline", help="fit and evaluate a single-metric threshold")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--cache", type=Path, default=None)
    p.add_argument("--metric", choices=("vif", "vae_re"), default="vif")
    p.add_argument("--train-fraction", type=float, default=0.25, dest="train_fraction")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("grid", help="grid search over (classifier, alpha, beta, dv)")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--cache", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True, help="results JSON path")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--classifiers", default=None, help="comma list to restrict the grid")
    p.add_argument("--alphas", default=None)
    p.add_argument("--betas", default=None)
    p.add_argument("--dv-fractions", default=None, dest="dv_fractions")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("pareto", help="accuracy/effort Pareto front of a results file")
    _add_common(p)
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--svg", type=Path, default=None)
    p.add_argument("--md", type=Path, default=None)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("rq2", help="method comparison at fixed effort levels")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--cache", type=Path, default=None)
    p.add_argument("--efforts", default="0.25,0.5,0.75")
    p.add_argument("--repetitions", type=int, default=20)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--classifier", choices=learners.KINDS, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--md", type=Path, default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_rq2)

    p = sub.add_parser("correlate", help="metric-validity correlation report")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--cache", type=Path, default=None)
    p.add_argument("--top-n", type=int, default=5, dest="top_n")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("serve", help="start the HTTP labeling service")
    _add_common(p)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--cache", type=Path, default=None)
    p.add_argument("--classifier", choices=learners.KINDS, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--dv-fraction", type=float, default=None, dest="dv_fraction")
    p.add_argument("--manual-budget", type=int, default=None, dest="manual_budget")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--static-dir", type=Path, default=None, dest="static_dir",
                   help="directory with the built browser UI")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else 0
        return args.func(args, cfg, seed)
    except (CliError, ConfigError, DataError, alcore.ALError, baselines.BaselineError,
            learners.LearnerError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
