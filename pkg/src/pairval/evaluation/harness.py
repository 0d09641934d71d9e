"""Experiment protocols: the configuration grid, decision-tree
characterization of acceptable configurations, metric/label correlations,
and the fixed-effort method comparison.

Every run owns a seed derived from the master seed and its configuration,
so executions are reproducible and order-independent.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from pairval import alcore, baselines, learners
from pairval.alcore import ALConfig, CandidatePair, SimulatedOracle
from pairval.dataio import (
    INVALID,
    VALID,
    DatasetManifest,
    MetricCache,
    METRIC_NAMES,
    atomic_write_text,
)
from pairval.evaluation.results import RunResult, Scores, score
from pairval.evaluation.stats import a12_band, pearson, vargha_delaney_a12, wilcoxon_rank_sum
from pairval.features.vae import VaeConfig, image_to_vae_input, train_matrix
from pairval.learners import LabeledExample


def stable_seed(master_seed: int, *parts) -> int:
    """Deterministic 63-bit seed from the master seed and config parts."""
    key = json.dumps([master_seed, *parts], sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def build_records(manifest: DatasetManifest, cache: MetricCache) -> list[CandidatePair]:
    """Join manifest ground truth with cached metric vectors, manifest order."""
    records = []
    for entry in manifest.entries:
        if entry.id not in cache.rows:
            raise ValueError(f"metric cache has no row for pair {entry.id!r}")
        records.append(CandidatePair(
            id=entry.id, features=cache.rows[entry.id], ground_truth=entry.ground_truth,
        ))
    return records


def run_al_experiment(records: list[CandidatePair], cfg: ALConfig, oracle=None, *,
                      dv_ids=None, checkpoint_path=None) -> tuple[RunResult, alcore.ALState, alcore.RunLog]:
    """One loop execution scored against ground truth over the whole dataset."""
    truth = {r.id: r.ground_truth for r in records}
    if oracle is None:
        oracle = SimulatedOracle(truth)
    config = {
        "method": "active_learning",
        "classifier": cfg.classifier,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "dv_fraction": cfg.dv_fraction,
        "manual_budget": cfg.manual_budget,
        "seed": cfg.seed,
    }
    start = time.perf_counter()
    state, log = alcore.run(records, cfg, oracle, dv_ids=dv_ids, checkpoint_path=checkpoint_path)
    elapsed = time.perf_counter() - start
    scored_ids = [pid for pid in state.labels if truth.get(pid) in (VALID, INVALID)]
    scores = score([state.labels[i] for i in scored_ids], [truth[i] for i in scored_ids])
    prov = state.provenance
    result = RunResult(
        config=config,
        accuracy=scores.accuracy, precision=scores.precision, recall=scores.recall,
        human_effort=state.effort, seed=cfg.seed, wall_time=elapsed,
        extra={
            "iterations": state.iteration,
            "auto_count": sum(p == alcore.PROV_AUTO for p in prov.values()),
            "manual_count": state.manual_count,
            "dv_count": len(state.dv_ids),
        },
    )
    return result, state, log


@dataclass(frozen=True)
class GridSpec:
    classifiers: tuple = ("random_forest", "decision_tree", "svm", "logistic_regression")
    alphas: tuple = (0.8, 0.85, 0.9, 0.95, 0.99)
    betas: tuple = (0.01, 0.03, 0.05, 0.08, 0.10, 0.15)
    dv_fractions: tuple = (0.10, 0.15, 0.20, 0.25, 0.30, 0.40)

    def configs(self, master_seed: int) -> list[ALConfig]:
        out = []
        for kind, alpha, beta, dv in product(self.classifiers, self.alphas, self.betas, self.dv_fractions):
            seed = stable_seed(master_seed, kind, alpha, beta, dv)
            out.append(ALConfig(alpha=alpha, beta=beta, dv_fraction=dv, classifier=kind, seed=seed))
        return out


def _grid_one(args) -> RunResult:
    records, cfg = args
    try:
        result, _, _ = run_al_experiment(records, cfg)
        return result
    except Exception as exc:  # a failed config is recorded, never fatal
        return RunResult(
            config={
                "method": "active_learning", "classifier": cfg.classifier,
                "alpha": cfg.alpha, "beta": cfg.beta, "dv_fraction": cfg.dv_fraction,
                "manual_budget": cfg.manual_budget, "seed": cfg.seed,
            },
            seed=cfg.seed, status="failed", error=f"{type(exc).__name__}: {exc}",
        )


def grid_search(records: list[CandidatePair], spec: GridSpec = GridSpec(), *,
                master_seed: int = 0, workers: int = 1, progress=None) -> list[RunResult]:
    """One run per configuration; failures are recorded inline."""
    configs = spec.configs(master_seed)
    jobs = [(records, cfg) for cfg in configs]
    results: list[RunResult] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, result in enumerate(pool.map(_grid_one, jobs)):
                results.append(result)
                if progress:
                    progress(i + 1, len(jobs))
    else:
        for i, job in enumerate(jobs):
            results.append(_grid_one(job))
            if progress:
                progress(i + 1, len(jobs))
    return results


# ---------------------------------------------------------------------------
# decision-tree characterization of acceptable configurations

_CONFIG_FEATURES = (
    "alpha", "beta", "dv_fraction",
    "classifier=random_forest", "classifier=decision_tree",
    "classifier=svm", "classifier=logistic_regression",
)


@dataclass
class ConfigTree:
    """Readable split rules; every node carries ``N = [unacceptable, acceptable]``."""

    text: str
    root: dict
    n_acceptable: int
    n_unacceptable: int
    trivial: bool = False


def _render_tree(node: dict, depth: int = 0) -> list[str]:
    pad = "  " * depth
    n = node["samples"]
    if node.get("feature") is None:
        verdict = "acceptable" if n[1] >= n[0] else "unacceptable"
        return [f"{pad}leaf: {verdict}, N = [{n[0]}, {n[1]}]"]
    lines = [f"{pad}{node['feature']} <= {node['threshold']:.4g}, N = [{n[0]}, {n[1]}]"]
    lines.extend(_render_tree(node["left"], depth + 1))
    lines.append(f"{pad}else ({node['feature']} > {node['threshold']:.4g}):")
    lines.extend(_render_tree(node["right"], depth + 1))
    return lines


def characterize_configs(results: list[RunResult], acceptable) -> ConfigTree:
    """Fit a depth-<=4 decision tree over config parameters vs the predicate."""
    from sklearn.tree import DecisionTreeClassifier

    ok = [r for r in results if r.status == "ok"]
    if not ok:
        raise ValueError("no successful results to characterize")
    rows, ys = [], []
    for r in ok:
        cfg = r.config
        kind = cfg.get("classifier", "")
        rows.append([
            float(cfg.get("alpha", 0.0)), float(cfg.get("beta", 0.0)),
            float(cfg.get("dv_fraction", 0.0)),
            float(kind == "random_forest"), float(kind == "decision_tree"),
            float(kind == "svm"), float(kind == "logistic_regression"),
        ])
        ys.append(1 if acceptable(r) else 0)
    x = np.array(rows)
    y = np.array(ys)
    n_acc = int(y.sum())
    n_un = len(y) - n_acc

    if n_acc == 0 or n_un == 0:
        verdict = "acceptable" if n_acc else "unacceptable"
        root = {"samples": [n_un, n_acc], "feature": None, "threshold": None}
        return ConfigTree(
            text=f"all {len(y)} configurations {verdict}, N = [{n_un}, {n_acc}]",
            root=root, n_acceptable=n_acc, n_unacceptable=n_un, trivial=True,
        )

    clf = DecisionTreeClassifier(max_depth=4, random_state=0)
    clf.fit(x, y)
    tree = clf.tree_
    classes = list(clf.classes_)

    def counts(node_id: int) -> list[int]:
        raw = tree.value[node_id][0] * tree.n_node_samples[node_id] / max(tree.value[node_id][0].sum(), 1e-12)
        out = [0, 0]
        for cls, cnt in zip(classes, raw):
            out[int(cls)] = int(round(cnt))
        return out

    def build(node_id: int) -> dict:
        if tree.children_left[node_id] == -1:
            return {"samples": counts(node_id), "feature": None, "threshold": None}
        return {
            "samples": counts(node_id),
            "feature": _CONFIG_FEATURES[tree.feature[node_id]],
            "threshold": float(tree.threshold[node_id]),
            "left": build(tree.children_left[node_id]),
            "right": build(tree.children_right[node_id]),
        }

    root = build(0)
    return ConfigTree(text="\n".join(_render_tree(root)), root=root,
                      n_acceptable=n_acc, n_unacceptable=n_un)


# ---------------------------------------------------------------------------
# metric/label correlations

def correlate_metrics(cache: MetricCache, labels: dict[str, str], top_n: int = 5,
                      redundancy_threshold: float = 0.9) -> dict:
    """Pearson r of each metric against validity, plus redundancy among the top."""
    ids = [i for i in cache.ids() if labels.get(i) in (VALID, INVALID)]
    if len(ids) < 3:
        raise ValueError("need at least 3 labeled pairs")
    y = np.array([1.0 if labels[i] == VALID else 0.0 for i in ids])
    matrix = cache.matrix(ids)
    per_metric = {}
    for j, name in enumerate(METRIC_NAMES):
        r, p = pearson(matrix[:, j], y)
        per_metric[name] = {"r": r, "p": p}
    ranked = sorted(
        (name for name in METRIC_NAMES if per_metric[name]["r"] is not None),
        key=lambda name: -abs(per_metric[name]["r"]),
    )
    top = ranked[:top_n]
    redundancy = []
    for a, b in combinations(top, 2):
        r_ab, _ = pearson(matrix[:, METRIC_NAMES.index(a)], matrix[:, METRIC_NAMES.index(b)])
        if r_ab is not None and abs(r_ab) >= redundancy_threshold:
            redundancy.append({"a": a, "b": b, "r": r_ab})
    return {"n": len(ids), "metrics": per_metric, "top": top, "redundant_pairs": redundancy}


# ---------------------------------------------------------------------------
# fixed-effort method comparison (active learning vs static RF vs thresholds)

RQ2_METHODS = ("active_learning", "static_classifier", "vif_threshold", "vae_threshold")


@dataclass
class Rq2Report:
    spec: dict
    distributions: dict = field(default_factory=dict)  # effort -> method -> metric -> list
    comparisons: dict = field(default_factory=dict)    # effort -> "a_vs_b" -> metric -> stats

    def to_json(self) -> str:
        return json.dumps({
            "format": "pairval-rq2", "version": 1, "spec": self.spec,
            "distributions": self.distributions, "comparisons": self.comparisons,
        }, sort_keys=True, indent=1)

    def save(self, path) -> None:
        atomic_write_text(path, self.to_json() + "\n")

    def to_markdown(self) -> str:
        lines = ["# Fixed-effort method comparison", ""]
        for effort, methods in sorted(self.distributions.items()):
            lines += [f"## Effort budget {effort}", "",
                      "| method | mean acc | mean prec | mean rec | mean effort |",
                      "|---|---|---|---|---|"]
            for method, dists in methods.items():
                def m(key):
                    vals = [v for v in dists[key] if v is not None]
                    return f"{np.mean(vals):.4f}" if vals else "n/a"
                lines.append(f"| {method} | {m('accuracy')} | {m('precision')} | {m('recall')} | {m('effort')} |")
            lines.append("")
            lines += ["| comparison | metric | p (rank-sum) | A12 | band |", "|---|---|---|---|---|"]
            for pair_key, per_metric in self.comparisons[effort].items():
                for metric_name, st in per_metric.items():
                    p = "n/a" if st["p"] is None else f"{st['p']:.3g}"
                    a = "n/a" if st["a12"] is None else f"{st['a12']:.3f}"
                    lines.append(f"| {pair_key} | {metric_name} | {p} | {a} | {st['band'] or 'n/a'} |")
            lines.append("")
        return "\n".join(lines)


def _prepare_vae_matrices(manifest: DatasetManifest, vae_config: VaeConfig):
    side = vae_config.input_side
    originals, transformed = [], []
    for entry in manifest.entries:
        pair = manifest.load_pair(entry)
        originals.append(image_to_vae_input(pair.original, side))
        transformed.append(image_to_vae_input(pair.transformed, side))
    return np.stack(originals), np.stack(transformed)


def rq2_protocol(manifest: DatasetManifest, cache: MetricCache, *,
                 efforts=(0.25, 0.5, 0.75), repetitions: int = 20, seed: int = 0,
                 alpha: float = 0.9, beta: float = 0.05,
                 classifier: str = "random_forest",
                 vae_config: VaeConfig | None = None,
                 step: float = 1e-3, progress=None) -> Rq2Report:
    """Compare the loop against a static classifier and both single-metric
    baselines on identical training splits.

    Per repetition a training split of ``effort * n`` pairs is drawn; the
    loop pre-validates a random half of it and may spend the other half as
    manual labels; the static classifier trains on the whole split; each
    threshold baseline fits on the split (the VAE is retrained on the
    split's originals).  All methods are scored on the pairs outside the
    split.
    """
    records = build_records(manifest, cache)
    truth = {r.id: r.ground_truth for r in records}
    if any(v is None for v in truth.values()):
        raise ValueError("method comparison needs ground truth for every pair")
    ids = [r.id for r in records]
    n = len(ids)
    features = {r.id: r.features for r in records}
    vif_col = {r.id: r.features[METRIC_NAMES.index("vif")] for r in records}
    vae_config = vae_config or VaeConfig(seed=seed, epochs=30)
    x_orig, x_trans = _prepare_vae_matrices(manifest, vae_config)
    row_of = {pid: i for i, pid in enumerate(ids)}

    report = Rq2Report(spec={
        "efforts": list(efforts), "repetitions": repetitions, "seed": seed,
        "alpha": alpha, "beta": beta, "classifier": classifier, "n": n,
        "vae_config": vae_config.to_dict(), "step": step,
    })
    total_runs = len(efforts) * repetitions
    done_runs = 0

    for effort in efforts:
        dists = {m: {"accuracy": [], "precision": [], "recall": [], "effort": []}
                 for m in RQ2_METHODS}
        for rep in range(repetitions):
            rep_seed = stable_seed(seed, "rq2", effort, rep)
            rng = np.random.default_rng(rep_seed)
            train_count = int(round(effort * n))
            train_idx = sorted(rng.choice(n, size=train_count, replace=False))
            train_ids = [ids[i] for i in train_idx]
            train_set = set(train_ids)
            test_ids = [pid for pid in ids if pid not in train_set]
            test_truth = [truth[pid] for pid in test_ids]

            # active learning: pre-validate half the split, cap manual at the rest
            dv_count = train_count // 2
            dv_pick = sorted(rng.choice(train_count, size=dv_count, replace=False))
            dv_ids = [train_ids[i] for i in dv_pick]
            cfg = ALConfig(alpha=alpha, beta=beta, dv_fraction=dv_count / n,
                           classifier=classifier, seed=rep_seed,
                           manual_budget=train_count - dv_count)
            result, state, _ = run_al_experiment(records, cfg, dv_ids=dv_ids)
            al_scores = score([state.labels[pid] for pid in test_ids], test_truth)
            _append(dists["active_learning"], al_scores, state.effort)

            # static classifier on the full split
            examples = [LabeledExample(pid, features[pid], truth[pid]) for pid in train_ids]
            static = learners.fit(classifier, examples, seed=rep_seed)
            pred, _ = static.predict_batch(np.stack([features[pid] for pid in test_ids]))
            _append(dists["static_classifier"], score(pred, test_truth), effort)

            # single-metric threshold on VIF
            vval = baselines.fit_threshold([(vif_col[pid], truth[pid]) for pid in train_ids],
                                           metric="vif", step=step)
            pred = [baselines.classify(vval, vif_col[pid]) for pid in test_ids]
            _append(dists["vif_threshold"], score(pred, test_truth), effort)

            # single-metric threshold on VAE-RE, VAE trained on the split's originals
            rep_vae_cfg = VaeConfig(**{**vae_config.to_dict(), "seed": rep_seed})
            model = train_matrix(x_orig[[row_of[pid] for pid in train_ids]], rep_vae_cfg)
            re_all = model.reconstruction_errors(x_trans)
            vae_fit = baselines.fit_threshold(
                [(float(re_all[row_of[pid]]), truth[pid]) for pid in train_ids],
                metric="vae_re", step=step)
            pred = [baselines.classify(vae_fit, float(re_all[row_of[pid]])) for pid in test_ids]
            _append(dists["vae_threshold"], score(pred, test_truth), effort)

            done_runs += 1
            if progress:
                progress(done_runs, total_runs)

        effort_key = f"{effort:g}"
        report.distributions[effort_key] = dists
        report.comparisons[effort_key] = _compare_methods(dists)
    return report


def _append(dist: dict, scores: Scores, effort: float) -> None:
    dist["accuracy"].append(scores.accuracy)
    dist["precision"].append(scores.precision)
    dist["recall"].append(scores.recall)
    dist["effort"].append(effort)


def _compare_methods(dists: dict) -> dict:
    out = {}
    for a, b in combinations(RQ2_METHODS, 2):
        per_metric = {}
        for metric_name in ("accuracy", "precision", "recall"):
            xs = [v for v in dists[a][metric_name] if v is not None]
            ys = [v for v in dists[b][metric_name] if v is not None]
            if xs and ys:
                p = wilcoxon_rank_sum(xs, ys)
                a12 = vargha_delaney_a12(xs, ys)
                per_metric[metric_name] = {"p": p, "a12": a12, "band": a12_band(a12)}
            else:
                per_metric[metric_name] = {"p": None, "a12": None, "band": None}
        out[f"{a}_vs_{b}"] = per_metric
    return out
