"""Experiment harness behind the command-line interface.

Every command is a pure function of (config, input files): datasets, splits,
model seeds, and grid seeds all derive from the config seed, grid work runs
through an order-preserving worker pool, and rows are written in grid order,
so re-running a command reproduces byte-identical CSVs and SVGs at any
thread count. Each run directory also receives the resolved config and the
tool version.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, plots
from .data import (
    BiasInjectionSpec,
    RctDataset,
    generate_synthetic_binary_rct,
    generate_synthetic_rct,
    inject_label_bias,
    load_criteo_csv,
    median_f0_threshold,
    split_train_test,
    subsample,
    write_dataset_csv,
    write_ground_truth_csv,
)
from .drl import PROPENSITY_BOUNDS, fit_drl
from .errors import ValidationError
from .learners import fit_s_learner, fit_t_learner, fit_x_learner
from .metrics import aucc, auuc, cost_curve, uplift_curve, write_curve_csv
from .policy import (
    AllocationProblem,
    default_lambda_grid,
    greedy_ratio_allocate,
    sweep_lambda_for_budget,
)
from .regress import ConstantConfig, ForestConfig

COST_FLOOR = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved harness settings; parseable from an INI file with sections."""

    # [dataset]
    dataset_kind: str = "synthetic"  # synthetic | synthetic-binary | criteo
    criteo_path: str = ""
    criteo_outcome: str = "visit"
    criteo_subsample: int = 1_000_000
    n: int = 100_000
    d: int = 6
    propensity: float = 0.85
    noise_scale: float = 3.0
    train_fraction: float = 0.8
    # [forest]
    # Shallow trees keep every method at the same lightweight capacity, the
    # regime the harness studies; the library-level ForestConfig defaults
    # stay general purpose.
    n_trees: int = 50
    max_depth: int = 2
    min_samples_leaf: int = 50
    feature_subsample: float = 1.0 / 3.0
    row_subsample: float = 1.0
    # [methods]
    methods: tuple[str, ...] = ("s", "t", "x", "drl")
    # [bias]
    betas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    f0_weights: tuple[float, ...] = ()  # empty -> per-kind default
    alpha: str = "median"  # "median" or a float literal
    # [propensity_sweep]
    offsets: tuple[float, ...] = (-0.1, -0.05, 0.0, 0.05, 0.1)
    # [allocation]
    budget_fraction: float = 0.3
    lambda_points: int = 50
    # [scaling]
    scale_factors: tuple[int, ...] = (1, 2, 4, 8)
    scale_base_n: int = 12_500
    # [run]
    seed: int = 0
    out: str = "out"
    threads: int = 1
    n_seeds: int = 5


_SECTIONS = {
    "dataset": (
        "dataset_kind",
        "criteo_path",
        "criteo_outcome",
        "criteo_subsample",
        "n",
        "d",
        "propensity",
        "noise_scale",
        "train_fraction",
    ),
    "forest": (
        "n_trees",
        "max_depth",
        "min_samples_leaf",
        "feature_subsample",
        "row_subsample",
    ),
    "methods": ("methods",),
    "bias": ("betas", "f0_weights", "alpha"),
    "propensity_sweep": ("offsets",),
    "allocation": ("budget_fraction", "lambda_points"),
    "scaling": ("scale_factors", "scale_base_n"),
    "run": ("seed", "out", "threads", "n_seeds"),
}


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        if raw == "":
            return ()
        items = [part.strip() for part in raw.split(",") if part.strip() != ""]
        if default and isinstance(default[0], str):
            return tuple(items)
        if default and isinstance(default[0], int) and all(
            item.lstrip("+-").isdigit() for item in items
        ):
            return tuple(int(item) for item in items)
        return tuple(float(item) for item in items)
    return raw


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read an INI config file; keyword overrides win over file values."""
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ValidationError(f"config file not found: {path}")
        updates = {}
        by_field = {name: getattr(cfg, name) for name in _all_field_names()}
        for section in parser.sections():
            if section == "meta":
                continue
            if section not in _SECTIONS:
                raise ValidationError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SECTIONS[section]:
                    raise ValidationError(f"unknown key {key!r} in section [{section}]")
                updates[key] = _parse_value(raw, by_field[key])
        cfg = replace(cfg, **updates)
    clean = {k: v for k, v in overrides.items() if v is not None}
    if clean:
        cfg = replace(cfg, **clean)
    return cfg


def _all_field_names() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]


def write_resolved_config(cfg: ExperimentConfig, out_dir: Path) -> None:
    parser = configparser.ConfigParser()
    parser["meta"] = {"tool": f"upliftkit {__version__}"}
    for section, keys in _SECTIONS.items():
        parser[section] = {}
        for key in keys:
            value = getattr(cfg, key)
            if isinstance(value, tuple):
                parser[section][key] = ",".join(str(v) for v in value)
            else:
                parser[section][key] = str(value)
    with open(out_dir / "resolved_config.ini", "w") as fh:
        parser.write(fh)


def _mix_seed(seed: int, *parts: int) -> int:
    out = seed & 0x7FFFFFFFFFFFFFFF
    for part in parts:
        out = (out * 1_000_003 + part + 1) & 0x7FFFFFFFFFFFFFFF
    return out


_METHOD_IDS = {"s": 1, "t": 2, "x": 3, "drl": 4}


def _method_seed(cfg_seed: int, method: str, outcome: str) -> int:
    # Model seeds depend only on (config seed, method, outcome) so the same
    # model trained by different commands is bit-identical: the propensity
    # sweep at zero offset reproduces the benchmark value exactly, and bias
    # sweeps vary only the corrupted labels.
    name_tag = zlib.crc32(outcome.encode()) & 0xFFFF
    return _mix_seed(cfg_seed, _METHOD_IDS[method], name_tag)


def forest_config(cfg: ExperimentConfig, seed: int) -> ForestConfig:
    return ForestConfig(
        n_trees=cfg.n_trees,
        max_depth=cfg.max_depth,
        min_samples_leaf=cfg.min_samples_leaf,
        feature_subsample=cfg.feature_subsample,
        row_subsample=cfg.row_subsample,
        seed=seed,
    )


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else str(v) for v in row]
            )


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out_dir)
    return out_dir


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

def _dual_outcome_data(cfg: ExperimentConfig, seed: int):
    if cfg.dataset_kind != "synthetic":
        raise ValidationError(
            f"this command needs the dual-outcome synthetic dataset, got kind={cfg.dataset_kind!r}"
        )
    dataset, truth = generate_synthetic_rct(
        cfg.n, cfg.d, cfg.propensity, cfg.noise_scale, seed=_mix_seed(seed, 1)
    )
    train, test = split_train_test(dataset, cfg.train_fraction, seed=_mix_seed(seed, 2))
    return train, test


def _binary_outcome_data(cfg: ExperimentConfig, seed: int):
    if cfg.dataset_kind == "criteo":
        dataset = load_criteo_csv(cfg.criteo_path, cfg.criteo_outcome)
        dataset = subsample(dataset, cfg.criteo_subsample, seed=_mix_seed(seed, 1))
        outcome = cfg.criteo_outcome
    elif cfg.dataset_kind == "synthetic-binary":
        dataset, _ = generate_synthetic_binary_rct(
            cfg.n, cfg.d, cfg.propensity, seed=_mix_seed(seed, 1)
        )
        outcome = "visit"
    else:
        raise ValidationError(
            f"this command needs a binary-outcome dataset, got kind={cfg.dataset_kind!r}"
        )
    train, test = split_train_test(dataset, cfg.train_fraction, seed=_mix_seed(seed, 2))
    return train, test, outcome


def _bias_spec(cfg: ExperimentConfig, train: RctDataset, outcome: str, beta: float, seed: int):
    if cfg.f0_weights:
        weights = np.asarray(cfg.f0_weights, dtype=float)
        if weights.shape[0] != train.d:
            raise ValidationError(
                f"f0_weights has length {weights.shape[0]}, expected d={train.d}"
            )
    else:
        weights = np.zeros(train.d)
        # Default slice scalarizer: first feature, oriented so the corrupted
        # half covers the high-effect users on the synthetic stand-in.
        weights[0] = 1.0 if cfg.dataset_kind == "criteo" else -1.0
    alpha = (
        median_f0_threshold(train, weights)
        if cfg.alpha == "median"
        else float(cfg.alpha)
    )
    return BiasInjectionSpec(
        f0_weights=weights, alpha=alpha, beta=beta, target_outcome=outcome, seed=seed
    )


def _ratio_scores(revenue_model, engagement_model, X: np.ndarray) -> np.ndarray:
    gains = revenue_model.estimate_cate(X)
    costs = np.maximum(engagement_model.estimate_cate(X), COST_FLOOR)
    return gains / costs


_SINGLE_FITTERS = {"s": fit_s_learner, "t": fit_t_learner, "x": fit_x_learner}


def _fit_method(
    method: str,
    train: RctDataset,
    outcome: str,
    cfg: ExperimentConfig,
    seed_tag: int = 0,
):
    if method not in _METHOD_IDS:
        raise ValidationError(f"unknown method {method!r}; expected s, t, x, or drl")
    seed = _mix_seed(_method_seed(cfg.seed, method, outcome), seed_tag)
    model_cfg = forest_config(cfg, seed)
    if method == "drl":
        return fit_drl(train, outcome, model_cfg, model_cfg, seed=_mix_seed(seed, 1))
    return _SINGLE_FITTERS[method](train, outcome, model_cfg)


def _fit_drl_with(
    cfg: ExperimentConfig,
    train: RctDataset,
    outcome: str,
    nuisance_config=None,
    seed_tag: int = 0,
    **kwargs,
):
    seed = _mix_seed(_method_seed(cfg.seed, "drl", outcome), seed_tag)
    model_cfg = forest_config(cfg, seed)
    return fit_drl(
        train,
        outcome,
        model_cfg if nuisance_config is None else nuisance_config,
        model_cfg,
        seed=_mix_seed(seed, 1),
        **kwargs,
    )


def _sha256(array: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(array).tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(cfg: ExperimentConfig) -> list[Path]:
    """Generate a synthetic dataset and write it with its ground truth."""
    out_dir = _prepare_out(cfg)
    if cfg.dataset_kind == "synthetic":
        dataset, truth = generate_synthetic_rct(
            cfg.n, cfg.d, cfg.propensity, cfg.noise_scale, seed=_mix_seed(cfg.seed, 1)
        )
    elif cfg.dataset_kind == "synthetic-binary":
        dataset, truth = generate_synthetic_binary_rct(
            cfg.n, cfg.d, cfg.propensity, seed=_mix_seed(cfg.seed, 1)
        )
    else:
        raise ValidationError("gen-data supports the synthetic dataset kinds only")
    data_path = out_dir / "dataset.csv"
    truth_path = out_dir / "ground_truth.csv"
    write_dataset_csv(dataset, data_path)
    write_ground_truth_csv(truth, truth_path)
    return [data_path, truth_path]


def cmd_benchmark(cfg: ExperimentConfig) -> list[Path]:
    """Train every configured method and score its test-set ranking."""
    if not cfg.methods:
        raise ValidationError("the method list is empty")
    out_dir = _prepare_out(cfg)
    dual = cfg.dataset_kind == "synthetic"
    if dual:
        train, test = _dual_outcome_data(cfg, cfg.seed)
    else:
        train, test, outcome = _binary_outcome_data(cfg, cfg.seed)

    def one_method(method):
        if dual:
            revenue_model = _fit_method(method, train, "revenue", cfg)
            engagement_model = _fit_method(method, train, "engagement", cfg)
            scores = _ratio_scores(revenue_model, engagement_model, test.features)
            return method, "aucc", cost_curve(scores, test)
        model = _fit_method(method, train, outcome, cfg)
        scores = model.estimate_cate(test.features)
        return method, "auuc", uplift_curve(scores, test, outcome)

    results = _parallel_map(one_method, list(cfg.methods), cfg.threads)
    rows = [[method, metric, report.area] for method, metric, report in results]
    csv_path = out_dir / "benchmark.csv"
    _write_rows(csv_path, ["method", "metric", "value"], rows)
    curves = {method: report for method, _, report in results}
    fig_path = out_dir / "benchmark_curves.svg"
    plots.save_curve_chart(fig_path, curves, "Method comparison")
    curve_paths = []
    for method, _, report in results:
        path = out_dir / f"curve_{method}.csv"
        write_curve_csv(report, path)
        curve_paths.append(path)
    return [csv_path, fig_path, *curve_paths]


def cmd_bias_sweep(cfg: ExperimentConfig) -> list[Path]:
    """Corrupt outcome-model training labels at each level and re-evaluate.

    The corruption touches only the labels the outcome (nuisance) models are
    trained on. The T-learner is its outcome models, so it consumes the
    corrupted labels directly; the doubly robust learner trains its nuisance
    on them but keeps the clean labels in the pseudo-outcome residual.
    Evaluation always uses the untouched test split, which is checksummed.
    """
    out_dir = _prepare_out(cfg)
    train, test, outcome = _binary_outcome_data(cfg, cfg.seed)
    test_digest = _sha256(test.outcome(outcome))

    def one_beta(item):
        index, beta = item
        spec = _bias_spec(cfg, train, outcome, beta, seed=_mix_seed(cfg.seed, 20, index))
        biased = inject_label_bias(train, spec)
        t_model = _fit_method("t", biased, outcome, cfg)
        nuisance_train = train.with_outcome("__biased__", biased.outcome(outcome))
        drl_model = _fit_drl_with(
            cfg, nuisance_train, outcome, nuisance_outcome="__biased__"
        )
        return [
            (beta, "t", auuc(t_model.estimate_cate(test.features), test, outcome)),
            (beta, "drl", auuc(drl_model.estimate_cate(test.features), test, outcome)),
        ]

    results = _parallel_map(one_beta, list(enumerate(cfg.betas)), cfg.threads)
    if _sha256(test.outcome(outcome)) != test_digest:
        raise RuntimeError("test labels changed during the sweep")
    rows = [list(entry) for group in results for entry in group]
    csv_path = out_dir / "bias_sweep.csv"
    _write_rows(csv_path, ["beta", "method", "auuc"], rows)
    series = {}
    for beta, method, value in rows:
        series.setdefault(method, []).append(value)
    fig_path = out_dir / "bias_sweep.svg"
    plots.save_line_chart(
        fig_path, list(cfg.betas), series, "label corruption probability", "AUUC",
        "Ranking quality under outcome-model bias",
    )
    return [csv_path, fig_path]


def cmd_propensity_sweep(cfg: ExperimentConfig) -> list[Path]:
    """Plug offset propensities into the pseudo-outcome and re-evaluate.

    Runs both a clean nuisance and a fully corrupted one (label flips at
    probability 1 inside the default slice) at every offset.
    """
    out_dir = _prepare_out(cfg)
    train, test, outcome = _binary_outcome_data(cfg, cfg.seed)
    spec = _bias_spec(cfg, train, outcome, 1.0, seed=_mix_seed(cfg.seed, 30))
    biased = inject_label_bias(train, spec)
    nuisance_train = train.with_outcome("__biased__", biased.outcome(outcome))
    lo, hi = PROPENSITY_BOUNDS
    grid = [
        (i, offset, mode)
        for i, offset in enumerate(cfg.offsets)
        for mode in ("clean", "biased")
    ]

    def one_point(item):
        index, offset, mode = item
        plugged = min(max(train.propensity + offset, lo), hi)
        model = _fit_drl_with(
            cfg,
            nuisance_train,
            outcome,
            propensity_override=plugged,
            nuisance_outcome="__biased__" if mode == "biased" else None,
        )
        return offset, mode, auuc(model.estimate_cate(test.features), test, outcome)

    results = _parallel_map(one_point, grid, cfg.threads)
    csv_path = out_dir / "prop_sweep.csv"
    _write_rows(csv_path, ["delta", "nuisance", "auuc"], [list(r) for r in results])
    series: dict[str, list] = {}
    for offset, mode, value in results:
        series.setdefault(mode, []).append(value)
    fig_path = out_dir / "prop_sweep.svg"
    plots.save_line_chart(
        fig_path, list(cfg.offsets), series, "propensity offset", "AUUC",
        "Ranking quality under propensity bias",
    )
    return [csv_path, fig_path]


def cmd_outcome_ablation(cfg: ExperimentConfig) -> list[Path]:
    """Compare constant-zero and forest nuisances inside the DRL pipeline."""
    out_dir = _prepare_out(cfg)
    grid = [
        (rep, nuisance)
        for rep in range(cfg.n_seeds)
        for nuisance in ("constant", "forest")
    ]

    def one_point(item):
        rep, nuisance = item
        train, test = _dual_outcome_data(cfg, _mix_seed(cfg.seed, 40, rep))
        nuisance_cfg = ConstantConfig(value=0.0) if nuisance == "constant" else None
        revenue_model = _fit_drl_with(
            cfg, train, "revenue", nuisance_config=nuisance_cfg, seed_tag=rep + 1
        )
        engagement_model = _fit_drl_with(
            cfg, train, "engagement", nuisance_config=nuisance_cfg, seed_tag=rep + 1
        )
        scores = _ratio_scores(revenue_model, engagement_model, test.features)
        return rep, nuisance, aucc(scores, test)

    results = _parallel_map(one_point, grid, cfg.threads)
    csv_path = out_dir / "outcome_ablation.csv"
    _write_rows(csv_path, ["seed", "nuisance", "aucc"], [list(r) for r in results])
    means = {}
    for _, nuisance, value in results:
        means.setdefault(nuisance, []).append(value)
    labels = sorted(means)
    fig_path = out_dir / "outcome_ablation.svg"
    plots.save_bar_chart(
        fig_path,
        labels,
        [float(np.mean(means[k])) for k in labels],
        "AUCC",
        "Nuisance model ablation",
    )
    return [csv_path, fig_path]


def cmd_scaling(cfg: ExperimentConfig) -> list[Path]:
    """Re-run T and DRL at growing training sizes from a fixed seed family.

    Training data grows with the size factor while every point of a
    replicate is scored on the same fixed-size test draw, so the trend
    reflects the estimators and not the metric's own sample-size noise.
    """
    if cfg.dataset_kind != "synthetic":
        raise ValidationError(
            f"scaling needs the dual-outcome synthetic dataset, got kind={cfg.dataset_kind!r}"
        )
    out_dir = _prepare_out(cfg)
    test_n = max(int(round(cfg.n * (1.0 - cfg.train_fraction))), 4)
    grid = [
        (i, factor, rep)
        for i, factor in enumerate(cfg.scale_factors)
        for rep in range(cfg.n_seeds)
    ]

    def one_point(item):
        index, factor, rep = item
        n_train = cfg.scale_base_n * factor
        train, _ = generate_synthetic_rct(
            n_train, cfg.d, cfg.propensity, cfg.noise_scale, seed=_mix_seed(cfg.seed, 50, rep)
        )
        test, _ = generate_synthetic_rct(
            test_n, cfg.d, cfg.propensity, cfg.noise_scale, seed=_mix_seed(cfg.seed, 55, rep)
        )
        out = []
        for method in ("t", "drl"):
            revenue_model = _fit_method(method, train, "revenue", cfg, seed_tag=rep + 1)
            engagement_model = _fit_method(method, train, "engagement", cfg, seed_tag=rep + 1)
            scores = _ratio_scores(revenue_model, engagement_model, test.features)
            out.append((factor, n_train, method, rep, aucc(scores, test)))
        return out

    results = _parallel_map(one_point, grid, cfg.threads)
    rows = [list(entry) for group in results for entry in group]
    csv_path = out_dir / "scaling.csv"
    _write_rows(csv_path, ["factor", "n", "method", "seed", "aucc"], rows)
    series: dict[str, dict[int, list]] = {}
    for factor, _, method, _, value in rows:
        series.setdefault(method, {}).setdefault(factor, []).append(value)
    mean_series = {
        method: [float(np.mean(by_factor[f])) for f in cfg.scale_factors]
        for method, by_factor in series.items()
    }
    fig_path = out_dir / "scaling.svg"
    plots.save_line_chart(
        fig_path, list(cfg.scale_factors), mean_series, "dataset size factor", "AUCC",
        "Ranking quality over dataset size",
    )
    return [csv_path, fig_path]


def cmd_allocate(cfg: ExperimentConfig) -> list[Path]:
    """Fit the effect pair, allocate the test population under the budget."""
    out_dir = _prepare_out(cfg)
    train, test = _dual_outcome_data(cfg, cfg.seed)
    revenue_model = _fit_method("drl", train, "revenue", cfg)
    engagement_model = _fit_method("drl", train, "engagement", cfg)
    tau_r = revenue_model.estimate_cate(test.features)
    tau_e = engagement_model.estimate_cate(test.features)
    floored = np.maximum(tau_e, COST_FLOOR)
    budget = cfg.budget_fraction * float(floored.sum())
    problem = AllocationProblem(tau_r=tau_r, tau_e=tau_e, budget=budget)
    greedy = greedy_ratio_allocate(problem)
    sweep = sweep_lambda_for_budget(
        problem, default_lambda_grid(tau_r, tau_e, cfg.lambda_points)
    )

    alloc_path = out_dir / "allocation.csv"
    scores = tau_r / floored
    _write_rows(
        alloc_path,
        ["user_index", "score", "selected", "tau_r_hat", "tau_e_hat"],
        [
            [i, float(scores[i]), int(greedy.z[i]), float(tau_r[i]), float(tau_e[i])]
            for i in range(problem.n)
        ],
    )
    summary_path = out_dir / "allocation_summary.csv"
    _write_rows(
        summary_path,
        ["strategy", "lambda", "total_value", "total_cost", "budget", "feasible", "n_selected"],
        [
            ["greedy_ratio", "", greedy.total_value, greedy.total_cost, budget, True, greedy.n_selected],
            [
                "lagrangian",
                sweep.lambda_star,
                sweep.allocation.total_value,
                sweep.allocation.total_cost,
                budget,
                sweep.feasible,
                sweep.allocation.n_selected,
            ],
        ],
    )
    report = cost_curve(scores, test)
    fig_path = out_dir / "allocation_curve.svg"
    plots.save_curve_chart(fig_path, {"ratio ranking": report}, "Allocation efficiency")
    return [alloc_path, summary_path, fig_path]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "benchmark": cmd_benchmark,
    "bias-sweep": cmd_bias_sweep,
    "prop-sweep": cmd_propensity_sweep,
    "outcome-ablation": cmd_outcome_ablation,
    "scaling": cmd_scaling,
    "allocate": cmd_allocate,
}
