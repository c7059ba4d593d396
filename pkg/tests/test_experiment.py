import csv
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from upliftkit.cli import main
from upliftkit.errors import ValidationError
from upliftkit.experiment import (
    ExperimentConfig,
    cmd_allocate,
    cmd_benchmark,
    cmd_bias_sweep,
    cmd_gen_data,
    cmd_outcome_ablation,
    cmd_propensity_sweep,
    cmd_scaling,
    load_config,
)


def tiny_config(tmp_path, **kwargs) -> ExperimentConfig:
    base = ExperimentConfig(
        dataset_kind="synthetic",
        n=2000,
        d=4,
        propensity=0.5,
        noise_scale=1.0,
        train_fraction=0.5,
        n_trees=4,
        max_depth=3,
        min_samples_leaf=20,
        methods=("t", "drl"),
        betas=(0.0, 1.0),
        offsets=(-0.1, 0.0, 0.1),
        scale_factors=(1, 2),
        scale_base_n=1000,
        n_seeds=2,
        seed=5,
        out=str(tmp_path / "out"),
        threads=1,
    )
    return replace(base, **kwargs)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestConfigParsing:
    def test_ini_round_trip(self, tmp_path):
        ini = tmp_path / "config.ini"
        ini.write_text(
            "[dataset]\n"
            "dataset_kind = synthetic-binary\n"
            "n = 1234\n"
            "propensity = 0.7\n"
            "[forest]\n"
            "n_trees = 9\n"
            "[methods]\n"
            "methods = s,drl\n"
            "[bias]\n"
            "betas = 0.0, 0.5\n"
            "[run]\n"
            "seed = 42\n"
            "threads = 3\n"
        )
        cfg = load_config(ini)
        assert cfg.dataset_kind == "synthetic-binary"
        assert cfg.n == 1234
        assert cfg.propensity == 0.7
        assert cfg.n_trees == 9
        assert cfg.methods == ("s", "drl")
        assert cfg.betas == (0.0, 0.5)
        assert cfg.seed == 42
        assert cfg.threads == 3

    def test_overrides_win(self, tmp_path):
        ini = tmp_path / "config.ini"
        ini.write_text("[run]\nseed = 1\nout = somewhere\n")
        cfg = load_config(ini, seed=9, out="elsewhere")
        assert cfg.seed == 9
        assert cfg.out == "elsewhere"

    def test_unknown_key_rejected(self, tmp_path):
        ini = tmp_path / "config.ini"
        ini.write_text("[run]\nbogus = 1\n")
        with pytest.raises(ValidationError, match="bogus"):
            load_config(ini)

    def test_unknown_section_rejected(self, tmp_path):
        ini = tmp_path / "config.ini"
        ini.write_text("[mystery]\nx = 1\n")
        with pytest.raises(ValidationError, match="mystery"):
            load_config(ini)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(tmp_path / "nope.ini")


class TestGenData:
    def test_writes_dataset_and_truth(self, tmp_path):
        cfg = tiny_config(tmp_path, n=50)
        paths = cmd_gen_data(cfg)
        header = Path(paths[0]).read_text().splitlines()[0]
        assert header == "x0,x1,x2,x3,treatment,revenue,engagement"
        truth_header = Path(paths[1]).read_text().splitlines()[0]
        assert truth_header == "tau_engagement,tau_revenue"
        assert len(Path(paths[0]).read_text().splitlines()) == 51

    def test_resolved_config_and_version_written(self, tmp_path):
        cfg = tiny_config(tmp_path, n=50)
        cmd_gen_data(cfg)
        resolved = Path(cfg.out) / "resolved_config.ini"
        text = resolved.read_text()
        assert "tool = upliftkit" in text
        assert "n = 50" in text


class TestBenchmark:
    def test_row_per_method(self, tmp_path):
        cfg = tiny_config(tmp_path, methods=("s", "t", "x", "drl"))
        paths = cmd_benchmark(cfg)
        rows = read_rows(paths[0])
        assert [r["method"] for r in rows] == ["s", "t", "x", "drl"]
        assert all(r["metric"] == "aucc" for r in rows)
        for r in rows:
            assert 0.0 <= float(r["value"]) <= 1.0
        assert (Path(cfg.out) / "benchmark_curves.svg").exists()

    def test_single_outcome_uses_auuc(self, tmp_path):
        cfg = tiny_config(tmp_path, dataset_kind="synthetic-binary", n=3000)
        rows = read_rows(cmd_benchmark(cfg)[0])
        assert all(r["metric"] == "auuc" for r in rows)

    def test_empty_methods_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="empty"):
            cmd_benchmark(tiny_config(tmp_path, methods=()))

    def test_byte_identical_reruns(self, tmp_path):
        cfg_a = tiny_config(tmp_path, out=str(tmp_path / "a"))
        cfg_b = tiny_config(tmp_path, out=str(tmp_path / "b"))
        paths_a = cmd_benchmark(cfg_a)
        paths_b = cmd_benchmark(cfg_b)
        for pa, pb in zip(paths_a, paths_b):
            assert Path(pa).read_bytes() == Path(pb).read_bytes()


class TestBiasSweep:
    def test_schema_and_beta_zero_consistency(self, tmp_path):
        cfg = tiny_config(
            tmp_path, dataset_kind="synthetic-binary", n=4000, methods=("t", "drl")
        )
        paths = cmd_bias_sweep(cfg)
        rows = read_rows(paths[0])
        assert {r["method"] for r in rows} == {"t", "drl"}
        assert [r["beta"] for r in rows][:2] == ["0.0", "0.0"]
        # At beta=0 the sweep reproduces the benchmark values exactly:
        # same data, same model seeds, untouched labels.
        bench_cfg = replace(cfg, out=str(tmp_path / "bench"))
        bench = {r["method"]: r["value"] for r in read_rows(cmd_benchmark(bench_cfg)[0])}
        sweep_beta0 = {r["method"]: r["auuc"] for r in rows if r["beta"] == "0.0"}
        assert sweep_beta0 == bench

    def test_dual_outcome_dataset_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="binary"):
            cmd_bias_sweep(tiny_config(tmp_path))


class TestPropensitySweep:
    def test_schema_and_zero_offset_consistency(self, tmp_path):
        cfg = tiny_config(
            tmp_path, dataset_kind="synthetic-binary", n=4000, methods=("drl",)
        )
        paths = cmd_propensity_sweep(cfg)
        rows = read_rows(paths[0])
        assert {r["nuisance"] for r in rows} == {"clean", "biased"}
        bench_cfg = replace(cfg, out=str(tmp_path / "bench"))
        bench = {r["method"]: r["value"] for r in read_rows(cmd_benchmark(bench_cfg)[0])}
        zero_clean = [
            r["auuc"] for r in rows if r["delta"] == "0.0" and r["nuisance"] == "clean"
        ]
        assert zero_clean == [bench["drl"]]


class TestOutcomeAblation:
    def test_rows_per_seed_and_nuisance(self, tmp_path):
        cfg = tiny_config(tmp_path, n_seeds=2)
        rows = read_rows(cmd_outcome_ablation(cfg)[0])
        assert len(rows) == 4
        assert {r["nuisance"] for r in rows} == {"constant", "forest"}


class TestScaling:
    def test_rows_and_sizes(self, tmp_path):
        cfg = tiny_config(tmp_path, n_seeds=1)
        rows = read_rows(cmd_scaling(cfg)[0])
        assert len(rows) == 4  # 2 factors x 2 methods
        assert {r["factor"] for r in rows} == {"1", "2"}
        assert {r["n"] for r in rows} == {"1000", "2000"}

    def test_single_size_point(self, tmp_path):
        cfg = tiny_config(tmp_path, n_seeds=1, scale_factors=(1,))
        rows = read_rows(cmd_scaling(cfg)[0])
        assert len(rows) == 2


class TestAllocate:
    def test_outputs_and_budget(self, tmp_path):
        cfg = tiny_config(tmp_path)
        paths = cmd_allocate(cfg)
        rows = read_rows(paths[0])
        assert list(rows[0]) == ["user_index", "score", "selected", "tau_r_hat", "tau_e_hat"]
        summary = read_rows(paths[1])
        assert [r["strategy"] for r in summary] == ["greedy_ratio", "lagrangian"]
        budget = float(summary[0]["budget"])
        for r in summary:
            assert float(r["total_cost"]) <= budget + 1e-9


class TestThreads:
    @pytest.mark.parametrize(
        "command, kind",
        [
            (cmd_benchmark, "synthetic"),
            (cmd_bias_sweep, "synthetic-binary"),
            (cmd_propensity_sweep, "synthetic-binary"),
            (cmd_outcome_ablation, "synthetic"),
            (cmd_scaling, "synthetic"),
        ],
    )
    def test_thread_count_does_not_change_output(self, tmp_path, command, kind):
        cfg_1 = tiny_config(tmp_path, dataset_kind=kind, out=str(tmp_path / "t1"), threads=1)
        cfg_8 = tiny_config(tmp_path, dataset_kind=kind, out=str(tmp_path / "t8"), threads=8)
        paths_1 = command(cfg_1)
        paths_8 = command(cfg_8)
        for pa, pb in zip(paths_1, paths_8):
            assert Path(pa).read_bytes() == Path(pb).read_bytes()


class TestCli:
    def test_gen_data_exit_zero(self, tmp_path, capsys):
        rc = main(
            [
                "gen-data",
                "--seed",
                "3",
                "--out",
                str(tmp_path / "cli_out"),
            ]
        )
        assert rc == 0
        printed = capsys.readouterr().out.splitlines()
        assert printed
        for line in printed:
            assert Path(line).exists()

    def test_error_names_stage_and_exits_nonzero(self, tmp_path, capsys):
        ini = tmp_path / "bad.ini"
        ini.write_text("[methods]\nmethods =\n")
        rc = main(["benchmark", "--config", str(ini), "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "benchmark" in capsys.readouterr().err

    def test_config_file_error_stage(self, tmp_path, capsys):
        rc = main(["benchmark", "--config", str(tmp_path / "missing.ini")])
        assert rc == 1
        assert "config" in capsys.readouterr().err
