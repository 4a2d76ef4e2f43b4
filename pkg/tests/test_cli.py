"""
End-to-end tests of the command-line interface.
"""

import json
import tempfile
from pathlib import Path

import pandas as pd
import pytest

from hqrn.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, create_parser, main

FAST_FIT = ["--arch", "model3", "--max-epochs", "4", "--patience", "2", "--batch-size", "16"]


def _synth(tmp: Path, n: int = 120) -> Path:
    path = tmp / "data" / "synth.csv"
    code = main(["synth", "--n", str(n), "--d", "2", "--coefficients", "-0.1", "0.3", "-0.2",
                 "--sigma", "0.5", "--seed", "1", "--output", str(path)])
    assert code == EXIT_OK
    return path


def _fit(data: Path, out: Path, *extra: str) -> int:
    return main(["fit", "--data", str(data), "--features", "x1,x2", "--tau", "0.4", "--a", "0.5",
                 "--b", "0.4", "--seed", "7", "--output-dir", str(out), *FAST_FIT, *extra])


def test_parser_has_all_commands():
    """Every subcommand is registered."""
    parser = create_parser()
    minimal = {
        "synth": [],
        "fit": [],
        "predict": ["--model", "m.json", "--data", "d.csv"],
        "evaluate": ["x.csv", "y.csv"],
        "murphy": ["--predictions", "p.csv"],
        "functional": ["--data", "d.csv", "--column", "price"],
        "distfit": [],
        "decide": [],
    }
    for command, extra in minimal.items():
        args = parser.parse_args([command, *extra])
        assert args.command == command
        assert callable(args.func)


def test_no_command_prints_help(capsys):
    """Without a command the help is printed and usage failure returned."""
    assert main([]) == EXIT_USAGE
    assert "hqrn-run" in capsys.readouterr().out


def test_version_flag(capsys):
    """--version prints the package version."""
    with pytest.raises(SystemExit):
        main(["--version"])
    assert "hqrn-package" in capsys.readouterr().out


def test_synth_writes_table():
    """synth writes the requested rows and the resolved settings."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = _synth(Path(tmpdir), n=50)
        frame = pd.read_csv(path)
        assert len(frame) == 50
        assert list(frame.columns) == ["row_id", "x1", "x2", "price"]
        resolved = json.loads((path.parent / "resolved_config.json").read_text())
        assert resolved["synth"]["n"] == 50


def test_fit_predict_evaluate_pipeline(capsys):
    """synth, fit, predict and evaluate chain together."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        data = _synth(tmp)
        out = tmp / "fit"
        assert _fit(data, out) == EXIT_OK
        for name in ("model.json", "train_report.csv", "test_predictions.csv", "splits.csv",
                     "manifest.json", "resolved_config.json"):
            assert (out / name).exists(), name

        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["split_rows"] == {"train": 48, "val": 36, "test": 36}
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["scoring"] == {"tau": 0.4, "a": 0.5, "b": 0.4}

        preds = tmp / "pred" / "all.csv"
        assert main(["predict", "--model", str(out / "model.json"), "--data", str(data),
                     "--output", str(preds)]) == EXIT_OK
        assert len(pd.read_csv(preds)) == 120

        test_preds = out / "test_predictions.csv"
        capsys.readouterr()
        assert main(["evaluate", str(test_preds), str(test_preds), "--labels", "net", "copy",
                     "--tau", "0.4", "--a", "0.5", "--b", "0.4", "--output-dir", str(tmp / "eval")]) == EXIT_OK
        assert "skill" in capsys.readouterr().out
        evaluation = pd.read_csv(tmp / "eval" / "evaluation.csv")
        skills = evaluation.loc[evaluation["metric"] == "skill", "value"]
        assert skills.tolist() == [0.0, 0.0]
        report = json.loads((tmp / "eval" / "evaluation.json").read_text())
        assert report["reference"] == "copy"


def test_fit_is_byte_identical_across_runs():
    """Same inputs and seeds produce identical artifacts."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        data = _synth(tmp)
        assert _fit(data, tmp / "run1") == EXIT_OK
        assert _fit(data, tmp / "run2") == EXIT_OK
        for name in ("model.json", "train_report.csv", "test_predictions.csv", "splits.csv",
                     "manifest.json", "resolved_config.json"):
            assert (tmp / "run1" / name).read_bytes() == (tmp / "run2" / name).read_bytes(), name


def test_fit_tau_list_suffixes():
    """One model per level, each with its own file suffix."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        data = _synth(tmp)
        assert _fit(data, tmp / "out", "--tau-list", "0.3", "0.7") == EXIT_OK
        assert (tmp / "out" / "model_tau0.3.json").exists()
        assert (tmp / "out" / "test_predictions_tau0.7.csv").exists()
        for tau in (0.3, 0.7):
            resolved = json.loads((tmp / "out" / f"resolved_config_tau{tau:g}.json").read_text())
            assert resolved["scoring"]["tau"] == tau


def test_fit_exit_codes():
    """Invalid levels are usage errors; missing data is a data error."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        data = _synth(tmp, n=30)
        assert _fit(data, tmp / "bad", "--tau-list", "0.5", "1.5") == EXIT_USAGE
        assert not (tmp / "bad" / "model_tau0.5.json").exists()
        assert _fit(tmp / "absent.csv", tmp / "missing") == EXIT_DATA
        assert main(["fit", "--data", str(data), "--features", "x9", "--output-dir", str(tmp / "cols"),
                     *FAST_FIT]) == EXIT_DATA


def test_undefined_skill_is_numerical_failure():
    """A perfect reference against an imperfect method has no skill."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        pd.DataFrame({"row_id": [0, 1], "prediction": [1.0, 2.0], "observation": [1.0, 2.0]}).to_csv(
            tmp / "perfect.csv", index=False)
        pd.DataFrame({"row_id": [0, 1], "prediction": [1.5, 2.0], "observation": [1.0, 2.0]}).to_csv(
            tmp / "other.csv", index=False)
        code = main(["evaluate", str(tmp / "other.csv"), str(tmp / "perfect.csv"),
                     "--output-dir", str(tmp / "eval")])
        assert code == EXIT_NUMERICAL


def test_evaluate_needs_two_files():
    """A single prediction file is a usage error."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        pd.DataFrame({"row_id": [0], "prediction": [1.0], "observation": [2.0]}).to_csv(
            tmp / "one.csv", index=False)
        assert main(["evaluate", str(tmp / "one.csv"), "--output-dir", str(tmp)]) == EXIT_USAGE


def test_murphy_command():
    """The curve has the configured number of thresholds."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        pd.DataFrame({"row_id": [0, 1, 2], "prediction": [1.0, 0.2, 0.5],
                      "observation": [0.2, 1.0, 0.6]}).to_csv(tmp / "p.csv", index=False)
        assert main(["murphy", "--predictions", str(tmp / "p.csv"), "--n-thetas", "33",
                     "--output", str(tmp / "murphy.csv")]) == EXIT_OK
        curve = pd.read_csv(tmp / "murphy.csv")
        assert len(curve) == 33
        assert list(curve.columns) == ["theta", "mean_elementary_score"]


def test_functional_command():
    """Sample and log-normal functionals of a column, with a ratio grid."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        pd.DataFrame({"price": [0.0, 1.0, 2.0, 3.0], "group": [1, 1, 1, 1]}).to_csv(tmp / "v.csv", index=False)
        assert main(["functional", "--data", str(tmp / "v.csv"), "--column", "price", "--tau", "0.6",
                     "--a", "0.5", "--b", "0.4", "--output-dir", str(tmp / "f")]) == EXIT_OK
        result = json.loads((tmp / "f" / "functional.json").read_text())
        assert result["value"] == pytest.approx(1.18 / 0.6, abs=1e-9)
        assert result["interval"][0] == pytest.approx(result["interval"][1], abs=1e-9)

        pd.DataFrame({"price": [0.8, 1.1, 1.3, 0.9, 2.0, 1.7], "group": [1, 1, 1, 2, 2, 2]}).to_csv(
            tmp / "g.csv", index=False)
        assert main(["functional", "--data", str(tmp / "g.csv"), "--column", "price", "--kind", "huber",
                     "--law", "lognormal", "--ratio-grid", "--group-column", "group",
                     "--output-dir", str(tmp / "r")]) == EXIT_OK
        grid = pd.read_csv(tmp / "r" / "ratio_grid.csv")
        assert set(grid["denominator"]) == {"expectile", "quantile"}
        assert len(grid) == 2 * 6 * 4
        assert "law" in json.loads((tmp / "r" / "functional.json").read_text())


def test_distfit_command(capsys):
    """Fitting simulated draws recovers the generating parameters; non-positive data is a data error."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        assert main(["distfit", "--draws", "100000", "--seed", "3", "--output-dir", str(tmp)]) == EXIT_OK
        assert "mu=" in capsys.readouterr().out
        fit = json.loads((tmp / "distfit.json").read_text())
        assert fit["mu"] == pytest.approx(-0.063, abs=0.01)
        assert fit["sigma"] == pytest.approx(0.534, abs=0.01)
        assert main(["distfit", "--output-dir", str(tmp)]) == EXIT_USAGE

        pd.DataFrame({"price": [1.0, 0.0, 2.0]}).to_csv(tmp / "zero.csv", index=False)
        assert main(["distfit", "--data", str(tmp / "zero.csv"), "--column", "price",
                     "--output-dir", str(tmp)]) == EXIT_DATA


def test_decide_command(capsys):
    """Equal zero rates imply the median level; bad rates are usage errors."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        assert main(["decide", "--r-l", "0", "--r-g", "0", "--output-dir", str(tmp)]) == EXIT_OK
        assert "implied tau = 0.5" in capsys.readouterr().out
        policy = json.loads((tmp / "decision.json").read_text())["policy"]
        assert policy["tau"] == 0.5

        pd.DataFrame({"row_id": [0, 1], "prediction": [1.5, 0.5], "observation": [1.24, 1.24]}).to_csv(
            tmp / "p.csv", index=False)
        assert main(["decide", "--predictions", str(tmp / "p.csv"), "--theta", "1.0", "--a", "inf",
                     "--b", "inf", "--output-dir", str(tmp)]) == EXIT_OK
        totals = json.loads((tmp / "portfolio_totals.json").read_text())
        assert totals["n_invest"] == 1
        assert totals["total_regret"] == pytest.approx(0.24)

        assert main(["decide", "--r-l", "1.0", "--output-dir", str(tmp)]) == EXIT_USAGE


def test_config_file_overrides_defaults():
    """A --config file is merged over the defaults and flags win over it."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        config = tmp / "user.json"
        config.write_text(json.dumps({"decision": {"r_l": 0.5}, "scoring": {"a": None}}))
        assert main(["--config", str(config), "decide", "--output-dir", str(tmp)]) == EXIT_OK
        resolved = json.loads((tmp / "resolved_config.json").read_text())
        assert resolved["decision"]["r_l"] == 0.5
        assert json.loads((tmp / "decision.json").read_text())["policy"]["a"] == "inf"

        assert main(["--config", str(config), "decide", "--r-l", "0.0", "--output-dir", str(tmp)]) == EXIT_OK
        assert json.loads((tmp / "decision.json").read_text())["policy"]["tau"] == 0.5

        assert main(["--config", str(tmp / "absent.json"), "decide", "--output-dir", str(tmp)]) == EXIT_DATA


@pytest.mark.slow
@pytest.mark.integration
def test_skill_table_against_simplest_architecture():
    """All three presets fitted on the same data, scored against model3."""
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = Path(tmpdir)
        data = _synth(tmp, n=2000)
        files = []
        for arch in ("model1", "model2", "model3"):
            out = tmp / arch
            assert main(["fit", "--data", str(data), "--features", "x1,x2", "--arch", arch, "--tau", "0.4",
                         "--a", "0.5", "--b", "0.4", "--seed", "7", "--output-dir", str(out)]) == EXIT_OK
            files.append(str(out / "test_predictions.csv"))

        assert main(["evaluate", *files, "--labels", "model1", "model2", "model3", "--reference", "model3",
                     "--tau", "0.4", "--a", "0.5", "--b", "0.4", "--output-dir", str(tmp / "eval")]) == EXIT_OK
        evaluation = pd.read_csv(tmp / "eval" / "evaluation.csv")
        skills = evaluation[evaluation["metric"] == "skill"].set_index("method")["value"]
        assert sorted(skills.index) == ["model1", "model2", "model3"]
        assert set(evaluation.loc[evaluation["metric"] == "skill", "reference"]) == {"model3"}
        assert skills["model3"] == 0.0
        assert (skills <= 1.0).all()
