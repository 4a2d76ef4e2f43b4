"""
Command-line interface for the HQRN package.

Provides subcommands for generating synthetic data, fitting networks,
predicting, evaluating, tracing Murphy curves, computing functionals,
fitting log-normal laws and simulating investment decisions.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from ._version import __version__
from .configuration import HQRConfig
from .data import DataValidationError, load_column, load_table, synth_lognormal_regression
from .decision import DecisionPolicy, simulate_portfolio, write_portfolio
from .evaluation import (
    PredictionSet,
    evaluate_methods,
    default_theta_grid,
    empirical_ratio_grid,
    murphy_curve,
    read_predictions,
    write_predictions,
)
from .functionals import (
    EmpiricalSample,
    FunctionalRequest,
    LogNormalParams,
    NumericalError,
    distribution_huber_quantile,
    empirical_functional,
    huber_quantile_interval,
    lognormal_fit_mle,
    lognormal_sample,
)
from .network import load_model, predict_batch
from .pipeline import FitPipeline, tau_suffix
from .scoring import ScoreParams

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def setup_logging(level: str = "INFO", fmt: Optional[str] = None):
    """Setup logging configuration."""
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=fmt or '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def _cap_override(value: Optional[float]) -> Any:
    # settings hold infinite caps as the string "inf"
    if value is None:
        return None
    return "inf" if math.isinf(value) else value


def _resolve_config(args, overrides: Dict[str, Any]) -> HQRConfig:
    """Packaged defaults, then ``--config``, then flags that were given."""
    config = HQRConfig.from_file(args.config)
    config.apply_overrides(overrides)
    setup_logging(args.log_level or config.get_setting("logging.level", "INFO"),
                  config.get_setting("logging.format"))
    logger.info(f"Resolved configuration:\n{config.to_json()}")
    return config


def _write_resolved(config: HQRConfig, directory: Path) -> Path:
    return config.save_settings(Path(directory) / "resolved_config.json")


def _score_overrides(args) -> Dict[str, Any]:
    return {
        "scoring.tau": args.tau,
        "scoring.a": _cap_override(args.a),
        "scoring.b": _cap_override(args.b),
    }


def _feature_list(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [name.strip() for name in value.split(",") if name.strip()]


def _write_json(payload: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _load_training_data(config: HQRConfig, data_path: Optional[str]):
    if data_path is None:
        synth = config.get_setting("synth")
        dataset = synth_lognormal_regression(int(synth["n"]), int(synth["d"]), synth["coefficients"],
                                             float(synth["sigma"]), int(synth["seed"]))
        return dataset, "synthetic"
    features = config.get_setting("data.feature_columns")
    if not features:
        raise ValueError("--features (or data.feature_columns) is required with --data")
    dataset = load_table(data_path, features, config.get_setting("data.target_column"),
                         config.get_setting("data.target_scale"), config.get_setting("data.id_column"))
    return dataset, str(data_path)


def cmd_synth(args) -> int:
    """Generate a synthetic conditional log-normal dataset."""
    config = _resolve_config(args, {
        "synth.n": args.n,
        "synth.d": args.d,
        "synth.coefficients": args.coefficients,
        "synth.sigma": args.sigma,
        "synth.seed": args.seed,
    })
    dataset, _ = _load_training_data(config, None)
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_frame().to_csv(output, index=False, float_format="%.17g")
    _write_resolved(config, output.parent)
    print(f"Wrote {len(dataset)} rows with {dataset.n_features} features to {output}")
    return EXIT_OK


def cmd_fit(args) -> int:
    """Fit one network per level with the two-phase early-stopping protocol."""
    overrides = _score_overrides(args)
    overrides.update({
        "training.arch": args.arch,
        "training.seed": args.seed,
        "training.learning_rate": args.learning_rate,
        "training.batch_size": args.batch_size,
        "training.max_epochs": args.max_epochs,
        "training.patience": args.patience,
        "data.feature_columns": _feature_list(args.features),
        "data.target_column": args.target,
        "data.target_scale": args.target_scale,
        "data.split_seed": args.split_seed,
    })
    config = _resolve_config(args, overrides)
    p = config.score_params()
    config.train_config()
    taus = args.tau_list or [None]
    for tau in taus:
        if tau is not None:
            ScoreParams(tau, p.a, p.b)

    output_dir = Path(args.output_dir)
    dataset, source = _load_training_data(config, args.data)

    for tau in taus:
        suffix = ""
        if tau is not None:
            config.set_setting("scoring.tau", tau)
            suffix = tau_suffix(tau)
        config.save_settings(output_dir / f"resolved_config{suffix}.json")
        run = FitPipeline(dataset, output_dir, config, suffix, source).run()
        print(f"Fit {run.run_id}: {run.status}")
        for artifact, path in run.outputs_generated.items():
            print(f"  {artifact} -> {path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    """Predict with a saved model on a CSV table."""
    config = _resolve_config(args, {
        "data.target_column": args.target,
        "data.target_scale": args.target_scale,
        "data.id_column": args.id_column,
    })
    model = load_model(args.model)
    features = _feature_list(args.features) or list(model.norm_stats.feature_names)
    if not features:
        raise ValueError("--features is required for models saved without feature names")
    dataset = load_table(args.data, features, config.get_setting("data.target_column"),
                         config.get_setting("data.target_scale"), config.get_setting("data.id_column"))
    predictions = PredictionSet(predict_batch(model, dataset.features), dataset.target,
                                Path(args.model).stem, dataset.row_ids)
    output = write_predictions(predictions, args.output)
    _write_resolved(config, output.parent)
    print(f"Wrote {len(predictions)} predictions to {output}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    """Score several prediction files and compare them with a reference."""
    config = _resolve_config(args, _score_overrides(args))
    if len(args.predictions) < 2:
        raise ValueError("evaluate needs at least two prediction files")
    labels = args.labels or [Path(p).stem for p in args.predictions]
    if len(labels) != len(args.predictions) or len(set(labels)) != len(labels):
        raise ValueError("--labels must give one distinct label per prediction file")
    sets = {label: read_predictions(path, label) for label, path in zip(labels, args.predictions)}
    reference = args.reference or labels[-1]
    report = evaluate_methods(sets, config.score_params(), reference)

    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    frame = report.to_frame()
    frame.to_csv(output_dir / "evaluation.csv", index=False, float_format="%.17g")
    _write_json(report.to_dict(), output_dir / "evaluation.json")
    _write_resolved(config, output_dir)
    print(frame.pivot(index="method", columns="metric", values="value").to_string())
    return EXIT_OK


def cmd_murphy(args) -> int:
    """Trace the Murphy curve of one prediction file."""
    config = _resolve_config(args, {**_score_overrides(args), "evaluation.n_thetas": args.n_thetas})
    ps = read_predictions(args.predictions)
    grid = default_theta_grid(ps, int(config.get_setting("evaluation.n_thetas")),
                              float(config.get_setting("evaluation.theta_padding")))
    curve = murphy_curve(ps, config.score_params(), grid)
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    curve.to_csv(output, index=False, float_format="%.17g")
    _write_resolved(config, output.parent)
    print(f"Wrote Murphy curve with {len(curve)} thresholds to {output}")
    return EXIT_OK


def cmd_functional(args) -> int:
    """Quantile, expectile or Huber quantile of a data column, optionally a ratio grid."""
    config = _resolve_config(args, _score_overrides(args))
    p = config.score_params()
    values = load_column(args.data, args.column)
    sample = EmpiricalSample(values)
    req = FunctionalRequest(args.kind, p)
    result: Dict[str, Any] = {"kind": args.kind, "n": sample.n, "params": p.to_dict()}
    if args.law == "lognormal":
        law = lognormal_fit_mle(sample)
        result.update(law={"mu": law.mu, "sigma": law.sigma}, value=distribution_huber_quantile(law, req))
    else:
        result["value"] = empirical_functional(sample, req)
        if args.kind == "huber":
            lower, upper = huber_quantile_interval(sample, p.tau, p.a, p.b)
            result["interval"] = [lower, upper]
    print(f"{args.kind} at tau={p.tau}: {result['value']:.10g}")

    output_dir = Path(args.output_dir)
    _write_json(result, output_dir / "functional.json")
    if args.ratio_grid:
        if args.group_column:
            frame = pd.read_csv(args.data)
            groups = pd.to_numeric(frame[args.column], errors="coerce").groupby(frame[args.group_column])
            samples = [EmpiricalSample(g.dropna().to_numpy()) for _, g in sorted(groups, key=lambda kv: kv[0])
                       if g.notna().any()]
        else:
            samples = [sample]
        tables = empirical_ratio_grid(samples, config.get_setting("evaluation.a_grid"),
                                      config.get_setting("evaluation.b_grid"), p.tau)
        long = pd.concat([t.to_long() for t in tables.values()], ignore_index=True)
        long.to_csv(output_dir / "ratio_grid.csv", index=False, float_format="%.17g")
        print(f"Wrote ratio grid over {len(samples)} samples to {output_dir / 'ratio_grid.csv'}")
    _write_resolved(config, output_dir)
    return EXIT_OK


def cmd_distfit(args) -> int:
    """Fit a log-normal law by maximum likelihood."""
    config = _resolve_config(args, {})
    if args.data:
        if not args.column:
            raise ValueError("--column is required with --data")
        sample = EmpiricalSample(load_column(args.data, args.column))
    elif args.draws:
        sample = lognormal_sample(LogNormalParams(args.mu, args.sigma), args.draws, args.seed)
    else:
        raise ValueError("distfit needs --data or --draws")
    try:
        law = lognormal_fit_mle(sample)
    except ValueError as e:
        raise DataValidationError(f"Cannot fit a log-normal law to '{args.column or 'draws'}': {e}") from e
    payload = {"n": sample.n, "mu": law.mu, "sigma": law.sigma, "median": law.median, "mean": law.mean}
    output_dir = Path(args.output_dir)
    _write_json(payload, output_dir / "distfit.json")
    _write_resolved(config, output_dir)
    print(f"mu={law.mu:.6f} sigma={law.sigma:.6f} (n={sample.n})")
    return EXIT_OK


def cmd_decide(args) -> int:
    """Print the implied level and simulate the invest-or-refrain rule."""
    config = _resolve_config(args, {
        "decision.theta": args.theta,
        "decision.r_l": args.r_l,
        "decision.r_g": args.r_g,
        "scoring.a": _cap_override(args.a),
        "scoring.b": _cap_override(args.b),
    })
    p = config.score_params()
    policy = DecisionPolicy(
        theta=float(config.get_setting("decision.theta")),
        a=p.a,
        b=p.b,
        r_l=float(config.get_setting("decision.r_l")),
        r_g=float(config.get_setting("decision.r_g")),
    )
    print(f"implied tau = {policy.tau:.6g}")
    output_dir = Path(args.output_dir)
    if args.predictions:
        result = simulate_portfolio(read_predictions(args.predictions), policy)
        write_portfolio(result, output_dir)
        print(f"payoff={result.total_payoff:.6f} regret={result.total_regret:.6f} "
              f"invest={result.n_invest} refrain={result.n_refrain}")
    _write_json({"policy": policy.to_dict()}, output_dir / "decision.json")
    _write_resolved(config, output_dir)
    return EXIT_OK


def _add_score_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--tau', type=float, help='Level in (0, 1)')
    parser.add_argument('--a', type=float, help='Cap on under-prediction distances ("inf" for none)')
    parser.add_argument('--b', type=float, help='Cap on over-prediction distances ("inf" for none)')


def create_parser():
    """Create the argument parser."""
    parser = argparse.ArgumentParser(
        prog="hqrn-run",
        description="Huber quantile regression networks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate synthetic data
  hqrn-run synth --n 2000 --d 5 --output data/synth.csv

  # Fit MODEL3 at tau=0.4 with caps a=0.5, b=0.4
  hqrn-run fit --data data/synth.csv --features x1,x2,x3,x4,x5 --arch model3 --tau 0.4 --a 0.5 --b 0.4 --seed 7

  # One model per level
  hqrn-run fit --tau-list 0.4 0.5 0.6 --output-dir output

  # Compare methods against a reference
  hqrn-run evaluate m1.csv m2.csv m3.csv --labels model1 model2 model3 --reference model3

  # Level implied by equal rates
  hqrn-run decide --r-l 0.3 --r-g 0.3
        """
    )

    parser.add_argument(
        '--version',
        action='version',
        version=f'hqrn-package {__version__}'
    )

    parser.add_argument(
        '--config',
        help='JSON settings file merged over the packaged defaults'
    )

    parser.add_argument(
        '--log-level',
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
        default=None,
        help='Logging level (default: from settings)'
    )

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    synth_parser = subparsers.add_parser('synth', help='Generate synthetic conditional log-normal data')
    synth_parser.add_argument('--n', type=int, help='Number of rows')
    synth_parser.add_argument('--d', type=int, help='Number of features')
    synth_parser.add_argument('--coefficients', type=float, nargs='+', help='Intercept followed by d slopes')
    synth_parser.add_argument('--sigma', type=float, help='Log-scale noise spread')
    synth_parser.add_argument('--seed', type=int, help='Generator seed')
    synth_parser.add_argument('--output', default='data/synth.csv', help='Output CSV (default: data/synth.csv)')
    synth_parser.set_defaults(func=cmd_synth)

    fit_parser = subparsers.add_parser('fit', help='Fit a network with early stopping and refit')
    fit_parser.add_argument('--data', help='Input CSV (default: synthetic data from settings)')
    fit_parser.add_argument('--features', help='Comma-separated feature columns')
    fit_parser.add_argument('--target', help='Target column')
    fit_parser.add_argument('--target-scale', type=float, help='Divide the target by this factor')
    fit_parser.add_argument('--arch', choices=['model1', 'model2', 'model3'], help='Architecture preset')
    _add_score_arguments(fit_parser)
    fit_parser.add_argument('--tau-list', type=float, nargs='+', help='Fit one model per level')
    fit_parser.add_argument('--seed', type=int, help='Initialization and shuffling seed')
    fit_parser.add_argument('--split-seed', type=int, help='Train/validation/test split seed')
    fit_parser.add_argument('--learning-rate', type=float, help='ADAM step size')
    fit_parser.add_argument('--batch-size', type=int, help='Minibatch size')
    fit_parser.add_argument('--max-epochs', type=int, help='Epoch limit')
    fit_parser.add_argument('--patience', type=int, help='Early-stopping patience')
    fit_parser.add_argument('--output-dir', default='output', help='Output directory (default: output)')
    fit_parser.set_defaults(func=cmd_fit)

    predict_parser = subparsers.add_parser('predict', help='Predict with a saved model')
    predict_parser.add_argument('--model', required=True, help='Model JSON')
    predict_parser.add_argument('--data', required=True, help='Input CSV')
    predict_parser.add_argument('--features', help='Comma-separated feature columns (default: from model)')
    predict_parser.add_argument('--target', help='Observation column')
    predict_parser.add_argument('--target-scale', type=float, help='Divide the target by this factor')
    predict_parser.add_argument('--id-column', help='Row identifier column')
    predict_parser.add_argument('--output', default='output/predictions.csv', help='Prediction CSV')
    predict_parser.set_defaults(func=cmd_predict)

    evaluate_parser = subparsers.add_parser('evaluate', help='Scores, skill, level estimates and coverage')
    evaluate_parser.add_argument('predictions', nargs='+', help='Prediction CSV files (two or more)')
    evaluate_parser.add_argument('--labels', nargs='+', help='Method labels (default: file stems)')
    evaluate_parser.add_argument('--reference', help='Reference method label (default: last file)')
    _add_score_arguments(evaluate_parser)
    evaluate_parser.add_argument('--output-dir', default='output', help='Output directory (default: output)')
    evaluate_parser.set_defaults(func=cmd_evaluate)

    murphy_parser = subparsers.add_parser('murphy', help='Murphy curve of one prediction file')
    murphy_parser.add_argument('--predictions', required=True, help='Prediction CSV')
    _add_score_arguments(murphy_parser)
    murphy_parser.add_argument('--n-thetas', type=int, help='Number of thresholds')
    murphy_parser.add_argument('--output', default='output/murphy.csv', help='Curve CSV')
    murphy_parser.set_defaults(func=cmd_murphy)

    functional_parser = subparsers.add_parser('functional', help='Functional of a data column')
    functional_parser.add_argument('--data', required=True, help='Input CSV')
    functional_parser.add_argument('--column', required=True, help='Value column')
    functional_parser.add_argument('--kind', choices=['quantile', 'expectile', 'huber'], default='huber')
    functional_parser.add_argument('--law', choices=['empirical', 'lognormal'], default='empirical',
                                   help='Use the sample or a fitted log-normal law')
    _add_score_arguments(functional_parser)
    functional_parser.add_argument('--ratio-grid', action='store_true',
                                   help='Also tabulate Huber/expectile and Huber/quantile ratios')
    functional_parser.add_argument('--group-column', help='Split the column into samples by this column')
    functional_parser.add_argument('--output-dir', default='output', help='Output directory (default: output)')
    functional_parser.set_defaults(func=cmd_functional)

    distfit_parser = subparsers.add_parser('distfit', help='Maximum likelihood log-normal fit')
    distfit_parser.add_argument('--data', help='Input CSV')
    distfit_parser.add_argument('--column', help='Value column')
    distfit_parser.add_argument('--draws', type=int, help='Fit to this many simulated draws instead')
    distfit_parser.add_argument('--mu', type=float, default=-0.063, help='Simulation mu (default: -0.063)')
    distfit_parser.add_argument('--sigma', type=float, default=0.534, help='Simulation sigma (default: 0.534)')
    distfit_parser.add_argument('--seed', type=int, default=0, help='Simulation seed (default: 0)')
    distfit_parser.add_argument('--output-dir', default='output', help='Output directory (default: output)')
    distfit_parser.set_defaults(func=cmd_distfit)

    decide_parser = subparsers.add_parser('decide', help='Invest-or-refrain rule')
    decide_parser.add_argument('--predictions', help='Prediction CSV to simulate')
    decide_parser.add_argument('--theta', type=float, help='Investment amount')
    decide_parser.add_argument('--r-l', type=float, help='Loss deduction rate in [0, 1)')
    decide_parser.add_argument('--r-g', type=float, help='Gain tax rate in [0, 1)')
    decide_parser.add_argument('--a', type=float, help='Gain cap ("inf" for none)')
    decide_parser.add_argument('--b', type=float, help='Loss cap ("inf" for none)')
    decide_parser.add_argument('--output-dir', default='output', help='Output directory (default: output)')
    decide_parser.set_defaults(func=cmd_decide)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    parser = create_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    try:
        return args.func(args)
    except (DataValidationError, FileNotFoundError) as e:
        logger.error(f"Data error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"Invalid usage: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
