#!/usr/bin/env python3
"""
spinfade experiment runner
Runs one named experiment from a JSON config, writes CSV artifacts with a
manifest, and prints a JSON result document on stdout
"""

import sys
import json
import time
import logging
import argparse
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from disorder import Distribution
from dynamics import curve
from averaging import (analytic_curve, ensemble_average, pair_covariance_analytic,
                       pair_covariance_monte_carlo, variance_scan)
from decay import (ClassifierThresholds, InsufficientData, NonDecayingInput, best_decay_law,
                   bernoulli_envelope_prediction, envelope, exponential_bound_test, ratio_on_envelope,
                   stretched_exponent_fit)
from thermo import self_averaging_report
from identity_validation import IdentityValidator
from experiment_config import EXPERIMENTS, ConfigError, ExperimentConfig, from_dict, load_config
from artifacts import write_csv, write_json, write_manifest
from worker_pool import WorkerPool

logger = logging.getLogger(__name__)

CSV_HEADERS = {
    'curve': ['t', 'value', 'log_abs', 'certified_error', 'terms_used'],
    'disorder-average': ['t', 'mc_mean', 'mc_stderr', 'analytic', 'samples'],
    'variance-scan': ['m', 't', 'var_estimate', 'stderr', 'samples'],
    'covariance': ['k', 't', 'analytic', 'mc_estimate', 'mc_stderr', 'samples'],
    'decay-classify': ['t_center', 't_peak', 'envelope_max', 'log_envelope'],
    'ratio': ['t', 'f_b', 'f_g', 'ratio', 'log_ratio', 'division_underflow'],
    'free-energy': ['n', 'beta', 'sample_index', 'f_n'],
    'free-energy-summary': ['n', 'beta', 'mean', 'std', 'stderr', 'samples'],
    'verify': ['check', 'passed', 'detail'],
}


class ExperimentRunner:
    """Dispatches an ExperimentConfig to its experiment and records the artifacts"""

    def __init__(self, config: ExperimentConfig, workers: int = 1):
        self.config = config
        self.workers = max(1, workers)
        self.out_dir = Path(config.output)
        self.outputs: List[Path] = []

    def _csv(self, name: str, header_key: str, rows) -> Path:
        path = write_csv(self.out_dir / name, CSV_HEADERS[header_key], rows)
        self.outputs.append(path)
        return path

    def run(self) -> Dict[str, Any]:
        start_time = time.time()
        handler = getattr(self, f"run_{self.config.experiment.replace('-', '_')}")
        logger.info(f"Running {self.config.experiment} experiment -> {self.out_dir}")

        with WorkerPool(self.workers) as pool:
            summary = handler(pool)

        wall_time = time.time() - start_time
        manifest = write_manifest(self.out_dir, self.config.experiment, self.outputs, self.config.echo(),
                                  self.config.master_seed, self.workers, wall_time)
        result = {
            'success': summary.pop('success', True),
            'experiment': self.config.experiment,
            'outputs': [str(p) for p in self.outputs],
            'manifest': str(manifest),
            'master_seed': self.config.master_seed,
            'wall_time_seconds': wall_time,
            'timestamp': datetime.now().isoformat(),
        }
        result.update(summary)
        return result

    # Experiments

    def _disorder(self) -> Optional[Distribution]:
        return self.config.disorder.distribution if self.config.disorder else None

    def run_curve(self, pool) -> Dict[str, Any]:
        c = self.config
        field_ = c.disorder.field() if c.disorder is not None else None
        result = curve(field_, c.potential, c.initial_state, c.B, c.time_grid, c.truncation, c.site, pool)
        self._csv(f"{c.experiment}.csv", 'curve', result.rows())
        return {'points': len(result.grid), 'max_terms_used': result.metadata['max_terms_used'],
                'max_certified_error': result.metadata['max_certified_error']}

    def run_disorder_average(self, pool) -> Dict[str, Any]:
        c = self.config
        rows = ensemble_average(c.potential, self._disorder(), c.master_seed, c.time_grid.times, c.samples,
                                c.truncation, c.site, c.m, pool)
        self._csv(f"{c.experiment}.csv", 'disorder-average',
                  [(r.t, r.mc_mean, r.mc_stderr, r.analytic, r.samples) for r in rows])
        worst = max(abs(r.mc_mean - r.analytic) / r.mc_stderr if r.mc_stderr > 0 else 0.0 for r in rows)
        return {'points': len(rows), 'samples': c.samples, 'max_standard_errors_from_analytic': worst}

    def run_variance_scan(self, pool) -> Dict[str, Any]:
        c = self.config
        rows = variance_scan(c.potential, self._disorder(), c.master_seed, c.m_list, float(c.t), c.samples,
                             c.truncation, pool)
        self._csv(f"{c.experiment}.csv", 'variance-scan',
                  [(r.m, r.t, r.var_estimate, r.stderr, r.samples) for r in rows])
        return {'m_list': list(c.m_list), 'var_estimates': [r.var_estimate for r in rows]}

    def run_covariance(self, pool) -> Dict[str, Any]:
        c = self.config
        distribution, t = self._disorder(), float(c.t)
        rows = []
        for k in c.k_list:
            analytic = pair_covariance_analytic(c.potential, distribution, t, k)
            estimate, stderr = pair_covariance_monte_carlo(c.potential, distribution, c.master_seed, t, k,
                                                           c.samples, c.truncation, pool)
            rows.append((k, t, analytic, estimate, stderr, c.samples))
        self._csv(f"{c.experiment}.csv", 'covariance', rows)
        return {'k_list': list(c.k_list)}

    def _decay_curve(self, pool):
        c = self.config
        if c.disorder is None:
            return curve(None, c.potential, c.initial_state, c.B, c.time_grid, c.truncation, pool=pool)
        return analytic_curve(c.potential, c.disorder.distribution, c.time_grid, c.truncation, pool)

    def run_decay_classify(self, pool) -> Dict[str, Any]:
        c = self.config
        env = envelope(self._decay_curve(pool), c.envelope.window_width, c.envelope.floor)
        self._csv(f"{c.experiment}.csv", 'decay-classify', env.rows())

        thresholds = ClassifierThresholds(c.envelope.lower_ratio, c.envelope.upper_ratio)
        verdict = {'classification': exponential_bound_test(env, c.envelope.t_min, thresholds).to_dict(),
                   'dropped_windows': env.dropped}
        fit_range = c.envelope.fit_range or (c.envelope.t_min, c.time_grid.times[-1])
        try:
            fit = stretched_exponent_fit(env, fit_range)
            verdict['stretched_fit'] = {'exponent': fit.exponent, 'rate': fit.rate, 'r_squared': fit.r_squared,
                                        'fit_range': list(fit_range)}
        except (InsufficientData, NonDecayingInput) as e:
            verdict['stretched_fit'] = {'error': str(e)}
        try:
            verdict['best_law'] = best_decay_law(env, fit_range).to_dict()
        except InsufficientData as e:
            verdict['best_law'] = {'error': str(e)}
        if c.potential.alpha is not None and c.potential.alpha > 0.5 and self._disorder() is not Distribution.GAUSSIAN:
            exponent, d = bernoulli_envelope_prediction(c.potential.alpha)
            verdict['bernoulli_prediction'] = {'exponent': exponent, 'd': d}

        path = write_json(self.out_dir / f"{c.experiment}.verdict.json", verdict)
        self.outputs.append(path)
        return {'verdict': verdict['classification']['verdict'],
                'stretched_exponent': verdict['stretched_fit'].get('exponent')}

    def run_ratio(self, pool) -> Dict[str, Any]:
        c = self.config
        curve_b = analytic_curve(c.potential, Distribution.BERNOULLI, c.time_grid, c.truncation, pool)
        _, rows = ratio_on_envelope(c.potential, curve_b, c.truncation, c.envelope.window_width, 0.0)
        self._csv(f"{c.experiment}.csv", 'ratio',
                  [(r.t, r.f_b, r.f_g, r.ratio, r.log_ratio, r.division_underflow) for r in rows])
        return {'points': len(rows), 'underflows': sum(r.division_underflow for r in rows)}

    def run_free_energy(self, pool) -> Dict[str, Any]:
        c = self.config
        summary, raw = self_averaging_report(c.potential, self._disorder(), c.master_seed, c.thermo.n_list,
                                             c.thermo.beta, c.samples, c.thermo.n_max, pool)
        self._csv(f"{c.experiment}.csv", 'free-energy', [(r.n, r.beta, r.sample_index, r.f_n) for r in raw])
        self._csv(f"{c.experiment}.summary.csv", 'free-energy-summary',
                  [(s.n, s.beta, s.mean, s.std, s.stderr, s.samples) for s in summary])
        return {'n_list': list(c.thermo.n_list), 'std': [s.std for s in summary]}

    def run_verify(self, pool) -> Dict[str, Any]:
        report = IdentityValidator(seed=self.config.master_seed).run_validation()
        self._csv(f"{self.config.experiment}.csv", 'verify',
                  [(r['check'], r['passed'], r['detail']) for r in report['checks']])
        return {'success': report['success'], 'passed': report['passed'], 'total': report['total'],
                'failed_checks': [r['check'] for r in report['checks'] if not r['passed']]}


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config, args.command)
    elif args.command == 'verify':
        config = from_dict({'experiment': 'verify'})
    else:
        raise ConfigError('config', f"--config is required for the '{args.command}' experiment")
    return config.with_overrides(seed=args.seed, output=args.out)


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Spin-chain decay laboratory")
    parser.add_argument("command", choices=EXPERIMENTS, help="Experiment to run")
    parser.add_argument("--config", help="Experiment config (JSON)")
    parser.add_argument("--seed", type=int, help="Override the master seed")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def run_command(argv: Optional[List[str]] = None) -> Tuple[Dict[str, Any], int]:
    """Parse, run and return (result document, exit status)"""
    args = create_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s', stream=sys.stderr)
    try:
        config = build_config(args)
        result = ExperimentRunner(config, args.workers).run()
        return result, 0 if result['success'] else 1
    except ConfigError as e:
        return {'success': False, 'error': str(e), 'error_type': 'ConfigError', 'field': e.path}, 2
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        result = {'success': False, 'error': str(e), 'error_type': type(e).__name__}
        for attr in ('t', 'terms', 'achieved_bound', 'tolerance', 'n', 'n_max'):
            if hasattr(e, attr):
                result[attr] = getattr(e, attr)
        return result, 1


def main():
    result, status = run_command()
    print(json.dumps(result, indent=2, default=str))
    sys.exit(status)


if __name__ == "__main__":
    main()
