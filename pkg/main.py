#!/usr/bin/env python3
"""
Counterdiabatic annealing simulator
Runs qubit and p-spin anneals under the adiabatic master equation with and without
counterdiabatic (CD) driving, sweeps parameters and runs the validation suite.

Usage:
    python main.py run --preset qubit_jordan_blocks
    python main.py run --preset fig5
    python main.py sweep --config presets/pspin_coupling_sweep.json --threads 8
    python main.py validate --report validation.json
"""

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import RunConfig, Settings, load_preset, load_run_config, settings as default_settings
from counterdiabatic import CdProvider, kms_violation_report
from evolution import GeneratorSource, IntegratorConfig, run_trajectory
from exceptions import ConfigError, SimulationError
from results import ResultRecord, ResultStore, config_hash, summarize

logger = logging.getLogger(__name__)

KMS_CHECK_POINTS = (0.25, 0.5, 0.75)


def expand_sweep(config: RunConfig) -> List[Tuple[Dict[str, Any], RunConfig]]:
    """Cartesian product of the declared sweep lists; no sweep means a single cell."""
    if not config.sweep:
        return [({}, config)]
    paths = sorted(config.sweep)
    cells = []
    for values in itertools.product(*(config.sweep[p] for p in paths)):
        cell = config
        for path, value in zip(paths, values):
            cell = cell.with_value(path, value)
        cells.append((dict(zip(paths, values)), cell))
    return cells


def _cell_suffix(values: Dict[str, Any]) -> str:
    if not values:
        return ''
    return '_' + '_'.join(f"{path.split('.')[-1]}{json.dumps(v, separators=(',', ''))}"
                          for path, v in sorted(values.items()))


class AnnealingRunner:
    def __init__(self, config: RunConfig, settings: Settings = default_settings):
        """Resolve run-level options against the environment settings."""
        self.config = config
        self.output_dir = config.output_dir or settings.output_dir
        self.threads = config.threads or settings.threads
        self.seed = config.seed if config.seed is not None else settings.seed
        self.store = ResultStore(self.output_dir, config.name)

    def build_providers(self, scenario) -> List[CdProvider]:
        """One provider per configured CD entry; variational weights are solved up front."""
        providers = []
        for entry in self.config.cd:
            provider = CdProvider.from_case(scenario, entry.case(), label=entry.label,
                                            grid_points=self.config.cd_grid_points,
                                            threads=self.threads)
            providers.append(provider.prepare())
        return providers

    def _kms(self, provider: CdProvider, scenario) -> Optional[List[Dict]]:
        if not self.config.kms_report or provider.mode != 'variational' or scenario.bath is None:
            return None
        if not any(t.constrained for t in provider.terms):
            return None
        grid, _ = provider.residual_series()
        reports = []
        for s in KMS_CHECK_POINTS:
            k = int(np.argmin(np.abs(grid - s)))
            reports.append(asdict(kms_violation_report(provider.solutions[k], scenario, float(grid[k]))))
        return reports

    def _run_job(self, scenario, provider: CdProvider, tau: float, integrator: IntegratorConfig,
                 source: GeneratorSource, suffix: str) -> Tuple[Dict, str]:
        if provider.mode != 'variational':
            # exact and none providers keep per-trajectory counters
            provider = CdProvider(scenario, provider.mode, label=provider.label)
        trajectory = run_trajectory(scenario, provider, tau, integrator, source)
        path = self.store.write_trajectory(trajectory.observables, tau, provider.label, suffix)
        summary = summarize(trajectory.observables, tau, provider.label, trajectory.skipped_pairs,
                            provider.residual_series() if provider.mode == 'variational' else None,
                            self._kms(provider, scenario), trajectory.notes)
        logger.info(f"{scenario.name} tau={tau:g} cd={provider.label}: "
                    f"P_minus={summary['final_p_minus']:.4f}, fidelity={summary['final_fidelity']:.4f}")
        return summary, path

    def run(self, sweep_values: Optional[Dict[str, Any]] = None) -> ResultRecord:
        """Run every (tau, CD) combination of this cell; failures are recorded, not raised."""
        sweep_values = sweep_values or {}
        record = ResultRecord(self.config.name, config_hash(self.config), sweep_values=sweep_values)
        suffix = _cell_suffix(sweep_values)
        try:
            scenario = self.config.scenario()
            integrator = IntegratorConfig(**asdict(self.config.integrator))
            source = GeneratorSource(scenario, integrator.generator_source)
            providers = self.build_providers(scenario)
        except SimulationError as e:
            error_msg = f"Setup failed for {self.config.name}: {e}"
            logger.error(error_msg)
            record.errors.append(error_msg)
            return record.finalize()

        jobs = [(tau, provider) for tau in self.config.taus for provider in providers]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            futures = [pool.submit(self._run_job, scenario, provider, tau, integrator, source, suffix)
                       for tau, provider in jobs]
            for (tau, provider), future in zip(jobs, futures):
                try:
                    summary, path = future.result()
                    record.summaries.append(dict(summary, sweep=sweep_values))
                    record.artifacts.append(path)
                except SimulationError as e:
                    error_msg = f"tau={tau:g}, cd={provider.label}: {type(e).__name__}: {e}"
                    logger.error(error_msg)
                    record.errors.append(error_msg)
        return record.finalize()


def cmd_run(config: RunConfig, settings: Settings = default_settings) -> ResultRecord:
    """Run one configuration (sweep cells, if any, sequentially) into a single record."""
    runner = AnnealingRunner(config, settings)
    record = ResultRecord(config.name, config_hash(config))
    for values, cell in expand_sweep(config):
        cell_record = AnnealingRunner(cell, settings).run(values)
        record.summaries.extend(cell_record.summaries)
        record.artifacts.extend(cell_record.artifacts)
        record.errors.extend(cell_record.errors)
    record.finalize()
    record.artifacts.append(runner.store.write_summary(record))
    logger.info(f"Run {config.name} finished: {record.status}, {len(record.summaries)} trajectories, "
                f"{len(record.errors)} errors")
    return record


def cmd_sweep(config: RunConfig, settings: Settings = default_settings) -> List[ResultRecord]:
    """Run the sweep cells concurrently; each cell's failures stay in its own record."""
    runner = AnnealingRunner(config, settings)
    cells = expand_sweep(config)
    logger.info(f"Sweeping {config.name}: {len(cells)} cells on {runner.threads} workers")
    cell_settings = replace(settings, threads=1)

    def run_cell(cell):
        values, cell_config = cell
        try:
            return AnnealingRunner(cell_config, cell_settings).run(values)
        except Exception as e:
            error_msg = f"Cell {values} failed: {e}"
            logger.error(error_msg)
            return ResultRecord(config.name, config_hash(cell_config), errors=[error_msg],
                                sweep_values=values).finalize()

    with ThreadPoolExecutor(max_workers=runner.threads) as pool:
        records = list(pool.map(run_cell, cells))

    runner.store.write_sweep_table(records)
    combined = ResultRecord(config.name, config_hash(config))
    for record in records:
        combined.summaries.extend(record.summaries)
        combined.artifacts.extend(record.artifacts)
        combined.errors.extend(record.errors)
    runner.store.write_summary(combined.finalize(), 'sweep.json')
    return records


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Counterdiabatic driving for open-system quantum annealing')
    parser.add_argument('--out-dir', help='Output directory (default: CDOPEN_OUTPUT_DIR or ./output)')
    parser.add_argument('--threads', type=int, help='Worker threads (default: CDOPEN_THREADS)')
    parser.add_argument('--seed', type=int, help='Seed for randomized checks (default: CDOPEN_SEED)')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Logging level')
    sub = parser.add_subparsers(dest='command', required=True)

    for name, help_text in (('run', 'Run one scenario across its tau list and CD modes'),
                            ('sweep', 'Run the cartesian product of the sweep lists concurrently')):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument('--config', help='Run config JSON file')
        cmd.add_argument('--preset', help='Named preset from presets/ (e.g. qubit_jordan_blocks) or fig1..fig5')

    validate = sub.add_parser('validate', help='Run the invariant and oracle suite')
    validate.add_argument('--report', help='Write the JSON report to this file')
    validate.add_argument('--quick', action='store_true', help='Skip the end-to-end trajectory checks')
    return parser


def _load_config(args, settings: Settings) -> RunConfig:
    if bool(args.config) == bool(args.preset):
        raise ConfigError("Give exactly one of --config or --preset")
    config = load_run_config(args.config) if args.config else load_preset(args.preset)
    overrides = {}
    if args.out_dir:
        overrides['output_dir'] = args.out_dir
    if args.threads:
        overrides['threads'] = args.threads
    if args.seed is not None:
        overrides['seed'] = args.seed
    return replace(config, **overrides)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    settings = Settings()
    logging.basicConfig(
        level=getattr(logging, args.log_level or settings.log_level),
        format='%(asctime)s - %(levelname)s - %(message)s'
    )

    try:
        if args.command == 'validate':
            from validation import cmd_validate
            seed = args.seed if args.seed is not None else settings.seed
            status, _ = cmd_validate(args.report, seed=seed, quick=args.quick)
            return status

        config = _load_config(args, settings)
        if args.command == 'run':
            record = cmd_run(config, settings)
            return 0 if record.status == 'success' else 1
        records = cmd_sweep(config, settings)
        return 0 if all(r.status == 'success' for r in records) else 1
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
