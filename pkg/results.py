#!/usr/bin/env python3
"""
Result records and artifact files for annealing runs.
Trajectories are written as CSV series, run summaries as JSON, sweeps as one summary table.
"""

import csv
import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import RunConfig
from evolution import Observables

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ['run', 'sweep', 'tau', 'cd', 'status', 'final_p_minus', 'final_fidelity',
                   'min_fidelity', 'max_leakage', 'min_eig', 'max_trace_error', 'error']


def _fmt(value: float) -> str:
    return f"{float(value):.12e}"


def _slug(text: str) -> str:
    return re.sub(r'[^A-Za-z0-9_.-]+', '-', str(text)).strip('-') or 'run'


def config_hash(config: RunConfig) -> str:
    """Stable fingerprint of a run configuration (machine-local overrides excluded)."""
    data = config.to_dict()
    for key in ('output_dir', 'threads'):
        data.pop(key, None)
    payload = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.md5(payload.encode()).hexdigest()


@dataclass
class ResultRecord:
    name: str
    config_hash: str
    status: str = 'success'
    summaries: List[Dict[str, Any]] = field(default_factory=list)
    artifacts: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    sweep_values: Dict[str, Any] = field(default_factory=dict)

    def finalize(self) -> 'ResultRecord':
        self.status = 'success' if not self.errors else ('partial' if self.summaries else 'error')
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def summarize(observables: Observables, tau: float, cd_label: str, skipped_pairs: int = 0,
              residual_series: Optional[tuple] = None, kms: Optional[List[Dict]] = None,
              notes: Sequence[str] = ()) -> Dict[str, Any]:
    """Per-trajectory summary: final values, worst leakage into initially empty blocks, diagnostics."""
    empty = [int(a) for a in np.flatnonzero(observables.jb_overlaps[0] < 1e-9)]
    summary = {
        'tau': float(tau),
        'cd': cd_label,
        'final_p_minus': float(observables.p_minus[-1]),
        'final_fidelity': float(observables.fidelity[-1]),
        'min_fidelity': float(np.min(observables.fidelity)),
        'initially_empty_blocks': empty,
        'max_leakage': observables.max_leakage(empty),
        'min_eig': float(np.min(observables.min_eig)),
        'max_trace_error': float(np.max(observables.trace_error)),
        'max_ground_multiplicity': int(np.max(observables.ground_multiplicity)),
        'skipped_pairs': int(skipped_pairs),
        'tracking_warnings': list(observables.tracking_warnings),
        'notes': list(notes),
    }
    if residual_series is not None and len(residual_series[0]):
        grid, residuals = residual_series
        summary['variational_residual'] = [[float(s), float(r)] for s, r in zip(grid, residuals)]
    if kms is not None:
        summary['kms'] = kms
    return summary


class ResultStore:
    """Writes artifacts below <output_dir>/<run name>/."""

    def __init__(self, output_dir: str, name: str):
        self.root = Path(output_dir) / _slug(name)
        self.root.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Writing artifacts to {self.root}")

    def trajectory_path(self, tau: float, cd_label: str, suffix: str = '') -> Path:
        return self.root / f"tau{tau:g}_{_slug(cd_label)}{suffix}.csv"

    def write_trajectory(self, observables: Observables, tau: float, cd_label: str,
                         suffix: str = '') -> str:
        """CSV with columns s, P_minus, fidelity, jb_overlap_0..D^2-1, trace_error, min_eig."""
        path = self.trajectory_path(tau, cd_label, suffix)
        blocks = observables.jb_overlaps.shape[1]
        header = (['s', 'P_minus', 'fidelity'] + [f'jb_overlap_{a}' for a in range(blocks)]
                  + ['trace_error', 'min_eig'])
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for k, s in enumerate(observables.s):
                writer.writerow([_fmt(s), _fmt(observables.p_minus[k]), _fmt(observables.fidelity[k])]
                                + [_fmt(v) for v in observables.jb_overlaps[k]]
                                + [_fmt(observables.trace_error[k]), _fmt(observables.min_eig[k])])
        return str(path)

    def write_summary(self, record: ResultRecord, filename: str = 'summary.json') -> str:
        path = self.root / filename
        with open(path, 'w') as f:
            json.dump(record.to_dict(), f, indent=2, sort_keys=True, default=str)
            f.write('\n')
        logger.info(f"Summary written to {path}")
        return str(path)

    def write_sweep_table(self, records: List[ResultRecord]) -> str:
        """One row per (cell, tau, cd); failed cells appear with their error."""
        path = self.root / 'summary.csv'
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(SUMMARY_COLUMNS)
            for record in records:
                sweep = json.dumps(record.sweep_values, sort_keys=True)
                for summary in record.summaries:
                    writer.writerow([record.name, sweep, _fmt(summary['tau']), summary['cd'], 'success',
                                     _fmt(summary['final_p_minus']), _fmt(summary['final_fidelity']),
                                     _fmt(summary['min_fidelity']), _fmt(summary['max_leakage']),
                                     _fmt(summary['min_eig']), _fmt(summary['max_trace_error']), ''])
                for error in record.errors:
                    writer.writerow([record.name, sweep, '', '', 'error', '', '', '', '', '', '', error])
        logger.info(f"Sweep table written to {path} ({len(records)} cells)")
        return str(path)
