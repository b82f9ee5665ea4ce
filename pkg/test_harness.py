#!/usr/bin/env python3
"""
Tests for run configuration, result artifacts and the command line
"""

import csv
import json

import numpy as np
import pytest

from config import (PRESET_ALIASES, PRESETS_DIR, BathConfig, CdModeConfig, RunConfig, Settings, load_preset,
                    load_run_config)
from evolution import Observables
from exceptions import ConfigError
from main import _cell_suffix, _load_config, build_parser, cmd_run, cmd_sweep, expand_sweep, main
from results import SUMMARY_COLUMNS, ResultRecord, ResultStore, config_hash, summarize


def qubit_config(**overrides):
    data = {
        'name': 'qubit-test',
        'model': {'kind': 'qubit'},
        'taus': [1.0],
        'cd': ['none', 'exact'],
        'integrator': {'samples': 11},
    }
    data.update(overrides)
    return RunConfig.from_dict(data)


def fake_observables(samples=5):
    s = np.linspace(0, 1, samples)
    overlaps = np.tile([1.0, 0.5, 0.0, 0.0], (samples, 1))
    overlaps[-1, 2] = 0.01
    return Observables(s=s, p_minus=np.linspace(1, 0.9, samples), fidelity=np.full(samples, 0.99),
                       jb_overlaps=overlaps, trace_error=np.zeros(samples), min_eig=np.full(samples, 0.01),
                       ground_multiplicity=np.ones(samples, dtype=int))


def test_config_round_trip():
    config = RunConfig.from_dict({
        'name': 'rt',
        'model': {'kind': 'pspin', 'n': 3, 'p': 3},
        'bath': {'eta_g2': 1e-2, 'temperature_mk': 17.0, 'include_lamb_shift': False},
        'taus': [1.0, 10.0],
        'cd': ['none', 'Cyclic', {'label': 'mine', 'mode': 'variational', 'ansatz': ['Sy', 'Sy3']}],
        'kms_report': True,
        'sweep': {'bath.eta_g2': [1e-4, 1e-2]},
    })
    again = RunConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again == config
    assert again.to_dict() == config.to_dict()


def test_cd_shorthand():
    assert CdModeConfig.from_dict('exact').mode == 'exact'
    entry = CdModeConfig.from_dict('Bath')
    assert entry.mode == 'variational' and entry.case() == 'Bath'
    explicit = CdModeConfig('pair', 'variational', ['Sy', 'Sy3'])
    assert explicit.case() == ['Sy', 'Sy3']
    with pytest.raises(ConfigError):
        CdModeConfig('empty', 'variational')


@pytest.mark.parametrize('data', [
    {'name': 'x', 'colour': 'red'},
    {'name': 'x', 'model': {'kind': 'qubit', 'spin': 2}},
    {'name': 'x', 'bath': {'eta': 1e-4}},
    {'name': 'x', 'integrator': {'order': 5}},
    {'name': 'x', 'cd': [{'label': 'a', 'mode': 'exact', 'extra': 1}]},
    {'name': 'x', 'taus': []},
    {'name': 'x', 'initial_state': 'excited'},
    {'name': 'x', 'cd': ['none', 'none']},
    {'model': {'kind': 'qubit'}},
])
def test_config_schema_violations(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_bath_temperature_options():
    with pytest.raises(ConfigError):
        BathConfig(temperature=2.0, temperature_mk=17.0)
    assert BathConfig().beta == pytest.approx(1 / 2.23, rel=0.01)
    assert BathConfig(temperature=2.0).beta == pytest.approx(0.5)


def test_with_value_and_sweep_expansion():
    config = qubit_config(bath={'eta_g2': 1e-4}, sweep={'bath.eta_g2': [0.0, 1e-4], 'taus': [[1.0], [10.0]]})
    cells = expand_sweep(config)
    assert len(cells) == 4
    values, cell = cells[-1]
    assert values == {'bath.eta_g2': 1e-4, 'taus': [10.0]}
    assert cell.bath.eta_g2 == 1e-4 and cell.taus == [10.0]
    assert cell.sweep == {}
    assert expand_sweep(qubit_config()) == [({}, qubit_config())]
    with pytest.raises(ConfigError):
        qubit_config().with_value('bath.eta_g2', 1e-3)


def test_cell_suffix():
    assert _cell_suffix({}) == ''
    assert _cell_suffix({'bath.eta_g2': 0.0001}) == '_eta_g20.0001'


def test_every_preset_loads():
    names = sorted(p.stem for p in PRESETS_DIR.glob('*.json'))
    for required in ('qubit_jordan_blocks', 'qubit_coupling_compare', 'pspin_weak_coupling',
                     'pspin_strong_coupling', 'pspin_ground_start'):
        assert required in names
    for name in names:
        config = load_preset(name)
        assert config.name == name
        assert expand_sweep(config)
    assert len(expand_sweep(load_preset('pspin_ground_start'))) == 2
    assert [c.label for c in load_preset('qubit_jordan_blocks').cd] == ['none', 'exact', 'variational-sigma_y']
    with pytest.raises(ConfigError):
        load_preset('qubit_unknown')


def test_figure_aliases_resolve_to_presets():
    assert sorted(PRESET_ALIASES) == ['fig1', 'fig2', 'fig3', 'fig4', 'fig5']
    for alias, name in PRESET_ALIASES.items():
        assert load_preset(alias) == load_preset(name)
    args = build_parser().parse_args(['run', '--preset', 'fig1'])
    config = _load_config(args, Settings())
    assert config.name == 'qubit_jordan_blocks'
    assert config.taus == [1.0, 10.0, 100.0]
    with pytest.raises(ConfigError, match='fig5'):
        load_preset('fig6')


def test_load_run_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / 'missing.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"name": ')
    with pytest.raises(ConfigError):
        load_run_config(broken)


def test_config_hash_ignores_machine_overrides():
    base = qubit_config()
    moved = qubit_config(output_dir='/tmp/elsewhere', threads=8)
    assert config_hash(base) == config_hash(moved)
    assert config_hash(base) != config_hash(qubit_config(taus=[2.0]))


def test_record_status():
    assert ResultRecord('r', 'h').finalize().status == 'success'
    assert ResultRecord('r', 'h', summaries=[{}], errors=['boom']).finalize().status == 'partial'
    assert ResultRecord('r', 'h', errors=['boom']).finalize().status == 'error'


def test_summarize_reports_leakage_from_initially_empty_blocks():
    summary = summarize(fake_observables(), 1.0, 'none', residual_series=(np.array([0.0, 1.0]), np.array([1e-3, 2e-3])),
                        notes=('Bath: 3 of 201 grid points rank-deficient',))
    assert summary['notes'] == ['Bath: 3 of 201 grid points rank-deficient']
    assert summary['initially_empty_blocks'] == [2, 3]
    assert summary['max_leakage'] == pytest.approx(0.01)
    assert summary['final_p_minus'] == pytest.approx(0.9)
    assert summary['variational_residual'] == [[0.0, 1e-3], [1.0, 2e-3]]
    assert 'kms' not in summary


def test_trajectory_csv_columns(tmp_path):
    store = ResultStore(str(tmp_path), 'csv test')
    path = store.write_trajectory(fake_observables(), 10.0, 'variational-sigma_y', '_eta_g20.0001')
    assert path.endswith('tau10_variational-sigma_y_eta_g20.0001.csv')
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['s', 'P_minus', 'fidelity', 'jb_overlap_0', 'jb_overlap_1', 'jb_overlap_2',
                       'jb_overlap_3', 'trace_error', 'min_eig']
    assert len(rows) == 6
    assert float(rows[-1][1]) == pytest.approx(0.9)


def test_sweep_table_lists_failures(tmp_path):
    store = ResultStore(str(tmp_path), 'sweep')
    good = ResultRecord('sweep', 'h', summaries=[summarize(fake_observables(), 1.0, 'none')],
                        sweep_values={'taus': [1.0]}).finalize()
    bad = ResultRecord('sweep', 'h', errors=['tau=10, cd=none: StiffFailure'],
                       sweep_values={'taus': [10.0]}).finalize()
    path = store.write_sweep_table([good, bad])
    with open(path) as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == SUMMARY_COLUMNS
    assert [r['status'] for r in rows] == ['success', 'error']
    assert rows[1]['error'].startswith('tau=10')


def test_run_is_deterministic(tmp_path):
    config = qubit_config()
    first = cmd_run(config, Settings(output_dir=str(tmp_path / 'a'), threads=2))
    second = cmd_run(config, Settings(output_dir=str(tmp_path / 'b'), threads=1))
    assert first.status == 'success'
    assert len(first.summaries) == 2
    for name in ('tau1_none.csv', 'tau1_exact.csv'):
        a = (tmp_path / 'a' / 'qubit-test' / name).read_bytes()
        b = (tmp_path / 'b' / 'qubit-test' / name).read_bytes()
        assert a == b
    summary = json.loads((tmp_path / 'a' / 'qubit-test' / 'summary.json').read_text())
    assert summary['config_hash'] == config_hash(config)


def test_sweep_writes_one_row_per_cell(tmp_path):
    config = qubit_config(cd=['none'], sweep={'taus': [[0.5], [1.0]]})
    records = cmd_sweep(config, Settings(output_dir=str(tmp_path), threads=2))
    assert [r.status for r in records] == ['success', 'success']
    with open(tmp_path / 'qubit-test' / 'summary.csv') as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    assert (tmp_path / 'qubit-test' / 'sweep.json').exists()


def test_parser_and_exit_codes(tmp_path):
    args = build_parser().parse_args(['--out-dir', 'x', '--threads', '3', 'run', '--preset', 'pspin_weak_coupling'])
    assert args.command == 'run' and args.preset == 'pspin_weak_coupling' and args.threads == 3
    args = build_parser().parse_args(['validate', '--quick'])
    assert args.quick and args.report is None
    assert main(['run', '--preset', 'no-such-preset']) == 2
    assert main(['run']) == 2
    assert main(['--out-dir', str(tmp_path), 'run', '--config', str(tmp_path / 'none.json')]) == 2
