import json
import os

import numpy as np
import pandas as pd
import pytest

import app
from config import DATA_DIR, TestingConfig, get_config
from backend.services.image_codec import png_config_hash
from backend.services.pipeline import PipelineRunner, plan_split, representation_correlation, run_all, run_stage
from backend.services.pipeline_config import STAGES, PipelineConfig
from backend.services.synth_generator import SynthConfig
from backend.utils.errors import ContractError, DataValidationError, MissingArtifactError
from tests.conftest import make_vector, make_window

SMALL_RUN = {
    'output_dir': 'out',
    'original_chart': os.path.join(DATA_DIR, 'sample_original_chart.csv'),
    'split_seed': 1,
    'training': {'epochs': 2, 'batch_size': 16, 'patience': 5, 'seed': 0},
    'synth': {'seed': 3, 'n_companies': 40, 'months_per_company': 13},
}


def write_config(directory, payload=None):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, 'pipeline.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(SMALL_RUN if payload is None else payload, f)
    return path


class TestPipelineConfig:
    def test_hash_ignores_location(self, tmp_path):
        first = PipelineConfig.from_file(write_config(str(tmp_path / 'a')))
        second = PipelineConfig.from_file(write_config(str(tmp_path / 'b')))
        assert first.config_hash == second.config_hash
        assert first.output_path != second.output_path

    def test_defaults_fill_training(self):
        config = PipelineConfig.from_dict({'training': {'epochs': 4}})
        assert config.training['epochs'] == 4
        assert config.training['batch_size'] == 32

    def test_seed_override(self):
        config = PipelineConfig.from_dict(SMALL_RUN).with_overrides(seed=11)
        assert config.split_seed == 11
        assert config.training['seed'] == 11
        assert config.synth['seed'] == 11
        assert config.config_hash != PipelineConfig.from_dict(SMALL_RUN).config_hash

    def test_variant_override(self):
        assert PipelineConfig.from_dict(SMALL_RUN).with_overrides(variant='ratios').variant == 'ratios'

    @pytest.mark.parametrize('payload', [
        {'outputs': 'x'},
        {'variant': 'pixels'},
        {'training': {'momentum': 0.9}},
        {'on_invalid_entry': 'ignore'},
    ])
    def test_rejects_bad_settings(self, payload):
        with pytest.raises(ContractError):
            PipelineConfig.from_dict(payload)

    def test_testing_environment_shrinks_defaults(self, monkeypatch):
        monkeypatch.setenv('PIPELINE_ENV', 'testing')
        assert get_config() is TestingConfig
        assert PipelineConfig.from_dict({}).training['epochs'] == 3
        synth = SynthConfig.from_dict({'seed': 1})
        assert (synth.n_companies, synth.months_per_company, synth.seed) == (60, 14, 1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            PipelineConfig.from_file(str(tmp_path / 'nope.json'))

    def test_relative_paths_follow_config_file(self, tmp_path):
        config = PipelineConfig.from_file(write_config(str(tmp_path), {'entries': 'ledger/entries.csv'}))
        assert config.entries_path == os.path.join(str(tmp_path), 'ledger', 'entries.csv')
        assert config.labels_path == os.path.join(str(tmp_path), 'artifacts', 'synth', 'labels.jsonl')


class TestStageErrors:
    def test_missing_manifest_names_file(self, tmp_path):
        config = PipelineConfig.from_file(write_config(str(tmp_path)))
        with pytest.raises(MissingArtifactError) as excinfo:
            run_stage('train', config)
        assert excinfo.value.path.endswith(os.path.join('imagize', 'image_manifest.jsonl'))
        assert not os.path.exists(os.path.join(config.output_path, '.staging-train'))
        assert not os.path.exists(config.stage_dir('train'))

    def test_exit_codes(self, tmp_path, capsys):
        path = write_config(str(tmp_path))
        assert app.main(['--config', path, '--stage', 'train']) == app.EXIT_USAGE
        assert 'image_manifest.jsonl' in capsys.readouterr().err
        assert app.main(['--config', path, '--stage', 'fly']) == app.EXIT_USAGE
        assert app.main(['--config', str(tmp_path / 'missing.json'), '--stage', 'synth']) == app.EXIT_USAGE

    def test_invalid_entries_exit_with_data_error(self, tmp_path):
        ledger = tmp_path / 'ledger'
        ledger.mkdir()
        (ledger / 'entries.csv').write_text(
            'company_id,date,account_code,debit,credit\nC1,2020-01-15,99999,10,0\n')
        (ledger / 'companies.jsonl').write_text(json.dumps(
            {'company_id': 'C1', 'division': 47, 'group': 472, 'region_code': 35, 'country_code': 55}) + '\n')
        path = write_config(str(tmp_path), {
            'entries': 'ledger/entries.csv',
            'companies': 'ledger/companies.jsonl',
            'on_invalid_entry': 'raise',
        })
        assert app.main(['--config', path, '--stage', 'vectorize']) == app.EXIT_DATA

    def write_ledger(self, tmp_path, region_code, on_invalid_entry):
        ledger = tmp_path / 'ledger'
        ledger.mkdir()
        (ledger / 'entries.csv').write_text(
            'company_id,date,account_code,debit,credit\nC1,2020-01-15,11101,10,0\n')
        (ledger / 'companies.jsonl').write_text(json.dumps(
            {'company_id': 'C1', 'division': 47, 'group': 472, 'region_code': region_code, 'country_code': 55}) + '\n')
        return write_config(str(tmp_path), {
            'entries': 'ledger/entries.csv',
            'companies': 'ledger/companies.jsonl',
            'on_invalid_entry': on_invalid_entry,
        })

    def test_unknown_region_exits_with_data_error(self, tmp_path):
        path = self.write_ledger(tmp_path, 99, 'raise')
        assert app.main(['--config', path, '--stage', 'vectorize']) == app.EXIT_DATA

    def test_unknown_region_is_excluded_when_skipping(self, tmp_path):
        config = PipelineConfig.from_file(self.write_ledger(tmp_path, 99, 'skip'))
        result = run_stage('vectorize', config)
        summary = json.load(open(os.path.join(config.stage_dir('vectorize'), 'vectorize_summary.json')))
        assert summary['excluded'] == ['C1']
        assert result['companies'] == 0

    def test_unknown_stage(self):
        with pytest.raises(ContractError):
            run_stage('deploy', PipelineConfig())


class TestSplitPlanning:
    records = [{'division': 47 if i % 2 else 86} for i in range(100)]

    def test_whole_pool_without_filters(self):
        split = plan_split(PipelineConfig(split_seed=2), self.records)
        assert (len(split['train']), len(split['val']), len(split['test'])) == (72, 8, 20)

    def test_division_filters(self):
        split = plan_split(PipelineConfig(train_divisions=[47], test_divisions=[86]), self.records)
        assert all(self.records[i]['division'] == 47 for i in split['train'] + split['val'])
        assert all(self.records[i]['division'] == 86 for i in split['test'])

    def test_empty_filter(self):
        with pytest.raises(ContractError):
            plan_split(PipelineConfig(train_divisions=[47], test_divisions=[10]), self.records)


class TestCorrelation:
    def test_blocks(self, ratio_defs):
        rng = np.random.default_rng(0)
        vectors = [make_vector((2020, 1), ratios=rng.normal(size=len(ratio_defs)).tolist(),
                               vertical=rng.normal(size=21).tolist(), horizontal=rng.normal(size=21).tolist())
                   for _ in range(30)]
        result = representation_correlation(vectors, [d.name for d in ratio_defs])
        assert result['months'] == 30
        assert set(result['within']) == {'ratios', 'vertical', 'horizontal'}
        assert set(result['across']) == {'ratios/vertical', 'ratios/horizontal', 'vertical/horizontal'}
        assert all(0 <= value <= 1 for value in result['within'].values())

    def test_needs_two_valid_months(self, ratio_defs):
        with pytest.raises(DataValidationError):
            representation_correlation(make_window(months=1), [d.name for d in ratio_defs])


def artifact_bytes(config):
    names = ['synth/entries.csv', 'normalize/match_table.csv', 'vectorize/vectors.jsonl',
             'imagize/image_manifest.jsonl', 'train/model.json', 'train/split.json',
             'evaluate/metrics.json', 'evaluate/predictions.csv', 'report/summary.txt']
    return {name: open(os.path.join(config.output_path, name), 'rb').read() for name in names}


class TestSmallRun:
    def test_chain_is_reproducible(self, tmp_path):
        first = PipelineConfig.from_file(write_config(str(tmp_path / 'a')))
        second = PipelineConfig.from_file(write_config(str(tmp_path / 'b')))
        results = run_all(first)
        run_all(second)

        assert [r['stage'] for r in results] == list(STAGES)
        assert artifact_bytes(first) == artifact_bytes(second)
        assert not [name for name in os.listdir(first.output_path) if name.startswith('.staging')]

        metrics = json.load(open(first.metrics_path))
        assert metrics['config_hash'] == first.config_hash
        assert metrics['split_sizes'] == {'train': 29, 'val': 3, 'test': 8}
        image_dir = os.path.join(first.stage_dir('imagize'), 'images')
        png = sorted(name for name in os.listdir(image_dir) if name.endswith('.png'))[0]
        assert png_config_hash(os.path.join(image_dir, png)) == first.config_hash
        assert f"config_hash: {first.config_hash}" in results[-1]['summary']
        predictions = os.path.join(first.stage_dir('evaluate'), 'predictions.csv')
        assert open(predictions).readline() == f"# config_hash: {first.config_hash}\n"
        assert len(pd.read_csv(predictions, comment='#')) == 8

    def test_runner_keeps_stage_results(self, tmp_path):
        runner = PipelineRunner(PipelineConfig.from_file(write_config(str(tmp_path))))
        results = runner.run_all(STAGES[:2])
        assert [r['stage'] for r in results] == ['synth', 'normalize']
        assert runner.results['synth']['companies'] == 40
        assert runner.results['normalize']['accounts'] > 0
        assert os.path.isdir(runner.results['normalize']['output_dir'])

    def test_evaluate_rejects_changed_images(self, tmp_path):
        config = PipelineConfig.from_file(write_config(str(tmp_path)))
        run_all(config, STAGES[:5])
        manifest = config.manifest_paths[0]
        lines = open(manifest).read().splitlines()
        with open(manifest, 'w') as f:
            f.write('\n'.join(lines[1:]) + '\n')
        assert app.main(['--config', os.path.join(str(tmp_path), 'pipeline.json'),
                         '--stage', 'evaluate']) == app.EXIT_DATA


@pytest.mark.slow
def test_full_synthetic_run(tmp_path):
    payload = dict(SMALL_RUN, synth={'seed': 7, 'n_companies': 2000, 'months_per_company': 24},
                   training={'epochs': 30, 'patience': 5, 'seed': 0, 'batch_size': 32})
    config = PipelineConfig.from_file(write_config(str(tmp_path), payload))
    run_all(config)
    metrics = json.load(open(config.metrics_path))
    assert metrics['split_sizes'] == {'train': 1440, 'val': 160, 'test': 400}
    assert metrics['accuracy'] >= 0.9
    assert metrics['loss'] < 0.2
