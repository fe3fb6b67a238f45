import json
from dataclasses import replace

import numpy as np
import pytest

from backend.models.image import Variant
from backend.models.ledger import AccountingEntry
from backend.services.code_tables import load_inflation_table
from backend.services.image_codec import compose_image
from backend.services.ledger_engine import aggregate_monthly, select_window, vectorize_company, vertical_analysis
from backend.services.synth_generator import (
    SynthConfig,
    company_label,
    generate_company,
    generate_dataset,
    load_companies,
    load_labels,
)
from backend.utils.errors import ContractError


def first_with_label(config, label):
    return next(i for i in range(config.n_companies) if company_label(config, i) == label)


def company_vectors(config, index, chart, ratio_defs, scale=1):
    entries, label, metadata = generate_company(config, index)
    if scale != 1:
        entries = [AccountingEntry(e.company_id, e.date, e.account, e.debit * scale, e.credit * scale)
                   for e in entries]
    balances = aggregate_monthly(entries, chart)[metadata.company_id]
    return vectorize_company(balances, metadata, ratio_defs, load_inflation_table()), label


class TestConfig:
    @pytest.mark.parametrize('changes', [
        {'class_ratio': 1.5},
        {'months_per_company': 12},
        {'noise_level': -0.1},
        {'divisions': [{'division': 47, 'group': 861, 'weight': 1.0}]},
        {'first_start_year': 2021, 'last_start_year': 2020},
        {'region_codes': [99]},
        {'country_codes': [999]},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ContractError):
            SynthConfig(**changes)

    def test_unknown_key(self):
        with pytest.raises(ContractError):
            SynthConfig.from_dict({'companies': 10})

    def test_round_trip(self):
        config = SynthConfig(n_companies=10, noise_level=0.2)
        assert SynthConfig.from_dict(config.to_dict()) == config


class TestLabels:
    def test_exact_class_count(self):
        config = SynthConfig(n_companies=2000, class_ratio=0.5)
        assert sum(company_label(config, i) for i in range(2000)) == 1000

    def test_rounds_half_up(self):
        config = SynthConfig(n_companies=5, class_ratio=0.5)
        assert config.distressed_count == 3


class TestCompanies:
    def test_deterministic(self):
        config = SynthConfig(n_companies=10, months_per_company=14)
        assert generate_company(config, 3) == generate_company(config, 3)
        assert generate_company(config, 3)[0] != generate_company(config, 4)[0]

    def test_index_out_of_range(self):
        with pytest.raises(ContractError):
            generate_company(SynthConfig(n_companies=10), 10)

    def test_metadata_from_pools(self):
        config = SynthConfig(n_companies=30)
        for index in range(30):
            _, _, metadata = generate_company(config, index)
            assert metadata.group // 10 == metadata.division
            assert metadata.region_code in config.region_codes
            assert metadata.country_code in config.country_codes

    def test_solvent_cash_share_never_falls(self, chart):
        config = SynthConfig(n_companies=10, noise_level=0.0)
        entries, label, metadata = generate_company(config, first_with_label(config, 0))
        assert label == 0
        balances = aggregate_monthly(entries, chart)[metadata.company_id]
        shares = []
        for balance in balances:
            vertical, valid = vertical_analysis(balance, (11100,))
            assert valid
            shares.append(vertical[0])
        assert all(a <= b for a, b in zip(shares, shares[1:]))

    def test_distressed_revenue_shrinks_year_on_year(self, chart, ratio_defs):
        config = SynthConfig(n_companies=10, noise_level=0.0)
        vectors, label = company_vectors(config, first_with_label(config, 1), chart, ratio_defs)
        assert label == 1
        growth = [d.name for d in ratio_defs].index('Growth')
        assert all(v.ratios[growth] < 0 for v in vectors[12:])

    def test_revenue_trend_separates_classes_without_noise(self, chart, ratio_defs):
        config = SynthConfig(n_companies=16, noise_level=0.0, months_per_company=13)
        growth = [d.name for d in ratio_defs].index('Growth')
        for index in range(16):
            vectors, label = company_vectors(config, index, chart, ratio_defs)
            assert (vectors[-1].ratios[growth] < 0) == bool(label)

    def test_windows_always_valid(self, chart, ratio_defs):
        config = SynthConfig(n_companies=12, noise_level=1.0, months_per_company=13)
        for index in range(12):
            vectors, _ = company_vectors(config, index, chart, ratio_defs)
            assert all(v.valid for v in vectors)
            assert len(select_window(vectors, vectors[-1].period)) == 12

    def test_scaling_amounts_keeps_image(self, chart, ratio_defs):
        config = SynthConfig(n_companies=6, months_per_company=14)
        for index in (0, 1):
            base, label = company_vectors(config, index, chart, ratio_defs)
            scaled, _ = company_vectors(config, index, chart, ratio_defs, scale=1000)
            for variant in Variant:
                first = compose_image(select_window(base, base[-1].period), variant, label)
                second = compose_image(select_window(scaled, scaled[-1].period), variant, label)
                assert first.to_bytes() == second.to_bytes()


class TestDataset:
    def test_files(self, tmp_path):
        config = SynthConfig(n_companies=12, months_per_company=13, class_ratio=0.25)
        result = generate_dataset(config, str(tmp_path), config_hash='abc')
        assert result['success']
        labels = load_labels(result['labels_path'])
        assert len(labels) == 12 and sum(labels.values()) == 3
        assert set(load_companies(result['companies_path'])) == set(labels)
        manifest = json.loads((tmp_path / 'synth_manifest.json').read_text())
        assert manifest['config_hash'] == 'abc'
        assert manifest['config'] == config.to_dict()
        assert manifest['distressed'] == 3
        header = (tmp_path / 'entries.csv').read_text().splitlines()[0]
        assert header == 'company_id,date,account_code,debit,credit'

    def test_rerun_is_identical(self, tmp_path):
        config = SynthConfig(n_companies=8, months_per_company=13)
        generate_dataset(config, str(tmp_path / 'a'))
        generate_dataset(config, str(tmp_path / 'b'))
        for name in ('entries.csv', 'labels.jsonl', 'companies.jsonl', 'synth_manifest.json'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    def test_seed_changes_content(self, tmp_path):
        config = SynthConfig(n_companies=8, months_per_company=13)
        first = generate_dataset(config, str(tmp_path / 'a'))
        second = generate_dataset(replace(config, seed=config.seed + 1), str(tmp_path / 'b'))
        a = json.loads(open(first['manifest_path']).read())['content_hash']
        b = json.loads(open(second['manifest_path']).read())['content_hash']
        assert a != b

    def test_bad_entry_format(self, tmp_path):
        with pytest.raises(ContractError):
            generate_dataset(SynthConfig(n_companies=2), str(tmp_path), entry_format='xml')
