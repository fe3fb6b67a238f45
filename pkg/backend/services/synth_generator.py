"""
Synthetic SME ledgers

Generates labeled companies from two archetypes so the pipeline can run
end to end without real bookkeeping data:

- solvent: revenue grows, cash grows faster than the other assets, loans stay flat
- distressed: revenue shrinks at least 3% a month, supplier payables and loans
  rise, cash drains toward zero

Every account follows a multiplicative monthly trend with lognormal jitter
scaled by `noise_level`. Amounts are whole currency units so scaled copies of
a ledger aggregate to exactly proportional balances. A company is a pure
function of (seed, company index).
"""

import copy
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import date
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import Config, get_config
from backend.models.ledger import AccountingEntry, CompanyMetadata, natural_sign, shift_period
from backend.services.code_tables import load_country_codes, load_region_codes
from backend.utils.errors import ContractError

logger = logging.getLogger(__name__)

EQUITY_CAPITAL_CODE = 23100
EQUITY_RESULTS_CODE = 23400
FINANCIAL_EXPENSE_CODE = 32300
REVENUE_CODE = 31100
FLOW_DAY = 15
STOCK_DAY = 28


@dataclass
class SynthConfig:
    seed: int = Config.SYNTH['seed']
    n_companies: int = Config.SYNTH['n_companies']
    class_ratio: float = Config.SYNTH['class_ratio']
    months_per_company: int = Config.SYNTH['months_per_company']
    noise_level: float = Config.SYNTH['noise_level']
    divisions: List[Dict] = field(default_factory=lambda: [dict(d) for d in Config.SYNTH['divisions']])
    region_codes: List[int] = field(default_factory=lambda: list(Config.SYNTH['region_codes']))
    country_codes: List[int] = field(default_factory=lambda: list(Config.SYNTH['country_codes']))
    first_start_year: int = Config.SYNTH['first_start_year']
    last_start_year: int = Config.SYNTH['last_start_year']

    def __post_init__(self):
        if not 0.0 <= self.class_ratio <= 1.0:
            raise ContractError(f"class_ratio must be in [0, 1], got {self.class_ratio}")
        if self.months_per_company < Config.WINDOW_MONTHS + 1:
            raise ContractError(f"months_per_company must be at least {Config.WINDOW_MONTHS + 1}")
        if self.noise_level < 0:
            raise ContractError("noise_level must be non-negative")
        if self.n_companies < 1:
            raise ContractError("n_companies must be positive")
        if not self.divisions or any(d.get('weight', 1.0) <= 0 for d in self.divisions):
            raise ContractError("divisions need positive sampling weights")
        for d in self.divisions:
            if int(d['group']) // 10 != int(d['division']):
                raise ContractError(f"Group {d['group']} does not belong to division {d['division']}")
        if not self.region_codes or not self.country_codes:
            raise ContractError("region and country code pools must not be empty")
        unknown_regions = sorted(set(self.region_codes) - set(load_region_codes()))
        if unknown_regions:
            raise ContractError(f"Region codes not in the region table: {unknown_regions}")
        unknown_countries = sorted(set(self.country_codes) - set(load_country_codes()))
        if unknown_countries:
            raise ContractError(f"Country codes not in the country table: {unknown_countries}")
        if self.first_start_year > self.last_start_year:
            raise ContractError("first_start_year is after last_start_year")

    @classmethod
    def from_dict(cls, payload: Optional[Dict]) -> 'SynthConfig':
        payload = dict(payload or {})
        known = {name for name in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ContractError(f"Unknown synth settings: {', '.join(sorted(unknown))}")
        return cls(**copy.deepcopy(dict(get_config().SYNTH, **payload)))

    def to_dict(self) -> Dict:
        return asdict(self)

    @property
    def distressed_count(self) -> int:
        # round half up
        return int(np.floor(self.class_ratio * self.n_companies + 0.5))


@lru_cache(maxsize=8)
def _distressed_indices(seed: int, n_companies: int, count: int) -> frozenset:
    order = np.random.default_rng(seed).permutation(n_companies)
    return frozenset(int(i) for i in order[:count])


def company_label(config: SynthConfig, company_index: int) -> int:
    distressed = _distressed_indices(config.seed, config.n_companies, config.distressed_count)
    return 1 if company_index in distressed else 0


def company_id_for(company_index: int) -> str:
    return f"C{company_index:05d}"


def _trend(rng: np.random.Generator, months: int, growth: float, noise: float) -> np.ndarray:
    """Multiplicative path: jittered constant growth times monthly lognormal shocks"""
    rate = growth + noise * 0.01 * rng.standard_normal()
    shocks = np.exp(noise * 0.05 * rng.standard_normal(months))
    return (1.0 + rate) ** np.arange(months) * shocks


def generate_company(config: SynthConfig, company_index: int) -> Tuple[List[AccountingEntry], int, CompanyMetadata]:
    if not 0 <= company_index < config.n_companies:
        raise ContractError(f"Company index {company_index} outside 0..{config.n_companies - 1}")
    label = company_label(config, company_index)
    archetype = Config.SYNTH_ARCHETYPES['distressed' if label else 'solvent']
    rng = np.random.default_rng([config.seed, company_index])
    noise = config.noise_level
    months = config.months_per_company

    weights = np.array([d.get('weight', 1.0) for d in config.divisions], dtype=np.float64)
    choice = config.divisions[int(rng.choice(len(weights), p=weights / weights.sum()))]
    metadata = CompanyMetadata(
        company_id=company_id_for(company_index),
        division=int(choice['division']),
        group=int(choice['group']),
        region_code=int(config.region_codes[int(rng.integers(len(config.region_codes)))]),
        country_code=int(config.country_codes[int(rng.integers(len(config.country_codes)))]),
    )
    start_year = int(rng.integers(config.first_start_year, config.last_start_year + 1))
    scale = float(rng.lognormal(np.log(200_000), 0.5))

    revenue = np.rint(scale * _trend(rng, months, archetype['growth'][REVENUE_CODE], noise))
    stocks: Dict[int, np.ndarray] = {}
    for code in sorted(Config.SYNTH_OPENING):
        opening = scale * Config.SYNTH_OPENING[code] * np.exp(noise * 0.2 * rng.standard_normal())
        if code == EQUITY_CAPITAL_CODE:
            path = np.full(months, opening)
        else:
            path = opening * _trend(rng, months, archetype['growth'][code], noise)
        stocks[code] = np.maximum(np.rint(path), 1.0)

    assets = sum(stocks[c] for c in stocks if str(c)[0] == '1')
    liabilities = sum(stocks[c] for c in stocks if str(c)[0] == '2' and c != EQUITY_CAPITAL_CODE)
    stocks[EQUITY_RESULTS_CODE] = assets - liabilities - stocks[EQUITY_CAPITAL_CODE]

    flows: Dict[int, np.ndarray] = {REVENUE_CODE: revenue}
    for code, share in archetype['flows'].items():
        flows[code] = np.rint(revenue * share * np.exp(noise * 0.05 * rng.standard_normal(months)))
    flows[FINANCIAL_EXPENSE_CODE] = np.rint(stocks[21200] * archetype['interest_rate'])

    entries: List[AccountingEntry] = []
    period = (start_year, 1)
    company_id = metadata.company_id
    for t in range(months):
        year, month = period
        for code in sorted(flows):
            amount = float(abs(flows[code][t]))
            if amount == 0:
                continue
            debit_side = (flows[code][t] >= 0) == (natural_sign(code) > 0)
            entries.append(AccountingEntry(company_id, date(year, month, FLOW_DAY), code,
                                           debit=amount if debit_side else 0.0,
                                           credit=0.0 if debit_side else amount))
        for code in sorted(stocks):
            delta = stocks[code][t] - (stocks[code][t - 1] if t else 0.0)
            if delta == 0:
                continue
            # a rise in a debit-natural account is a debit
            debit_side = (delta > 0) == (natural_sign(code) > 0)
            entries.append(AccountingEntry(company_id, date(year, month, STOCK_DAY), code,
                                           debit=float(abs(delta)) if debit_side else 0.0,
                                           credit=0.0 if debit_side else float(abs(delta))))
        period = shift_period(period, 1)
    return entries, label, metadata


def _file_digest(paths: List[str]) -> str:
    digest = hashlib.sha256()
    for path in paths:
        with open(path, 'rb') as f:
            for chunk in iter(lambda: f.read(1 << 20), b''):
                digest.update(chunk)
    return digest.hexdigest()


def generate_dataset(config: SynthConfig, output_dir: str, config_hash: Optional[str] = None,
                     entry_format: str = 'csv') -> Dict:
    """
    Write entries (CSV or JSON Lines), labels.jsonl, companies.jsonl and
    synth_manifest.json into `output_dir`.
    """
    if entry_format not in ('csv', 'jsonl'):
        raise ContractError(f"entry_format must be 'csv' or 'jsonl', got '{entry_format}'")
    os.makedirs(output_dir, exist_ok=True)

    rows = []
    labels = []
    companies = []
    for index in range(config.n_companies):
        entries, label, metadata = generate_company(config, index)
        rows.extend((e.company_id, e.date.isoformat(), e.account, int(e.debit), int(e.credit)) for e in entries)
        labels.append({'company_id': metadata.company_id, 'label': label})
        companies.append(metadata.to_dict())
    frame = pd.DataFrame(rows, columns=['company_id', 'date', 'account_code', 'debit', 'credit'])

    entries_path = os.path.join(output_dir, f'entries.{entry_format}')
    if entry_format == 'csv':
        frame.to_csv(entries_path, index=False, lineterminator='\n')
    else:
        frame.to_json(entries_path, orient='records', lines=True)
    labels_path = os.path.join(output_dir, 'labels.jsonl')
    companies_path = os.path.join(output_dir, 'companies.jsonl')
    for path, records in ((labels_path, labels), (companies_path, companies)):
        with open(path, 'w', encoding='utf-8') as f:
            for record in records:
                if config_hash:
                    record = dict(record, config_hash=config_hash)
                f.write(json.dumps(record, sort_keys=True) + '\n')

    distressed = sum(record['label'] for record in labels)
    manifest = {
        'config': config.to_dict(),
        'config_hash': config_hash,
        'companies': config.n_companies,
        'distressed': distressed,
        'entries': len(frame),
        'entry_file': os.path.basename(entries_path),
        'content_hash': _file_digest([entries_path, labels_path, companies_path]),
    }
    manifest_path = os.path.join(output_dir, 'synth_manifest.json')
    with open(manifest_path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')

    logger.info(f"Generated {config.n_companies} companies ({distressed} distressed), {len(frame)} entries")
    return {
        'success': True,
        'entries_path': entries_path,
        'labels_path': labels_path,
        'companies_path': companies_path,
        'manifest_path': manifest_path,
        'companies': config.n_companies,
        'distressed': distressed,
        'entries': len(frame),
    }


def load_labels(path: str) -> Dict[str, int]:
    labels = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if line.strip():
                record = json.loads(line)
                labels[str(record['company_id'])] = int(record['label'])
    return labels


def load_companies(path: str) -> Dict[str, CompanyMetadata]:
    companies = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if line.strip():
                record = json.loads(line)
                companies[str(record['company_id'])] = CompanyMetadata(
                    company_id=str(record['company_id']),
                    division=int(record['division']),
                    group=int(record['group']),
                    region_code=int(record['region_code']),
                    country_code=int(record['country_code']),
                )
    return companies
