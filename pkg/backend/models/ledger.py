from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional, Tuple

from backend.models.chart import standard_code_prefix
from backend.utils.errors import ContractError

Period = Tuple[int, int]  # (year, month)


def period_index(period: Period) -> int:
    year, month = period
    return year * 12 + (month - 1)


def period_from_index(index: int) -> Period:
    return index // 12, index % 12 + 1


def shift_period(period: Period, months: int) -> Period:
    return period_from_index(period_index(period) + months)


def format_period(period: Period) -> str:
    return f"{period[0]:04d}-{period[1]:02d}"


def parse_period(text: str) -> Period:
    try:
        year, month = str(text).split('-')[:2]
        period = (int(year), int(month))
    except (ValueError, TypeError):
        raise ContractError(f"Malformed period '{text}', expected YYYY-MM")
    if not 1 <= period[1] <= 12:
        raise ContractError(f"Malformed period '{text}', month out of range")
    return period


def natural_sign(code: int) -> int:
    """+1 when the account's natural balance is a debit, -1 for credit-natural accounts"""
    text = f"{int(code):05d}"
    if text[0] == '2':
        return -1
    if text[0] == '3' and text[1] in ('1', '3'):
        return -1
    return 1


def resets_annually(code: int) -> bool:
    """Result accounts (class 3) start from zero every January"""
    return f"{int(code):05d}"[0] == '3'


@dataclass(frozen=True)
class AccountingEntry:
    company_id: str
    date: date
    account: int
    debit: float = 0.0
    credit: float = 0.0

    def __post_init__(self):
        if self.debit < 0 or self.credit < 0:
            raise ContractError(f"Entry for {self.company_id} on {self.date} has a negative amount")
        if self.debit == 0 and self.credit == 0:
            raise ContractError(f"Entry for {self.company_id} on {self.date} has neither debit nor credit")

    def to_dict(self) -> Dict:
        return {
            'company_id': self.company_id,
            'date': self.date.isoformat(),
            'account_code': self.account,
            'debit': self.debit,
            'credit': self.credit,
        }


@dataclass
class MonthlyBalance:
    """Closing trial balance of one company for one month"""
    company_id: str
    period: Period
    balances: Dict[int, float]
    _rollup: Dict[str, float] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        rollup: Dict[str, float] = {}
        for code in sorted(self.balances):
            text = f"{code:05d}"
            for prefix in {text[:1], text[:2], text[:3], standard_code_prefix(code)}:
                rollup[prefix] = rollup.get(prefix, 0.0) + self.balances[code]
        self._rollup = rollup

    def amount(self, code: int) -> float:
        """Balance of a code including every descendant posting; absent codes read as 0"""
        return self._rollup.get(standard_code_prefix(code), 0.0)

    def to_dict(self) -> Dict:
        return {
            'company_id': self.company_id,
            'period': format_period(self.period),
            'balances': {str(code): value for code, value in sorted(self.balances.items())},
        }


@dataclass
class RatioDefinition:
    name: str
    expression: str
    tree: object = field(default=None, repr=False, compare=False)


@dataclass
class CompanyMetadata:
    company_id: str
    division: int
    group: int
    region_code: int
    country_code: int

    def to_dict(self) -> Dict:
        return {
            'company_id': self.company_id,
            'division': self.division,
            'group': self.group,
            'region_code': self.region_code,
            'country_code': self.country_code,
        }


@dataclass
class MonthlyVector:
    company_id: str
    period: Period
    division: int
    group: int
    region_code: int
    country_code: int
    inflation_month: float
    inflation_12m: float
    vertical: List[float]
    horizontal: List[float]
    ratios: List[Optional[float]]
    valid: bool
    total_assets_share: float = 0.0

    def to_dict(self) -> Dict:
        return {
            'company_id': self.company_id,
            'period': format_period(self.period),
            'division': self.division,
            'group': self.group,
            'region_code': self.region_code,
            'country_code': self.country_code,
            'inflation_month': self.inflation_month,
            'inflation_12m': self.inflation_12m,
            'vertical': list(self.vertical),
            'horizontal': list(self.horizontal),
            'ratios': list(self.ratios),
            'valid': self.valid,
            'total_assets_share': self.total_assets_share,
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> 'MonthlyVector':
        return cls(
            company_id=str(payload['company_id']),
            period=parse_period(payload['period']),
            division=int(payload['division']),
            group=int(payload['group']),
            region_code=int(payload['region_code']),
            country_code=int(payload['country_code']),
            inflation_month=float(payload['inflation_month']),
            inflation_12m=float(payload['inflation_12m']),
            vertical=[float(v) for v in payload['vertical']],
            horizontal=[float(v) for v in payload['horizontal']],
            ratios=[None if v is None else float(v) for v in payload['ratios']],
            valid=bool(payload['valid']),
            total_assets_share=float(payload.get('total_assets_share', 0.0)),
        )
