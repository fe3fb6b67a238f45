"""
Ledger engine

Aggregates standardized accounting entries into monthly trial balances and
derives the per-month record the images are built from: vertical analysis
(accounts over total assets), horizontal analysis (month-over-month change)
and the financial ratios.
"""

import json
import logging
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import Config
from backend.models.chart import StandardChart
from backend.models.ledger import (
    AccountingEntry,
    CompanyMetadata,
    MonthlyBalance,
    MonthlyVector,
    Period,
    RatioDefinition,
    natural_sign,
    period_from_index,
    period_index,
    resets_annually,
    shift_period,
)
from backend.utils.errors import (
    ContractError,
    DataValidationError,
    EntryValidationError,
    InsufficientHistoryError,
    PipelineError,
)
from backend.utils.expression import Account, account_references, evaluate_tree, parse_expression, render

logger = logging.getLogger(__name__)

# Accounts carried by every monthly vector, in vector order
VECTOR_ACCOUNT_CODES = (
    11100, 11200, 11300, 11500, 13200, 13300, 13400,
    21100, 21200, 22000, 22300, 23000,
    31100, 32100, 32200, 32300, 32400, 32500, 32700, 32800, 32900,
)

ENTRY_COLUMNS = ['company_id', 'date', 'account_code', 'debit', 'credit']

History = Dict[Period, MonthlyBalance]


@lru_cache(maxsize=1)
def default_chart() -> StandardChart:
    from backend.services.chart_normalizer import load_standard_chart
    return load_standard_chart()


def entries_frame(entries: Union[pd.DataFrame, Iterable[AccountingEntry]]) -> pd.DataFrame:
    if isinstance(entries, pd.DataFrame):
        return entries.copy()
    return pd.DataFrame([entry.to_dict() for entry in entries], columns=ENTRY_COLUMNS)


def load_entries(path: str, match_table: Optional[Dict[str, int]] = None) -> pd.DataFrame:
    """
    Read entries from CSV or JSON Lines (header company_id,date,account_code,debit,credit).

    Account codes found in `match_table` are translated to their standard
    code; everything else is kept as written and validated at aggregation.
    """
    if str(path).endswith(('.jsonl', '.json')):
        frame = pd.read_json(path, lines=True, dtype={'company_id': str, 'account_code': str, 'date': str})
    else:
        frame = pd.read_csv(path, dtype={'company_id': str, 'account_code': str, 'date': str},
                            keep_default_na=False)
    missing = set(ENTRY_COLUMNS) - set(frame.columns)
    if missing:
        raise DataValidationError(f"Entry file {path} lacks columns: {', '.join(sorted(missing))}")
    frame = frame[ENTRY_COLUMNS].copy()
    frame['account_code'] = frame['account_code'].astype(str).str.strip()
    if match_table:
        translated = frame['account_code'].map(match_table)
        hits = translated.notna()
        frame.loc[hits, 'account_code'] = translated[hits].astype(int).astype(str)
        logger.info(f"Translated {int(hits.sum())} of {len(frame)} entry codes through the match table")
    logger.info(f"Loaded {len(frame)} entries from {path}")
    return frame


def _validate_entries(frame: pd.DataFrame, chart: StandardChart, on_error: str) -> pd.DataFrame:
    frame = frame.copy()
    reasons = pd.Series('', index=frame.index, dtype=object)

    dates = pd.to_datetime(frame['date'].astype(str), format='%Y-%m-%d', errors='coerce')
    reasons[dates.isna()] = 'malformed date'

    codes = pd.to_numeric(frame['account_code'], errors='coerce')
    known = codes.map(lambda c: c == c and float(c).is_integer() and int(c) in chart)
    reasons[(reasons == '') & ~known.astype(bool)] = 'unknown account code'

    debit = pd.to_numeric(frame['debit'], errors='coerce').fillna(-1.0)
    credit = pd.to_numeric(frame['credit'], errors='coerce').fillna(-1.0)
    reasons[(reasons == '') & ((debit < 0) | (credit < 0))] = 'negative or non-numeric amount'
    reasons[(reasons == '') & (debit == 0) & (credit == 0)] = 'neither debit nor credit'

    bad = reasons != ''
    if bad.any():
        rejected = frame[bad].assign(reason=reasons[bad]).to_dict('records')
        if on_error == 'raise':
            first = rejected[0]
            if first['reason'] == 'unknown account code':
                raise EntryValidationError(
                    f"{len(rejected)} entries rejected; first: unknown account code '{first['account_code']}'"
                    f" for company {first['company_id']}", rejected)
            raise EntryValidationError(
                f"{len(rejected)} entries rejected; first: {first['reason']} ({first['date']}) "
                f"for company {first['company_id']}", rejected)
        for record in rejected[:10]:
            logger.warning(f"Skipping entry {record}")
        logger.warning(f"Skipped {len(rejected)} invalid entries")

    valid = ~bad
    return pd.DataFrame({
        'company_id': frame.loc[valid, 'company_id'].astype(str),
        'date': dates[valid],
        'account_code': codes[valid].astype(np.int64),
        'debit': debit[valid].astype(np.float64),
        'credit': credit[valid].astype(np.float64),
    })


def aggregate_monthly(entries: Union[pd.DataFrame, Iterable[AccountingEntry]],
                      chart: Optional[StandardChart] = None,
                      on_error: str = 'raise') -> Dict[str, List[MonthlyBalance]]:
    """
    Closing balance of every posted code, per company, for every month from
    the company's first to its last entry month.

    Balance-sheet and contra classes accumulate from the first entry; result
    accounts (class 3) accumulate within the calendar year. Balances are
    signed by each account's natural side.
    """
    if on_error not in ('raise', 'skip'):
        raise ContractError(f"on_error must be 'raise' or 'skip', got '{on_error}'")
    chart = chart or default_chart()
    frame = _validate_entries(entries_frame(entries), chart, on_error)
    if frame.empty:
        return {}

    frame = frame.sort_values(ENTRY_COLUMNS, kind='mergesort').reset_index(drop=True)
    frame['period'] = frame['date'].dt.year * 12 + frame['date'].dt.month - 1
    signs = frame['account_code'].map(natural_sign).astype(np.float64)
    frame['signed'] = (frame['debit'] - frame['credit']) * signs

    movements = frame.groupby(['company_id', 'period', 'account_code'], sort=True)['signed'].sum()

    result: Dict[str, List[MonthlyBalance]] = {}
    for company_id, company_movements in movements.groupby(level=0, sort=True):
        table = company_movements.droplevel(0).unstack('account_code', fill_value=0.0)
        periods = range(int(table.index.min()), int(table.index.max()) + 1)
        table = table.reindex(periods, fill_value=0.0).sort_index(axis=1)

        annual = [code for code in table.columns if resets_annually(code)]
        running = [code for code in table.columns if not resets_annually(code)]
        closing = pd.DataFrame(index=table.index)
        if running:
            closing = closing.join(table[running].cumsum())
        if annual:
            years = table.index.to_series() // 12
            closing = closing.join(table[annual].groupby(years.values).cumsum())
        closing = closing[sorted(closing.columns)]

        balances = []
        for index, row in zip(closing.index, closing.to_numpy()):
            balances.append(MonthlyBalance(
                company_id=str(company_id),
                period=period_from_index(int(index)),
                balances={int(code): float(value) for code, value in zip(closing.columns, row)},
            ))
        result[str(company_id)] = balances
    logger.info(f"Aggregated {len(frame)} entries into balances for {len(result)} companies")
    return result


def total_assets(balance: MonthlyBalance) -> float:
    return balance.amount(Config.TOTAL_ASSETS_CODE)


def vertical_analysis(balance: MonthlyBalance,
                      codes: Sequence[int] = VECTOR_ACCOUNT_CODES) -> Tuple[List[float], bool]:
    """
    Each account as a share of total assets, plus the month's validity.

    Months whose total assets are not positive are invalid and get zeros.
    """
    assets = total_assets(balance)
    if not assets > 0:
        return [0.0] * len(codes), False
    return [balance.amount(code) / assets for code in codes], True


def _check_consecutive(prev: MonthlyBalance, curr: MonthlyBalance) -> None:
    if prev.company_id != curr.company_id:
        raise ContractError(f"Horizontal analysis across companies {prev.company_id} and {curr.company_id}")
    if period_index(curr.period) - period_index(prev.period) != 1:
        raise ContractError(f"Periods {prev.period} and {curr.period} of {curr.company_id} are not consecutive")


def horizontal_change(previous: float, current: float, cap: float = Config.SATURATION_VALUE) -> float:
    if previous == 0:
        if current == 0:
            return 0.0
        return cap if current > 0 else -cap
    return float(np.clip((current - previous) / abs(previous), -cap, cap))


def horizontal_analysis(prev: MonthlyBalance, curr: MonthlyBalance,
                        codes: Sequence[int] = VECTOR_ACCOUNT_CODES) -> List[float]:
    """Relative change of each account against the previous month, capped at the codec saturation"""
    _check_consecutive(prev, curr)
    return [horizontal_change(prev.amount(code), curr.amount(code)) for code in codes]


def parse_ratio_expression(text: str, chart: Optional[StandardChart] = None):
    chart = chart or default_chart()
    return parse_expression(text, known_code=chart.__contains__)


def load_ratio_definitions(path: str = None, chart: Optional[StandardChart] = None) -> List[RatioDefinition]:
    """Read a JSON array of {name, expression} and parse every expression"""
    path = path or Config.RATIO_DEFINITIONS_PATH
    with open(path, 'r', encoding='utf-8') as f:
        records = json.load(f)
    if not isinstance(records, list) or not records:
        raise DataValidationError(f"{path} must hold a non-empty JSON array of ratio definitions")
    definitions = []
    names = set()
    for record in records:
        name = str(record.get('name', '')).strip()
        if not name:
            raise DataValidationError(f"{path}: ratio definition without a name")
        if name in names:
            raise DataValidationError(f"{path}: duplicate ratio '{name}'")
        names.add(name)
        expression = str(record.get('expression', ''))
        try:
            tree = parse_ratio_expression(expression, chart)
        except PipelineError:
            logger.error(f"Ratio '{name}' has an invalid expression: {expression}")
            raise
        logger.debug(f"Ratio '{name}' parsed as {render(tree)}")
        definitions.append(RatioDefinition(name=name, expression=expression, tree=tree))
    lags = [account.lag for d in definitions for account in account_references(d.tree)]
    logger.info(f"Loaded {len(definitions)} ratio definitions from {path}; "
                f"lagged references reach back {max(lags, default=0)} months")
    return definitions


def evaluate_ratio(definition: RatioDefinition, balance: MonthlyBalance,
                   history: Optional[History] = None) -> Optional[float]:
    """
    Evaluate a ratio over one month's balances; None means undefined.

    Lagged references (CODE@k) read `history`, keyed by period; a missing
    month makes the ratio undefined.
    """
    tree = definition.tree if definition.tree is not None else parse_ratio_expression(definition.expression)

    def lookup(account: Account) -> Optional[float]:
        if account.lag == 0:
            return balance.amount(account.code)
        past = (history or {}).get(shift_period(balance.period, -account.lag))
        return None if past is None else past.amount(account.code)

    return evaluate_tree(tree, lookup)


def build_monthly_vector(balance: MonthlyBalance, prev_balance: Optional[MonthlyBalance],
                         metadata: CompanyMetadata, ratio_defs: Sequence[RatioDefinition],
                         inflation: Tuple[float, float] = (0.0, 0.0),
                         history: Optional[History] = None) -> MonthlyVector:
    if metadata.company_id != balance.company_id:
        raise ContractError(f"Metadata for {metadata.company_id} used with balances of {balance.company_id}")
    vertical, valid = vertical_analysis(balance)
    if prev_balance is None:
        horizontal = [0.0] * len(VECTOR_ACCOUNT_CODES)
    else:
        horizontal = horizontal_analysis(prev_balance, balance)
    ratios = [evaluate_ratio(definition, balance, history) for definition in ratio_defs]
    share = vertical_analysis(balance, (Config.TOTAL_ASSETS_CODE,))[0][0]
    return MonthlyVector(
        company_id=balance.company_id,
        period=balance.period,
        division=metadata.division,
        group=metadata.group,
        region_code=metadata.region_code,
        country_code=metadata.country_code,
        inflation_month=float(inflation[0]),
        inflation_12m=float(inflation[1]),
        vertical=vertical,
        horizontal=horizontal,
        ratios=ratios,
        valid=valid,
        total_assets_share=share,
    )


def vectorize_company(balances: Sequence[MonthlyBalance], metadata: CompanyMetadata,
                      ratio_defs: Sequence[RatioDefinition], inflation_table=None) -> List[MonthlyVector]:
    """Monthly vectors for one company's chronological balances"""
    history: History = {}
    vectors = []
    prev = None
    for balance in balances:
        rates = inflation_table.rates(balance.period) if inflation_table is not None else (0.0, 0.0)
        vectors.append(build_monthly_vector(balance, prev, metadata, ratio_defs, rates, history))
        history[balance.period] = balance
        prev = balance
    invalid = sum(1 for vector in vectors if not vector.valid)
    if invalid:
        logger.warning(f"Company {metadata.company_id}: {invalid} of {len(vectors)} months have no positive total assets")
    return vectors


def select_window(vectors: Sequence[MonthlyVector], anchor: Period,
                  months: int = Config.WINDOW_MONTHS) -> List[MonthlyVector]:
    """The `months` consecutive valid vectors ending at `anchor`, oldest first"""
    if not vectors:
        raise InsufficientHistoryError('?', "no monthly vectors")
    company_id = vectors[0].company_id
    by_period = {vector.period: vector for vector in vectors}
    window = []
    for offset in range(months - 1, -1, -1):
        period = shift_period(anchor, -offset)
        vector = by_period.get(period)
        if vector is None:
            raise InsufficientHistoryError(
                company_id, f"needs {months} months ending {anchor[0]:04d}-{anchor[1]:02d}, "
                            f"{period[0]:04d}-{period[1]:02d} is missing")
        if not vector.valid:
            raise InsufficientHistoryError(
                company_id, f"month {period[0]:04d}-{period[1]:02d} in the window is invalid")
        window.append(vector)
    return window


def write_vectors(vectors: Iterable[MonthlyVector], path: str, config_hash: Optional[str] = None) -> int:
    count = 0
    with open(path, 'w', encoding='utf-8') as f:
        for vector in vectors:
            record = vector.to_dict()
            if config_hash:
                record['config_hash'] = config_hash
            f.write(json.dumps(record, sort_keys=True) + '\n')
            count += 1
    return count


def read_vectors(path: str) -> List[MonthlyVector]:
    vectors = []
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if line.strip():
                vectors.append(MonthlyVector.from_dict(json.loads(line)))
    return vectors
