"""
Shipped code tables: IBGE federative-unit codes, E.164 country codes and the
monthly IPCA inflation series used in image headers.
"""

import logging
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from config import Config
from backend.models.ledger import Period, period_index
from backend.utils.errors import DataValidationError

logger = logging.getLogger(__name__)


def _read_code_table(path: str) -> Dict[int, str]:
    frame = pd.read_csv(path, dtype={'code': int})
    if frame['code'].duplicated().any():
        raise DataValidationError(f"{path}: duplicate codes")
    if ((frame['code'] < 0) | (frame['code'] > 255)).any():
        raise DataValidationError(f"{path}: codes must fit in one byte")
    return dict(zip(frame['code'], frame['name']))


@lru_cache(maxsize=None)
def load_region_codes(path: str = None) -> Dict[int, str]:
    return _read_code_table(path or Config.REGION_CODES_PATH)


@lru_cache(maxsize=None)
def load_country_codes(path: str = None) -> Dict[int, str]:
    return _read_code_table(path or Config.COUNTRY_CODES_PATH)


class InflationTable:
    """
    Monthly IPCA rates as decimal fractions.

    Rows may give the 12-month rate explicitly; otherwise it is compounded
    from the twelve monthly rates ending at that month. Periods outside the
    contiguous block of the table are cycled onto it.
    """

    def __init__(self, frame: pd.DataFrame):
        frame = frame.sort_values(['year', 'month']).reset_index(drop=True)
        self._explicit: Dict[Period, Tuple[float, float]] = {}
        indices = [period_index((int(y), int(m))) for y, m in zip(frame['year'], frame['month'])]
        monthly = frame['monthly_rate'].astype(float).to_numpy()
        yearly = pd.to_numeric(frame['rate_12m'], errors='coerce').to_numpy()

        # the longest run of consecutive months is the cyclic series
        best_start, best_length, start = 0, 1, 0
        for i in range(1, len(indices) + 1):
            if i == len(indices) or indices[i] != indices[i - 1] + 1:
                if i - start > best_length:
                    best_start, best_length = start, i - start
                start = i
        if best_length < 12:
            raise DataValidationError("IPCA table needs at least 12 consecutive months")
        self._origin = indices[best_start]
        self._series = monthly[best_start:best_start + best_length]
        self._series_yearly = yearly[best_start:best_start + best_length]

        for i, (index, rate) in enumerate(zip(indices, monthly)):
            if best_start <= i < best_start + best_length:
                continue
            if np.isnan(yearly[i]):
                raise DataValidationError(f"IPCA row {index // 12}-{index % 12 + 1:02d} outside the series needs rate_12m")
            self._explicit[(index // 12, index % 12 + 1)] = (float(rate), float(yearly[i]))

    def _position(self, period: Period) -> int:
        return (period_index(period) - self._origin) % len(self._series)

    def rates(self, period: Period) -> Tuple[float, float]:
        """(monthly rate, 12-month rate) for a period"""
        if period in self._explicit:
            return self._explicit[period]
        position = self._position(period)
        month_rate = float(self._series[position])
        year_rate = self._series_yearly[position]
        if np.isnan(year_rate):
            window = [self._series[(position - k) % len(self._series)] for k in range(12)]
            year_rate = float(np.prod(1.0 + np.asarray(window)) - 1.0)
        return month_rate, float(year_rate)


@lru_cache(maxsize=None)
def load_inflation_table(path: str = None) -> InflationTable:
    path = path or Config.IPCA_PATH
    frame = pd.read_csv(path)
    missing = {'year', 'month', 'monthly_rate', 'rate_12m'} - set(frame.columns)
    if missing:
        raise DataValidationError(f"{path} lacks columns: {', '.join(sorted(missing))}")
    return InflationTable(frame)
