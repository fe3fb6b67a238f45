import numpy as np
import pandas as pd
import pytest

from backend.services.code_tables import InflationTable, load_country_codes, load_inflation_table, load_region_codes
from backend.utils.errors import DataValidationError


def test_region_and_country_codes():
    assert load_region_codes()[35] == 'Sao Paulo'
    assert load_country_codes()[55] == 'Brazil'


def test_explicit_row_outside_series():
    assert load_inflation_table().rates((1997, 6)) == (0.0054, 0.0702064)


def test_compounded_twelve_month_rate():
    table = load_inflation_table()
    monthly = [table.rates((2016, m))[0] for m in range(1, 13)]
    assert table.rates((2016, 12))[1] == pytest.approx(np.prod(1 + np.array(monthly)) - 1)


def test_series_is_cycled():
    table = load_inflation_table()
    assert table.rates((2024, 1)) == table.rates((2015, 1))
    assert table.rates((2014, 12)) == table.rates((2023, 12))


def test_short_series_rejected():
    frame = pd.DataFrame({'year': [2020] * 6, 'month': range(1, 7), 'monthly_rate': [0.01] * 6,
                          'rate_12m': [None] * 6})
    with pytest.raises(DataValidationError):
        InflationTable(frame)
