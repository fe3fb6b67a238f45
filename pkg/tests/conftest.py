import pytest

from backend.models.ledger import CompanyMetadata, MonthlyBalance, MonthlyVector
from backend.services.chart_normalizer import load_default_reference_index, load_standard_chart
from backend.services.ledger_engine import VECTOR_ACCOUNT_CODES, load_ratio_definitions


@pytest.fixture(scope='session')
def chart():
    return load_standard_chart()


@pytest.fixture(scope='session')
def reference_index(chart):
    return load_default_reference_index(chart)


@pytest.fixture(scope='session')
def ratio_defs(chart):
    return load_ratio_definitions(chart=chart)


@pytest.fixture
def metadata():
    return CompanyMetadata(company_id='C1', division=47, group=472, region_code=35, country_code=55)


def make_balance(period, balances, company_id='C1'):
    return MonthlyBalance(company_id=company_id, period=period, balances=dict(balances))


def make_vector(period, value=0.0, company_id='C1', valid=True, ratios=None, **overrides):
    fields = dict(
        company_id=company_id,
        period=period,
        division=47,
        group=472,
        region_code=35,
        country_code=55,
        inflation_month=0.0,
        inflation_12m=0.0,
        vertical=[value] * len(VECTOR_ACCOUNT_CODES),
        horizontal=[value] * len(VECTOR_ACCOUNT_CODES),
        ratios=list(ratios) if ratios is not None else [value] * len(VECTOR_ACCOUNT_CODES),
        valid=valid,
    )
    fields.update(overrides)
    return MonthlyVector(**fields)


def make_window(start=(2020, 1), months=12, **kwargs):
    from backend.models.ledger import shift_period
    return [make_vector(shift_period(start, m), **kwargs) for m in range(months)]
