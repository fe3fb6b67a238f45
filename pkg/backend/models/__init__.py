"""
Domain records for the failure-prediction pipeline

Avoid importing submodules at package import time so the SQL store stays an
optional import. Import records directly from their modules:

    from backend.models.chart import ChartAccount, StandardChart
    from backend.models.ledger import AccountingEntry, MonthlyVector
    from backend.models.image import CompanyImage
    ...
"""

__all__ = []
