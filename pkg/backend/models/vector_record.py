import json
from typing import Iterable

from sqlalchemy import Boolean, Column, Float, Integer, String, Text, UniqueConstraint

from backend.db import Base, get_db_session, make_engine, make_session_factory
from backend.models.ledger import MonthlyVector


class MonthlyVectorRecord(Base):
    __tablename__ = 'monthly_vectors'
    __table_args__ = (
        UniqueConstraint('company_id', 'period', name='uq_monthly_vectors_company_period'),
    )

    id = Column(Integer, primary_key=True, index=True)
    company_id = Column(String(64), nullable=False, index=True)
    period = Column(String(7), nullable=False)  # YYYY-MM
    division = Column(Integer, nullable=False, index=True)
    group = Column(Integer, nullable=False)
    region_code = Column(Integer, nullable=False)
    country_code = Column(Integer, nullable=False)
    inflation_month = Column(Float, nullable=False)
    inflation_12m = Column(Float, nullable=False)
    vertical = Column(Text, nullable=False)  # JSON arrays
    horizontal = Column(Text, nullable=False)
    ratios = Column(Text, nullable=False)
    valid = Column(Boolean, nullable=False)
    total_assets_share = Column(Float, nullable=False, default=0.0)
    config_hash = Column(String(64), nullable=True)

    @classmethod
    def from_vector(cls, vector: MonthlyVector, config_hash: str = None) -> 'MonthlyVectorRecord':
        payload = vector.to_dict()
        return cls(
            company_id=payload['company_id'],
            period=payload['period'],
            division=payload['division'],
            group=payload['group'],
            region_code=payload['region_code'],
            country_code=payload['country_code'],
            inflation_month=payload['inflation_month'],
            inflation_12m=payload['inflation_12m'],
            vertical=json.dumps(payload['vertical']),
            horizontal=json.dumps(payload['horizontal']),
            ratios=json.dumps(payload['ratios']),
            valid=payload['valid'],
            total_assets_share=payload['total_assets_share'],
            config_hash=config_hash,
        )

    def to_vector(self) -> MonthlyVector:
        return MonthlyVector.from_dict({
            'company_id': self.company_id,
            'period': self.period,
            'division': self.division,
            'group': self.group,
            'region_code': self.region_code,
            'country_code': self.country_code,
            'inflation_month': self.inflation_month,
            'inflation_12m': self.inflation_12m,
            'vertical': json.loads(self.vertical),
            'horizontal': json.loads(self.horizontal),
            'ratios': json.loads(self.ratios),
            'valid': self.valid,
            'total_assets_share': self.total_assets_share,
        })

    def __repr__(self):
        return f'<MonthlyVectorRecord {self.company_id} {self.period}>'


def store_vectors(vectors: Iterable[MonthlyVector], url: str, config_hash: str = None) -> int:
    """Replace the stored vectors of every company present in `vectors`; returns rows written"""
    engine = make_engine(url)
    Base.metadata.create_all(bind=engine)
    session_factory = make_session_factory(engine)
    vectors = list(vectors)
    companies = sorted({vector.company_id for vector in vectors})
    with next(get_db_session(session_factory)) as session:
        try:
            if companies:
                session.query(MonthlyVectorRecord).filter(
                    MonthlyVectorRecord.company_id.in_(companies)).delete(synchronize_session=False)
            session.add_all(MonthlyVectorRecord.from_vector(v, config_hash) for v in vectors)
            session.commit()
        except Exception:
            session.rollback()
            raise
    engine.dispose()
    return len(vectors)


def load_vectors(url: str, company_id: str = None):
    engine = make_engine(url)
    session_factory = make_session_factory(engine)
    with next(get_db_session(session_factory)) as session:
        query = session.query(MonthlyVectorRecord)
        if company_id is not None:
            query = query.filter(MonthlyVectorRecord.company_id == company_id)
        rows = query.order_by(MonthlyVectorRecord.company_id, MonthlyVectorRecord.period).all()
        vectors = [row.to_vector() for row in rows]
    engine.dispose()
    return vectors
