from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from backend.utils.errors import ChartStructureError, UnknownAccountError


def standard_code_level(code: int) -> int:
    """Level of a 5-digit standard code: d0000 -> 1, dd000 -> 2, ddd00 -> 3, else 4"""
    text = f"{int(code):05d}"
    if len(text) != 5 or text[0] == '0':
        raise ChartStructureError(f"Standard code {code} is not a 5-digit code")
    if text[1:] == '0000':
        return 1
    if text[2:] == '000':
        return 2
    if text[3:] == '00':
        return 3
    return 4


def standard_code_prefix(code: int) -> str:
    """Digits that identify a standard code and all of its descendants"""
    level = standard_code_level(code)
    return f"{int(code):05d}"[: {1: 1, 2: 2, 3: 3, 4: 5}[level]]


def standard_parent(code: int) -> Optional[int]:
    level = standard_code_level(code)
    if level == 1:
        return None
    keep = {2: 1, 3: 2, 4: 3}[level]
    return int(f"{int(code):05d}"[:keep].ljust(5, '0'))


def code_level(code: str) -> int:
    """Number of populated levels in a hierarchical code ('1.1.2.001' -> 4)"""
    code = str(code).strip()
    if '.' in code:
        return len([part for part in code.split('.') if part])
    if code.isdigit() and len(code) == 5:
        return standard_code_level(int(code))
    return 1


@dataclass(frozen=True)
class ChartAccount:
    """One account of a (possibly proprietary) chart of accounts"""
    code: str
    level: int
    description: str
    parent: Optional[str] = None

    def __post_init__(self):
        if not 1 <= self.level <= 4:
            raise ChartStructureError(f"Account {self.code} has level {self.level}, expected 1-4")
        if self.level > 1 and not self.parent:
            raise ChartStructureError(f"Account {self.code} at level {self.level} has no parent")

    def to_dict(self) -> Dict:
        return {
            'code': self.code,
            'level': self.level,
            'description': self.description,
            'parent': self.parent,
        }


@dataclass
class StandardChart:
    """The 208-account target chart, keyed by integer code"""
    accounts: Dict[int, ChartAccount]
    level_counts: Tuple[int, ...] = (4, 12, 42, 150)

    @classmethod
    def from_records(cls, records: Iterable[Dict], level_counts=(4, 12, 42, 150)) -> 'StandardChart':
        accounts = {}
        for record in records:
            code = int(record['code'])
            parent = record.get('parent')
            account = ChartAccount(
                code=str(code),
                level=int(record['level']),
                description=str(record['description']).strip(),
                parent=str(int(parent)) if parent not in (None, '') else None,
            )
            if code in accounts:
                raise ChartStructureError(f"Duplicate standard code {code}")
            accounts[code] = account
        chart = cls(accounts=accounts, level_counts=tuple(level_counts))
        chart.validate()
        return chart

    def validate(self) -> None:
        counts = [0, 0, 0, 0]
        for code, account in self.accounts.items():
            level = standard_code_level(code)
            if level != account.level:
                raise ChartStructureError(
                    f"Standard code {code} declares level {account.level} but its digits say {level}")
            counts[level - 1] += 1
            expected_parent = standard_parent(code)
            if expected_parent is not None:
                if account.parent is None or int(account.parent) != expected_parent:
                    raise ChartStructureError(f"Standard code {code} must have parent {expected_parent}")
                if expected_parent not in self.accounts:
                    raise ChartStructureError(f"Standard code {code} has missing parent {expected_parent}")
        if tuple(counts) != tuple(self.level_counts):
            raise ChartStructureError(
                f"Standard chart level counts {tuple(counts)} differ from {tuple(self.level_counts)}")

    def __contains__(self, code) -> bool:
        try:
            return int(code) in self.accounts
        except (TypeError, ValueError):
            return False

    def __len__(self) -> int:
        return len(self.accounts)

    def get(self, code: int) -> ChartAccount:
        try:
            return self.accounts[int(code)]
        except (KeyError, TypeError, ValueError):
            raise UnknownAccountError(code)

    def as_chart_list(self) -> List[ChartAccount]:
        return [self.accounts[code] for code in sorted(self.accounts)]

    def codes(self) -> List[int]:
        return sorted(self.accounts)


@dataclass(frozen=True)
class ReferenceEntry:
    description: str
    target_code: int


@dataclass
class ReferenceIndex:
    """Reference descriptions with unit-norm embedding rows (read-only after build)"""
    entries: List[ReferenceEntry]
    vectors: np.ndarray
    dimension: int
    embedder: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.entries) != self.vectors.shape[0]:
            raise ChartStructureError("Reference index has mismatched entries and vectors")
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dimension:
            raise ChartStructureError(f"Reference vectors must have dimension {self.dimension}")
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.entries)

    def target_codes(self) -> List[int]:
        return sorted({entry.target_code for entry in self.entries})


@dataclass(frozen=True)
class AccountMatch:
    original_code: str
    target_code: int
    similarity: float
    matched_description: str
    low_confidence: bool = False

    def to_dict(self) -> Dict:
        return {
            'original_code': self.original_code,
            'target_code': self.target_code,
            'similarity': self.similarity,
            'matched_description': self.matched_description,
            'low_confidence': self.low_confidence,
        }
