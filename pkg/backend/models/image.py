from dataclasses import dataclass
from enum import Enum
from typing import Dict

import numpy as np

from backend.models.ledger import Period, format_period
from backend.utils.errors import ContractError

IMAGE_SHAPE = (24, 24, 3)
PIXEL_FILE_SIZE = 24 * 24 * 3


class Variant(Enum):
    ACCOUNTS = 'accounts'
    RATIOS = 'ratios'


@dataclass
class CompanyImage:
    pixels: np.ndarray  # (24, 24, 3) uint8, row-major
    label: int
    company_id: str
    anchor_period: Period
    variant: Variant
    division: int = 0

    def __post_init__(self):
        if self.pixels.shape != IMAGE_SHAPE:
            raise ContractError(f"Image must be 24x24x3, got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ContractError(f"Image pixels must be uint8, got {self.pixels.dtype}")
        if self.label not in (0, 1):
            raise ContractError(f"Image label must be 0 or 1, got {self.label}")
        if self.variant is Variant.RATIOS and not np.array_equal(self.pixels[0::2], self.pixels[1::2]):
            raise ContractError("Ratio images must repeat each month's row")

    @property
    def stem(self) -> str:
        return f"{self.company_id}_{format_period(self.anchor_period)}_{self.variant.value}"

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes(order='C')

    def manifest_record(self, pixel_file: str) -> Dict:
        return {
            'company_id': self.company_id,
            'anchor_period': format_period(self.anchor_period),
            'variant': self.variant.value,
            'label': self.label,
            'division': self.division,
            'pixel_file': pixel_file,
        }
