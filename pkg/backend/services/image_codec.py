"""
Image codec

Encodes a company's 12-month window of monthly vectors as a 24x24 RGB image.
Each month takes two rows. The first three columns of both rows carry the
month's header pixels (region, period, inflation), the remaining 21 carry
one value each. Account images put vertical analysis on the first row and
horizontal analysis on the second; ratio images repeat the ratios on both.

Scalars use a square-root code around a baseline of 125 (zero), taking only
the integer part of the sum.
"""

import logging
import math
import os
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from config import Config
from backend.models.image import IMAGE_SHAPE, PIXEL_FILE_SIZE, CompanyImage, Variant
from backend.models.ledger import MonthlyVector, period_index
from backend.utils.errors import ContractError, DataValidationError

logger = logging.getLogger(__name__)

Pixel = Tuple[int, int, int]

BASELINE = Config.PIXEL_BASELINE
HEADER_COLUMNS = 3
VALUE_COLUMNS = 21
# keeps floor() from dropping a unit when sqrt/multiply land just below an integer
_FLOOR_GUARD = 1e-9


def _clamp_byte(value: float) -> int:
    return int(min(255, max(0, math.floor(value + _FLOOR_GUARD))))


def _check_byte(name: str, value: int) -> None:
    if not 0 <= int(value) <= 255:
        raise ContractError(f"{name} must be in [0, 255], got {value}")


def encode_scalar(v: Optional[float]) -> int:
    if v is None or not math.isfinite(v):
        return BASELINE
    return _clamp_byte(BASELINE + math.copysign(math.sqrt(abs(v)) * 100, v))


def decode_scalar(c: int) -> float:
    offset = int(c) - BASELINE
    if offset == 0:
        return 0.0
    return math.copysign((abs(offset) / 100) ** 2, offset)


def encode_region_pixel(division: int, group: int, region_code: int) -> Pixel:
    _check_byte('division', division)
    _check_byte('region_code', region_code)
    if group // 10 != division:
        raise ContractError(f"Group {group} does not belong to division {division}")
    return int(division), (int(group) % 10) * 10, int(region_code)


def encode_period_pixel(year: int, month: int, country_code: int) -> Pixel:
    if not 1970 <= year <= 2097:
        raise ContractError(f"Year {year} cannot be encoded, expected 1970-2097")
    if not 1 <= month <= 12:
        raise ContractError(f"Month {month} out of range")
    _check_byte('country_code', country_code)
    return (int(year) - 1970) * 2, int(month) * 10, int(country_code)


def encode_inflation_pixel(month_rate: float, year_rate: float) -> Pixel:
    return Config.INFLATION_INDEX_TYPE, encode_scalar(month_rate), encode_scalar(year_rate)


def encode_value_pixel(v: Optional[float]) -> Pixel:
    """(sqrt-coded signed value, linear-coded signed value, unsigned magnitude)"""
    if v is None or not math.isfinite(v):
        v = 0.0
    return (
        encode_scalar(v),
        _clamp_byte(BASELINE + v * 100),
        _clamp_byte(math.sqrt(abs(v)) * 100),
    )


def header_pixels(vector: MonthlyVector) -> Tuple[Pixel, Pixel, Pixel]:
    year, month = vector.period
    return (
        encode_region_pixel(vector.division, vector.group, vector.region_code),
        encode_period_pixel(year, month, vector.country_code),
        encode_inflation_pixel(vector.inflation_month, vector.inflation_12m),
    )


def _value_row(values: Sequence[Optional[float]]) -> np.ndarray:
    if len(values) != VALUE_COLUMNS:
        raise ContractError(f"Image rows hold {VALUE_COLUMNS} values, got {len(values)}")
    return np.array([encode_value_pixel(v) for v in values], dtype=np.uint8)


def compose_image(window: Sequence[MonthlyVector], variant: Variant = Variant.ACCOUNTS,
                  label: int = 0) -> CompanyImage:
    variant = Variant(variant)
    months = Config.WINDOW_MONTHS
    if len(window) != months:
        raise ContractError(f"An image needs exactly {months} months, got {len(window)}")
    company_id = window[0].company_id
    for earlier, later in zip(window, window[1:]):
        if later.company_id != company_id:
            raise ContractError("Image window mixes companies")
        if period_index(later.period) - period_index(earlier.period) != 1:
            raise ContractError(f"Image window for {company_id} is not made of consecutive months")

    pixels = np.zeros(IMAGE_SHAPE, dtype=np.uint8)
    for m, vector in enumerate(window):
        headers = np.array(header_pixels(vector), dtype=np.uint8)
        if variant is Variant.ACCOUNTS:
            first, second = _value_row(vector.vertical), _value_row(vector.horizontal)
        else:
            first = _value_row(vector.ratios)
            second = first
        for row, values in ((2 * m, first), (2 * m + 1, second)):
            pixels[row, :HEADER_COLUMNS] = headers
            pixels[row, HEADER_COLUMNS:] = values

    return CompanyImage(
        pixels=pixels,
        label=int(label),
        company_id=company_id,
        anchor_period=window[-1].period,
        variant=variant,
        division=window[-1].division,
    )


def write_png(image: CompanyImage, path: str, config_hash: Optional[str] = None) -> str:
    """8-bit RGB, no alpha, no interlace; identical pixels give identical bytes"""
    info = PngInfo()
    if config_hash:
        info.add_text('config_hash', config_hash)
    Image.fromarray(image.pixels).save(path, format='PNG', pnginfo=info, compress_level=9, optimize=False)
    return path


def read_png(path: str) -> np.ndarray:
    with Image.open(path) as png:
        if png.mode != 'RGB':
            raise DataValidationError(f"{path}: expected an RGB image, got mode {png.mode}")
        pixels = np.asarray(png, dtype=np.uint8).copy()
    if pixels.shape != IMAGE_SHAPE:
        raise DataValidationError(f"{path}: expected a 24x24 image, got {pixels.shape[1]}x{pixels.shape[0]}")
    return pixels


def png_config_hash(path: str) -> Optional[str]:
    with Image.open(path) as png:
        return png.text.get('config_hash')


def write_pixel_file(image: CompanyImage, path: str) -> str:
    with open(path, 'wb') as f:
        f.write(image.to_bytes())
    return path


def read_pixel_file(path: str) -> np.ndarray:
    if os.path.getsize(path) != PIXEL_FILE_SIZE:
        raise DataValidationError(f"{path}: pixel files hold exactly {PIXEL_FILE_SIZE} bytes")
    return np.fromfile(path, dtype=np.uint8).reshape(IMAGE_SHAPE)
