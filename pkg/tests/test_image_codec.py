import numpy as np
import pytest

from backend.models.image import CompanyImage, Variant
from backend.services.image_codec import (
    compose_image,
    decode_scalar,
    encode_inflation_pixel,
    encode_period_pixel,
    encode_region_pixel,
    encode_scalar,
    encode_value_pixel,
    png_config_hash,
    read_pixel_file,
    read_png,
    write_pixel_file,
    write_png,
)
from backend.utils.errors import ContractError
from tests.conftest import make_window


class TestHeaderPixels:
    @pytest.mark.parametrize('args,expected', [
        ((47, 472, 35), (47, 20, 35)),
        ((86, 860, 0), (86, 0, 0)),
        ((82, 829, 53), (82, 90, 53)),
    ])
    def test_region(self, args, expected):
        assert encode_region_pixel(*args) == expected

    def test_region_group_mismatch(self):
        with pytest.raises(ContractError):
            encode_region_pixel(47, 861, 35)

    @pytest.mark.parametrize('args,expected', [
        ((2020, 1, 55), (100, 10, 55)),
        ((1970, 1, 0), (0, 10, 0)),
        ((1997, 6, 55), (54, 60, 55)),
        ((2097, 12, 255), (254, 120, 255)),
    ])
    def test_period(self, args, expected):
        assert encode_period_pixel(*args) == expected

    @pytest.mark.parametrize('year', [1969, 2098])
    def test_period_year_out_of_range(self, year):
        with pytest.raises(ContractError):
            encode_period_pixel(year, 1, 55)

    @pytest.mark.parametrize('rates,expected', [
        ((0.0054, 0.0702064), (100, 132, 151)),
        ((0.0, 0.0), (100, 125, 125)),
        ((0.01, 0.04), (100, 135, 145)),
    ])
    def test_inflation(self, rates, expected):
        assert encode_inflation_pixel(*rates) == expected


class TestScalarCodec:
    @pytest.mark.parametrize('value,code', [(0, 125), (0.25, 175), (-1, 25), (2, 255), (-3, 0), (1.69, 255)])
    def test_encode(self, value, code):
        assert encode_scalar(value) == code

    @pytest.mark.parametrize('code,value', [(125, 0.0), (175, 0.25), (25, -1.0)])
    def test_decode(self, code, value):
        assert decode_scalar(code) == pytest.approx(value)

    def test_undefined_is_baseline(self):
        assert encode_scalar(None) == 125
        assert encode_scalar(float('nan')) == 125
        assert encode_value_pixel(None) == (125, 125, 0)

    def test_round_trip_error_bound(self):
        values = np.random.default_rng(11).uniform(-1.5625, 1.69, 10_000)
        for v in values:
            assert abs(decode_scalar(encode_scalar(v)) - v) <= 0.02 * np.sqrt(abs(v)) + 1e-4

    def test_value_just_below_byte_edge_keeps_upper_byte(self):
        assert encode_scalar(0.0001) == 126
        assert encode_scalar(0.25 * (1 - 1e-13)) == 175
        assert encode_scalar(0.2499) == 174
        assert encode_scalar(-0.25 * (1 - 1e-13)) == 75

    def test_monotone(self):
        codes = [encode_scalar(v) for v in np.linspace(-1.69, 1.69, 10_000)]
        assert all(a <= b for a, b in zip(codes, codes[1:]))

    def test_value_pixel(self):
        assert encode_value_pixel(0.25) == (175, 150, 50)
        assert encode_value_pixel(-0.25) == (75, 100, 50)
        assert encode_value_pixel(0.0) == (125, 125, 0)


class TestCompose:
    def test_all_zero_window(self):
        image = compose_image(make_window(), Variant.ACCOUNTS, label=1)
        assert image.pixels.shape == (24, 24, 3)
        assert (image.pixels[:, 3:] == (125, 125, 0)).all()
        assert tuple(image.pixels[0, 0]) == (47, 20, 35)
        assert tuple(image.pixels[0, 1]) == (100, 10, 55)
        assert tuple(image.pixels[0, 2]) == (100, 125, 125)
        assert tuple(image.pixels[23, 1]) == (100, 120, 55)
        assert image.label == 1
        assert image.anchor_period == (2020, 12)

    def test_vertical_value_placement(self):
        window = make_window()
        window[0].vertical[0] = 0.25
        image = compose_image(window, Variant.ACCOUNTS)
        assert tuple(image.pixels[0, 3]) == (175, 150, 50)
        assert tuple(image.pixels[1, 3]) == (125, 125, 0)

    def test_horizontal_on_odd_rows(self):
        window = make_window()
        window[2].horizontal[20] = -1.0
        image = compose_image(window, Variant.ACCOUNTS)
        assert tuple(image.pixels[5, 23]) == (25, 25, 100)

    def test_ratio_rows_are_duplicated(self):
        rng = np.random.default_rng(2)
        window = make_window()
        for vector in window:
            vector.ratios = [None if r < -1.2 else float(r) for r in rng.normal(size=21)]
        image = compose_image(window, Variant.RATIOS)
        assert np.array_equal(image.pixels[0::2], image.pixels[1::2])

    def test_short_window(self):
        with pytest.raises(ContractError):
            compose_image(make_window(months=11))

    def test_gap_in_window(self):
        window = make_window(months=13)
        del window[4]
        with pytest.raises(ContractError):
            compose_image(window)

    def test_ratio_image_must_repeat_rows(self):
        pixels = np.zeros((24, 24, 3), dtype=np.uint8)
        pixels[1, 5] = 7
        with pytest.raises(ContractError):
            CompanyImage(pixels, 0, 'C1', (2020, 12), Variant.RATIOS)


class TestFiles:
    def test_png_round_trip(self, tmp_path):
        image = compose_image(make_window(value=0.3), Variant.ACCOUNTS)
        path = write_png(image, str(tmp_path / 'a.png'), config_hash='abc')
        assert np.array_equal(read_png(path), image.pixels)
        assert png_config_hash(path) == 'abc'

    def test_png_is_deterministic(self, tmp_path):
        image = compose_image(make_window(value=-0.4), Variant.ACCOUNTS)
        first = write_png(image, str(tmp_path / 'a.png'))
        second = write_png(image, str(tmp_path / 'b.png'))
        assert open(first, 'rb').read() == open(second, 'rb').read()

    def test_black_image(self, tmp_path):
        image = CompanyImage(np.zeros((24, 24, 3), dtype=np.uint8), 0, 'C1', (2020, 12), Variant.ACCOUNTS)
        assert not read_png(write_png(image, str(tmp_path / 'black.png'))).any()

    def test_pixel_file(self, tmp_path):
        image = compose_image(make_window(value=0.1), Variant.ACCOUNTS)
        path = write_pixel_file(image, str(tmp_path / 'a.rgb'))
        assert (tmp_path / 'a.rgb').stat().st_size == 1728
        assert np.array_equal(read_pixel_file(path), image.pixels)
