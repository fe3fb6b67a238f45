import os

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.join(BASE_DIR, 'data')


class Config:
    """Base configuration class"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL') or 'INFO'

    # Shipped data files
    STANDARD_CHART_PATH = os.environ.get('STANDARD_CHART_PATH') or os.path.join(DATA_DIR, 'standard_chart.json')
    REFERENCE_ALIASES_PATH = os.path.join(DATA_DIR, 'reference_aliases.jsonl')
    RATIO_DEFINITIONS_PATH = os.path.join(DATA_DIR, 'ratio_definitions.json')
    REGION_CODES_PATH = os.path.join(DATA_DIR, 'region_codes.csv')
    COUNTRY_CODES_PATH = os.path.join(DATA_DIR, 'country_codes.csv')
    IPCA_PATH = os.path.join(DATA_DIR, 'ipca_monthly.csv')

    # Chart normalization
    EMBEDDING_DIMENSION = 2048
    NGRAM_SIZE = 3
    SIMILARITY_FLOOR = float(os.environ.get('SIMILARITY_FLOOR', 0.30))
    MATCHER_ACCURACY_THRESHOLD = 0.865
    STANDARD_LEVEL_COUNTS = (4, 12, 42, 150)

    # Ledger / vectors
    TOTAL_ASSETS_CODE = 10000
    WINDOW_MONTHS = 12

    # Image codec
    PIXEL_BASELINE = 125
    SATURATION_VALUE = 1.69
    INFLATION_INDEX_TYPE = 100  # IPCA
    IMAGE_SIZE = 24

    # CNN training
    TRAINING = {
        'learning_rate': 1e-3,
        'batch_size': 32,
        'epochs': 30,
        'patience': 5,
        'seed': 0,
    }
    ADAM_BETAS = (0.9, 0.999)
    ADAM_EPSILON = 1e-8
    BCE_EPSILON = 1e-7
    PREDICTION_THRESHOLD = 0.5

    # Evaluation
    TEST_FRACTION = 0.20
    VALIDATION_FRACTION = 0.10
    OVERFITTING_LOSS_THRESHOLD = 0.20
    SPLIT_SEED = int(os.environ.get('SPLIT_SEED', 0))

    # Synthetic ledgers
    SYNTH = {
        'seed': 7,
        'n_companies': 2000,
        'class_ratio': 0.5,
        'months_per_company': 24,
        'noise_level': 0.5,
        'divisions': [
            {'division': 47, 'group': 472, 'weight': 0.35},
            {'division': 47, 'group': 475, 'weight': 0.35},
            {'division': 86, 'group': 863, 'weight': 0.2},
            {'division': 82, 'group': 829, 'weight': 0.1},
        ],
        'region_codes': [35, 33, 31, 41, 43, 29],
        'country_codes': [55],
        'first_start_year': 2016,
        'last_start_year': 2020,
    }

    # Monthly trend of each posted account (growth per month) and flow
    # shares of revenue for the two synthetic archetypes
    SYNTH_ARCHETYPES = {
        'solvent': {
            'growth': {
                31100: 0.01, 11100: 0.03, 11200: 0.01, 11300: 0.01, 11500: 0.01,
                13200: 0.0, 13300: 0.0, 13400: 0.0,
                21100: 0.01, 21200: 0.0, 22100: 0.0, 22300: 0.0,
            },
            'flows': {
                32100: 0.55, 32200: 0.15, 32400: 0.02, 32500: 0.02,
                32700: 0.03, 32800: 0.02, 32900: 0.08,
            },
            'interest_rate': 0.01,
        },
        'distressed': {
            'growth': {
                31100: -0.04, 11100: -0.15, 11200: 0.0, 11300: -0.01, 11500: -0.05,
                13200: 0.0, 13300: 0.0, 13400: 0.0,
                21100: 0.04, 21200: 0.05, 22100: 0.02, 22300: 0.0,
            },
            'flows': {
                32100: 0.68, 32200: 0.18, 32400: 0.03, 32500: 0.005,
                32700: 0.03, 32800: 0.02, 32900: 0.12,
            },
            'interest_rate': 0.025,
        },
    }
    # Opening stock of each account as a multiple of opening monthly revenue
    SYNTH_OPENING = {
        11100: 0.4, 11200: 0.8, 11300: 0.6, 11500: 0.3,
        13200: 0.2, 13300: 1.5, 13400: 0.1,
        21100: 0.5, 21200: 0.4, 22100: 0.5, 22300: 0.2,
        23100: 1.0,
    }

    # Optional SQL store for monthly vectors (None disables it)
    VECTOR_STORE_URL = os.environ.get('VECTOR_STORE_URL')


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL') or 'DEBUG'


class ProductionConfig(Config):
    """Production configuration"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL') or 'WARNING'


class TestingConfig(Config):
    """Testing configuration"""
    SYNTH = dict(Config.SYNTH, n_companies=60, months_per_company=14)
    TRAINING = dict(Config.TRAINING, epochs=3)


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config,
}


def get_config():
    """Config class selected by PIPELINE_ENV"""
    return config.get(os.environ.get('PIPELINE_ENV', 'default'), Config)
