"""
Run configuration for the staged pipeline.

One JSON file describes a run. Relative paths are resolved against the
directory holding that file; keys left out fall back to the config class
selected by `PIPELINE_ENV`. The config hash is the SHA-256 of the canonical
JSON of the settings as written (after command-line overrides) and is
stamped on every artifact.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from config import Config, get_config
from backend.models.image import Variant
from backend.utils.errors import ContractError, MissingArtifactError

STAGES = ('synth', 'normalize', 'vectorize', 'imagize', 'train', 'evaluate', 'report')


@dataclass
class PipelineConfig:
    output_dir: str = 'artifacts'
    chart: Optional[str] = None
    reference_index: Optional[str] = None
    original_chart: Optional[str] = None
    entries: Optional[str] = None
    labels: Optional[str] = None
    companies: Optional[str] = None
    ratio_definitions: Optional[str] = None
    inflation: Optional[str] = None
    image_manifests: List[str] = field(default_factory=list)
    variant: str = Variant.ACCOUNTS.value
    training: Dict = field(default_factory=lambda: dict(get_config().TRAINING))
    split_seed: int = Config.SPLIT_SEED
    synth: Optional[Dict] = None
    train_divisions: Optional[List[int]] = None
    test_divisions: Optional[List[int]] = None
    similarity_floor: float = Config.SIMILARITY_FLOOR
    on_invalid_entry: str = 'skip'
    vector_store_url: Optional[str] = None
    base_dir: str = field(default='.', compare=False)

    def __post_init__(self):
        try:
            Variant(self.variant)
        except ValueError:
            raise ContractError(f"variant must be 'accounts' or 'ratios', got '{self.variant}'")
        if self.on_invalid_entry not in ('raise', 'skip'):
            raise ContractError(f"on_invalid_entry must be 'raise' or 'skip', got '{self.on_invalid_entry}'")
        unknown = set(self.training) - set(Config.TRAINING)
        if unknown:
            raise ContractError(f"Unknown training settings: {', '.join(sorted(unknown))}")
        self.training = dict(get_config().TRAINING, **self.training)
        for name in ('train_divisions', 'test_divisions'):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, sorted({int(d) for d in value}))

    @classmethod
    def from_dict(cls, payload: Dict, base_dir: str = '.') -> 'PipelineConfig':
        known = {name for name in cls.__dataclass_fields__ if name != 'base_dir'}
        unknown = set(payload) - known
        if unknown:
            raise ContractError(f"Unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**payload, base_dir=base_dir)

    @classmethod
    def from_file(cls, path: str) -> 'PipelineConfig':
        if not os.path.exists(path):
            raise MissingArtifactError(path)
        with open(path, 'r', encoding='utf-8') as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as e:
                raise ContractError(f"{path} is not valid JSON: {e}")
        if not isinstance(payload, dict):
            raise ContractError(f"{path} must hold a JSON object")
        return cls.from_dict(payload, base_dir=os.path.dirname(os.path.abspath(path)))

    def with_overrides(self, variant: Optional[str] = None, seed: Optional[int] = None) -> 'PipelineConfig':
        """Apply command-line flags; a seed replaces the split, training and synth seeds"""
        payload = self.to_dict()
        if variant is not None:
            payload['variant'] = variant
        if seed is not None:
            if seed < 0:
                raise ContractError(f"seed must be non-negative, got {seed}")
            payload['split_seed'] = int(seed)
            payload['training'] = dict(payload['training'], seed=int(seed))
            if payload['synth'] is not None:
                payload['synth'] = dict(payload['synth'], seed=int(seed))
        return PipelineConfig.from_dict(payload, base_dir=self.base_dir)

    def to_dict(self) -> Dict:
        payload = asdict(self)
        payload.pop('base_dir')
        return payload

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def resolve(self, path: Optional[str]) -> Optional[str]:
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.base_dir, path))

    # Resolved locations

    @property
    def output_path(self) -> str:
        return self.resolve(self.output_dir)

    def stage_dir(self, stage: str) -> str:
        return os.path.join(self.output_path, stage)

    @property
    def chart_path(self) -> str:
        return self.resolve(self.chart) or Config.STANDARD_CHART_PATH

    @property
    def ratio_definitions_path(self) -> str:
        return self.resolve(self.ratio_definitions) or Config.RATIO_DEFINITIONS_PATH

    @property
    def inflation_path(self) -> str:
        return self.resolve(self.inflation) or Config.IPCA_PATH

    @property
    def entries_path(self) -> str:
        return self.resolve(self.entries) or os.path.join(self.stage_dir('synth'), 'entries.csv')

    @property
    def labels_path(self) -> str:
        return self.resolve(self.labels) or os.path.join(self.stage_dir('synth'), 'labels.jsonl')

    @property
    def companies_path(self) -> str:
        return self.resolve(self.companies) or os.path.join(self.stage_dir('synth'), 'companies.jsonl')

    @property
    def match_table_path(self) -> str:
        return os.path.join(self.stage_dir('normalize'), 'match_table.csv')

    @property
    def vectors_path(self) -> str:
        return os.path.join(self.stage_dir('vectorize'), 'vectors.jsonl')

    @property
    def manifest_paths(self) -> List[str]:
        """This run's image manifest followed by any extra manifests to combine"""
        own = os.path.join(self.stage_dir('imagize'), 'image_manifest.jsonl')
        return [own] + [self.resolve(path) for path in self.image_manifests]

    @property
    def model_path(self) -> str:
        return os.path.join(self.stage_dir('train'), 'model.json')

    @property
    def split_path(self) -> str:
        return os.path.join(self.stage_dir('train'), 'split.json')

    @property
    def metrics_path(self) -> str:
        return os.path.join(self.stage_dir('evaluate'), 'metrics.json')
