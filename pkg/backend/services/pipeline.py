"""
Staged pipeline runner

Each stage reads the files of the stages before it and writes its own
outputs under `<output_dir>/<stage>/`:

    synth      entries.csv, labels.jsonl, companies.jsonl, synth_manifest.json
    normalize  match_table.csv, normalize_summary.json
    vectorize  vectors.jsonl, vectorize_summary.json
    imagize    images/*.png, images/*.rgb, image_manifest.jsonl
    train      model.json, split.json, train_report.json
    evaluate   metrics.json, predictions.csv
    report     metrics_report.json, summary.txt, correlation.json

Outputs are built in a staging directory and moved into place only when the
stage succeeds, so a failed stage leaves the previous outputs untouched.
"""

import json
import logging
import os
import shutil
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import Config
from backend.models.image import Variant
from backend.models.ledger import CompanyMetadata, MonthlyVector
from backend.services import chart_normalizer, image_codec, ledger_engine
from backend.services.code_tables import load_country_codes, load_inflation_table, load_region_codes
from backend.services.evaluation import (
    SplitPlan,
    compute_metrics,
    confusion,
    format_summary,
    metrics_report,
    split_dataset,
    f1_consistency,
)
from backend.services.pipeline_config import STAGES, PipelineConfig
from backend.services.synth_generator import SynthConfig, generate_dataset, load_companies, load_labels
from backend.utils.errors import ContractError, DataValidationError, InsufficientHistoryError, MissingArtifactError
from ml.cnn_model import CnnModel, bce_loss, normalize_images
from ml.trainer import fit

logger = logging.getLogger(__name__)


def _require(path: str, stage: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifactError(path, stage)
    return path


def _write_json(path: str, payload: Dict) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def _read_json(path: str) -> Dict:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def _read_jsonl(path: str) -> List[Dict]:
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


# Stages

def _run_synth(config: PipelineConfig, out: str) -> Dict:
    if config.synth is None:
        raise ContractError("The synth stage needs a 'synth' section in the config file")
    result = generate_dataset(SynthConfig.from_dict(config.synth), out, config.config_hash)
    return {'companies': result['companies'], 'distressed': result['distressed'], 'entries': result['entries']}


def _run_normalize(config: PipelineConfig, out: str) -> Dict:
    summary = {'config_hash': config.config_hash, 'accounts': 0, 'low_confidence': 0}
    if config.original_chart is None:
        logger.info("No original chart configured; entries are read as standard codes")
    else:
        chart = chart_normalizer.load_standard_chart(_require(config.chart_path, 'normalize'))
        if config.reference_index is None:
            index = chart_normalizer.load_default_reference_index(chart)
        else:
            index = chart_normalizer.load_reference_index(
                _require(config.resolve(config.reference_index), 'normalize'), chart)
        accounts = chart_normalizer.load_original_chart(_require(config.resolve(config.original_chart), 'normalize'))
        matches = chart_normalizer.normalize_chart(accounts, index, config.similarity_floor)
        chart_normalizer.write_match_table(matches, os.path.join(out, 'match_table.csv'), config.config_hash)
        summary['accounts'] = len(matches)
        summary['low_confidence'] = sum(1 for m in matches if m.low_confidence)
    _write_json(os.path.join(out, 'normalize_summary.json'), summary)
    return {'accounts': summary['accounts'], 'low_confidence': summary['low_confidence']}


def _metadata_problem(metadata: CompanyMetadata, regions: Dict, countries: Dict) -> Optional[str]:
    if metadata.region_code not in regions:
        return f"region code {metadata.region_code} is not in the region table"
    if metadata.country_code not in countries:
        return f"country code {metadata.country_code} is not in the country table"
    return None


def _run_vectorize(config: PipelineConfig, out: str) -> Dict:
    entries_path = _require(config.entries_path, 'vectorize')
    companies = load_companies(_require(config.companies_path, 'vectorize'))
    chart = chart_normalizer.load_standard_chart(_require(config.chart_path, 'vectorize'))
    ratio_defs = ledger_engine.load_ratio_definitions(_require(config.ratio_definitions_path, 'vectorize'), chart)
    inflation = load_inflation_table(_require(config.inflation_path, 'vectorize'))
    regions, countries = load_region_codes(), load_country_codes()

    match_table = None
    if os.path.exists(config.match_table_path):
        match_table = chart_normalizer.read_match_table(config.match_table_path)
    entries = ledger_engine.load_entries(entries_path, match_table)
    balances = ledger_engine.aggregate_monthly(entries, chart, on_error=config.on_invalid_entry)

    vectors: List[MonthlyVector] = []
    excluded = []
    for company_id in sorted(balances):
        metadata = companies.get(company_id)
        if metadata is None:
            logger.warning(f"Company {company_id} has no metadata record; excluded")
            excluded.append(company_id)
            continue
        problem = _metadata_problem(metadata, regions, countries)
        if problem:
            if config.on_invalid_entry == 'raise':
                raise DataValidationError(f"Company {company_id}: {problem}")
            logger.warning(f"Company {company_id}: {problem}; excluded")
            excluded.append(company_id)
            continue
        vectors.extend(ledger_engine.vectorize_company(balances[company_id], metadata, ratio_defs, inflation))

    count = ledger_engine.write_vectors(vectors, os.path.join(out, 'vectors.jsonl'), config.config_hash)
    stored = 0
    if config.vector_store_url:
        from backend.models.vector_record import store_vectors
        stored = store_vectors(vectors, config.vector_store_url, config.config_hash)
        logger.info(f"Stored {stored} vectors in the SQL vector store")
    _write_json(os.path.join(out, 'vectorize_summary.json'), {
        'config_hash': config.config_hash,
        'companies': len(balances) - len(excluded),
        'excluded': excluded,
        'ratios': [d.name for d in ratio_defs],
        'vectors': count,
        'invalid_months': sum(1 for v in vectors if not v.valid),
    })
    return {'companies': len(balances) - len(excluded), 'vectors': count, 'stored': stored}


def _group_vectors(vectors: List[MonthlyVector]) -> Dict[str, List[MonthlyVector]]:
    grouped: Dict[str, List[MonthlyVector]] = {}
    for vector in vectors:
        grouped.setdefault(vector.company_id, []).append(vector)
    return grouped


def _run_imagize(config: PipelineConfig, out: str) -> Dict:
    vectors = ledger_engine.read_vectors(_require(config.vectors_path, 'imagize'))
    labels = load_labels(_require(config.labels_path, 'imagize'))
    variant = Variant(config.variant)
    image_dir = os.path.join(out, 'images')
    os.makedirs(image_dir, exist_ok=True)

    records = []
    excluded = []
    for company_id, company_vectors in sorted(_group_vectors(vectors).items()):
        if company_id not in labels:
            logger.warning(f"Company {company_id} has no label; excluded")
            excluded.append(company_id)
            continue
        anchor = max(v.period for v in company_vectors)
        try:
            window = ledger_engine.select_window(company_vectors, anchor)
        except InsufficientHistoryError as e:
            logger.warning(f"{e}; excluded")
            excluded.append(company_id)
            continue
        image = image_codec.compose_image(window, variant, labels[company_id])
        image_codec.write_png(image, os.path.join(image_dir, f"{image.stem}.png"), config.config_hash)
        pixel_file = f"images/{image.stem}.rgb"
        image_codec.write_pixel_file(image, os.path.join(out, pixel_file))
        records.append(dict(image.manifest_record(pixel_file), config_hash=config.config_hash))

    with open(os.path.join(out, 'image_manifest.jsonl'), 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + '\n')
    logger.info(f"Composed {len(records)} {variant.value} images, excluded {len(excluded)} companies")
    return {'images': len(records), 'excluded': len(excluded), 'variant': variant.value}


def load_image_set(manifest_paths: List[str], stage: str) -> Tuple[List[Dict], np.ndarray, np.ndarray]:
    """Manifest records, uint8 images (n, 24, 24, 3) and labels from one or more manifests"""
    records = []
    images = []
    for path in manifest_paths:
        base = os.path.dirname(_require(path, stage))
        for record in _read_jsonl(path):
            images.append(image_codec.read_pixel_file(os.path.join(base, record['pixel_file'])))
            records.append(record)
    if not records:
        raise DataValidationError("The image manifests list no images")
    variants = {record['variant'] for record in records}
    if len(variants) > 1:
        raise DataValidationError(f"Manifests mix image variants: {', '.join(sorted(variants))}")
    labels = np.array([int(record['label']) for record in records], dtype=np.int64)
    return records, np.stack(images), labels


def _division_mask(records: List[Dict], divisions: Optional[List[int]]) -> np.ndarray:
    if divisions is None:
        return np.ones(len(records), dtype=bool)
    return np.array([int(record['division']) in divisions for record in records], dtype=bool)


def plan_split(config: PipelineConfig, records: List[Dict]) -> Dict:
    """
    Seeded split of the images selected by the division filters.

    The split runs over every image whose division is in either filter;
    training and validation keep the train divisions, the test set keeps
    the test divisions.
    """
    train_mask = _division_mask(records, config.train_divisions)
    test_mask = _division_mask(records, config.test_divisions)
    pool = np.flatnonzero(train_mask | test_mask)
    plan = split_dataset(len(pool), config.split_seed)
    train = pool[plan.train_idx][train_mask[pool[plan.train_idx]]]
    val = pool[plan.val_idx][train_mask[pool[plan.val_idx]]]
    test = pool[plan.test_idx][test_mask[pool[plan.test_idx]]]
    if len(train) == 0 or len(val) == 0 or len(test) == 0:
        raise ContractError("Division filters leave an empty training, validation or test set")
    return SplitPlan(seed=plan.seed, train_idx=train, val_idx=val, test_idx=test).to_dict()


def _run_train(config: PipelineConfig, out: str) -> Dict:
    records, images, labels = load_image_set(config.manifest_paths, 'train')
    split = plan_split(config, records)
    model = CnnModel(hyperparameters=config.training)
    model, report = fit(model, images, labels, (split['train'], split['val']), config.training)
    model.save(os.path.join(out, 'model.json'), config.config_hash)
    split['config_hash'] = config.config_hash
    split['images'] = [f"{r['company_id']}_{r['anchor_period']}" for r in records]
    _write_json(os.path.join(out, 'split.json'), split)
    _write_json(os.path.join(out, 'train_report.json'), dict(report.to_dict(), config_hash=config.config_hash))
    return {'images': len(records), 'best_epoch': report.best_epoch, 'stopped_epoch': report.stopped_epoch}


def _run_evaluate(config: PipelineConfig, out: str) -> Dict:
    model = CnnModel.load(_require(config.model_path, 'evaluate'))
    split = _read_json(_require(config.split_path, 'evaluate'))
    records, images, labels = load_image_set(config.manifest_paths, 'evaluate')
    keys = [f"{r['company_id']}_{r['anchor_period']}" for r in records]
    if keys != split.get('images'):
        raise DataValidationError("The image manifests changed since the model was trained; rerun 'train'")

    plan = SplitPlan.from_dict(split)
    test = plan.test_idx
    probabilities = np.concatenate([
        model.forward(normalize_images(images[test[start:start + 256]]))
        for start in range(0, len(test), 256)
    ])
    predictions = (probabilities >= Config.PREDICTION_THRESHOLD).astype(np.int64)
    metrics = compute_metrics(confusion(predictions, labels[test]), bce_loss(probabilities, labels[test]))
    report = metrics_report(metrics, plan, config.config_hash, extra={
        'variant': config.variant,
        'train_divisions': config.train_divisions,
        'test_divisions': config.test_divisions,
    })
    _write_json(os.path.join(out, 'metrics.json'), report)
    frame = pd.DataFrame({
        'company_id': [records[i]['company_id'] for i in test],
        'anchor_period': [records[i]['anchor_period'] for i in test],
        'division': [records[i]['division'] for i in test],
        'probability': np.round(probabilities, 8),
        'prediction': predictions,
        'label': labels[test],
    })
    with open(os.path.join(out, 'predictions.csv'), 'w', encoding='utf-8', newline='') as f:
        f.write(f"# config_hash: {config.config_hash}\n")
        frame.to_csv(f, index=False, lineterminator='\n')
    logger.info(f"Test accuracy {metrics.accuracy:.2%}, loss {metrics.loss:.4f}, F1 {metrics.f1:.2%}")
    return {'accuracy': metrics.accuracy, 'loss': metrics.loss, 'f1': metrics.f1}


def representation_correlation(vectors: List[MonthlyVector], ratio_names: List[str]) -> Dict:
    """
    Mean absolute pairwise correlation within and across the ratio,
    vertical and horizontal representations of the valid months.
    """
    valid = [v for v in vectors if v.valid]
    if len(valid) < 2:
        raise DataValidationError("Need at least two valid months for a correlation report")
    codes = ledger_engine.VECTOR_ACCOUNT_CODES
    groups = {
        'ratios': [f"ratio:{name}" for name in ratio_names],
        'vertical': [f"vertical:{code}" for code in codes],
        'horizontal': [f"horizontal:{code}" for code in codes],
    }
    frame = pd.DataFrame(
        [[np.nan if r is None else r for r in v.ratios] + list(v.vertical) + list(v.horizontal) for v in valid],
        columns=groups['ratios'] + groups['vertical'] + groups['horizontal'],
    )
    corr = frame.corr().abs()

    def mean_block(rows: List[str], cols: List[str], same: bool) -> Optional[float]:
        block = corr.loc[rows, cols].to_numpy()
        if same:
            block = block[~np.eye(len(rows), dtype=bool)]
        value = np.nanmean(block) if np.isfinite(block).any() else np.nan
        return None if np.isnan(value) else round(float(value), 6)

    names = list(groups)
    return {
        'months': len(valid),
        'within': {name: mean_block(groups[name], groups[name], True) for name in names},
        'across': {
            f"{a}/{b}": mean_block(groups[a], groups[b], False)
            for i, a in enumerate(names) for b in names[i + 1:]
        },
    }


def _run_report(config: PipelineConfig, out: str) -> Dict:
    report = _read_json(_require(config.metrics_path, 'report'))
    vectors = ledger_engine.read_vectors(_require(config.vectors_path, 'report'))
    summary = _read_json(_require(os.path.join(config.stage_dir('vectorize'), 'vectorize_summary.json'), 'report'))

    _write_json(os.path.join(out, 'metrics_report.json'), report)
    correlation = representation_correlation(vectors, summary['ratios'])
    _write_json(os.path.join(out, 'correlation.json'), dict(correlation, config_hash=config.config_hash))

    text = format_summary(report)
    text += (
        "\nRepresentation correlation (mean |r|)\n"
        + ''.join(f"  within {name}: {value}\n" for name, value in correlation['within'].items())
        + ''.join(f"  {pair}: {value}\n" for pair, value in correlation['across'].items())
        + f"\nReference F1 recomputation, max deviation: {f1_consistency():.4f}\n"
        + f"config_hash: {config.config_hash}\n"
    )
    with open(os.path.join(out, 'summary.txt'), 'w', encoding='utf-8') as f:
        f.write(text)
    return {'summary': text}


_STAGE_RUNNERS: Dict[str, Callable[[PipelineConfig, str], Dict]] = {
    'synth': _run_synth,
    'normalize': _run_normalize,
    'vectorize': _run_vectorize,
    'imagize': _run_imagize,
    'train': _run_train,
    'evaluate': _run_evaluate,
    'report': _run_report,
}


class PipelineRunner:
    """Runs stages for one config and remembers what each returned"""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.results: Dict[str, Dict] = {}

    def run_stage(self, stage: str) -> Dict:
        """
        Run one stage; returns {'success': True, 'stage', 'output_dir', ...}.

        Errors propagate after the staging directory is removed.
        """
        if stage not in STAGES:
            raise ContractError(f"Unknown stage '{stage}', expected one of: {', '.join(STAGES)}")
        config = self.config
        final_dir = config.stage_dir(stage)
        staging_dir = os.path.join(config.output_path, f'.staging-{stage}')
        shutil.rmtree(staging_dir, ignore_errors=True)
        os.makedirs(staging_dir)

        logger.info(f"Stage '{stage}' starting (config {config.config_hash[:12]})")
        try:
            details = _STAGE_RUNNERS[stage](config, staging_dir)
        except Exception:
            shutil.rmtree(staging_dir, ignore_errors=True)
            logger.error(f"Stage '{stage}' failed; partial outputs removed")
            raise
        shutil.rmtree(final_dir, ignore_errors=True)
        os.replace(staging_dir, final_dir)
        logger.info(f"Stage '{stage}' finished: {final_dir}")
        result = dict(details, success=True, stage=stage, output_dir=final_dir)
        self.results[stage] = result
        return result

    def run_all(self, stages: Tuple[str, ...] = STAGES) -> List[Dict]:
        return [self.run_stage(stage) for stage in stages]


def run_stage(stage: str, config: PipelineConfig) -> Dict:
    return PipelineRunner(config).run_stage(stage)


def run_all(config: PipelineConfig, stages: Tuple[str, ...] = STAGES) -> List[Dict]:
    return PipelineRunner(config).run_all(stages)
