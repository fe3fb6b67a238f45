"""
Chart of accounts normalization

Maps an arbitrary 4-level chart onto the standard 208-account chart. Every
account is turned into its full description (ancestor descriptions joined
from level 1 down), embedded as a hashed character-trigram vector, and
matched against a reference index of full descriptions by cosine similarity.
"""

import json
import logging
import re
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.feature_extraction.text import HashingVectorizer

from config import Config
from backend.models.chart import (
    AccountMatch,
    ChartAccount,
    ReferenceEntry,
    ReferenceIndex,
    StandardChart,
    code_level,
)
from backend.utils.errors import (
    ChartStructureError,
    ContractError,
    InvalidInputError,
    UnknownAccountError,
)

logger = logging.getLogger(__name__)

_LEADING_NUMBERS = re.compile(r'^(?:\d[\d.]*\s+)+')
_WHITESPACE = re.compile(r'\s+')
_TIE_TOLERANCE = 1e-12
_DUPLICATE_TOLERANCE = 1e-9

# Substitutions used by the perturbation corpus; keys are matched lowercase
SYNONYMS = {
    'asset': 'assets',
    'liabilities': 'liability',
    'current': 'short-term',
    'customers': 'clients',
    'suppliers': 'vendors',
    'stock': 'inventory',
    'salaries': 'wages',
    'loans': 'borrowings',
    'financing': 'funding',
    'revenue': 'income',
    'expenses': 'costs',
    'payable': 'to pay',
    'accumulated': 'accrued',
    'provision': 'allowance',
    'bank': 'banking',
    'fixed': 'tangible',
    'taxes': 'tax',
    'recoverable': 'refundable',
    'receivables': 'credits',
    'equipment': 'machinery',
    'contingencies': 'claims',
    'judicial': 'legal',
    'reserve': 'fund',
    'share': 'social',
    'interest': 'interests',
    'goods': 'merchandise',
}

PERTURBATIONS = ('synonym', 'swap', 'dropout')


def normalize_text(text: str) -> str:
    """Lowercase and collapse whitespace runs"""
    return _WHITESPACE.sub(' ', str(text or '')).strip().lower()


def strip_leading_numbers(description: str) -> str:
    """'001 Customers' -> 'Customers'"""
    stripped = _LEADING_NUMBERS.sub('', str(description).strip())
    return stripped or str(description).strip()


def _ancestor_parts(account: ChartAccount, by_code: Dict[str, ChartAccount]) -> List[str]:
    parts = [strip_leading_numbers(account.description)]
    seen = {account.code}
    current = account
    while current.parent:
        parent = by_code.get(str(current.parent))
        if parent is None:
            raise ChartStructureError(
                f"Account {account.code}: ancestor {current.parent} of {current.code} is missing from the chart")
        if parent.code in seen:
            raise ChartStructureError(f"Account {account.code}: parent chain loops at {parent.code}")
        if parent.level != current.level - 1:
            raise ChartStructureError(
                f"Account {current.code} at level {current.level} has parent {parent.code} at level {parent.level}")
        seen.add(parent.code)
        parts.append(strip_leading_numbers(parent.description))
        current = parent
    if current.level != 1:
        raise ChartStructureError(
            f"Account {account.code}: ancestor chain stops at {current.code} (level {current.level})")
    parts.reverse()
    return parts


def concat_full_description(account: ChartAccount, chart: Iterable[ChartAccount]) -> str:
    """Join ancestor descriptions from level 1 down to `account` with single spaces"""
    by_code = _index_chart(chart)
    return ' '.join(_ancestor_parts(account, by_code))


def _index_chart(chart: Iterable[ChartAccount]) -> Dict[str, ChartAccount]:
    if isinstance(chart, dict):
        return chart
    return {str(account.code): account for account in chart}


class HashedTrigramEmbedder:
    """
    Hashed character-trigram term frequencies with L2 normalization.

    Uses scikit-learn's HashingVectorizer (MurmurHash3, seed 0), so vectors
    are stable across runs and platforms and no vocabulary has to be fitted.
    Trigrams run across word boundaries, so reordering the levels of a
    description changes its vector. The text is padded with one space on
    each side, which gives even one-letter descriptions a non-zero vector.
    """

    def __init__(self, dimension: int = Config.EMBEDDING_DIMENSION, ngram_size: int = Config.NGRAM_SIZE):
        self.dimension = dimension
        self.ngram_size = ngram_size
        self._vectorizer = HashingVectorizer(
            analyzer='char',
            ngram_range=(ngram_size, ngram_size),
            n_features=dimension,
            alternate_sign=False,
            norm='l2',
            lowercase=False,
            dtype=np.float64,
        )

    def __call__(self, descriptions: Sequence[str]) -> np.ndarray:
        texts = [f" {normalize_text(description)} " for description in descriptions]
        for text in texts:
            if not text.strip():
                raise InvalidInputError("Cannot embed an empty description")
        vectors = self._vectorizer.transform(texts).toarray()
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0):
            raise InvalidInputError("Description produced no character n-grams")
        return vectors


class LookupEmbedder:
    """Serves precomputed vectors for known descriptions (external encoders)"""

    def __init__(self, vectors: Dict[str, np.ndarray], dimension: int):
        self.dimension = dimension
        self._vectors = {normalize_text(text): vector for text, vector in vectors.items()}

    def __call__(self, descriptions: Sequence[str]) -> np.ndarray:
        rows = []
        for description in descriptions:
            key = normalize_text(description)
            if not key:
                raise InvalidInputError("Cannot embed an empty description")
            if key not in self._vectors:
                raise InvalidInputError(
                    f"No precomputed vector for '{description}'; supply the encoder that built the index")
            rows.append(self._vectors[key])
        return np.vstack(rows)


_default_embedder: Optional[HashedTrigramEmbedder] = None


def default_embedder() -> HashedTrigramEmbedder:
    global _default_embedder
    if _default_embedder is None:
        _default_embedder = HashedTrigramEmbedder()
    return _default_embedder


def embed(description: str, embedder: Optional[Callable] = None) -> np.ndarray:
    """Unit-norm embedding of one description"""
    embedder = embedder or default_embedder()
    return embedder([description])[0]


def load_standard_chart(path: str = None) -> StandardChart:
    path = path or Config.STANDARD_CHART_PATH
    with open(path, 'r', encoding='utf-8') as f:
        records = json.load(f)
    chart = StandardChart.from_records(records, level_counts=Config.STANDARD_LEVEL_COUNTS)
    logger.debug(f"Loaded standard chart with {len(chart)} accounts from {path}")
    return chart


def _read_jsonl(path: str) -> List[Dict]:
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ChartStructureError(f"{path}:{number}: invalid JSON ({e.msg})")
    return records


def _dedupe_entries(pairs: Iterable[Tuple[str, int]]) -> List[ReferenceEntry]:
    entries: List[ReferenceEntry] = []
    targets: Dict[str, int] = {}
    for description, target_code in pairs:
        description = _WHITESPACE.sub(' ', str(description)).strip()
        key = normalize_text(description)
        if not key:
            raise ChartStructureError("Reference description is empty")
        if key in targets:
            if targets[key] != target_code:
                raise ChartStructureError(
                    f"Reference description '{description}' maps to both {targets[key]} and {target_code}")
            continue
        targets[key] = target_code
        entries.append(ReferenceEntry(description=description, target_code=int(target_code)))
    return entries


def build_reference_index(chart: StandardChart, aliases: Iterable[Dict] = (),
                          embedder: Optional[Callable] = None) -> ReferenceIndex:
    """Index the chart's own full descriptions plus alias descriptions"""
    embedder = embedder or default_embedder()
    accounts = chart.as_chart_list()
    by_code = _index_chart(accounts)
    pairs = [(concat_full_description(account, by_code), int(account.code)) for account in accounts]
    for alias in aliases:
        target = int(alias['target_code'])
        if target not in chart:
            raise UnknownAccountError(target, f"Reference alias '{alias['description']}' targets unknown code {target}")
        pairs.append((alias['description'], target))

    entries = _dedupe_entries(pairs)
    vectors = embedder([entry.description for entry in entries])
    logger.info(f"Built reference index: {len(entries)} descriptions for {len({e.target_code for e in entries})} accounts")
    return ReferenceIndex(entries=entries, vectors=np.ascontiguousarray(vectors, dtype=np.float64),
                          dimension=vectors.shape[1], embedder=embedder)


def load_reference_index(path: str, chart: Optional[StandardChart] = None,
                         embedder: Optional[Callable] = None) -> ReferenceIndex:
    """
    Load a JSON Lines index.

    Lines without a `vector` are embedded at load time. When every line
    carries a vector the stored vectors are used as-is (after a unit-norm
    check), and queries are embedded with `embedder` or, failing that, by
    looking the description up among the stored ones.
    """
    records = _read_jsonl(path)
    if not records:
        raise ChartStructureError(f"Reference index {path} is empty")
    if chart is not None:
        for record in records:
            if int(record['target_code']) not in chart:
                raise UnknownAccountError(record['target_code'])

    with_vectors = ['vector' in record for record in records]
    if any(with_vectors) and not all(with_vectors):
        raise ChartStructureError(f"Reference index {path} mixes lines with and without vectors")

    if not all(with_vectors):
        entries = _dedupe_entries((r['description'], int(r['target_code'])) for r in records)
        embedder = embedder or default_embedder()
        vectors = embedder([entry.description for entry in entries])
        return ReferenceIndex(entries=entries, vectors=np.ascontiguousarray(vectors, dtype=np.float64),
                              dimension=vectors.shape[1], embedder=embedder)

    entries = _dedupe_entries((r['description'], int(r['target_code'])) for r in records)
    stored = {normalize_text(r['description']): np.asarray(r['vector'], dtype=np.float64) for r in records}
    vectors = np.vstack([stored[normalize_text(entry.description)] for entry in entries])
    norms = np.linalg.norm(vectors, axis=1)
    if vectors.ndim != 2 or np.any(np.abs(norms - 1.0) > 1e-6):
        raise ChartStructureError(f"Reference index {path}: vectors must share one dimension and have unit norm")
    vectors = vectors / norms[:, None]
    dimension = vectors.shape[1]
    if embedder is None:
        embedder = LookupEmbedder({entry.description: row for entry, row in zip(entries, vectors)}, dimension)
    return ReferenceIndex(entries=entries, vectors=np.ascontiguousarray(vectors), dimension=dimension,
                          embedder=embedder)


def load_default_reference_index(chart: StandardChart = None) -> ReferenceIndex:
    chart = chart or load_standard_chart()
    return build_reference_index(chart, _read_jsonl(Config.REFERENCE_ALIASES_PATH))


def save_reference_index(index: ReferenceIndex, path: str, include_vectors: bool = False) -> int:
    with open(path, 'w', encoding='utf-8') as f:
        for entry, vector in zip(index.entries, index.vectors):
            record = {'description': entry.description, 'target_code': entry.target_code}
            if include_vectors:
                record['vector'] = [float(v) for v in vector]
            f.write(json.dumps(record) + '\n')
    return len(index.entries)


def _best_match(similarities: np.ndarray, index: ReferenceIndex) -> Tuple[int, float]:
    best = float(np.max(similarities))
    candidates = np.flatnonzero(similarities >= best - _TIE_TOLERANCE)
    chosen = min(candidates, key=lambda i: (index.entries[i].target_code, index.entries[i].description))
    return int(chosen), float(similarities[chosen])


def match_descriptions(descriptions: Sequence[str], index: ReferenceIndex,
                       original_codes: Optional[Sequence[str]] = None,
                       similarity_floor: Optional[float] = None) -> List[AccountMatch]:
    """Nearest reference description for each query, by cosine similarity"""
    if len(index) == 0:
        raise ContractError("Reference index is empty")
    if not descriptions:
        return []
    floor = Config.SIMILARITY_FLOOR if similarity_floor is None else similarity_floor
    embedder = index.embedder or default_embedder()
    queries = embedder(list(descriptions))
    if queries.shape[1] != index.dimension:
        raise ContractError(
            f"Query embedding dimension {queries.shape[1]} differs from index dimension {index.dimension}")
    similarities = queries @ index.vectors.T
    codes = original_codes if original_codes is not None else [''] * len(descriptions)

    matches = []
    for row, original_code in zip(similarities, codes):
        position, similarity = _best_match(row, index)
        similarity = float(np.clip(similarity, -1.0, 1.0))
        entry = index.entries[position]
        matches.append(AccountMatch(
            original_code=str(original_code),
            target_code=entry.target_code,
            similarity=similarity,
            matched_description=entry.description,
            low_confidence=similarity < floor,
        ))
    return matches


def match_account(original: ChartAccount, chart: Iterable[ChartAccount], index: ReferenceIndex,
                  similarity_floor: Optional[float] = None) -> AccountMatch:
    description = concat_full_description(original, chart)
    return match_descriptions([description], index, [original.code], similarity_floor)[0]


def validate_matcher(labeled: Sequence[Tuple[str, int]], index: ReferenceIndex,
                     chart: Optional[StandardChart] = None) -> float:
    """Fraction of labeled descriptions whose match hits the expected code"""
    if not labeled:
        raise ContractError("validate_matcher needs at least one labeled description")
    if chart is not None:
        for _, expected in labeled:
            if int(expected) not in chart:
                raise UnknownAccountError(expected)
    matches = match_descriptions([description for description, _ in labeled], index)
    hits = sum(1 for match, (_, expected) in zip(matches, labeled) if match.target_code == int(expected))
    return hits / len(labeled)


def _apply_synonym(parts: List[List[str]], rng: np.random.Generator) -> Optional[List[List[str]]]:
    slots = [(i, j) for i, words in enumerate(parts) for j, word in enumerate(words) if word.lower() in SYNONYMS]
    if not slots:
        return None
    i, j = slots[rng.integers(len(slots))]
    word = parts[i][j]
    replacement = SYNONYMS[word.lower()]
    if word[:1].isupper():
        replacement = replacement[:1].upper() + replacement[1:]
    perturbed = [list(words) for words in parts]
    perturbed[i][j] = replacement
    return perturbed


def _apply_swap(parts: List[List[str]], rng: np.random.Generator) -> Optional[List[List[str]]]:
    ancestors = len(parts) - 1
    if ancestors < 2:
        return None
    i = int(rng.integers(ancestors - 1))
    perturbed = [list(words) for words in parts]
    perturbed[i], perturbed[i + 1] = perturbed[i + 1], perturbed[i]
    return perturbed


def _apply_dropout(parts: List[List[str]], rng: np.random.Generator) -> Optional[List[List[str]]]:
    slots = [(i, j) for i, words in enumerate(parts[:-1]) for j in range(len(words))]
    if len(slots) < 2:
        return None
    i, j = slots[rng.integers(len(slots))]
    perturbed = [list(words) for words in parts]
    del perturbed[i][j]
    return [words for words in perturbed if words]


_PERTURBERS = {'synonym': _apply_synonym, 'swap': _apply_swap, 'dropout': _apply_dropout}


def generate_variant_corpus(chart: StandardChart, index: Optional[ReferenceIndex] = None,
                            seed: int = 0, variants_per_account: int = 2) -> List[Tuple[str, int]]:
    """
    Held-out (description, expected_code) pairs made by perturbing the chart's
    full descriptions: one synonym substitution, one swap of adjacent ancestor
    levels, or one dropped ancestor word (the account's own words are kept).
    Variants equal to an indexed description, or embedded onto the same
    vector as one, are skipped.
    """
    rng = np.random.default_rng(seed)
    accounts = chart.as_chart_list()
    by_code = _index_chart(accounts)
    known = {normalize_text(entry.description) for entry in index.entries} if index is not None else set()
    embedder = (index.embedder if index is not None else None) or default_embedder()

    def duplicates_index(text: str) -> bool:
        if index is None:
            return False
        try:
            vector = embedder([text])[0]
        except InvalidInputError:
            # lookup-only indexes cannot embed unseen text
            return False
        return float(np.max(index.vectors @ vector)) >= 1.0 - _DUPLICATE_TOLERANCE

    corpus: List[Tuple[str, int]] = []
    for account in accounts:
        parts = [part.split() for part in _ancestor_parts(account, by_code)]
        known.add(normalize_text(' '.join(' '.join(words) for words in parts)))
        produced = set()
        for kind in rng.permutation(PERTURBATIONS):
            if len(produced) >= variants_per_account:
                break
            perturbed = _PERTURBERS[kind](parts, rng)
            if perturbed is None:
                continue
            text = ' '.join(' '.join(words) for words in perturbed)
            key = normalize_text(text)
            if key in known or key in produced or duplicates_index(text):
                continue
            produced.add(key)
            corpus.append((text, int(account.code)))
    return corpus


def load_original_chart(path: str) -> List[ChartAccount]:
    """Read a CSV chart with columns code,level,description,parent"""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {'code', 'level', 'description', 'parent'} - set(frame.columns)
    if missing:
        raise ChartStructureError(f"Chart file {path} lacks columns: {', '.join(sorted(missing))}")
    accounts = []
    for row in frame.itertuples(index=False):
        code = row.code.strip()
        try:
            level = int(row.level)
        except ValueError:
            raise ChartStructureError(f"Account {code}: level '{row.level}' is not an integer")
        if level != code_level(code):
            raise ChartStructureError(f"Account {code}: level {level} disagrees with its code ({code_level(code)} levels)")
        accounts.append(ChartAccount(code=code, level=level, description=row.description.strip(),
                                     parent=row.parent.strip() or None))
    validate_chart(accounts)
    return accounts


def validate_chart(accounts: Sequence[ChartAccount]) -> None:
    by_code: Dict[str, ChartAccount] = {}
    for account in accounts:
        if account.code in by_code:
            raise ChartStructureError(f"Duplicate account code {account.code}")
        by_code[account.code] = account
    for account in accounts:
        if account.level == 1:
            continue
        parent = by_code.get(str(account.parent))
        if parent is None:
            raise ChartStructureError(f"Account {account.code}: parent {account.parent} is missing")
        if parent.level != account.level - 1:
            raise ChartStructureError(
                f"Account {account.code}: parent {parent.code} is at level {parent.level}, expected {account.level - 1}")


def normalize_chart(accounts: Sequence[ChartAccount], index: ReferenceIndex,
                    similarity_floor: Optional[float] = None) -> List[AccountMatch]:
    """Match every account of an original chart onto the standard chart"""
    by_code = _index_chart(accounts)
    descriptions = [concat_full_description(account, by_code) for account in accounts]
    matches = match_descriptions(descriptions, index, [a.code for a in accounts], similarity_floor)
    for match, description in zip(matches, descriptions):
        if match.low_confidence:
            logger.warning(f"Low-confidence match {match.original_code} '{description}' -> "
                           f"{match.target_code} (similarity {match.similarity:.3f})")
    return matches


def write_match_table(matches: Sequence[AccountMatch], path: str, config_hash: Optional[str] = None) -> None:
    frame = pd.DataFrame({
        'original_code': [m.original_code for m in matches],
        'target_code': [m.target_code for m in matches],
        'similarity': [round(m.similarity, 6) for m in matches],
        'low_confidence': [m.low_confidence for m in matches],
    })
    with open(path, 'w', encoding='utf-8', newline='') as f:
        if config_hash:
            f.write(f"# config_hash: {config_hash}\n")
        frame.to_csv(f, index=False, float_format='%.6f')


def read_match_table(path: str) -> Dict[str, int]:
    """original_code -> target_code"""
    frame = pd.read_csv(path, dtype={'original_code': str}, comment='#')
    return {str(code): int(target) for code, target in zip(frame['original_code'], frame['target_code'])}
