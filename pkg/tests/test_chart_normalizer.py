import numpy as np
import pytest

from config import Config
from backend.models.chart import ChartAccount, ReferenceIndex
from backend.services.chart_normalizer import (
    HashedTrigramEmbedder,
    concat_full_description,
    embed,
    generate_variant_corpus,
    load_original_chart,
    load_reference_index,
    match_account,
    match_descriptions,
    normalize_chart,
    read_match_table,
    save_reference_index,
    strip_leading_numbers,
    validate_matcher,
    write_match_table,
)
from backend.utils.errors import ChartStructureError, ContractError, InvalidInputError

SAMPLE_CHART = Config.STANDARD_CHART_PATH.replace('standard_chart.json', 'sample_original_chart.csv')


def small_chart():
    return [
        ChartAccount('1', 1, 'Asset'),
        ChartAccount('1.1', 2, 'Current assets', '1'),
        ChartAccount('1.1.2', 3, 'Accounts receivable', '1.1'),
        ChartAccount('1.1.2.001', 4, '001 Customers', '1.1.2'),
    ]


class TestDescriptions:
    def test_strip_leading_numbers(self):
        assert strip_leading_numbers('001 Customers') == 'Customers'
        assert strip_leading_numbers('1.2 03 Banks') == 'Banks'
        assert strip_leading_numbers('Banks') == 'Banks'

    def test_concat_full_description(self):
        accounts = small_chart()
        assert concat_full_description(accounts[-1], accounts) == \
            'Asset Current assets Accounts receivable Customers'

    def test_level_one_is_its_own_description(self):
        accounts = small_chart()
        assert concat_full_description(accounts[0], accounts) == 'Asset'

    def test_missing_ancestor(self):
        accounts = small_chart()
        del accounts[1]
        with pytest.raises(ChartStructureError):
            concat_full_description(accounts[-1], accounts)


class TestEmbedding:
    def test_unit_norm(self):
        vector = embed('Asset Current assets Customers')
        assert vector.shape == (Config.EMBEDDING_DIMENSION,)
        assert np.linalg.norm(vector) == pytest.approx(1.0)

    def test_case_and_whitespace_insensitive(self):
        assert np.array_equal(embed('Current  Assets'), embed('current assets'))

    def test_short_description_is_embeddable(self):
        assert np.linalg.norm(embed('a')) == pytest.approx(1.0)

    def test_empty_description(self):
        with pytest.raises(InvalidInputError):
            embed('   ')

    def test_deterministic_across_instances(self):
        text = ['Liabilities Current liabilities Suppliers']
        assert np.array_equal(HashedTrigramEmbedder()(text), HashedTrigramEmbedder()(text))

    def test_level_order_changes_vector(self):
        assert embed('Asset Current assets Cash') @ embed('Current assets Asset Cash') < 1 - 1e-6

    def test_siblings_are_closer_than_other_branches(self):
        customers = embed('Asset Current assets Accounts receivable Customers')
        duplicates = embed('Asset Current assets Accounts receivable Duplicates')
        investments = embed('Asset Non-current assets Investments')
        assert customers @ duplicates > customers @ investments


class TestMatching:
    def test_index_covers_every_account(self, chart, reference_index):
        assert set(reference_index.target_codes()) == set(chart.codes())

    def test_exact_description_matches_itself(self, reference_index):
        match = match_descriptions(['Asset Current assets Customers'], reference_index)[0]
        assert match.target_code == 11200
        assert match.similarity == pytest.approx(1.0)
        assert not match.low_confidence

    def test_alias_match(self, reference_index):
        match = match_descriptions(['Asset Current assets Receivables from clients'], reference_index)[0]
        assert match.target_code == 11200

    def test_unrelated_text_is_low_confidence(self, reference_index):
        match = match_descriptions(['zzqx vvkj'], reference_index)[0]
        assert match.low_confidence

    def test_match_account(self, reference_index):
        accounts = small_chart()
        match = match_account(accounts[-1], accounts, reference_index)
        assert match.original_code == '1.1.2.001'
        assert match.target_code == 11200
        assert match.similarity == pytest.approx(1.0)

    def test_validate_matcher_requires_input(self, reference_index):
        with pytest.raises(ContractError):
            validate_matcher([], reference_index)

    def test_variant_corpus_is_seeded(self, chart, reference_index):
        first = generate_variant_corpus(chart, reference_index, seed=3)
        assert first == generate_variant_corpus(chart, reference_index, seed=3)
        assert first != generate_variant_corpus(chart, reference_index, seed=4)

    def test_variant_corpus_is_held_out(self, chart, reference_index):
        from backend.services.chart_normalizer import normalize_text
        indexed = {normalize_text(entry.description) for entry in reference_index.entries}
        corpus = generate_variant_corpus(chart, reference_index, seed=0)
        assert corpus
        assert not any(normalize_text(text) in indexed for text, _ in corpus)

    def test_variant_corpus_has_no_indexed_vectors(self, chart, reference_index):
        corpus = generate_variant_corpus(chart, reference_index, seed=0)
        vectors = HashedTrigramEmbedder()([text for text, _ in corpus])
        assert (vectors @ reference_index.vectors.T).max() < 1 - 1e-9

    def test_index_order_does_not_change_matches(self, chart, reference_index):
        order = np.random.default_rng(2).permutation(len(reference_index))
        shuffled = ReferenceIndex(
            entries=[reference_index.entries[i] for i in order],
            vectors=reference_index.vectors[order].copy(),
            dimension=reference_index.dimension,
            embedder=reference_index.embedder,
        )
        texts = [text for text, _ in generate_variant_corpus(chart, reference_index, seed=1)]
        original = match_descriptions(texts, reference_index)
        permuted = match_descriptions(texts, shuffled)
        assert [m.target_code for m in permuted] == [m.target_code for m in original]
        assert [m.similarity for m in permuted] == pytest.approx([m.similarity for m in original])

    def test_matcher_accuracy_threshold(self, chart, reference_index):
        corpus = generate_variant_corpus(chart, reference_index, seed=0)
        assert validate_matcher(corpus, reference_index, chart) >= Config.MATCHER_ACCURACY_THRESHOLD


class TestChartFiles:
    def test_normalize_sample_chart(self, reference_index, tmp_path):
        accounts = load_original_chart(SAMPLE_CHART)
        matches = normalize_chart(accounts, reference_index)
        assert len(matches) == len(accounts)

        path = tmp_path / 'match_table.csv'
        write_match_table(matches, str(path), config_hash='abc')
        assert path.read_text().startswith('# config_hash: abc\n')
        table = read_match_table(str(path))
        assert table == {m.original_code: m.target_code for m in matches}
        assert table['1'] == 10000

    def test_level_disagreeing_with_code(self, tmp_path):
        path = tmp_path / 'chart.csv'
        path.write_text('code,level,description,parent\n1,1,Asset,\n1.1,3,Current assets,1\n')
        with pytest.raises(ChartStructureError):
            load_original_chart(str(path))

    def test_orphan_account(self, tmp_path):
        path = tmp_path / 'chart.csv'
        path.write_text('code,level,description,parent\n1,1,Asset,\n1.1.1,3,Cash,1.1\n')
        with pytest.raises(ChartStructureError):
            load_original_chart(str(path))

    def test_index_round_trip_with_vectors(self, chart, reference_index, tmp_path):
        path = tmp_path / 'index.jsonl'
        count = save_reference_index(reference_index, str(path), include_vectors=True)
        loaded = load_reference_index(str(path), chart)
        assert count == len(loaded) == len(reference_index)
        assert np.allclose(loaded.vectors, reference_index.vectors)
        match = match_descriptions(['Asset Current assets Customers'], loaded)[0]
        assert match.target_code == 11200
