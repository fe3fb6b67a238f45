#!/usr/bin/env python3
"""
Score the chart matcher on the seeded perturbation corpus
"""

import argparse
import os
import sys

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from config import Config
from backend.services.chart_normalizer import (
    generate_variant_corpus,
    load_default_reference_index,
    load_standard_chart,
    match_descriptions,
    validate_matcher,
)


def run(seed=0, variants=2, show_misses=10):
    print("🔍 Validating chart matcher")
    print("=" * 50)
    chart = load_standard_chart()
    index = load_default_reference_index(chart)
    corpus = generate_variant_corpus(chart, index, seed=seed, variants_per_account=variants)
    accuracy = validate_matcher(corpus, index, chart)
    print(f"📚 Index: {len(index)} descriptions, corpus: {len(corpus)} variants (seed {seed})")
    print(f"🎯 Accuracy: {accuracy:.2%} (threshold {Config.MATCHER_ACCURACY_THRESHOLD:.1%})")

    if show_misses:
        matches = match_descriptions([text for text, _ in corpus], index)
        misses = [(text, expected, match) for (text, expected), match in zip(corpus, matches)
                  if match.target_code != expected]
        for text, expected, match in misses[:show_misses]:
            print(f"   ✗ '{text}' expected {expected}, got {match.target_code} ({match.similarity:.3f})")

    passed = accuracy >= Config.MATCHER_ACCURACY_THRESHOLD
    print("✅ Above threshold" if passed else "❌ Below threshold")
    return passed


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description='Validate the chart matcher')
    parser.add_argument('--seed', type=int, default=0, help='Corpus seed (default: 0)')
    parser.add_argument('--variants', type=int, default=2, help='Variants per account (default: 2)')
    parser.add_argument('--misses', type=int, default=10, help='Misses to list (default: 10)')
    args = parser.parse_args()
    sys.exit(0 if run(args.seed, args.variants, args.misses) else 1)
