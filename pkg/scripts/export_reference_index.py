#!/usr/bin/env python3
"""
Export the default reference index (standard chart descriptions plus
shipped aliases) as JSON Lines, optionally with the embedding vectors
"""

import argparse
import os
import sys

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from backend.services.chart_normalizer import load_default_reference_index, load_standard_chart, save_reference_index


def export_index(path, chart_path=None, include_vectors=False):
    chart = load_standard_chart(chart_path)
    index = load_default_reference_index(chart)
    count = save_reference_index(index, path, include_vectors=include_vectors)
    print(f"✅ Wrote {count} reference descriptions for {len(index.target_codes())} accounts to {path}")
    return count


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description='Export the reference index used by the chart matcher')
    parser.add_argument('output', help='Destination .jsonl file')
    parser.add_argument('--chart', help='Standard chart JSON (default: shipped chart)')
    parser.add_argument('--vectors', action='store_true', help='Include embedding vectors')
    args = parser.parse_args()
    export_index(args.output, args.chart, args.vectors)
