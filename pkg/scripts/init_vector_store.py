#!/usr/bin/env python3
"""
Create the monthly vector table and optionally load a vectors.jsonl file into it
"""

import argparse
import os
import sys

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from backend.db import DEFAULT_STORE_URL, Base, make_engine
from backend.models.vector_record import store_vectors
from backend.services.ledger_engine import read_vectors


def create_tables(url):
    engine = make_engine(url)
    Base.metadata.create_all(bind=engine)
    engine.dispose()
    print("✅ Tables created (if not existing)")


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description='Initialize the SQL vector store')
    parser.add_argument('--url', default=DEFAULT_STORE_URL, help='SQLAlchemy URL (default: VECTOR_STORE_URL)')
    parser.add_argument('--load', help='vectors.jsonl file to import')
    args = parser.parse_args()

    print("🚀 Initializing vector store...")
    print(f"Using VECTOR_STORE_URL={args.url}")
    create_tables(args.url)
    if args.load:
        count = store_vectors(read_vectors(args.load), args.url)
        print(f"✅ Stored {count} monthly vectors from {args.load}")
    print("🎉 Done.")
