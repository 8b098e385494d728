"""
Script to initialize the experiment ledger tables.
Uses RBM_DATABASE_URL, or the SQLite ledger of the given output directory.
"""
from config import database_url
from database import init_db
from pathlib import Path
import sys

if __name__ == "__main__":
    output_dir = sys.argv[1] if len(sys.argv) > 1 else "results"
    try:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        url = database_url(output_dir)
        print(f"Initializing ledger tables at {url}...")
        init_db(url, verbose=True)
        print("✓ Ledger tables initialized successfully!")
        sys.exit(0)
    except Exception as e:
        print(f"✗ Error initializing ledger tables: {e}")
        sys.exit(1)
