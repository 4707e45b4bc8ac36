"""Regenerate the packaged QAM mutual-information table."""

from pathlib import Path

import numpy as np

from ifofsim.miesm import generate_table, write_table

OUT = Path(__file__).resolve().parents[1] / "src" / "ifofsim" / "data" / "qam_mi_table.csv"

if __name__ == "__main__":
    table = generate_table()
    for mod, col in table.items():
        if mod != "snr_db" and np.any(np.diff(col) >= 0):
            raise SystemExit(f"{mod} column is not strictly decreasing")
    write_table(OUT, table)
    print(f"wrote {OUT}")
