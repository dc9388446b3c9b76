#!/usr/bin/env python3
"""Regenerate the bundled 8x8 digit subset (500 samples, features in [0, 1]).

Development-only: pulls the classic 8x8 handwritten digit set from
scikit-learn, truncates it, and writes src/natgrad_lens/data/digits_8x8_500.bin
in the library's dataset format.
"""

import os

import numpy as np
from sklearn.datasets import load_digits

from natgrad_lens.datasets import BUNDLED_DIGITS, write_dataset_file

COUNT = 500


def main():
    digits = load_digits()
    features = (digits.data[:COUNT] / 16.0).astype(np.float32)
    labels = digits.target[:COUNT].astype(np.uint8)
    out = os.path.join(
        os.path.dirname(__file__), "..", "src", "natgrad_lens", "data", BUNDLED_DIGITS
    )
    os.makedirs(os.path.dirname(out), exist_ok=True)
    write_dataset_file(out, features, labels)
    print(f"wrote {out}: {features.shape[0]} samples, dim {features.shape[1]}")


if __name__ == "__main__":
    main()
