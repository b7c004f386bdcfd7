"""Plain-text matrix serialization (17 significant digits, round-trip exact)."""

import numpy as np

FLOAT_FMT = "%.17g"


def format_float(x):
    return FLOAT_FMT % x


def format_row(values):
    return " ".join(FLOAT_FMT % v for v in values)


def write_rows(fh, matrix):
    for row in np.atleast_2d(matrix):
        fh.write(format_row(row) + "\n")


def parse_rows(lines, n_rows, n_cols, what="matrix"):
    if len(lines) < n_rows:
        raise ValueError(f"{what}: expected {n_rows} rows, found {len(lines)}")
    out = np.empty((n_rows, n_cols))
    for i in range(n_rows):
        parts = lines[i].split()
        if len(parts) != n_cols:
            raise ValueError(f"{what}: row {i} has {len(parts)} entries, expected {n_cols}")
        out[i] = [float(p) for p in parts]
    return out


def content_lines(text):
    return [ln for ln in text.splitlines() if ln.strip()]
