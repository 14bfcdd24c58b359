"""Regenerate the synthetic 128-tap path frozen in ``src/sparsediff/data/fir128.txt``.

The response is a stand-in for a measured acoustic path: an 8-sample bulk
delay, then Gaussian taps under an exponential envelope (time constant 16
samples), with taps below 5% of the peak set to zero and unit energy.
Run from the repository root; the test suite checks the frozen file against
this generator.
"""

import sys
from pathlib import Path

import numpy as np

SEED = 20180601
TAPS = 128
DELAY = 8
TAU = 16.0
CUTOFF = 0.05


def synthetic_path(seed: int = SEED) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = np.arange(TAPS)
    h = rng.standard_normal(TAPS) * np.exp(-(n - DELAY) / TAU)
    h[:DELAY] = 0.0
    h[np.abs(h) < CUTOFF * np.abs(h).max()] = 0.0
    return h / np.linalg.norm(h)


HEADER = f"""\
SYNTHETIC FIXTURE, not a measured response.
128-tap stand-in for an acoustic path, generated by tools/make_fir_fixture.py:
seed {SEED}, bulk delay {DELAY}, Gaussian taps with envelope exp(-(n-{DELAY})/{TAU:g}),
taps below {CUTOFF:g} x peak zeroed, normalized to unit energy."""


def main(out: str = "src/sparsediff/data/fir128.txt") -> None:
    np.savetxt(out, synthetic_path(), fmt="%.17g", header=HEADER)


if __name__ == "__main__":
    main(*sys.argv[1:])
