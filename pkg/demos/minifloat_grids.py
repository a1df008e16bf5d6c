"""Walk the 4-bit minifloat layouts and their per-channel grids.

Every ExMy layout of a fixed total width trades exponent range against
mantissa resolution.  This script prints each 4-bit layout's representable
magnitudes at a few exponent biases, then quantizes a small vector per
channel to show how the bias anchors the grid at the channel's maximum.
"""

from __future__ import annotations

import argparse

import numpy as np

from fpqt import BiasedFormat, candidate_formats, grid, minmax_quantize


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--bits", type=int, default=4, help="total width in bits")
    args = parser.parse_args(argv)

    print(f"=== {args.bits}-bit layouts ===")
    for fmt in candidate_formats(args.bits):
        print(
            f"\n{fmt}: max value {fmt.max_val:g}, "
            f"covered magnitude span {fmt.range_ratio:g}x"
        )
        for bias in (0, -1, -3):
            g = grid(BiasedFormat(fmt, bias))
            print(f"  bias {bias:+d}: {np.array2string(g, precision=4)}")

    print("\n=== per-channel MinMax quantization ===")
    a = np.array(
        [
            [11.0, 0.04, -310.0],
            [2.8, -0.013, 55.0],
            [0.9, 0.002, -7.0],
        ]
    )
    print("input columns (channels):")
    print(a)
    for fmt in candidate_formats(args.bits):
        q = minmax_quantize(a, fmt, channel_axis=-1)
        print(f"\n{fmt}: channel biases {q.bias.tolist()}")
        print(q.values)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
