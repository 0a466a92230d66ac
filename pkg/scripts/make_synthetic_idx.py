#!/usr/bin/env python3
"""Write a synthetic digit corpus as MNIST-layout IDX file pairs.

Useful when no real MNIST files are on disk; the output feeds directly
into `boltzdef data prepare`.
"""

import argparse
from pathlib import Path

from boltzdef.digits import write_digits_idx


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train", type=int, default=2000)
    parser.add_argument("--test", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("data/synthetic"))
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    write_digits_idx(args.train, args.seed,
                     args.out / "train-images-idx3-ubyte",
                     args.out / "train-labels-idx1-ubyte")
    write_digits_idx(args.test, args.seed + 1,
                     args.out / "t10k-images-idx3-ubyte",
                     args.out / "t10k-labels-idx1-ubyte")
    print(f"wrote {args.train} train / {args.test} test images to {args.out}")


if __name__ == "__main__":
    main()
