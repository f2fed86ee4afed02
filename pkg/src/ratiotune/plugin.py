"""Reference plugin speaking the external-compressor protocol.

Serves an in-tree codec over the subprocess interface, e.g.::

    python -m ratiotune.plugin --codec pq --op compress --input in.raw \
        --output out.bin --shape 64,64,64 --dtype f32 --mode abs --bound 1e-3

It doubles as a template for wrapping third-party compressors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .codecs import bt, pq
from .codecs.container import CorruptBufferError

EXIT_OK, EXIT_FAIL, EXIT_BOUND = 0, 1, 2
MODULES = {"pq": pq, "bt": bt}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ratiotune-plugin")
    ap.add_argument("--codec", choices=sorted(MODULES), default="pq")
    ap.add_argument("--input", required=True)
    ap.add_argument("--output", required=True)
    ap.add_argument("--shape", required=True)
    ap.add_argument("--dtype", choices=("f32", "f64"), required=True)
    ap.add_argument("--mode", choices=("abs", "mse"), default="abs")
    ap.add_argument("--bound", type=float, required=True)
    ap.add_argument("--op", choices=("compress", "decompress"), required=True)
    args = ap.parse_args(argv)

    module = MODULES[args.codec]
    dtype = np.dtype("<f4" if args.dtype == "f32" else "<f8")
    shape = tuple(int(s) for s in args.shape.split(","))
    if args.mode != "abs" or not args.bound > 0:
        return EXIT_BOUND
    try:
        if args.op == "compress":
            values = np.fromfile(args.input, dtype=dtype).reshape(shape)
            out = module.encode_array(values, args.bound)
        else:
            with open(args.input, "rb") as fh:
                out = module.decode_array(fh.read()).astype(dtype).tobytes()
    except (CorruptBufferError, ValueError, OSError) as exc:
        print(f"{args.codec}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    with open(args.output, "wb") as fh:
        fh.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
