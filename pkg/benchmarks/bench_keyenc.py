"""Benchmark the compiled key-encoding core against the pure-Python one.

Usage: python3 benchmarks/bench_keyenc.py [--n 50000] [--repeat 5]
"""
import argparse
import datetime
import random
import time

from scalestore import keyenc_py

try:
    from scalestore import _keyenc
except ImportError:
    _keyenc = None


def make_tuples(n, seed=0):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        values, kinds = [], []
        for _f in range(rng.randrange(1, 5)):
            k = rng.choice(("int", "str", "date"))
            kinds.append(k)
            if k == "int":
                values.append(rng.randrange(-10**12, 10**12))
            elif k == "str":
                length = rng.randrange(0, 24)
                values.append("".join(chr(rng.randrange(32, 1000))
                                      for _ in range(length)))
            else:
                values.append(datetime.date(1970, 1, 1)
                              + datetime.timedelta(days=rng.randrange(40000)))
        out.append((tuple(values), tuple(kinds)))
    return out


def bench(impl, tuples, repeat):
    enc_best = dec_best = float("inf")
    encoded = [impl.encode_tuple(v, k) for v, k in tuples]
    for _ in range(repeat):
        t0 = time.perf_counter()
        for v, k in tuples:
            impl.encode_tuple(v, k)
        enc_best = min(enc_best, time.perf_counter() - t0)
        t0 = time.perf_counter()
        for b in encoded:
            impl.decode_tuple(b)
        dec_best = min(dec_best, time.perf_counter() - t0)
    return enc_best, dec_best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=50_000,
                    help="tuples per pass (default 50000)")
    ap.add_argument("--repeat", type=int, default=5,
                    help="passes; best time wins (default 5)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    tuples = make_tuples(args.n, args.seed)
    impls = [("pure-python", keyenc_py)]
    if _keyenc is not None:
        impls.append(("compiled", _keyenc))

    print("%-12s %14s %14s" % ("impl", "encode/s", "decode/s"))
    results = {}
    for name, impl in impls:
        enc, dec = bench(impl, tuples, args.repeat)
        results[name] = (enc, dec)
        print("%-12s %14s %14s"
              % (name, "{:,.0f}".format(args.n / enc),
                 "{:,.0f}".format(args.n / dec)))
    if len(results) == 2:
        pe, pd = results["pure-python"]
        ce, cd = results["compiled"]
        print("speedup: encode %.1fx, decode %.1fx" % (pe / ce, pd / cd))
    else:
        print("(compiled core not built; showing pure-python only)")


if __name__ == "__main__":
    main()
