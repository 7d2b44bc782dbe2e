#!/usr/bin/env python3
"""Regenerates tests/data/difflib_fixture.jsonl from Python's difflib.

Each line holds a string pair with SequenceMatcher's matching blocks and
ratio (no junk, autojunk off). The file is checked in; rerun only when the
generator changes.
"""
import argparse
import difflib
import json
import random

ALPHABETS = ["ab", "abc", "abcd ", "abcdefghijklmnopqrstuvwxyz", "01234 ,.:", "αβγé中文 a"]


def mutate(rng, s, alphabet):
    out = list(s)
    for _ in range(rng.randint(0, 4)):
        op = rng.randrange(3)
        pos = rng.randint(0, len(out))
        if op == 0:
            out.insert(pos, rng.choice(alphabet))
        elif op == 1 and out:
            del out[min(pos, len(out) - 1)]
        elif out:
            out[min(pos, len(out) - 1)] = rng.choice(alphabet)
    return "".join(out)[:64]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20251)
    ap.add_argument("--out", default="tests/data/difflib_fixture.jsonl")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    with open(args.out, "w", encoding="utf-8") as f:
        for _ in range(args.count):
            alphabet = rng.choice(ALPHABETS)
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 64)))
            if rng.random() < 0.5:
                b = mutate(rng, a, alphabet)
            else:
                b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 64)))
            sm = difflib.SequenceMatcher(None, a, b, autojunk=False)
            blocks = [list(m) for m in sm.get_matching_blocks()[:-1]]
            f.write(json.dumps({"a": a, "b": b, "blocks": blocks, "ratio": sm.ratio()},
                               ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
