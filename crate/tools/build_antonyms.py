#!/usr/bin/env python3
"""Extract the antonym relation from WordNet 3.0 `data.*` files into a TSV.

Usage: build_antonyms.py <wordnet-dict-dir> > antonyms.tsv

Only lexical antonym pointers (`!`) are read. Multiword lemmas are skipped,
adjective markers like `(a)` are stripped, the output is lowercased, made
symmetric and irreflexive, and sorted.
"""
import os
import re
import sys


def lemmas_and_pointers(line):
    fields = line.split(" | ")[0].split()
    offset, _lex, pos = fields[0], fields[1], fields[2]
    n_words = int(fields[3], 16)
    words = []
    i = 4
    for _ in range(n_words):
        words.append(re.sub(r"\(.*\)$", "", fields[i]).lower())
        i += 2
    n_ptrs = int(fields[i])
    i += 1
    ptrs = []
    for _ in range(n_ptrs):
        sym, target, tpos, srctgt = fields[i : i + 4]
        ptrs.append((sym, target, tpos, srctgt))
        i += 4
    return (offset, pos), words, ptrs


def main(root):
    synsets = {}
    pointers = []
    for name in ("adj", "adv", "noun", "verb"):
        with open(os.path.join(root, "data." + name), encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("  "):
                    continue
                key, words, ptrs = lemmas_and_pointers(line)
                pos = "a" if key[1] == "s" else key[1]
                synsets[(key[0], pos)] = words
                pointers.append((key[0], pos, words, ptrs))
    pairs = set()
    for offset, pos, words, ptrs in pointers:
        for sym, target, tpos, srctgt in ptrs:
            if sym != "!":
                continue
            tpos = "a" if tpos == "s" else tpos
            src = int(srctgt[:2], 16)
            tgt = int(srctgt[2:], 16)
            a = words[src - 1]
            b = synsets[(target, tpos)][tgt - 1]
            if "_" in a or "_" in b or a == b:
                continue
            pairs.add((a, b))
            pairs.add((b, a))
    for a, b in sorted(pairs):
        print(f"{a}\t{b}")


if __name__ == "__main__":
    main(sys.argv[1])
