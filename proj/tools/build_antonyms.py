#!/usr/bin/env python3
"""Builds data/antonyms.tsv from WordNet 3.0 antonym pointers plus the
hand-curated pairs in data/antonyms_curated.tsv.

Usage: build_antonyms.py WORDNET_DICT_DIR [REPO_DIR]

WORDNET_DICT_DIR holds the data.{noun,verb,adj,adv} and {verb,noun}.exc files
of the WordNet 3.0 distribution. Curated pairs are written last so they win
over WordNet pairs for the same word.
"""

import re
import sys
from pathlib import Path

POS_FILES = {"n": "noun", "v": "verb", "a": "adj", "s": "adj", "r": "adv"}
WORD = re.compile(r"^[a-z]+$")


def read_synsets(dict_dir):
    """offset/pos -> (pos, [lemmas], [(pointer, target_key, source_idx, target_idx)])."""
    synsets = {}
    for name in sorted(set(POS_FILES.values())):
        for line in (dict_dir / f"data.{name}").open(encoding="latin-1"):
            if line.startswith("  "):
                continue
            f = line.split()
            offset, pos = f[0], f[2]
            n_words = int(f[3], 16)
            lemmas = [re.sub(r"\(.*\)$", "", f[4 + 2 * i]).lower() for i in range(n_words)]
            i = 4 + 2 * n_words
            n_ptrs = int(f[i])
            ptrs = []
            for j in range(n_ptrs):
                sym, toff, tpos, st = f[i + 1 + 4 * j : i + 5 + 4 * j]
                ptrs.append((sym, f"{toff}{'a' if tpos == 's' else tpos}", int(st[:2], 16), int(st[2:], 16)))
            synsets[f"{offset}{'a' if pos == 's' else pos}"] = (pos, lemmas, ptrs)
    return synsets


def antonym_pairs(synsets):
    pairs = []
    for key, (pos, lemmas, ptrs) in sorted(synsets.items()):
        for sym, tkey, src, dst in ptrs:
            if sym != "!" or src == 0 or dst == 0 or tkey not in synsets:
                continue
            a, b = lemmas[src - 1], synsets[tkey][1][dst - 1]
            if WORD.match(a) and WORD.match(b) and a != b:
                pairs.append((pos, a, b))
    return pairs


def irregular(dict_dir, name):
    """Lemmas that have any irregular inflection; their forms are skipped."""
    lemmas = set()
    for line in (dict_dir / f"{name}.exc").open(encoding="latin-1"):
        f = line.split()
        lemmas.update(f[1:])
    return lemmas


def regular_forms(word, pos):
    """Regular inflections, in a fixed slot order so slots pair up."""
    if pos == "n":
        if re.search(r"(s|x|z|ch|sh)$", word):
            return [word + "es"]
        if re.search(r"[^aeiou]y$", word):
            return [word[:-1] + "ies"]
        return [word + "s"]
    if pos == "v":
        if re.search(r"(s|x|z|ch|sh)$", word):
            third = word + "es"
        elif re.search(r"[^aeiou]y$", word):
            third = word[:-1] + "ies"
        else:
            third = word + "s"
        if word.endswith("e"):
            past, ing = word + "d", word[:-1] + "ing"
        elif re.search(r"[^aeiou]y$", word):
            past, ing = word[:-1] + "ied", word + "ing"
        elif re.fullmatch(r"[^aeiou]*[aeiou][bdgmnprt]", word):
            past, ing = word + word[-1] + "ed", word + word[-1] + "ing"
        else:
            past, ing = word + "ed", word + "ing"
        return [third, past, ing]
    return []


def main():
    dict_dir = Path(sys.argv[1])
    repo = Path(sys.argv[2]) if len(sys.argv) > 2 else Path(__file__).resolve().parent.parent
    synsets = read_synsets(dict_dir)
    skip = {"n": irregular(dict_dir, "noun"), "v": irregular(dict_dir, "verb")}

    seen = set()
    lines = []

    def emit(a, b):
        if a != b and (a, b) not in seen and (b, a) not in seen:
            seen.add((a, b))
            lines.append(f"{a}\t{b}")

    for pos, a, b in antonym_pairs(synsets):
        emit(a, b)
        if pos in skip and a not in skip[pos] and b not in skip[pos]:
            for fa, fb in zip(regular_forms(a, pos), regular_forms(b, pos)):
                emit(fa, fb)

    curated = (repo / "data" / "antonyms_curated.tsv").read_text().splitlines()
    out = [
        "# word<TAB>antonym; each pair also applies in reverse.",
        "# Generated by tools/build_antonyms.py from WordNet 3.0 (see WORDNET_LICENSE)",
        "# and data/antonyms_curated.tsv; curated pairs come last and take precedence.",
    ]
    out += lines
    out += [l for l in curated if l and not l.startswith("#")]
    (repo / "data" / "antonyms.tsv").write_text("\n".join(out) + "\n")
    print(f"{len(lines)} WordNet pairs, {len(out) - 3 - len(lines)} curated pairs")


if __name__ == "__main__":
    main()
