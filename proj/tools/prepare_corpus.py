#!/usr/bin/env python3
"""Build the bundled desk corpora from the Open Shakespeare package texts.

The source texts (Project Gutenberg transcriptions, public domain) ship in
the `shakespeare` source distribution on PyPI. Download and unpack it, then:

    python3 tools/prepare_corpus.py /path/to/shakespeare-0.6 data/

Writes one sentence per line, lowercased, punctuation removed:
    background.txt  five Shakespeare tragedies (~100K words)
    adaptation.txt  Paradise Lost, books I-X
    heldout.txt     Paradise Lost, last ~10K words
"""

import pathlib
import re
import sys

PLAYS = ["hamlet_gut.txt", "othello_gut.txt", "lear_gut.txt", "macbeth_gut.txt", "julius_caesar_gut.txt"]
WORD = re.compile(r"[a-z]+(?:'[a-z]+)*")
SENTENCE_END = re.compile(r"[.!?;:]")
BACKGROUND_WORDS = 100_000
HELDOUT_WORDS = 10_000


def sentences(text):
    for chunk in SENTENCE_END.split(text):
        toks = WORD.findall(chunk.lower().replace("--", " "))
        if toks:
            yield toks


def play_text(path):
    lines = path.read_text(encoding="latin-1").splitlines()
    start = next(i for i, l in enumerate(lines) if l.strip() == "ACT I.")
    kept = []
    for line in lines[start:]:
        s = line.strip()
        if not s:
            continue
        # act/scene headings and speaker tags ("HAMLET.", "First Witch.")
        if re.match(r"^(ACT|Scene|SCENE)\b", s):
            continue
        if re.match(r"^[A-Z][A-Za-z' ]{0,30}\.$", s):
            continue
        kept.append(re.sub(r"\[[^\]]*\]", " ", s))
    text = " ".join(kept)
    return re.sub(r"\[[^\]]*\]", " ", text)


def milton_text(path):
    lines = path.read_text(encoding="latin-1").splitlines()
    kept = [l for l in lines if not re.match(r"^\s*(BOOK [IVXL]+\.|PARADISE LOST|THE END\.)\s*$", l)]
    return " ".join(kept)


def take(sents, budget):
    out, n = [], 0
    for s in sents:
        if n + len(s) > budget:
            break
        out.append(s)
        n += len(s)
    return out


def write(path, sents):
    with open(path, "w", encoding="utf-8") as f:
        for s in sents:
            f.write(" ".join(s) + "\n")
    print(f"{path}: {len(sents)} sentences, {sum(map(len, sents))} words")


def main():
    src = pathlib.Path(sys.argv[1])
    dst = pathlib.Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    back = []
    for play in PLAYS:
        back.extend(sentences(play_text(src / "shksprdata" / "texts" / play)))
    write(dst / "background.txt", take(back, BACKGROUND_WORDS))

    target = list(sentences(milton_text(src / "miltondata" / "texts" / "paradiselost.txt")))
    held, n = [], 0
    while target and n < HELDOUT_WORDS:
        s = target.pop()
        held.append(s)
        n += len(s)
    held.reverse()
    write(dst / "adaptation.txt", target)
    write(dst / "heldout.txt", held)


if __name__ == "__main__":
    main()
