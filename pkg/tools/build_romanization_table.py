"""Regenerate ``romanization.tsv`` from pypinyin's character dictionary.

Only needed when refreshing the bundled table; the package itself reads the
TSV and does not import pypinyin.

    pip install pypinyin
    python tools/build_romanization_table.py src/scholarlink/data/romanization.tsv
"""
import sys

from pypinyin import Style, pinyin
from pypinyin.pinyin_dict import pinyin_dict

VOWELS = set("aeiouv")

# Bylines spell u-umlaut several ways.
UMLAUT_SPELLINGS = {
    "lv": ["lv", "lu", "lyu"],
    "nv": ["nv", "nu", "nyu"],
    "lve": ["lve", "lue"],
    "nve": ["nve", "nue"],
}


def readings(char):
    out = []
    for syl in pinyin(char, style=Style.NORMAL, heteronym=True)[0]:
        syl = syl.strip().lower()
        if not syl.isascii() or not syl.isalpha() or not VOWELS & set(syl):
            continue
        for spelled in UMLAUT_SPELLINGS.get(syl, [syl]):
            if spelled not in out:
                out.append(spelled)
    return out


def main(path):
    rows = 0
    with open(path, "w", encoding="utf-8") as fh:
        for cp in sorted(pinyin_dict):
            if not 0x4E00 <= cp <= 0x9FFF:
                continue
            char = chr(cp)
            syls = readings(char)
            if syls:
                fh.write(f"{char}\t{','.join(syls)}\n")
                rows += 1
    print(f"wrote {rows} characters to {path}")


if __name__ == "__main__":
    main(sys.argv[1])
