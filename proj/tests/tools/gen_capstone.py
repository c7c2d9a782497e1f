#!/usr/bin/env python3
"""Freeze capstone's view of Thumb encodings for the decoder differential test.

Writes tests/data/capstone16.txt (every halfword that is not a 32-bit prefix)
and tests/data/capstone32.txt (a seeded sample of 32-bit encodings).
Each line: <hex encoding> <mnemonic or '-'>.
"""
import pathlib
import random

import capstone

OUT = pathlib.Path(__file__).resolve().parents[1] / "data"


def mnemonic(md, raw_bytes):
    for insn in md.disasm(raw_bytes, 0x08000000):
        if insn.size == len(raw_bytes):
            return insn.mnemonic
        return "-"
    return "-"


def main():
    md = capstone.Cs(capstone.CS_ARCH_ARM, capstone.CS_MODE_THUMB | capstone.CS_MODE_MCLASS)
    lines = []
    for h in range(0x10000):
        if (h >> 11) >= 0b11101:
            continue
        lines.append(f"{h:04x} {mnemonic(md, h.to_bytes(2, 'little'))}")
    (OUT / "capstone16.txt").write_text("\n".join(lines) + "\n")

    rng = random.Random(20131)
    firsts = []
    # Families the subset implements, densely; everything else, sparsely.
    for base in (0xF850, 0xF8C0, 0xF8D0):
        firsts += [base | n for n in range(16)]
    firsts += rng.sample(range(0xF000, 0xF800), 64)
    firsts += rng.sample(range(0xE800, 0x10000), 256)
    lines = []
    for h1 in sorted(set(firsts)):
        seconds = {rng.randrange(0x10000) for _ in range(48)}
        if (h1 & 0xF800) == 0xF000:
            seconds |= {0xD000 | rng.randrange(0x1000) | (rng.randrange(4) << 11) for _ in range(48)}
        if (h1 & 0xFFF0) == 0xF850:
            seconds |= {(rng.randrange(16) << 12) | (rng.randrange(4) << 4) | rng.randrange(16) for _ in range(48)}
        for h2 in sorted(seconds):
            raw = h1.to_bytes(2, "little") + h2.to_bytes(2, "little")
            lines.append(f"{(h1 << 16) | h2:08x} {mnemonic(md, raw)}")
    (OUT / "capstone32.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
