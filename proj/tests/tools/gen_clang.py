#!/usr/bin/env python3
"""Assemble reference listings with clang and freeze the .text bytes.

Writes tests/data/clang/<name>.s (the listing in this project's syntax) and
<name>.hex (clang's bytes, 16 per line). Built-in program sources are read
from src/programs.cpp; harness directives are dropped and flag-setting forms
are spelled out for unified syntax.
"""
import io
import pathlib
import re
import subprocess
import tempfile

from elftools.elf.elffile import ELFFile

ROOT = pathlib.Path(__file__).resolve().parents[2]
OUT = ROOT / "tests" / "data" / "clang"

LISTING = """\
; one of each encoding family
start:
        nop
        movs    r0, #0
        movs    r7, #255
        mov     r3, #17
        mov     r8, r1
        mov     r2, r12
        mov     sp, r4
        movs    r5, r6
        adds    r1, r2, #7
        add     r1, r1, #1
        adds    r6, #200
        adds    r0, r1, r2
        add     r3, r4
        add     r9, r2
        add     r2, r10
        subs    r1, r2, #3
        sub     r4, r4, #250
        subs    r0, r1, r2
        cmp     r1, #8
        cmp     r7, #0
        cmp     r1, r2
        cmp     r8, r2
        ands    r0, r1
        orr     r2, r2, r3
        eors    r7, r6
        lsls    r1, r2, #31
        lsl     r4, r5, #3
        ldr     r4, [pc, #44]
        ldr     r1, [r2, #0]
        ldr     r0, [r7, #124]
        ldr     r2, [sp, #1020]
        ldr     r3, [r1, r2]
        ldr.w   r8, [pc, #44]
        ldr.w   r9, [pc, #-12]
        ldr.w   r10, [r1, #4095]
        ldr     r4, [r2, r1, lsl #2]
        ldr.w   r11, [r12, r3, lsl #3]
        str     r3, [r0, #0]
        str     r5, [r6, #64]
        str     r0, [sp, #8]
        str     r1, [r2, r3]
        str.w   r9, [r0, #100]
        push    {r4, lr}
        push    {r0-r7}
        pop     {r4, pc}
        pop     {r1, r3}
back:
        beq     back
        bne     forward
        bcs     back
        bcc     start
        bmi     forward
        bpl     forward
        bvs     back
        bvc     back
        bhi     forward
        bls     forward
        bge     back
        blt     back
        bgt     forward
        ble     forward
        b       start
        b       far
        bl      start
        bl      far
forward:
        nop
        .org    0x600
far:
        nop
        b       forward
"""

HARNESS = re.compile(r"^\s*\.(reg|data|watch|result|entry|watchpoint)\b")
SETS = {"mov": "movs", "add": "adds", "sub": "subs", "and": "ands", "orr": "orrs", "eor": "eors", "lsl": "lsls"}


def to_unified(src):
    out = [".syntax unified", ".thumb", ".text"]
    for line in src.splitlines():
        code = line.split(";", 1)[0].rstrip()
        if HARNESS.match(code):
            continue
        m = re.match(r"^(\s*(?:\w+:\s*)?)(\w+)(\s+)(.*)$", code)
        if m:
            lead, op, gap, args = m.groups()
            regs = [a.strip() for a in args.split(",")]
            low = all(re.fullmatch(r"r[0-7]", r) or r.startswith("#") for r in regs)
            # Non-flag-setting narrow forms exist only for mov/add between
            # registers; everything else narrow sets flags outside an IT block.
            two_reg_hi = op in ("mov", "add") and len(regs) == 2 and not regs[1].startswith("#")
            if op in SETS and low and not two_reg_hi:
                op = SETS[op]
            code = lead + op + gap + args
        out.append(code)
    return "\n".join(out) + "\n"


def text_bytes(asm):
    with tempfile.TemporaryDirectory() as d:
        s, o = pathlib.Path(d) / "a.s", pathlib.Path(d) / "a.o"
        s.write_text(asm)
        subprocess.run(["clang", "--target=thumbv7m-none-eabi", "-c", str(s), "-o", str(o)], check=True)
        elf = ELFFile(io.BytesIO(o.read_bytes()))
        return elf.get_section_by_name(".text").data()


def builtins():
    text = (ROOT / "src" / "programs.cpp").read_text()
    names = {"kNopSled": "nop-sled", "kArraySum": "array-sum", "kLdrR4": "ldr-r4", "kLdrR8": "ldr-r8",
             "kLdrSram": "ldr-sram"}
    for var, name in names.items():
        m = re.search(var + r' = R"\((.*?)\)";', text, re.S)
        yield name, m.group(1)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, src in [("listing", LISTING), *builtins()]:
        data = text_bytes(to_unified(src))
        (OUT / f"{name}.s").write_text(src)
        lines = [data[i:i + 16].hex() for i in range(0, len(data), 16)]
        (OUT / f"{name}.hex").write_text("\n".join(lines) + "\n")
        print(name, len(data))


if __name__ == "__main__":
    main()
