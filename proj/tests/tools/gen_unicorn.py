#!/usr/bin/env python3
"""Freeze single-instruction executions from unicorn (Cortex-M3) for the
executor differential test.

Writes tests/data/unicorn_steps.txt. Each line:
  <encoding> <pc> <nzcv in> <result>
where result is one of
  ok <r0..r15> <nzcv out> <writes>   writes: addr=value;... or '-'
  unmapped | undef | unaligned | flash-write
Registers start from the fixed file in INIT; memory holds pattern().
"""
import pathlib
import random

import capstone
from unicorn import Uc, UcError, UC_ARCH_ARM, UC_MODE_THUMB, UC_MODE_MCLASS, UC_HOOK_MEM_WRITE, UC_HOOK_MEM_READ
from unicorn import arm_const as A

OUT = pathlib.Path(__file__).resolve().parents[1] / "data"

FLASH, FLASH_SIZE = 0x08000000, 0x10000
SRAM, SRAM_SIZE = 0x20000000, 0x400
INIT = [0x20000100, 0x00000004, 0x20000010, 0x08000200, 0x12345678, 0x80000000, 0xFFFFFFFF, 0x7FFFFFFF,
        0x20000200, 0x00000003, 0x08000010, 0x00000001, 0xFFFFFFFE, 0x20000300, 0x08000301]
REGS = [A.UC_ARM_REG_R0 + i for i in range(13)] + [A.UC_ARM_REG_SP, A.UC_ARM_REG_LR, A.UC_ARM_REG_PC]

# Capstone mnemonics of the families the subset implements.
FAMILIES16 = {"nop", "movs", "mov", "adds", "add", "subs", "cmp", "ands", "orrs", "eors", "lsls", "ldr", "str",
              "b", "beq", "bne", "bhs", "blo", "bmi", "bpl", "bvs", "bvc", "bhi", "bls", "bge", "blt", "bgt",
              "ble", "push", "pop"}


def pattern(addr):
    return (addr * 37 + 11) & 0xFF


def image(base, size):
    return bytes(pattern(base + i) for i in range(size))


def run(code, pc, nzcv):
    uc = Uc(UC_ARCH_ARM, UC_MODE_THUMB | UC_MODE_MCLASS)
    uc.mem_map(FLASH, FLASH_SIZE)
    uc.mem_map(SRAM, 0x1000)  # page granularity; accesses past SRAM_SIZE are flagged below
    uc.mem_write(FLASH, image(FLASH, FLASH_SIZE))
    uc.mem_write(SRAM, image(SRAM, 0x1000))
    uc.mem_write(pc, code)
    for r, v in zip(REGS, INIT):
        uc.reg_write(r, v)
    uc.reg_write(A.UC_ARM_REG_XPSR, (nzcv << 28) | (1 << 24))
    accesses = []

    def hook(uc_, access, addr, size, value, user):
        accesses.append((access == 17 or access == 20, addr, size, value))  # UC_MEM_WRITE = 17
        return True

    uc.hook_add(UC_HOOK_MEM_WRITE | UC_HOOK_MEM_READ, hook)
    try:
        uc.emu_start(pc | 1, FLASH + FLASH_SIZE, count=1)
    except UcError as e:
        msg = str(e)
        if "UNMAPPED" in msg:
            return "unmapped"
        return "undef"
    for write, addr, size, value in accesses:
        in_sram = SRAM <= addr < SRAM + SRAM_SIZE and addr + size <= SRAM + SRAM_SIZE
        in_flash = FLASH <= addr < FLASH + FLASH_SIZE
        if not (in_sram or in_flash):
            return "unmapped"
    for write, addr, size, value in accesses:
        if size == 4 and addr % 4:
            return "unaligned"
    for write, addr, size, value in accesses:
        if write and FLASH <= addr < FLASH + FLASH_SIZE:
            return "flash-write"
    regs = [uc.reg_read(r) for r in REGS]
    out = (uc.reg_read(A.UC_ARM_REG_XPSR) >> 28) & 0xF
    writes = ";".join(f"{a:08x}={v & 0xFFFFFFFF:08x}" for w, a, s, v in accesses if w) or "-"
    return "ok " + " ".join(f"{v:08x}" for v in regs) + f" {out:x} {writes}"


def main():
    md = capstone.Cs(capstone.CS_ARCH_ARM, capstone.CS_MODE_THUMB | capstone.CS_MODE_MCLASS)
    rng = random.Random(56)
    by_family = {}
    for h in range(0x10000):
        if (h >> 11) >= 0b11101:
            continue
        insns = list(md.disasm(h.to_bytes(2, "little"), FLASH))
        if insns and insns[0].mnemonic in FAMILIES16:
            by_family.setdefault(insns[0].mnemonic, []).append(h)
    cases = []
    for fam in sorted(by_family):
        pool = by_family[fam]
        for h in rng.sample(pool, min(len(pool), 120)):
            cases.append((h.to_bytes(2, "little"), f"{h:04x}"))
    for _ in range(600):
        kind = rng.randrange(5)
        if kind == 0:
            h1, h2 = 0xF8D0 | rng.randrange(16), rng.randrange(0x10000)
        elif kind == 1:
            h1, h2 = 0xF8C0 | rng.randrange(15), (rng.randrange(15) << 12) | rng.randrange(0x1000)
        elif kind == 2:
            h1 = 0xF850 | rng.randrange(16)
            h2 = (rng.randrange(16) << 12) | (rng.randrange(4) << 4) | rng.randrange(16)
        elif kind == 3:
            h1, h2 = rng.choice((0xF85F, 0xF8DF)), rng.randrange(0x10000)
        else:
            # BL within +-64 KB so most targets stay inside Flash.
            off = rng.randrange(-0x8000, 0x8000) * 2
            imm = off & 0x1FFFFFF
            s = (imm >> 24) & 1
            i1, i2 = (imm >> 23) & 1, (imm >> 22) & 1
            j1, j2 = (1 - (i1 ^ s)), (1 - (i2 ^ s))
            h1 = 0xF000 | (s << 10) | ((imm >> 12) & 0x3FF)
            h2 = 0xD000 | (j1 << 13) | (j2 << 11) | ((imm >> 1) & 0x7FF)
        cases.append((h1.to_bytes(2, "little") + h2.to_bytes(2, "little"), f"{(h1 << 16) | h2:08x}"))
    lines = []
    for code, enc in cases:
        pc = FLASH + 0x100 + rng.choice((0, 2))
        nzcv = rng.randrange(16)
        lines.append(f"{enc} {pc:08x} {nzcv:x} {run(code, pc, nzcv)}")
    (OUT / "unicorn_steps.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
