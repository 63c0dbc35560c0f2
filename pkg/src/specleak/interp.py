"""Architectural interpreter shared by the contract model and the
simulated microarchitecture.

The state covers R0-R3, the S/Z/C flags, the read-only sandbox base, and
a two-page sandbox memory with a small guard area for accesses that
cross the last cache line of a page.  One `step` executes a single
instruction and reports everything speculation engines and tracers need:
the memory access (if any), register sources/destinations, flag effects,
and the branch outcome.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .isa import (FLAG_C, FLAG_S, FLAG_Z, MASK64, NUM_GPRS, SANDBOX_PAGE, SB,
                  Cond, Imm, LinearInstr, MemRef, Opcode, Program, Reg)

DEFAULT_SANDBOX_BASE = 0x0100_0000
MEM_GUARD = 8  # a 64-bit access at the last byte of page 2 stays in bounds
MEM_SIZE = 2 * SANDBOX_PAGE + MEM_GUARD


class InterpreterFault(Exception):
    """Hard execution error; unreachable on instrumented programs."""


def cond_holds(cond: Cond, flags: int) -> bool:
    if cond is Cond.Z:
        return bool(flags & FLAG_Z)
    if cond is Cond.NZ:
        return not flags & FLAG_Z
    if cond is Cond.S:
        return bool(flags & FLAG_S)
    return not flags & FLAG_S


class ArchState:
    """Registers, flags, and sandbox memory of one execution."""

    __slots__ = ("regs", "flags", "sb", "mem", "base")

    def __init__(self, regs, flags, sb, mem, base):
        self.regs = regs          # list of 4 ints
        self.flags = flags        # S/Z/C bits
        self.sb = sb              # sandbox base register value
        self.mem = mem            # bytearray over [base, base + MEM_SIZE)
        self.base = base

    @classmethod
    def from_input(cls, inp, sandbox_offset: int,
                   sandbox_base: int = DEFAULT_SANDBOX_BASE) -> "ArchState":
        if sandbox_base % SANDBOX_PAGE:
            raise ValueError("sandbox base must be 4096-byte aligned")
        mem = bytearray(MEM_SIZE)
        mem[:len(inp.mem)] = inp.mem
        return cls(list(inp.regs), inp.flags,
                   sandbox_base + sandbox_offset, mem, sandbox_base)

    def read_mem(self, addr: int) -> int:
        off = addr - self.base
        if off < 0 or off + 8 > MEM_SIZE:
            raise InterpreterFault(f"load outside sandbox: {addr:#x}")
        return int.from_bytes(self.mem[off:off + 8], "little")

    def write_mem(self, addr: int, value: int) -> None:
        off = addr - self.base
        if off < 0 or off + 8 > MEM_SIZE:
            raise InterpreterFault(f"store outside sandbox: {addr:#x}")
        self.mem[off:off + 8] = (value & MASK64).to_bytes(8, "little")

    def read_reg(self, index: int) -> int:
        if index == SB:
            return self.sb
        return self.regs[index]

    def snapshot(self) -> tuple:
        return (list(self.regs), self.flags, bytes(self.mem))

    def restore(self, snap: tuple) -> None:
        regs, flags, mem = snap
        self.regs = list(regs)
        self.flags = flags
        self.mem = bytearray(mem)


@dataclass
class StepInfo:
    """Observable effects of one executed instruction."""

    li: LinearInstr
    next_index: int
    mem_kind: Optional[str] = None   # "load" | "store"
    mem_addr: int = 0
    mem_value: int = 0               # value loaded or stored
    src_regs: tuple = ()             # register source operand values, in order
    src_ids: tuple = ()              # their register indices
    dst_ids: tuple = ()
    reads_flags: bool = False
    writes_flags: bool = False
    branch_taken: Optional[bool] = None
    taken_index: int = -1            # branch target as a linear index
    fallthrough_index: int = -1
    div_operand: int = 0             # dividend value, for latency modelling


def _operand_value(state: ArchState, op) -> int:
    if isinstance(op, Reg):
        return state.read_reg(op.index)
    if isinstance(op, Imm):
        return op.value
    raise InterpreterFault(f"unexpected operand {op}")


def _set_flags(state: ArchState, result: int, carry: bool) -> None:
    flags = 0
    if result & (1 << 63):
        flags |= FLAG_S
    if result == 0:
        flags |= FLAG_Z
    if carry:
        flags |= FLAG_C
    state.flags = flags


def step(state: ArchState, program: Program, index: int,
         load_override: Optional[int] = None,
         skip_store: bool = False) -> StepInfo:
    """Execute program.instrs[index] against state.

    load_override substitutes the value returned by a LOAD without
    touching memory (transient value injection); skip_store suppresses a
    STORE's memory write.  Both are used by speculation engines only.
    """
    li = program.instrs[index]
    instr = li.instr
    op = instr.opcode
    ops = instr.operands
    info = StepInfo(li, li.next_index)

    def note_sources(*operands):
        ids, vals = [], []
        for o in operands:
            if isinstance(o, Reg):
                ids.append(o.index)
                vals.append(state.read_reg(o.index))
        info.src_ids = tuple(ids)
        info.src_regs = tuple(vals)

    if op is Opcode.FENCE:
        return info

    if op is Opcode.JMP:
        info.branch_taken = True
        info.taken_index = li.target_index
        info.fallthrough_index = li.next_index
        info.next_index = li.target_index
        return info

    if op is Opcode.BCC:
        info.reads_flags = True
        taken = cond_holds(instr.cond, state.flags)
        info.branch_taken = taken
        info.taken_index = li.target_index
        info.fallthrough_index = li.next_index
        info.next_index = li.target_index if taken else li.next_index
        return info

    if op is Opcode.LOAD:
        dst, ref = ops
        note_sources(Reg(ref.reg))
        addr = state.read_reg(ref.reg)
        if load_override is None:
            value = state.read_mem(addr)
        else:
            value = load_override & MASK64
        state.regs[dst.index] = value
        info.mem_kind = "load"
        info.mem_addr = addr
        info.mem_value = value
        info.dst_ids = (dst.index,)
        return info

    if op is Opcode.STORE:
        ref, src = ops
        note_sources(Reg(ref.reg), src)
        addr = state.read_reg(ref.reg)
        value = _operand_value(state, src)
        if not skip_store:
            state.write_mem(addr, value)
        info.mem_kind = "store"
        info.mem_addr = addr
        info.mem_value = value & MASK64
        return info

    if op is Opcode.MOV:
        dst, src = ops
        note_sources(src)
        state.regs[dst.index] = _operand_value(state, src)
        info.dst_ids = (dst.index,)
        return info

    if op is Opcode.NOT:
        (dst,) = ops
        note_sources(dst)
        state.regs[dst.index] = ~state.regs[dst.index] & MASK64
        info.dst_ids = (dst.index,)
        return info

    if op is Opcode.CMOV:
        dst, src = ops
        note_sources(dst, src)
        info.reads_flags = True
        if cond_holds(instr.cond, state.flags):
            state.regs[dst.index] = _operand_value(state, src)
        info.dst_ids = (dst.index,)
        return info

    if op is Opcode.DIV:
        dst, src = ops
        note_sources(dst, src)
        divisor = _operand_value(state, src)
        if divisor == 0:
            raise InterpreterFault("division by zero")
        dividend = state.regs[dst.index]
        info.div_operand = dividend
        state.regs[dst.index] = dividend // divisor
        info.dst_ids = (dst.index,)
        return info

    # two-operand ALU with flag updates
    dst, src = ops
    note_sources(dst, src)
    a = state.read_reg(dst.index)
    b = _operand_value(state, src)
    if op is Opcode.ADD:
        full = a + b
        result, carry = full & MASK64, full > MASK64
    elif op is Opcode.SUB:
        result, carry = (a - b) & MASK64, a < b
    elif op is Opcode.CMP:
        result, carry = (a - b) & MASK64, a < b
    elif op is Opcode.AND:
        result, carry = a & b, False
    elif op is Opcode.OR:
        result, carry = a | b, False
    elif op is Opcode.XOR:
        result, carry = a ^ b, False
    else:
        raise InterpreterFault(f"unhandled opcode {op}")
    _set_flags(state, result, carry)
    info.writes_flags = True
    if op is not Opcode.CMP:
        state.regs[dst.index] = result
        info.dst_ids = (dst.index,)
    return info
