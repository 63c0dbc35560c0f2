"""Toy ISA: registers, instruction classes, programs, and text assembly.

The instruction set is a 15-opcode RISC-like subset with four general
purpose registers (R0-R3), a read-only sandbox base register (SB), and a
3-bit flags register (S/Z/C).  Programs are DAGs of basic blocks framed
by FENCE instructions, with all memory accesses confined to a 4 KiB
sandbox by a two-instruction masking sequence.

Text format (.tc files): one instruction per line, `LABEL:` lines open
blocks, operands comma-separated, memory operands written `[Rn]`,
immediates decimal or 0x-hex, and a trailing `# instrumentation` comment
marks instrumentation instructions.  `# seed N` and `# offset N`
directives before the first instruction carry test-case metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

MASK64 = (1 << 64) - 1

SANDBOX_PAGE = 4096
LINE_SIZE = 64
SANDBOX_MASK = 0x0FC0  # 64-byte aligned offsets within one page
NUM_GPRS = 4
SB = 4  # register index of the sandbox base pseudo-register

# FLAGS bit assignment
FLAG_S = 0b001
FLAG_Z = 0b010
FLAG_C = 0b100


class Opcode(Enum):
    MOV = "MOV"
    ADD = "ADD"
    SUB = "SUB"
    AND = "AND"
    OR = "OR"
    XOR = "XOR"
    NOT = "NOT"
    CMP = "CMP"
    CMOV = "CMOV"
    DIV = "DIV"
    LOAD = "LOAD"
    STORE = "STORE"
    BCC = "BCC"
    JMP = "JMP"
    FENCE = "FENCE"


class Cond(Enum):
    Z = "Z"
    NZ = "NZ"
    S = "S"
    NS = "NS"


class Tag(Enum):
    ALU = "ALU"
    MEM_READ = "MemRead"
    MEM_WRITE = "MemWrite"
    COND_BRANCH = "CondBranch"
    UNCOND_BRANCH = "UncondBranch"
    FENCE = "Fence"
    VAR_LATENCY = "VarLatency"


# class tags are a pure function of the opcode
CLASS_TAGS: dict[Opcode, frozenset[Tag]] = {
    Opcode.LOAD: frozenset({Tag.MEM_READ}),
    Opcode.STORE: frozenset({Tag.MEM_WRITE}),
    Opcode.BCC: frozenset({Tag.COND_BRANCH}),
    Opcode.JMP: frozenset({Tag.UNCOND_BRANCH}),
    Opcode.FENCE: frozenset({Tag.FENCE}),
    Opcode.DIV: frozenset({Tag.ALU, Tag.VAR_LATENCY}),
}
for _op in Opcode:
    CLASS_TAGS.setdefault(_op, frozenset({Tag.ALU}))

FLAG_WRITERS = {Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.OR, Opcode.XOR,
                Opcode.CMP}
FLAG_READERS = {Opcode.CMOV, Opcode.BCC}

STRUCTURAL = {Opcode.BCC, Opcode.JMP, Opcode.FENCE}


class AsmError(Exception):
    """Raised on malformed assembly text or invalid test cases."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        if line:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Reg:
    index: int  # 0-3 for R0-R3, SB for the sandbox base

    def __str__(self):
        return "SB" if self.index == SB else f"R{self.index}"


@dataclass(frozen=True)
class Imm:
    value: int  # 64-bit unsigned

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True)
class MemRef:
    reg: int  # address register index

    def __str__(self):
        return f"[R{self.reg}]"


@dataclass(frozen=True)
class LabelRef:
    name: str

    def __str__(self):
        return self.name


Operand = Reg | Imm | MemRef | LabelRef


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    operands: tuple = ()
    cond: Optional[Cond] = None
    instrumentation: bool = False

    @property
    def tags(self) -> frozenset[Tag]:
        return CLASS_TAGS[self.opcode]

    @property
    def is_load(self) -> bool:
        return self.opcode is Opcode.LOAD

    @property
    def is_store(self) -> bool:
        return self.opcode is Opcode.STORE

    def mem_operand(self) -> Optional[MemRef]:
        for op in self.operands:
            if isinstance(op, MemRef):
                return op
        return None

    def mnemonic(self) -> str:
        if self.opcode is Opcode.BCC:
            return f"B{self.cond.value}"
        if self.opcode is Opcode.CMOV:
            return f"CMOV{self.cond.value}"
        return self.opcode.value

    def render(self) -> str:
        text = self.mnemonic()
        if self.operands:
            text += " " + ", ".join(str(op) for op in self.operands)
        if self.instrumentation and self.opcode not in STRUCTURAL:
            text += " # instrumentation"
        return text


@dataclass
class BasicBlock:
    label: str
    instructions: list[Instruction] = field(default_factory=list)

    def terminator(self) -> Optional[Instruction]:
        if self.instructions and self.instructions[-1].opcode in (
                Opcode.BCC, Opcode.JMP):
            return self.instructions[-1]
        return None


@dataclass
class TestCase:
    blocks: list[BasicBlock]
    entry_label: str
    exit_label: str
    sandbox_offset: int = 0
    generation_seed: int = 0

    def __post_init__(self):
        self._program: Optional[Program] = None

    def __eq__(self, other):
        if not isinstance(other, TestCase):
            return NotImplemented
        return (self.blocks == other.blocks
                and self.entry_label == other.entry_label
                and self.exit_label == other.exit_label
                and self.sandbox_offset == other.sandbox_offset
                and self.generation_seed == other.generation_seed)

    def instructions(self):
        for block in self.blocks:
            yield from block.instructions

    def payload_count(self) -> int:
        return sum(1 for i in self.instructions()
                   if not i.instrumentation and i.opcode not in STRUCTURAL)

    def mem_access_count(self) -> int:
        return sum(1 for i in self.instructions()
                   if i.opcode in (Opcode.LOAD, Opcode.STORE)
                   and not i.instrumentation)

    def program(self) -> "Program":
        if self._program is None:
            self._program = linearize(self)
        return self._program

    def copy(self) -> "TestCase":
        return TestCase(
            blocks=[BasicBlock(b.label, list(b.instructions))
                    for b in self.blocks],
            entry_label=self.entry_label,
            exit_label=self.exit_label,
            sandbox_offset=self.sandbox_offset,
            generation_seed=self.generation_seed,
        )


@dataclass(frozen=True)
class LinearInstr:
    """Instruction with resolved control flow, ready for interpretation."""

    index: int
    block: int
    instr: Instruction
    next_index: int        # fall-through successor (program length = exit)
    target_index: int = -1  # branch target for BCC/JMP


@dataclass
class Program:
    instrs: list[LinearInstr]
    label_to_index: dict[str, int]

    def __len__(self):
        return len(self.instrs)


def linearize(tc: TestCase) -> Program:
    label_to_index: dict[str, int] = {}
    flat: list[tuple[int, Instruction]] = []
    for bi, block in enumerate(tc.blocks):
        label_to_index[block.label] = len(flat)
        for instr in block.instructions:
            flat.append((bi, instr))
    instrs = []
    for idx, (bi, instr) in enumerate(flat):
        target = -1
        if instr.opcode in (Opcode.BCC, Opcode.JMP):
            target = label_to_index[instr.operands[0].name]
        instrs.append(LinearInstr(idx, bi, instr, idx + 1, target))
    return Program(instrs, label_to_index)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _block_index(tc: TestCase) -> dict[str, int]:
    seen = {}
    for i, b in enumerate(tc.blocks):
        if b.label in seen:
            raise AsmError(f"duplicate label '{b.label}'")
        seen[b.label] = i
    return seen


def validate(tc: TestCase) -> None:
    """Check all structural invariants; raises AsmError on the first hit."""
    if not tc.blocks:
        raise AsmError("test case has no blocks")
    labels = _block_index(tc)
    if tc.entry_label not in labels or labels[tc.entry_label] != 0:
        raise AsmError("entry label must name the first block")
    if tc.exit_label not in labels or labels[tc.exit_label] != len(tc.blocks) - 1:
        raise AsmError("exit label must name the last block")
    if not 0 <= tc.sandbox_offset < LINE_SIZE:
        raise AsmError(f"sandbox offset {tc.sandbox_offset} outside [0, 64)")

    linear = [i for b in tc.blocks for i in b.instructions]
    if not linear or linear[0].opcode is not Opcode.FENCE:
        raise AsmError("first instruction must be FENCE")
    if linear[-1].opcode is not Opcode.FENCE:
        raise AsmError("last instruction must be FENCE")

    out_degree = [0] * len(tc.blocks)
    for bi, block in enumerate(tc.blocks):
        for pos, instr in enumerate(block.instructions):
            _validate_instr(instr)
            is_last = pos == len(block.instructions) - 1
            if instr.opcode in (Opcode.BCC, Opcode.JMP) and not is_last:
                raise AsmError(
                    f"branch in the middle of block '{block.label}'")
        term = block.terminator()
        if term is not None:
            name = term.operands[0].name
            if name not in labels:
                raise AsmError(f"unresolved label '{name}'")
            if labels[name] <= bi:
                raise AsmError(
                    f"back edge from '{block.label}' to '{name}'")
            out_degree[bi] += 1
            if term.opcode is Opcode.BCC:
                out_degree[bi] += 1  # fall-through edge
        if term is None or term.opcode is Opcode.BCC:
            # fall-through: permitted only into the exit block
            if bi + 1 < len(tc.blocks):
                if term is None and bi + 1 != len(tc.blocks) - 1:
                    raise AsmError(
                        f"block '{block.label}' falls through but the next "
                        "block is not the exit")
                if term is None:
                    out_degree[bi] += 1
    if out_degree[-1] != 0:
        raise AsmError("exit block must not branch")
    exits = sum(1 for bi, d in enumerate(out_degree)
                if d == 0 and bi != len(tc.blocks) - 1)
    if exits:
        raise AsmError("only the exit block may terminate the program")

    _validate_sandboxing(linear)


def _validate_instr(instr: Instruction) -> None:
    op = instr.opcode
    ops = instr.operands
    mem = [o for o in ops if isinstance(o, MemRef)]
    if op in (Opcode.LOAD, Opcode.STORE):
        if len(mem) != 1:
            raise AsmError(f"{op.value} needs exactly one memory operand")
    elif mem:
        raise AsmError(f"{op.value} cannot take a memory operand")
    if op in (Opcode.BCC, Opcode.JMP):
        if len(ops) != 1 or not isinstance(ops[0], LabelRef):
            raise AsmError(f"{op.value} needs exactly one label operand")
    elif any(isinstance(o, LabelRef) for o in ops):
        raise AsmError(f"{op.value} cannot take a label operand")
    if (op in (Opcode.BCC, Opcode.CMOV)) != (instr.cond is not None):
        raise AsmError(f"condition code mismatch on {op.value}")
    uses_sb = any(isinstance(o, Reg) and o.index == SB for o in ops)
    if uses_sb:
        # SB is read-only and reserved for instrumentation
        if not instr.instrumentation:
            raise AsmError("SB may only appear in instrumentation")
        writes_first = op not in (Opcode.CMP,)
        if writes_first and isinstance(ops[0], Reg) and ops[0].index == SB:
            raise AsmError("SB is read-only")


def _validate_sandboxing(linear: list[Instruction]) -> None:
    """Memory operands must follow the mask/rebase pair unless marked."""
    for idx, instr in enumerate(linear):
        ref = instr.mem_operand()
        if ref is None or instr.instrumentation:
            continue
        ok = False
        if idx >= 2:
            mask, rebase = linear[idx - 2], linear[idx - 1]
            ok = (mask.opcode is Opcode.AND and mask.instrumentation
                  and mask.operands == (Reg(ref.reg), Imm(SANDBOX_MASK))
                  and rebase.opcode is Opcode.ADD and rebase.instrumentation
                  and rebase.operands == (Reg(ref.reg), Reg(SB)))
        if not ok:
            raise AsmError(
                f"memory operand [R{ref.reg}] is not sandbox-masked and the "
                "instruction carries no instrumentation mark")


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_MNEMONICS: dict[str, tuple[Opcode, Optional[Cond]]] = {}
for _op in Opcode:
    if _op is Opcode.BCC:
        for _c in Cond:
            _MNEMONICS[f"B{_c.value}"] = (_op, _c)
    elif _op is Opcode.CMOV:
        for _c in Cond:
            _MNEMONICS[f"CMOV{_c.value}"] = (_op, _c)
    else:
        _MNEMONICS[_op.value] = (_op, None)


def _parse_operand(text: str, line: int, col: int):
    text = text.strip()
    if not text:
        raise AsmError("empty operand", line, col)
    upper = text.upper()
    if upper == "SB":
        return Reg(SB)
    if len(upper) == 2 and upper[0] == "R" and upper[1].isdigit():
        idx = int(upper[1])
        if idx >= NUM_GPRS:
            raise AsmError(f"unknown register '{text}'", line, col)
        return Reg(idx)
    if upper.startswith("[") and upper.endswith("]"):
        inner = upper[1:-1].strip()
        if len(inner) == 2 and inner[0] == "R" and inner[1].isdigit() \
                and int(inner[1]) < NUM_GPRS:
            return MemRef(int(inner[1]))
        raise AsmError(f"bad memory operand '{text}'", line, col)
    neg = text.startswith("-")
    body = text[1:] if neg else text
    try:
        value = int(body, 16) if body.lower().startswith("0x") else int(body)
    except ValueError:
        if text[0].isalpha() or text[0] in "._":
            return LabelRef(text)
        raise AsmError(f"bad operand '{text}'", line, col) from None
    if neg:
        value = -value
    return Imm(value & MASK64)


def assemble(text: str) -> TestCase:
    """Parse canonical assembly text into a validated TestCase."""
    blocks: list[BasicBlock] = []
    seed = 0
    offset = 0
    seen_code = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        comment = ""
        line = raw
        if "#" in line:
            line, comment = line.split("#", 1)
        line = line.strip()
        comment = comment.strip()
        if not line:
            if not seen_code and comment:
                key, _, value = comment.partition(" ")
                if key in ("seed", "offset"):
                    try:
                        num = int(value.strip(), 0)
                    except ValueError:
                        raise AsmError(f"bad {key} directive", lineno, 1) \
                            from None
                    if key == "seed":
                        seed = num & MASK64
                    else:
                        offset = num
            continue
        if line.endswith(":"):
            label = line[:-1].strip()
            if not label or not (label[0].isalpha() or label[0] in "._"):
                raise AsmError(f"bad label '{label}'", lineno, 1)
            blocks.append(BasicBlock(label))
            seen_code = True
            continue
        parts = line.split(None, 1)
        mnemonic = parts[0].upper()
        if mnemonic not in _MNEMONICS:
            raise AsmError(f"unknown opcode '{parts[0]}'", lineno, 1)
        opcode, cond = _MNEMONICS[mnemonic]
        operands = ()
        if len(parts) > 1:
            col = raw.index(parts[1]) + 1
            operands = tuple(_parse_operand(tok, lineno, col)
                             for tok in parts[1].split(","))
        instrumentation = comment == "instrumentation" \
            or opcode in STRUCTURAL
        if not blocks:
            blocks.append(BasicBlock("entry"))
        blocks[-1].instructions.append(Instruction(
            opcode, operands, cond, instrumentation))
        seen_code = True
    if not blocks:
        raise AsmError("no instructions")
    tc = TestCase(blocks, blocks[0].label, blocks[-1].label,
                  sandbox_offset=offset, generation_seed=seed)
    validate(tc)
    return tc


def disassemble(tc: TestCase) -> str:
    """Canonical text form; assemble(disassemble(tc)) == tc."""
    lines = [f"# seed {tc.generation_seed}", f"# offset {tc.sandbox_offset}"]
    for block in tc.blocks:
        lines.append(f"{block.label}:")
        for instr in block.instructions:
            lines.append(instr.render())
    return "\n".join(lines) + "\n"


def empty_test_case() -> TestCase:
    """Smallest valid program: FENCE-framed empty payload."""
    tc = TestCase(
        blocks=[BasicBlock("entry", [Instruction(Opcode.FENCE)]),
                BasicBlock("exit", [Instruction(Opcode.FENCE)])],
        entry_label="entry", exit_label="exit")
    validate(tc)
    return tc
