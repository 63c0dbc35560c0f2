"""Architectural input generation with bounded entropy.

Values come from Marsaglia's xorshift32 generator (shifts 13/17/5),
chosen because its reference sequence is published and trivially
reimplementable, so recorded traces stay reproducible across
implementations.  Every produced value is `prng32() mod 2^entropy_bits`,
zero-extended to the target width.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .isa import NUM_GPRS, SANDBOX_PAGE
from .rng import derive_seed

WORD_BYTES = 8
PAGE_WORDS = SANDBOX_PAGE // WORD_BYTES
MASK32 = 0xFFFFFFFF


def xorshift32(state: int) -> int:
    """One step of xorshift32; state must be nonzero."""
    state &= MASK32
    state ^= (state << 13) & MASK32
    state ^= state >> 17
    state ^= (state << 5) & MASK32
    return state


class _Stream:
    def __init__(self, seed: int, entropy_bits: int):
        self._state = seed & MASK32 or 1  # zero is a fixed point
        self._mask = (1 << entropy_bits) - 1

    def next_word(self) -> int:
        self._state = xorshift32(self._state)
        return self._state & self._mask


@dataclass
class Input:
    """Initial architectural state: registers, flags, sandbox memory."""

    regs: tuple[int, int, int, int]
    flags: int
    mem: bytes                       # pages * 4096 bytes
    input_seed: int = 0
    entropy_bits: int = 0
    pages: int = 1

    def words(self):
        for off in range(0, len(self.mem), WORD_BYTES):
            yield int.from_bytes(self.mem[off:off + WORD_BYTES], "little")


def make_input(seed: int, entropy_bits: int, pages: int = 1) -> Input:
    if not 1 <= entropy_bits <= 32:
        raise ValueError(f"entropy_bits {entropy_bits} outside 1..32")
    if pages not in (1, 2):
        raise ValueError("pages must be 1 or 2")
    stream = _Stream(seed, entropy_bits)
    regs = tuple(stream.next_word() for _ in range(NUM_GPRS))
    flags = stream.next_word() & 0b111
    mem = bytearray()
    for _ in range(pages * PAGE_WORDS):
        mem += stream.next_word().to_bytes(WORD_BYTES, "little")
    return Input(regs, flags, bytes(mem), seed & MASK32, entropy_bits, pages)


def generate_inputs(n: int, entropy_bits: int, seed: int,
                    pages: int = 1) -> list[Input]:
    """n independent inputs, deterministic in seed."""
    if n < 1:
        raise ValueError("need at least one input")
    return [make_input(derive_seed(seed, i) & MASK32, entropy_bits, pages)
            for i in range(n)]


# ---------------------------------------------------------------------------
# .input serialization (binary-free hex dump)
# ---------------------------------------------------------------------------

_MEM_LINE = 64  # bytes per hex line


def dump_input(inp: Input) -> str:
    lines = [
        f"seed {inp.input_seed:#010x}",
        f"entropy {inp.entropy_bits}",
        f"pages {inp.pages}",
        f"flags {inp.flags:#x}",
    ]
    for i, r in enumerate(inp.regs):
        lines.append(f"r{i} {r:#x}")
    for off in range(0, len(inp.mem), _MEM_LINE):
        chunk = inp.mem[off:off + _MEM_LINE]
        lines.append(f"mem {off:#06x} {chunk.hex()}")
    return "\n".join(lines) + "\n"


def load_input(text: str) -> Input:
    regs = [0] * NUM_GPRS
    flags = seed = 0
    entropy = 1
    pages = 1
    chunks: dict[int, bytes] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "seed":
            seed = int(rest, 0)
        elif key == "entropy":
            entropy = int(rest)
        elif key == "pages":
            pages = int(rest)
        elif key == "flags":
            flags = int(rest, 0)
        elif key.startswith("r") and key[1:].isdigit():
            regs[int(key[1:])] = int(rest, 0)
        elif key == "mem":
            off_text, _, hexdata = rest.partition(" ")
            chunks[int(off_text, 0)] = bytes.fromhex(hexdata.strip())
        else:
            raise ValueError(f"bad .input line: {raw!r}")
    mem = bytearray(pages * SANDBOX_PAGE)
    for off, chunk in chunks.items():
        mem[off:off + len(chunk)] = chunk
    return Input(tuple(regs), flags, bytes(mem), seed, entropy, pages)
