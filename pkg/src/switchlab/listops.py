"""ListOps: nested list-operation expressions with single-digit answers.

Expressions are prefix-operator lists like ``( MAX 2 ( SM 9 9 9 ) 3 )``.
Operators: MAX, MIN, MED (lower median), SM (sum modulo 10). Every emitted
example's label is produced by the same evaluator that tests re-run, so
generator/evaluator agreement is exact by construction and re-checkable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .moe import ConfigError
from .rng import rng_for

PAD = 0
TOKENS = ["<pad>", "(", ")", "MAX", "MIN", "MED", "SM",
          "0", "1", "2", "3", "4", "5", "6", "7", "8", "9"]
TOKEN_ID = {t: i for i, t in enumerate(TOKENS)}
VOCAB_SIZE = len(TOKENS)
OPERATORS = ("MAX", "MIN", "MED", "SM")

DEFAULT_MAX_LEN = 64
MIN_ARGS = 2


@dataclass
class ListOpsExample:
    tokens: list[int]          # token ids, no padding
    label: int                 # 0-9, evaluator output
    depth: int
    length: int


def apply_op(op: str, args: list[int]) -> int:
    if not args:
        raise ConfigError(f"operator {op} needs at least one argument")
    if op == "MAX":
        return max(args)
    if op == "MIN":
        return min(args)
    if op == "MED":
        return sorted(args)[(len(args) - 1) // 2]   # lower median
    if op == "SM":
        return sum(args) % 10
    raise ConfigError(f"unknown operator '{op}'")


def eval_tokens(tokens: list[str]) -> int:
    """Evaluate a well-formed token string; raises on malformed input."""
    pos = 0

    def parse() -> int:
        nonlocal pos
        if pos >= len(tokens):
            raise ConfigError("unexpected end of expression")
        tok = tokens[pos]
        pos += 1
        if tok.isdigit():
            return int(tok)
        if tok != "(":
            raise ConfigError(f"expected digit or '(', got '{tok}'")
        if pos >= len(tokens) or tokens[pos] not in OPERATORS:
            raise ConfigError("expected operator after '('")
        op = tokens[pos]
        pos += 1
        args = []
        while pos < len(tokens) and tokens[pos] != ")":
            args.append(parse())
        if pos >= len(tokens):
            raise ConfigError("missing closing ')'")
        pos += 1
        return apply_op(op, args)

    result = parse()
    if pos != len(tokens):
        raise ConfigError("trailing tokens after expression")
    return result


def eval_ids(ids) -> int:
    return eval_tokens([TOKENS[i] for i in ids if i != PAD])


def _sample_tree(rng: np.random.Generator, depth_left: int, max_args: int) -> tuple[list[str], int]:
    """Sample (token strings, depth) of one subexpression."""
    if depth_left == 0 or rng.random() < 0.35:
        return [str(rng.integers(10))], 0
    op = OPERATORS[rng.integers(len(OPERATORS))]
    n_args = int(rng.integers(MIN_ARGS, max_args + 1))
    toks = ["(", op]
    depth = 0
    for _ in range(n_args):
        sub, d = _sample_tree(rng, depth_left - 1, max_args)
        toks.extend(sub)
        depth = max(depth, d)
    toks.append(")")
    return toks, depth + 1


def gen_listops(n: int, max_depth: int = 3, max_args: int = 5, seed: int = 0,
                max_len: int = DEFAULT_MAX_LEN) -> list[ListOpsExample]:
    """Deterministically generate n verified examples.

    Root expressions are always operator applications (never bare digits);
    samples longer than ``max_len`` tokens are rejected and redrawn.
    """
    if max_depth < 1:
        raise ConfigError("max_depth must be >= 1")
    if not (MIN_ARGS <= max_args):
        raise ConfigError(f"max_args must be >= {MIN_ARGS}")
    if max_len < MIN_ARGS + 3:
        raise ConfigError("max_len leaves no room for one operator application")
    out = []
    for i in range(n):
        rng = rng_for(seed, "listops", i)
        while True:
            op = OPERATORS[rng.integers(len(OPERATORS))]
            n_args = int(rng.integers(MIN_ARGS, max_args + 1))
            toks = ["(", op]
            depth = 0
            for _ in range(n_args):
                sub, d = _sample_tree(rng, max_depth - 1, max_args)
                toks.extend(sub)
                depth = max(depth, d)
            toks.append(")")
            if len(toks) <= max_len:
                break
        label = eval_tokens(toks)
        out.append(ListOpsExample(tokens=[TOKEN_ID[t] for t in toks],
                                  label=label, depth=depth + 1, length=len(toks)))
    return out


def pad_batch(examples: list[ListOpsExample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad a batch; returns (tokens [B, L], labels [B], mask [B, L])."""
    if not examples:
        raise ConfigError("empty batch")
    L = max(e.length for e in examples)
    tokens = np.full((len(examples), L), PAD, dtype=np.int64)
    mask = np.zeros((len(examples), L), dtype=bool)
    labels = np.empty(len(examples), dtype=np.int64)
    for b, e in enumerate(examples):
        tokens[b, :e.length] = e.tokens
        mask[b, :e.length] = True
        labels[b] = e.label
    return tokens, labels, mask


def to_line(e: ListOpsExample) -> str:
    return " ".join(TOKENS[i] for i in e.tokens) + "\t" + str(e.label)


def from_line(line: str) -> ListOpsExample:
    text, label = line.rstrip("\n").split("\t")
    toks = text.split()
    ids = [TOKEN_ID[t] for t in toks]
    depth = 0
    cur = 0
    for t in toks:
        if t == "(":
            cur += 1
            depth = max(depth, cur)
        elif t == ")":
            cur -= 1
    return ListOpsExample(tokens=ids, label=int(label), depth=depth, length=len(ids))
