@dec
def f(a, *b, **c) -> "x":  # note
    s = f"{a!r:>10}" + r'\n' + b"\x00"
    return 0x1F + 1_000j + 1e-3 \
        + (yield)
