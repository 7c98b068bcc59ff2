"""Where uniform attention 1/n stops being representable, for a few float formats."""

from fractions import Fraction

from fomc.pfloat import PrecisionSpec, min_positive, round_fraction

formats = {"p=(2,2)": (2, 2), "float8-like": (5, 4), "float16-like": (12, 5), "bfloat16-like": (8, 8)}
for name, (pm, pe) in formats.items():
    spec = PrecisionSpec(pm, pe)
    tokens = 1 / min_positive(spec).to_fraction()
    # smallest n whose 1/n rounds to zero
    lo, hi = 1, 1
    while not round_fraction(Fraction(1, hi), spec).is_zero:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if round_fraction(Fraction(1, mid), spec).is_zero:
            hi = mid
        else:
            lo = mid
    print(f"{name:>14}  threshold 2^{int(tokens).bit_length() - 1} tokens, 1/n underflows from n={hi}")
