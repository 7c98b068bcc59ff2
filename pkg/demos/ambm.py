"""Evaluate the a^m b^m sentence on a few strings and print it back."""

from fomc import fom

phi = fom.library_sentence("ambm")
print(fom.pretty(phi))
for w in ("aaaabbbb", "aaabbbbb", "baaaabbb", "ab", "ba"):
    print(f"{w:>10}  {fom.evaluate(phi, w)}")

# the same sentence read from its text form
with open(__file__.replace("ambm.py", "ambm.fom")) as fh:
    parsed = fom.parse(fh.read(), alphabet="ab")
assert all(fom.evaluate(parsed, w) == fom.evaluate(phi, w) for w in ("aabb", "abab", "bbaa"))
