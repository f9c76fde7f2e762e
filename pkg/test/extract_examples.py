import re
from fractions import Fraction
from pathlib import Path


SECTION_PATTERN = r"""(?m)^### (\w+) kernel, d = (\d+)\n
#### Constants\n
(?:constant \| value
---\|---\n)?((?:.+\n)*)"""


def extract_rows(table):
    m = re.match(r"`(\w+Error)\(\"(.+)\"\)`\n", table)
    if m:
        return (m[1], m[2])
    rows = [[x.strip() for x in row.split("|")] for row in table.strip().split("\n")]
    return {name: float(Fraction(value)) for (name, value) in rows}


def extract_examples(path):
    result = []
    text = path.read_text()
    for (i, match) in enumerate(re.finditer(SECTION_PATTERN, text), 1):
        (kernel, d, expected) = match.groups()
        result.append(
            {
                "i": i,
                "kernel": kernel,
                "d": int(d),
                "expected": extract_rows(expected),
            }
        )
    if len(result) < len(re.findall("(?m)^### ", text)):  # pragma: no cover
        raise ValueError("examples.md has more sections than matches.")
    return result


if __name__ == "__main__":  # pragma: no cover
    for test_data in extract_examples(Path("test/examples.md")):
        print("Section {i}: {kernel} kernel, d = {d}".format(**test_data))
        print("Expected: {expected}".format(**test_data))
