from pathlib import Path

import pytest

__import__("sys").path[0:0] = "."
import src.user_errors as ue
from src.kernel_smoothing import KernelSpec, kernel_constants

from extract_examples import extract_examples

EXAMPLES_MD_PATH = Path(__file__).parent / "examples.md"


@pytest.mark.parametrize(
    "i, kernel, d, expected",
    [d.values() for d in extract_examples(EXAMPLES_MD_PATH)],
)
def test(i, kernel, d, expected):
    if isinstance(expected, tuple):
        (exception_name, message) = expected
        with pytest.raises(getattr(ue, exception_name)) as culprit:
            kernel_constants(KernelSpec.named(kernel), d)
        assert culprit.value.args[0] == message
    else:
        constants = kernel_constants(KernelSpec.named(kernel), d)
        for (name, value) in expected.items():
            print(name, getattr(constants, name), value)
            assert getattr(constants, name) == pytest.approx(value, rel=1e-8)


if __name__ == "__main__":  # pragma: no cover
    pytest.main(["-qq", __import__("sys").argv[0]])
