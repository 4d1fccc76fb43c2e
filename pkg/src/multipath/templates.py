"""Access to the packaged prompt strings.

The files under prompts/ are byte-exact interface artifacts (tests compare
their content literally), so they are read verbatim with no stripping.
"""

from __future__ import annotations

from functools import cache
from importlib import resources

CRITIC = "critic.txt"
IOE = "ioe.txt"
FEEDBACK_MATH = "feedback_math.txt"
FEEDBACK_CODE = "feedback_code.txt"
MATH_TEMPLATE = "math_template.txt"


@cache
def load_prompt(name: str) -> str:
    return resources.files("multipath").joinpath("prompts", name).read_text(encoding="utf-8")
