import re
from pathlib import Path
from typing import Dict, List, Tuple, Union

from utils.errors import ConfigurationError

# section.key = value
LINE_PATTERN = re.compile(r'^([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$')


def parse_config_text(text: str) -> Dict[str, Dict[str, str]]:
    """
    Parse `section.key = value` lines into a nested mapping of raw strings.

    Args:
        text: Configuration file contents

    Returns:
        Mapping section -> key -> raw value (whitespace stripped)

    Raises:
        ConfigurationError: On a malformed or duplicated line (carries the line number)
    """
    sections: Dict[str, Dict[str, str]] = {}

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue

        match = LINE_PATTERN.match(line)
        if not match:
            raise ConfigurationError(f"expected 'section.key = value', got {raw_line.strip()!r}", line=line_no)

        section, key, value = match.group(1), match.group(2), match.group(3).strip()
        if not value:
            raise ConfigurationError(f"empty value for {section}.{key}", line=line_no)

        entries = sections.setdefault(section, {})
        if key in entries:
            raise ConfigurationError(f"duplicate key {section}.{key}", line=line_no)
        entries[key] = value

    return sections


def parse_config_file(path: Union[str, Path]) -> Dict[str, Dict[str, str]]:
    """Read and parse a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}")
    return parse_config_text(text)


def split_numbers(value: str) -> List[float]:
    """Split a comma/whitespace separated list of numbers."""
    tokens = [tok for tok in re.split(r"[,\s]+", value.strip().strip("()[]")) if tok]
    try:
        return [float(tok) for tok in tokens]
    except ValueError:
        raise ConfigurationError(f"expected a list of numbers, got {value!r}")


def split_pairs(value: str) -> List[Tuple[float, float]]:
    """Split `a b; c d; ...` (or `a, b; c, d`) into number pairs."""
    pairs = []
    for entry in value.split(";"):
        if not entry.strip():
            continue
        numbers = split_numbers(entry)
        if len(numbers) != 2:
            raise ConfigurationError(f"expected two numbers per entry, got {entry.strip()!r}")
        pairs.append((numbers[0], numbers[1]))
    return pairs


def split_names(value: str) -> List[str]:
    """Split a comma separated list of identifiers."""
    return [name.strip() for name in value.split(",") if name.strip()]
