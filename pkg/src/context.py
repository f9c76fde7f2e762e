import os
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

from src.goodies import config_digest
from src.logger import Logger
from src.printer import Printer
from src.user_errors import ConfigError
from src.user_types import StudyConfig, TestConfig

ENV_PREFIX = "ELGOF_"


def _boolean(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


def _optional(convert: Callable) -> Callable:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else convert(text)

    return parse


def _listed(convert: Callable) -> Callable:
    def parse(text: str) -> Tuple:
        return tuple(convert(item.strip()) for item in text.split(","))

    return parse


def _text(text: str) -> str:
    return text.strip()


CONVERTERS: Dict[str, Callable[[str], Any]] = {
    "alpha": float,
    "boot": int,
    "multiplier": _text,
    "seed": int,
    "h0": _listed(float),
    "h1": _listed(float),
    "h_grid": int,
    "pi_lo": float,
    "pi_hi": float,
    "normalize_pi": _boolean,
    "workers": int,
    "b": _optional(float),
    "d1": int,
    "nodes_per_axis": _optional(int),
    "cv_grid": int,
    "beta": _optional(_listed(float)),
    "c0": float,
    "c1": float,
    "kernel": _text,
    "logs_to_keep": int,
    "name": _text,
    "model": _text,
    "n": _listed(int),
    "a": _listed(float),
    "c": _listed(float),
    "g1": _listed(_text),
    "g2": _listed(_text),
    "reps": int,
}


def read_config_file(path: Path) -> Dict[str, Any]:
    """
    Parse a flat `key = value` file. `#` starts a comment; lists are comma separated.

    Raises:
        ConfigError: with a `path:line:column` diagnostic.
    """
    result = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read the configuration file ({e.strerror}).")
    for (line_number, raw) in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        where = f"{path}:{line_number}"
        (key, equal, value) = line.partition("=")
        if not equal:
            raise ConfigError(f"{where}:1: expected 'key = value'.")
        column = len(key) - len(key.lstrip()) + 1
        key = key.strip()
        if key not in CONVERTERS:
            raise ConfigError(f"{where}:{column}: unknown key '{key}'.")
        column = len(line) - len(value) + len(value) - len(value.lstrip()) + 1
        try:
            result[key] = CONVERTERS[key](value.strip())
        except ValueError as e:
            raise ConfigError(f"{where}:{column}: invalid value for '{key}': {e}.")
    return result


def read_environment(environ: Mapping[str, str]) -> Dict[str, Any]:
    result = {}
    for (key, convert) in CONVERTERS.items():
        name = f"{ENV_PREFIX}{key.upper()}"
        if name in environ:
            try:
                result[key] = convert(environ[name])
            except ValueError as e:
                raise ConfigError(f"Environment variable {name}: {e}.")
    return result


class Context:

    DEFAULT_CONFIG: Dict[str, Any] = {
        "alpha": 0.05,
        "boot": 199,
        "multiplier": "rademacher",
        "seed": 0,
        "h0": (0.22,),
        "h1": (0.28,),
        "h_grid": 4,
        "pi_lo": 0.1,
        "pi_hi": 0.9,
        "normalize_pi": True,
        "workers": -1,  # all cores
        "b": None,
        "d1": 1,
        "nodes_per_axis": None,
        "cv_grid": 20,
        "beta": None,
        "c0": 0.5,  # bounds on the ratios h_l / h
        "c1": 2.0,
        "kernel": "triangular",
        "logs_to_keep": 10,
        "name": "study",
        "model": "model_51",
        "n": (100,),
        "a": (0.0,),
        "c": (0.0,),
        "g1": ("square",),
        "g2": ("exp",),
        "reps": 200,
    }

    def __init__(
        self,
        out_dir: Path = Path("elgof_output"),
        config_path: Optional[Path] = None,
        overrides: Optional[Dict[str, Any]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ):
        """
        Merge the configuration sources and set up the output folder.

        Args:
            out_dir: the folder receiving the reports, the manifest and the logs.
            config_path: an optional `key = value` file.
            overrides: values from the command line; `None` values are ignored.
            environ: the environment, only provided during testing.
        Raises:
            ConfigError: a source is malformed.
        """
        self.config = dict(self.DEFAULT_CONFIG)
        if config_path:
            self.config.update(read_config_file(config_path))
        self.config.update(read_environment(os.environ if environ is None else environ))
        for (key, value) in (overrides or {}).items():
            if key not in CONVERTERS:
                raise ConfigError(f"Unknown configuration key '{key}'.")
            if value is not None:
                self.config[key] = value

        self.workspace = Path(out_dir)
        self.workspace.mkdir(
            parents=True,  # any missing parents of this path are created as needed
            exist_ok=True,  # if the directory already exists, do not raise an exception
        )

        self.logger = Logger(self)

        self.print_ = Printer(self)

    def digest(self) -> str:
        return config_digest(self.config)

    def _single(self, key: str) -> float:
        values = self.config[key]
        if len(values) != 1:
            raise ConfigError(f"A test takes a single value for '{key}', got {len(values)}.")
        return values[0]

    def test_config(self) -> TestConfig:
        c = self.config
        return TestConfig(
            alpha=c["alpha"],
            boot=c["boot"],
            multiplier=c["multiplier"],
            seed=c["seed"],
            h0=self._single("h0"),
            h1=self._single("h1"),
            h_grid=c["h_grid"],
            pi_lo=c["pi_lo"],
            pi_hi=c["pi_hi"],
            normalize_pi=c["normalize_pi"],
            workers=c["workers"],
            b=c["b"],
            d1=c["d1"],
            nodes_per_axis=c["nodes_per_axis"],
            cv_grid=c["cv_grid"],
            beta=c["beta"],
            c0=c["c0"],
            c1=c["c1"],
            kernel=c["kernel"],
        )

    def study_config(self) -> StudyConfig:
        c = self.config
        return StudyConfig(
            name=c["name"],
            model=c["model"],
            n=c["n"],
            h0=c["h0"],
            h1=c["h1"],
            a=c["a"],
            c=c["c"],
            g1=c["g1"],
            g2=c["g2"],
            reps=c["reps"],
            boot=c["boot"],
            h_grid=c["h_grid"],
            alpha=c["alpha"],
            seed=c["seed"],
            workers=c["workers"],
            multiplier=c["multiplier"],
            pi_lo=c["pi_lo"],
            pi_hi=c["pi_hi"],
            normalize_pi=c["normalize_pi"],
            kernel=c["kernel"],
        )
