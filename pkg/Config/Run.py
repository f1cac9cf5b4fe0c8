import os
import json
import tomllib
import yaml
from typing import List, Optional
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from Config import Config
from Errors import UsageError


class Hyperparameters(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0)
    gamma: float = Field(gt=0)
    eta: float = Field(gt=0)


class ChainConfig(BaseModel):
    iterations: int = Field(2000, gt=0)
    burn_in: int = Field(1000, ge=0)
    save_every: int = Field(10, gt=0)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_burn_in(self):
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        return self


class AgsConfig(ChainConfig):
    pass


class MgsConfig(ChainConfig):
    epsilon: float = Field(0.01, gt=0)
    adapt_epsilon: bool = False
    target_acceptance: float = Field(0.574, gt=0, lt=1)


class LdaConfig(ChainConfig):
    pass


class VemConfig(BaseModel):
    max_iterations: int = Field(100, gt=0)
    tolerance: float = Field(1e-5, gt=0)
    inner_max_iterations: int = Field(50, gt=0)
    inner_tolerance: float = Field(1e-6, gt=0)
    tau_max_rounds: int = Field(100, gt=0)
    tau_tolerance: float = Field(1e-8, gt=0)
    optimize_hyperparameters: bool = False
    seed: Optional[int] = None


class GibbsEmConfig(BaseModel):
    samples: int = Field(5, ge=1)
    thin: int = Field(10, ge=1)
    burn_in: int = Field(200, ge=0)
    max_iterations: int = Field(30, gt=0)
    tolerance: float = Field(1e-3, gt=0)
    inner_tolerance: float = Field(1e-6, gt=0)
    inner_max_iterations: int = Field(100, gt=0)
    # outer convergence compares means over consecutive windows of this many iterations
    window: int = Field(1, ge=1)
    alpha: float = Field(1.0, gt=0)
    seed: Optional[int] = None


class SynthConfig(BaseModel):
    J: int = Field(gt=0)
    K: int = Field(gt=0)
    V: int = Field(gt=0)
    docs_per_collection: int = Field(gt=0)
    words_per_document: int = Field(gt=0)
    alpha: float = Field(gt=0)
    gamma: float = Field(gt=0)
    eta: float = Field(gt=0)
    seed: Optional[int] = None
    poisson_length: bool = False
    beta: Optional[List[List[float]]] = None
    pi: Optional[List[List[float]]] = None

    @property
    def hyperparameters(self):
        return Hyperparameters(alpha=self.alpha, gamma=self.gamma, eta=self.eta)


def build(model_class, **values):
    """Instantiate a settings model, reporting bad values as a usage error."""
    try:
        return model_class(**{k: v for k, v in values.items() if v is not None})
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in error['loc']) or model_class.__name__}: {error['msg']}"
            for error in e.errors()
        )
        raise UsageError(f"Invalid {model_class.__name__}: {problems}") from e


def read_settings_file(path):
    if not os.path.exists(path):
        raise UsageError(f"Config file {path} does not exist")
    extension = os.path.splitext(path)[1].lower()
    try:
        if extension == ".toml":
            with open(path, "rb") as f:
                return tomllib.load(f)
        with open(path, "r", encoding="utf-8") as f:
            if extension in (".yaml", ".yml"):
                return yaml.safe_load(f) or {}
            return json.load(f)
    except (tomllib.TOMLDecodeError, yaml.YAMLError, json.JSONDecodeError) as e:
        raise UsageError(f"Cannot parse config file {path}: {e}") from e


class RunSettings(Config):
    """Settings for one command: config file values overridden by flags."""

    def __init__(self, config_file=None):
        super().__init__()
        self.CONFIG_FILE = config_file
        self.FILE_SETTINGS = read_settings_file(config_file) if config_file else {}
        if not isinstance(self.FILE_SETTINGS, dict):
            raise UsageError(f"Config file {config_file} must hold a mapping")
        self.SETTINGS = dict(self.FILE_SETTINGS)

    def merge(self, **flags):
        for key, value in flags.items():
            if value is not None:
                self.SETTINGS[key] = value
        return self.SETTINGS

    def get(self, key, default=None):
        value = self.SETTINGS.get(key)
        return default if value is None else value

    def section(self, model_class):
        """The subset of settings a model class declares, validated."""
        values = {k: v for k, v in self.SETTINGS.items() if k in model_class.model_fields}
        return build(model_class, **values)

    def save(self, directory, file_name="settings.json"):
        with open(os.path.join(directory, file_name), "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.SETTINGS, f, indent=2, sort_keys=True, default=str)
            f.write("\n")
