#request/config models

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from slv_core.model import DerivedConstants, ModelSpec

Command = Literal[
    "derive", "classify", "fixed-points", "simulate", "portrait",
    "periodic-orbit", "construct-multiplicity", "verify",
]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Command
    model_path: Path
    output_dir: Optional[Path] = None
    tol: Optional[float] = Field(default=None, gt=0)
    rng_seed: int = 0
    k: Optional[int] = Field(default=None, ge=1)
    n: Optional[int] = Field(default=None, ge=1)
    x0: Optional[Tuple[float, float, float]] = None
    workers: int = Field(default=1, ge=1)
    only: List[str] = Field(default_factory=list)
    verbose: bool = False


class DeriveDocument(BaseModel):
    """Output of `derive`; accepted back as a model file."""

    model_config = ConfigDict(extra="forbid")

    model: ModelSpec
    constants: DerivedConstants
    diagnostics: Optional[Dict[str, Any]] = None
