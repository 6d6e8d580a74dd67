"""Published reference values and default platforms."""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .errors import SchemaError
from .fabric import Capability, FabricConfig
from .perf_model import PlatformSpec
from .sparse_format import Precision, SparsityLevel

logger = logging.getLogger(__name__)

REFERENCE_FILE = "reference_values.yaml"

ENV_DRAM_BW = "SSTSIM_DRAM_BW"
ENV_FREQUENCY = {
    ("sst", Precision.INT8): "SSTSIM_FREQ_INT8_HZ",
    ("sst", Precision.BFLOAT16): "SSTSIM_FREQ_BF16_HZ",
    ("sdt_gio", Precision.INT8): "SSTSIM_BASELINE_FREQ_INT8_HZ",
    ("sdt_gio", Precision.BFLOAT16): "SSTSIM_BASELINE_FREQ_BF16_HZ",
}

SST_DESIGN = "sst"
BASELINE_DESIGN = "sdt_gio"


def _per_precision(values: Dict[str, Any]) -> Dict[Precision, float]:
    return {Precision.parse(key): float(value) for key, value in values.items()}


@dataclass
class DesignReference:
    """Published figures of one GEMM design."""

    name: str
    source: str
    capability: Capability
    level: SparsityLevel
    matched_b_capacity: bool
    frequency_hz: Dict[Precision, float]
    brams: Dict[Precision, int]
    throughput_tops: Dict[Precision, float]
    area: Dict[Precision, float]
    area_efficiency: Dict[Precision, float]


@dataclass
class NetworkReference:
    """Published speedup and weight reduction of one network configuration."""

    network: str
    level: SparsityLevel
    speedup: float
    weight_reduction: Dict[Precision, float]
    gate: bool = True


@dataclass
class PlatformOverrides:
    """Values that replace catalog defaults (from CLI flags)."""

    Y: Optional[int] = None
    X: Optional[int] = None
    dram_bw: Optional[float] = None
    frequency_hz: Dict[Precision, float] = field(default_factory=dict)
    overlap: bool = True


class ReferenceCatalog:
    """Loads ``reference_values.yaml`` from a data directory."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.reference_file = self.data_dir / REFERENCE_FILE
        self._data: Dict[str, Any] = {}
        self._designs: Dict[str, DesignReference] = {}
        self._load()

    def _load(self) -> None:
        if not self.reference_file.exists():
            raise FileNotFoundError(
                f"Reference values file not found: {self.reference_file}"
            )
        with open(self.reference_file, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
        if not isinstance(data, dict):
            raise SchemaError("expected a mapping", str(self.reference_file))
        for key in ("version", "platform", "compression", "designs", "networks"):
            if key not in data:
                raise SchemaError("missing section", str(self.reference_file), key)
        self._data = data
        try:
            for name, entry in data["designs"].items():
                self._designs[name] = DesignReference(
                    name=name,
                    source=entry.get("source", ""),
                    capability=Capability(entry["capability"]),
                    level=SparsityLevel.parse(entry["level"]),
                    matched_b_capacity=bool(entry.get("matched_b_capacity", False)),
                    frequency_hz={
                        p: mhz * 1e6
                        for p, mhz in _per_precision(entry["frequency_mhz"]).items()
                    },
                    brams={
                        p: int(v) for p, v in _per_precision(entry["brams"]).items()
                    },
                    throughput_tops=_per_precision(entry["throughput_tops"]),
                    area=_per_precision(entry["area"]),
                    area_efficiency=_per_precision(entry["area_efficiency"]),
                )
        except (KeyError, ValueError) as e:
            raise SchemaError(f"bad design entry: {e}", str(self.reference_file))

    @property
    def version(self) -> int:
        return int(self._data["version"])

    def section(self, name: str) -> Dict[str, Any]:
        """Raw mapping of one top-level section."""
        value = self._data.get(name)
        if not isinstance(value, dict):
            raise SchemaError("missing section", str(self.reference_file), name)
        return value

    @property
    def throughput_tolerance(self) -> float:
        return float(self._data.get("throughput_tolerance_rel", 0.005))

    def designs(self) -> List[DesignReference]:
        return list(self._designs.values())

    def design(self, name: str) -> DesignReference:
        if name not in self._designs:
            raise ValueError(f"Unknown design '{name}'")
        return self._designs[name]

    def compression_ratio(self, level: SparsityLevel, precision: Precision) -> float:
        for row in self.section("compression")["ratios"]:
            if (
                SparsityLevel.parse(row["level"]) is level
                and Precision.parse(row["precision"]) is precision
            ):
                return float(row["value"])
        raise ValueError(f"No published ratio for {level.value}/{precision.value}")

    def network_references(self) -> List[NetworkReference]:
        return [
            NetworkReference(
                network=row["network"],
                level=SparsityLevel.parse(row["level"]),
                speedup=float(row["speedup"]),
                weight_reduction=_per_precision(row["weight_reduction"]),
                gate=bool(row.get("gate", True)),
            )
            for row in self.section("networks")["rows"]
        ]

    def fabric(
        self,
        design: str,
        precision: Precision,
        overrides: Optional[PlatformOverrides] = None,
    ) -> FabricConfig:
        """Fabric of a published design at the default (or overridden) size."""
        ref = self.design(design)
        platform = self.section("platform")
        overrides = overrides or PlatformOverrides()
        return FabricConfig(
            Y=overrides.Y or int(platform["Y"]),
            X=overrides.X or int(platform["X"]),
            precision=precision,
            mode_capability=ref.capability,
            bank_depth=int(platform["bank_depth"]),
            frequency_hz=ref.frequency_hz.get(precision),
            matched_b_capacity=ref.matched_b_capacity,
        )

    def platform(
        self,
        design: str,
        precision: Precision = Precision.INT8,
        overrides: Optional[PlatformOverrides] = None,
    ) -> PlatformSpec:
        """
        Platform for a design: catalog values, then environment, then flags.

        Raises:
            ValueError: If an environment override is not a positive number
        """
        overrides = overrides or PlatformOverrides()
        ref = self.design(design)
        frequencies = dict(ref.frequency_hz)
        for (env_design, env_precision), var in ENV_FREQUENCY.items():
            if env_design == design and var in os.environ:
                frequencies[env_precision] = _env_float(var)
        frequencies.update(overrides.frequency_hz)

        dram_bw = float(self.section("platform")["dram_bw_bytes_per_s"])
        if ENV_DRAM_BW in os.environ:
            dram_bw = _env_float(ENV_DRAM_BW)
        if overrides.dram_bw is not None:
            dram_bw = overrides.dram_bw

        return PlatformSpec(
            name=design,
            fabric=self.fabric(design, precision, overrides),
            dram_bw_bytes_per_s=dram_bw,
            frequencies=frequencies,
            overlap=overrides.overlap,
        )

    def sst_platform(
        self,
        precision: Precision = Precision.INT8,
        overrides: Optional[PlatformOverrides] = None,
    ) -> PlatformSpec:
        return self.platform(SST_DESIGN, precision, overrides)

    def baseline_platform(
        self,
        precision: Precision = Precision.INT8,
        overrides: Optional[PlatformOverrides] = None,
    ) -> PlatformSpec:
        return self.platform(BASELINE_DESIGN, precision, overrides)


def _env_float(var: str) -> float:
    raw = os.environ[var]
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{var}={raw!r} is not a number") from None
    if value <= 0:
        raise ValueError(f"{var} must be positive, got {value}")
    logger.info("Using %s=%s from the environment", var, raw)
    return value
