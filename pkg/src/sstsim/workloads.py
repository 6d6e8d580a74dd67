"""Network descriptor loading."""

import json
from pathlib import Path
from typing import Any, Dict, List, Union

from .errors import SchemaError
from .perf_model import LayerSpec, NetworkSpec
from .sparse_format import Precision, SparsityLevel

REQUIRED_LAYER_FIELDS = ("name", "M", "K", "N")
OPTIONAL_LAYER_FIELDS = ("level", "count", "weights", "sparsifiable")


def _layer_from_dict(
    data: Any, index: int, precision: Precision, source: str
) -> LayerSpec:
    where = f"layers[{index}]"
    if not isinstance(data, dict):
        raise SchemaError("layer entry must be an object", source, where)
    unknown = set(data) - set(REQUIRED_LAYER_FIELDS) - set(OPTIONAL_LAYER_FIELDS)
    if unknown:
        raise SchemaError(f"unknown fields {sorted(unknown)}", source, where)
    for key in REQUIRED_LAYER_FIELDS:
        if key not in data:
            raise SchemaError("missing required field", source, f"{where}.{key}")
    for key in ("M", "K", "N", "count"):
        value = data.get(key, 1)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise SchemaError(
                f"expected a positive integer, got {value!r}", source, f"{where}.{key}"
            )
    for key in ("weights", "sparsifiable"):
        if not isinstance(data.get(key, True), bool):
            raise SchemaError(
                f"expected true or false, got {data[key]!r}", source, f"{where}.{key}"
            )
    try:
        level = SparsityLevel.parse(str(data.get("level", "dense")))
    except ValueError as e:
        raise SchemaError(str(e), source, f"{where}.level") from None
    try:
        return LayerSpec(
            name=str(data["name"]),
            M=data["M"],
            K=data["K"],
            N=data["N"],
            level=level,
            count=data.get("count", 1),
            precision=precision,
            weights=data.get("weights", True),
            sparsifiable=data.get("sparsifiable", True),
        )
    except ValueError as e:
        raise SchemaError(str(e), source, where) from None


def network_from_dict(data: Any, source: str = "<dict>") -> NetworkSpec:
    """
    Validate a decoded descriptor and build a NetworkSpec.

    Raises:
        SchemaError: With the offending field path
    """
    if not isinstance(data, dict):
        raise SchemaError("descriptor must be a JSON object", source)
    for key in ("name", "precision", "layers"):
        if key not in data:
            raise SchemaError("missing required field", source, key)
    try:
        precision = Precision.parse(str(data["precision"]))
    except ValueError as e:
        raise SchemaError(str(e), source, "precision") from None
    layers = data["layers"]
    if not isinstance(layers, list) or not layers:
        raise SchemaError("expected a non-empty list", source, "layers")
    return NetworkSpec(
        name=str(data["name"]),
        layers=tuple(
            _layer_from_dict(layer, i, precision, source)
            for i, layer in enumerate(layers)
        ),
        source=str(data.get("source", "")),
    )


def load_network(path: Union[str, Path]) -> NetworkSpec:
    """
    Load a network descriptor JSON file.

    Raises:
        FileNotFoundError: If the file does not exist
        SchemaError: On malformed JSON (with line and column) or bad fields
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Network file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(
                f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}",
                str(path),
            ) from None
    return network_from_dict(data, str(path))


def network_to_dict(network: NetworkSpec) -> Dict[str, Any]:
    """Inverse of ``network_from_dict``."""
    return {
        "name": network.name,
        "precision": network.precision.value,
        "source": network.source,
        "layers": [
            {
                "name": layer.name,
                "M": layer.M,
                "K": layer.K,
                "N": layer.N,
                "level": layer.level.value,
                "count": layer.count,
                "weights": layer.weights,
                "sparsifiable": layer.sparsifiable,
            }
            for layer in network.layers
        ],
    }


class NetworkLibrary:
    """Network descriptors shipped under ``<data_dir>/networks``."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.networks_dir = self.data_dir / "networks"
        self._cache: Dict[str, NetworkSpec] = {}

    def list_networks(self) -> List[str]:
        if not self.networks_dir.exists():
            return []
        return sorted(p.stem for p in self.networks_dir.glob("*.json"))

    def resolve(self, name_or_path: str) -> Path:
        """Accept a file path or the stem of a shipped descriptor."""
        candidate = Path(name_or_path)
        if candidate.suffix == ".json" or candidate.exists():
            return candidate
        return self.networks_dir / f"{name_or_path}.json"

    def get(self, name_or_path: str) -> NetworkSpec:
        path = self.resolve(name_or_path)
        key = str(path)
        if key not in self._cache:
            self._cache[key] = load_network(path)
        return self._cache[key]
