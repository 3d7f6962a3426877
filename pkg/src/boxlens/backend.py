"""Black-box classifier wrapper: probability prediction plus activation taps.

Models are Keras files (``.keras`` or legacy ``.h5``) loaded read-only. The
wrapper exposes exactly two views of the network: class probabilities and the
activation tensors of named layers. Keras/TensorFlow are imported lazily so
the numeric modules stay cheap to import.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .images import bilinear_resize, ensure_hwc

logger = logging.getLogger(__name__)

PROBABILITY_SUM_TOLERANCE = 1e-5


class ModelLoadError(Exception):
    """The model file exists but cannot be used (unparseable or unsuitable)."""


class UnknownLayerError(Exception):
    """A requested layer name is not in the model's layer catalog."""


@dataclass(frozen=True)
class Preprocessing:
    """How raw [0, 1] images are mapped to the model's input space.

    Pixels are resized to the model input resolution, optionally rescaled to
    byte range and reordered to BGR, then shifted/scaled per channel:
    ``(x - mean) / std``.
    """

    resize: str = "bilinear"
    value_range: str = "unit"  # "unit": keep [0, 1]; "byte": scale to [0, 255]
    channel_order: str = "rgb"
    mean: tuple[float, ...] = (0.0,)
    std: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.resize not in ("bilinear", "nearest"):
            raise ValueError(f"unsupported resize policy: {self.resize!r}")
        if self.value_range not in ("unit", "byte"):
            raise ValueError(f"unsupported value_range: {self.value_range!r}")
        if self.channel_order not in ("rgb", "bgr"):
            raise ValueError(f"unsupported channel_order: {self.channel_order!r}")
        if any(s == 0 for s in self.std):
            raise ValueError("std entries must be nonzero")

    def apply(self, image: np.ndarray, input_shape: tuple[int, int, int]) -> np.ndarray:
        """Preprocess one HWC image in [0, 1] to the model's (h, w, c) input tensor."""
        h, w, c = input_shape
        arr = ensure_hwc(image)
        if arr.shape[2] != c:
            raise ValueError(f"image has {arr.shape[2]} channels, model expects {c}")
        if arr.shape[:2] != (h, w):
            if self.resize == "bilinear":
                arr = bilinear_resize(arr, (h, w))
            else:
                rows = np.minimum(
                    np.rint(np.linspace(0, arr.shape[0] - 1, h)).astype(np.intp),
                    arr.shape[0] - 1,
                )
                cols = np.minimum(
                    np.rint(np.linspace(0, arr.shape[1] - 1, w)).astype(np.intp),
                    arr.shape[1] - 1,
                )
                arr = arr[rows][:, cols]
        if self.value_range == "byte":
            arr = arr * 255.0
        if self.channel_order == "bgr":
            arr = arr[:, :, ::-1]
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        return ((arr - mean) / std).astype(np.float32)

    def to_dict(self) -> dict:
        return {
            "resize": self.resize,
            "value_range": self.value_range,
            "channel_order": self.channel_order,
            "mean": list(self.mean),
            "std": list(self.std),
        }


@dataclass(frozen=True)
class LayerInfo:
    name: str
    output_shape: tuple[int, ...]  # without the batch dimension
    spatial: bool
    kind: str  # "convolutional" | "other"


@dataclass
class PredictionVector:
    """Per-class probability distribution emitted by the black box."""

    probabilities: np.ndarray
    class_names: list[str] | None = None

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=np.float64).reshape(-1)
        if probs.size < 2:
            raise ValueError("a prediction needs at least 2 classes")
        if (probs < 0).any():
            raise ValueError("probabilities must be non-negative")
        if abs(float(probs.sum()) - 1.0) > PROBABILITY_SUM_TOLERANCE:
            raise ValueError(f"probabilities sum to {probs.sum():.8f}, expected 1")
        if self.class_names is not None and len(self.class_names) != probs.size:
            raise ValueError("class_names length does not match the class count")
        self.probabilities = probs

    @property
    def class_count(self) -> int:
        return int(self.probabilities.size)

    def name_of(self, index: int) -> str:
        if self.class_names is not None:
            return self.class_names[index]
        return f"class_{index}"

    def top(self, n: int = 5) -> list[tuple[int, float]]:
        """The n highest-probability (class index, probability) pairs, best first."""
        order = np.argsort(-self.probabilities, kind="stable")[:n]
        return [(int(i), float(self.probabilities[i])) for i in order]


@dataclass
class ActivationVolume:
    """One layer's activation tensor, spatially laid out as (h, w, c)."""

    layer_name: str
    data: np.ndarray
    source_layer_kind: str = "other"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"activation data must be (h, w, c), got shape {data.shape}")
        self.data = data

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])


@dataclass
class ClassifierModel:
    """A loaded classifier treated as a black box with named activation taps.

    Inference is guarded by a lock: the underlying runtime is not guaranteed
    thread-safe, so concurrent predict/activations calls are serialized
    internally and are safe from any number of threads.
    """

    model_source: Path
    input_shape: tuple[int, int, int]
    class_count: int
    layer_catalog: list[LayerInfo]
    preprocessing: Preprocessing
    _net: object = field(repr=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)
    _tap_models: dict = field(default_factory=dict, repr=False)
    prediction_count: int = 0

    def __post_init__(self):
        names = [info.name for info in self.layer_catalog]
        if len(set(names)) != len(names):
            raise ModelLoadError("layer names in the catalog must be unique")
        if self.class_count < 2:
            raise ModelLoadError(f"need at least 2 classes, got {self.class_count}")

    @property
    def layer_names(self) -> list[str]:
        return [info.name for info in self.layer_catalog]

    def layer(self, name: str) -> LayerInfo:
        for info in self.layer_catalog:
            if info.name == name:
                return info
        raise UnknownLayerError(f"unknown layer: {name!r}")

    def spatial_layers(self) -> list[LayerInfo]:
        return [info for info in self.layer_catalog if info.spatial]

    def default_hypercolumn_layers(self, count: int = 10) -> list[str]:
        """The last ``count`` spatially-eligible layers, in network order."""
        spatial = self.spatial_layers()
        return [info.name for info in spatial[-count:]]

    def predict(self, image: np.ndarray) -> PredictionVector:
        """Class probabilities for one image; deterministic for fixed weights and input.

        Outputs whose sum drifts beyond the tolerance are renormalized with a
        warning (some exported models softmax in low precision).
        """
        x = self.preprocessing.apply(image, self.input_shape)[None, ...]
        with self._lock:
            raw = np.asarray(self._net(x, training=False), dtype=np.float64)[0]
            self.prediction_count += 1
        if raw.min() < -1e-6:
            raise ModelLoadError(
                f"model output is not a probability distribution (min {raw.min():.3g})"
            )
        raw = np.clip(raw, 0.0, None)
        total = float(raw.sum())
        if abs(total - 1.0) > PROBABILITY_SUM_TOLERANCE:
            logger.warning("prediction sums to %.8f; renormalizing", total)
            raw = raw / total
        return PredictionVector(raw)

    def activations(
        self, image: np.ndarray, layers: list[str], allow_non_spatial: bool = False
    ) -> list[ActivationVolume]:
        """Activation volumes for the named layers, in request order.

        Values are the ones the network computes during predict on the same
        image (shared weights, shared graph). Non-spatial layers are refused
        unless allow_non_spatial is set, in which case their vector is
        returned as a broadcastable 1x1xc volume.
        """
        if not layers:
            raise ValueError("no layers requested")
        unknown = [name for name in layers if name not in self.layer_names]
        if unknown:
            raise UnknownLayerError(f"unknown layer(s): {', '.join(repr(n) for n in unknown)}")
        if not allow_non_spatial:
            flat = [name for name in layers if not self.layer(name).spatial]
            if flat:
                raise ValueError(
                    f"non-spatial layer(s) requested: {', '.join(flat)}; "
                    "enable broadcasting to include them"
                )

        x = self.preprocessing.apply(image, self.input_shape)[None, ...]
        key = tuple(layers)
        with self._lock:
            tap = self._tap_models.get(key)
            if tap is None:
                import keras

                tap = keras.Model(
                    self._net.inputs,
                    [self._net.get_layer(name).output for name in layers],
                )
                self._tap_models[key] = tap
            outputs = tap(x, training=False)
        if not isinstance(outputs, (list, tuple)):
            outputs = [outputs]

        volumes = []
        for name, out in zip(layers, outputs):
            arr = np.asarray(out, dtype=np.float64)[0]
            if arr.ndim == 1:
                arr = arr[None, None, :]
            elif arr.ndim != 3:
                raise ValueError(f"layer {name!r} has unsupported rank {arr.ndim + 1}")
            volumes.append(
                ActivationVolume(layer_name=name, data=arr, source_layer_kind=self.layer(name).kind)
            )
        return volumes


def _catalog_from(net) -> list[LayerInfo]:
    catalog = []
    for layer in net.layers:
        try:
            shape = tuple(int(d) for d in layer.output.shape[1:] if d is not None)
        except (AttributeError, ValueError):
            continue  # multi-output or shapeless layers are not catalog material
        spatial = len(shape) == 3
        kind = "convolutional" if "conv" in type(layer).__name__.lower() else "other"
        catalog.append(LayerInfo(name=layer.name, output_shape=shape, spatial=spatial, kind=kind))
    return catalog


def load_model(source: str | Path, preprocessing: Preprocessing = Preprocessing()) -> ClassifierModel:
    """Load a serialized Keras classifier as a read-only black box.

    Raises FileNotFoundError for a missing path, ModelLoadError for files
    that do not parse or networks the explanation pipeline cannot use (wrong
    input rank, fewer than 2 classes, no spatial layers).
    """
    source = Path(source)
    if not source.is_file():
        raise FileNotFoundError(f"model file not found: {source}")

    import keras

    try:
        net = keras.models.load_model(source, compile=False)
    except Exception as exc:
        raise ModelLoadError(f"cannot parse model file {source}: {exc}") from exc

    if not getattr(net, "inputs", None) or len(net.inputs) != 1:
        raise ModelLoadError("expected a model with a single image input")
    in_shape = tuple(net.inputs[0].shape)
    if len(in_shape) != 4 or any(d is None for d in in_shape[1:]):
        raise ModelLoadError(f"expected a fixed (batch, h, w, c) input, got {in_shape}")
    out_shape = tuple(net.outputs[0].shape)
    if len(out_shape) != 2 or out_shape[1] is None:
        raise ModelLoadError(f"expected a (batch, classes) output, got {out_shape}")
    class_count = int(out_shape[1])
    if class_count < 2:
        raise ModelLoadError(f"need at least 2 output classes, got {class_count}")

    catalog = _catalog_from(net)
    if not any(info.spatial for info in catalog):
        raise ModelLoadError("model has no spatial layers; cannot build hypercolumns")

    return ClassifierModel(
        model_source=source,
        input_shape=(int(in_shape[1]), int(in_shape[2]), int(in_shape[3])),
        class_count=class_count,
        layer_catalog=catalog,
        preprocessing=preprocessing,
        _net=net,
    )


def predict(model: ClassifierModel, image: np.ndarray) -> PredictionVector:
    return model.predict(image)


def activations(
    model: ClassifierModel,
    image: np.ndarray,
    layers: list[str],
    allow_non_spatial: bool = False,
) -> list[ActivationVolume]:
    return model.activations(image, layers, allow_non_spatial=allow_non_spatial)
