"""Scale-parameterised architecture description with construction-time shape checks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..core.ops import CEIL, FLOOR, conv3d_output_shape, pool_output_size

ENCODERS = ("q3dcnn", "bilstm", "nonlocal", "none")
DTYPES = {"f32": np.float32, "f64": np.float64}
CONV_KERNEL = (3, 3, 3)
FRAME_KERNEL = (1, 3, 3)
FRAME_STRIDE = (1, 2, 2)


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    encoder: str = "q3dcnn"
    frames: int = 16
    spatial: tuple = (32, 32)
    channel_widths: tuple = (4, 8, 16, 32, 64)
    # one (t, h, w) rounding triple per pooling stage; None means floor everywhere
    pool_rounding: tuple | None = None
    feature_dim: int = 128
    fusion_hidden: tuple = (1024, 256)
    hidden_dim: int = 32
    use_sds: bool = True
    use_time: bool = True
    dtype: str = "f32"
    _trace: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.spatial = tuple(int(v) for v in self.spatial)
        self.channel_widths = tuple(int(v) for v in self.channel_widths)
        self.fusion_hidden = tuple(int(v) for v in self.fusion_hidden)
        if self.pool_rounding is not None:
            self.pool_rounding = tuple(tuple(stage) for stage in self.pool_rounding)
        self._trace = self._validate()

    # -- presets ------------------------------------------------------------
    @classmethod
    def full(cls, **overrides) -> "ModelConfig":
        """Table-2 scale: 100 frames of 110x110, widths 16..256."""
        base = dict(
            encoder="q3dcnn",
            frames=100,
            spatial=(110, 110),
            channel_widths=(16, 32, 64, 128, 256),
            pool_rounding=(
                (FLOOR, FLOOR, FLOOR),
                (FLOOR, FLOOR, FLOOR),
                (CEIL, FLOOR, FLOOR),
                (FLOOR, FLOOR, FLOOR),
            ),
            feature_dim=128,
            fusion_hidden=(1024, 256),
            hidden_dim=128,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        """Desk scale: 16 frames of 32x32, widths 4..64."""
        base = dict(
            encoder="q3dcnn",
            frames=16,
            spatial=(32, 32),
            channel_widths=(4, 8, 16, 32, 64),
            pool_rounding=(
                (FLOOR, FLOOR, FLOOR),
                (FLOOR, CEIL, CEIL),
                (FLOOR, CEIL, CEIL),
                (FLOOR, CEIL, CEIL),
            ),
            feature_dim=32,
            fusion_hidden=(128, 32),
            hidden_dim=32,
        )
        if overrides.get("encoder") in ("bilstm", "nonlocal"):
            base["channel_widths"] = (4, 8)
            base["pool_rounding"] = None
        base.update(overrides)
        return cls(**base)

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        if name == "full":
            return cls.full(**overrides)
        if name == "tiny":
            return cls.tiny(**overrides)
        raise ConfigError(f"unknown preset {name!r}")

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("_trace")
        d["spatial"] = list(self.spatial)
        d["channel_widths"] = list(self.channel_widths)
        d["fusion_hidden"] = list(self.fusion_hidden)
        d["pool_rounding"] = [list(s) for s in self.pool_rounding] if self.pool_rounding is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    @property
    def question_dim(self) -> int:
        return self.feature_dim + 4 + 1

    @property
    def modality(self) -> str:
        if self.encoder == "none":
            return "SDS only"
        return "SDS+Video" if self.use_sds else "Video only"

    @property
    def method_name(self) -> str:
        label = {"q3dcnn": "3D-CNN", "bilstm": "RNN", "nonlocal": "non-local", "none": "FC"}[self.encoder]
        return f"[{self.modality}]{label}"

    def shape_trace(self) -> list:
        """``(layer, [C, T, H, W] or [d])`` pairs for one clip through the encoder."""
        return list(self._trace)

    # -- validation ---------------------------------------------------------
    def _validate(self) -> list:
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {tuple(DTYPES)}")
        if self.frames < 1 or len(self.spatial) != 2 or min(self.spatial) < 1:
            raise ConfigError("frames and spatial dims must be positive")
        if self.feature_dim < 1 or self.hidden_dim < 1 or any(h < 1 for h in self.fusion_hidden):
            raise ConfigError("layer widths must be positive")
        if any(w < 1 for w in self.channel_widths):
            raise ConfigError("channel widths must be positive")
        if self.encoder == "q3dcnn":
            return self._trace_q3dcnn()
        if self.encoder in ("bilstm", "nonlocal"):
            return self._trace_frames()
        return []

    def _trace_q3dcnn(self) -> list:
        widths = self.channel_widths
        if len(widths) < 2:
            raise ConfigError("q3dcnn needs at least two channel widths")
        n_pool = len(widths) - 1
        rounding = self.pool_rounding or ((FLOOR, FLOOR, FLOOR),) * n_pool
        if len(rounding) != n_pool:
            raise ConfigError(f"pool_rounding needs {n_pool} stages, got {len(rounding)}")
        for stage in rounding:
            if len(stage) != 3 or any(m not in (FLOOR, CEIL) for m in stage):
                raise ConfigError(f"bad pool rounding stage {stage}")
        thw = (self.frames,) + self.spatial
        trace = [("input", [1, *thw])]
        for i in range(n_pool):
            if thw[1] < CONV_KERNEL[1] or thw[2] < CONV_KERNEL[2] or thw[0] + 2 < CONV_KERNEL[0]:
                raise ConfigError(f"conv{i + 1}: input {thw} smaller than kernel {CONV_KERNEL}")
            thw = conv3d_output_shape(thw, CONV_KERNEL, temporal_pad=1)
            trace.append((f"conv{i + 1}", [widths[i], *thw]))
            thw = tuple(pool_output_size(n, m) for n, m in zip(thw, rounding[i]))
            if min(thw) < 1:
                raise ConfigError(f"pool{i + 1}: output {thw} has an empty axis")
            trace.append((f"pool{i + 1}", [widths[i], *thw]))
        trace.append((f"conv{n_pool + 1}", [widths[-1], 1, 1, 1]))
        trace.append(("flatten", [widths[-1]]))
        trace.append(("fc", [self.feature_dim]))
        return trace

    def _trace_frames(self) -> list:
        if len(self.channel_widths) != 2:
            raise ConfigError(f"{self.encoder} needs exactly two frame-conv widths")
        thw = (self.frames,) + self.spatial
        trace = [("input", [1, *thw])]
        for i, c in enumerate(self.channel_widths):
            if thw[1] < 3 or thw[2] < 3:
                raise ConfigError(f"frame conv{i + 1}: frame {thw[1:]} smaller than 3x3")
            thw = conv3d_output_shape(thw, FRAME_KERNEL, 0, FRAME_STRIDE)
            trace.append((f"frame_conv{i + 1}", [c, *thw]))
        trace.append(("frame_embedding", [self.frames, self.channel_widths[-1] * thw[1] * thw[2]]))
        trace.append(("fc", [self.feature_dim]))
        return trace

    @property
    def frame_embedding_dim(self) -> int:
        return self._trace[-2][1][1]

    @property
    def final_kernel(self) -> tuple:
        """Kernel of the last q3dcnn conv: the whole remaining (T, H, W) volume."""
        return tuple(self._trace[-4][1][1:])
