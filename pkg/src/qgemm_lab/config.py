"""Run configuration, read from JSON.

Example (every key optional; these are the defaults)::

    {
      "seed": 0,
      "shapes": [[1, 512, 64, 128], [4, 512, 64, 128], [8, 1024, 128, 128], [3, 384, 64, 128]],
      "tile": {"threads": 64, "elems_per_thread": 2, "m_count": 4},
      "variants": ["baseline", "ila", "vml", "vml+ila", "smb", "smb+ila", "smb+vml", "opt4gptq"],
      "perm_mode": ["none", "identity", "seeded-shuffle"],
      "weights": {"w_atomic": 1.0, "w_load16": 0.25, "w_load32": 0.4,
                  "w_valu_scalar": 0.05, "w_valu_packed": 0.08, "w_shared": 0.01},
      "output_dir": "qgemm_out",
      "tolerance": null,
      "backend": "compiled"
    }

``perm_mode`` may be one mode or a list cycled over the shapes. A ``null``
tolerance means each shape uses its rigorous running error bound.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from qgemm_lab.errors import ShapeError
from qgemm_lab.kernels.params import ALL_VARIANTS, TileParams, VariantFlags
from qgemm_lab.perf_model import CostWeights
from qgemm_lab.rng import PERM_MODES

DEFAULT_SHAPES = ((1, 512, 64, 128), (4, 512, 64, 128), (8, 1024, 128, 128), (3, 384, 64, 128))
DEFAULT_PERM_CYCLE = ("none", "identity", "seeded-shuffle")
MAX_SEED = (1 << 64) - 1


def variant_label(f: VariantFlags) -> str:
    on = [n for n in ("smb", "vml", "ila") if getattr(f, n)]
    if len(on) == 3:
        return "opt4gptq"
    return "+".join(on) if on else "baseline"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    shapes: tuple[tuple[int, int, int, int], ...] = DEFAULT_SHAPES
    tile: TileParams = TileParams()
    variants: tuple[VariantFlags, ...] = ALL_VARIANTS
    perm_mode: tuple[str, ...] = DEFAULT_PERM_CYCLE
    weights: CostWeights = field(default_factory=CostWeights)
    output_dir: str = "qgemm_out"
    tolerance: float | None = None
    backend: str = "compiled"

    def __post_init__(self):
        if not 0 <= self.seed <= MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.shapes:
            raise ValueError("at least one shape is required")
        for M, K, N, g in self.shapes:
            if min(M, K, N, g) < 1 or K % 8 or N % 8 or K % g:
                raise ShapeError(f"shape (M={M}, K={K}, N={N}, g={g}) needs positive dims and K%8 == N%8 == K%g == 0")
        if not self.variants:
            raise ValueError("at least one variant is required")
        if not self.perm_mode:
            raise ValueError("perm_mode must name at least one mode")
        for mode in self.perm_mode:
            if mode not in PERM_MODES:
                raise ValueError(f"unknown perm mode {mode!r}")
        if self.tolerance is not None and self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        if self.backend not in ("compiled", "sim"):
            raise ValueError(f"unknown backend {self.backend!r}")

    def perm_for(self, shape_index: int) -> str:
        return self.perm_mode[shape_index % len(self.perm_mode)]

    def with_overrides(self, **kw) -> RunConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "shapes": [list(s) for s in self.shapes],
            "tile": {"threads": self.tile.threads, "elems_per_thread": self.tile.elems_per_thread, "m_count": self.tile.m_count},
            "variants": [variant_label(v) for v in self.variants],
            "perm_mode": list(self.perm_mode),
            "weights": {k: getattr(self.weights, k) for k in CostWeights.__dataclass_fields__},
            "output_dir": self.output_dir,
            "tolerance": self.tolerance,
            "backend": self.backend,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        kw = {}
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        if "shapes" in d:
            kw["shapes"] = tuple(tuple(int(x) for x in s) for s in d["shapes"])
            if any(len(s) != 4 for s in kw["shapes"]):
                raise ValueError("each shape is [M, K, N, g]")
        if "tile" in d:
            kw["tile"] = TileParams(**{k: int(v) for k, v in d["tile"].items()})
        if "variants" in d:
            kw["variants"] = tuple(VariantFlags.parse(v) for v in d["variants"])
        if "perm_mode" in d:
            pm = d["perm_mode"]
            kw["perm_mode"] = (pm,) if isinstance(pm, str) else tuple(pm)
        if "weights" in d:
            kw["weights"] = CostWeights.from_dict(d["weights"])
        for key in ("output_dir", "backend"):
            if key in d:
                kw[key] = str(d[key])
        if d.get("tolerance") is not None:
            kw["tolerance"] = float(d["tolerance"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> RunConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
