"""Run configuration (JSON) shared by the command-line tools."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .contrast import Verdict, check_admissible
from .experiments import DEFAULT_DELTAS, SweepConfig
from .fem import MaterialPair
from .mesh import MeshParams
from .output import git_blob_sha1
from .solver import LanczosConfig


class ConfigError(ValueError):
    pass


@dataclass
class GeometryConfig:
    a: float = 0.5
    b: float = 0.25
    delta: float = 0.5
    deltas: list = field(default_factory=lambda: list(DEFAULT_DELTAS))


@dataclass
class MaterialsConfig:
    sigma_plus: float = 1.0
    sigma_minus: float = -2.5


@dataclass
class MeshConfig:
    inclusion_rings: int = 4
    annulus_rings: int = 8
    grading_exponent: float = 1.0
    angular_segments: int = 32
    max_spacing: float | None = None
    refinements: int = 1
    levels: int = 5           # h-study only


@dataclass
class EigenConfig:
    k_pos: int = 6
    k_neg: int = 3
    tol: float = 1e-9
    krylov_dim: int = 60
    max_restarts: int = 200
    seed: int = 0


@dataclass
class SourceConfig:
    f: float = 1.0


@dataclass
class OutputConfig:
    directory: str | None = None
    formats: list = field(default_factory=lambda: ["csv", "svg", "vtk"])


_SECTIONS = {
    "geometry": GeometryConfig,
    "materials": MaterialsConfig,
    "mesh": MeshConfig,
    "eigen": EigenConfig,
    "source": SourceConfig,
    "outputs": OutputConfig,
}
_FORMATS = {"csv", "svg", "vtk", "mesh"}


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    materials: MaterialsConfig = field(default_factory=MaterialsConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    eigen: EigenConfig = field(default_factory=EigenConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    # ---- (de)serialisation
    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        parts = {}
        for name, typ in _SECTIONS.items():
            sec = d.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigError(f"section '{name}' must be an object")
            names = {f.name for f in dataclasses.fields(typ)}
            bad = set(sec) - names
            if bad:
                raise ConfigError(f"unknown key(s) in '{name}': {sorted(bad)}")
            try:
                parts[name] = typ(**sec)
            except TypeError as e:
                raise ConfigError(f"section '{name}': {e}") from None
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def sha1(self) -> str:
        """Git blob hash of the canonical JSON serialisation."""
        return git_blob_sha1(self.to_json().encode())

    # ---- validation and typed views
    def validate(self) -> None:
        g, e = self.geometry, self.eigen
        for name in ("a", "b", "delta"):
            if not isinstance(getattr(g, name), (int, float)):
                raise ConfigError(f"geometry.{name} must be a number")
        if not (g.a > 0 and g.b > 0):
            raise ConfigError("geometry.a and geometry.b must be positive")
        ds = list(g.deltas)
        if not ds or any(not (0 < d <= 1) for d in ds) or any(x <= y for x, y in zip(ds, ds[1:])):
            raise ConfigError("geometry.deltas must be strictly decreasing values in (0, 1]")
        if min(e.k_pos, e.k_neg) < 0 or e.k_pos + e.k_neg == 0:
            raise ConfigError("eigen.k_pos/k_neg must be >= 0 with a positive sum")
        if not e.tol > 0:
            raise ConfigError("eigen.tol must be positive")
        if self.mesh.refinements < 0 or self.mesh.levels < 1:
            raise ConfigError("mesh.refinements must be >= 0 and mesh.levels >= 1")
        bad = set(self.outputs.formats) - _FORMATS
        if bad:
            raise ConfigError(f"unknown output format(s): {sorted(bad)}")
        # constructing the typed objects runs their own checks
        try:
            self.material_pair()
            self.mesh_params()
            self.lanczos().checked(e.k_pos + e.k_neg)
        except ValueError as err:
            raise ConfigError(str(err)) from None

    def admissibility(self) -> list:
        """Contrast check against the critical set; returns warning strings.

        Raises ConfigError on a critical contrast.
        """
        m = self.materials
        chk = check_admissible(m.sigma_minus / m.sigma_plus, self.geometry.a, self.geometry.b)
        if chk.verdict == Verdict.CRITICAL:
            raise ConfigError(f"contrast kappa = {m.sigma_minus / m.sigma_plus:g} is critical "
                              f"(nearest critical value {chk.nearest:g})")
        if chk.verdict == Verdict.NEAR_CRITICAL:
            return [f"near_critical: kappa within {chk.distance:.3g} of {chk.nearest:.6g}"]
        return []

    def material_pair(self) -> MaterialPair:
        return MaterialPair(self.materials.sigma_plus, self.materials.sigma_minus)

    def mesh_params(self) -> MeshParams:
        m = self.mesh
        return MeshParams(m.inclusion_rings, m.annulus_rings, m.grading_exponent,
                          m.angular_segments, m.max_spacing)

    def lanczos(self) -> LanczosConfig:
        e = self.eigen
        return LanczosConfig(e.krylov_dim, e.tol, e.max_restarts, e.seed)

    def sweep_config(self, threads: int = 1) -> SweepConfig:
        g = self.geometry
        return SweepConfig(deltas=tuple(g.deltas), a=g.a, b=g.b, materials=self.material_pair(),
                           k_pos=self.eigen.k_pos, k_neg=self.eigen.k_neg, mesh=self.mesh_params(),
                           refinements=self.mesh.refinements, lanczos=self.lanczos(), threads=threads)
