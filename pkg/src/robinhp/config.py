"""Run configuration: presets, key=value config files, CLI merging.

Config files are flat key = value lines grouped into [sections]; see
RunConfig.to_file for the canonical layout.  The two built-in presets fix
the coefficient set lam=1/2, lam_omega=lam_gamma=beta=alpha=1 and differ
in the control bound and the tracking target.
"""

import configparser
import io
from dataclasses import dataclass, field, asdict
from typing import Optional

from .assembly import ProblemData
from .exprgrammar import expr_function, parse_expr, expr_to_str
from .verify import ReferenceConfig


class ConfigError(ValueError):
    """Invalid run configuration."""


PRESET_TARGETS = {
    1: "10*x1*x2*sin(pi*x1)*sin(pi*x2)",
    2: "x1*sin(pi*x2)+x2*sin(pi*x1)",
}
PRESET_BOUNDS = {1: 0.0, 2: 0.3}


@dataclass
class MeshConfig:
    kind: str = "tri"                # "quad" or "tri"
    n: int = 4
    split: str = "crisscross"        # "diagonal" or "crisscross" (tri only)

    def validate(self):
        if self.kind not in ("quad", "tri"):
            raise ConfigError(f"mesh kind must be quad or tri, got {self.kind!r}")
        if self.n < 1:
            raise ConfigError("mesh n must be >= 1")
        if self.kind == "tri" and self.split not in ("diagonal", "crisscross"):
            raise ConfigError(f"unknown split {self.split!r}")

    def spec(self):
        return (self.kind, self.n, self.split if self.kind == "tri" else None)


@dataclass
class RunConfig:
    example: int = 0                 # 1, 2, or 0 = custom
    mesh: MeshConfig = field(default_factory=MeshConfig)
    degree: int = 2
    lam: float = 0.5
    lam_omega: float = 1.0
    lam_gamma: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    u_a: float = 0.0
    y_omega_expr: str = "0"
    y_gamma_expr: Optional[str] = None   # None: trace of y_omega
    tol: float = 1e-10
    max_iter: int = 500
    relaxation: float = 1.0
    n_ref: int = 50
    p_ref: int = 3
    tol_ref: float = 1e-12

    def __post_init__(self):
        if self.example:
            self.apply_preset(self.example)

    def apply_preset(self, example):
        if example not in (1, 2):
            raise ConfigError(f"unknown example preset {example}")
        self.example = example
        self.lam = 0.5
        self.lam_omega = self.lam_gamma = self.alpha = self.beta = 1.0
        self.u_a = PRESET_BOUNDS[example]
        self.y_omega_expr = PRESET_TARGETS[example]
        self.y_gamma_expr = None

    def validate(self):
        self.mesh.validate()
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if self.lam <= 0:
            raise ConfigError("lam must be > 0")
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if self.lam_omega < 0 or self.lam_gamma < 0:
            raise ConfigError("observation weights must be >= 0")
        if self.tol <= 0 or self.tol_ref <= 0:
            raise ConfigError("tolerances must be > 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not 0.0 < self.relaxation <= 1.0:
            raise ConfigError("relaxation must lie in (0, 1]")
        if self.n_ref < 1 or self.p_ref < 1:
            raise ConfigError("reference discretization must be positive")
        try:
            parse_expr(self.y_omega_expr)
            if self.y_gamma_expr is not None:
                parse_expr(self.y_gamma_expr)
        except Exception as exc:
            raise ConfigError(f"bad target expression: {exc}") from exc
        return self

    # -- conversions ---------------------------------------------------------

    def problem_data(self):
        self.validate()
        y_omega = expr_function(self.y_omega_expr)
        y_gamma = expr_function(self.y_gamma_expr) if self.y_gamma_expr else None
        signature = "|".join([
            expr_to_str(parse_expr(self.y_omega_expr)),
            expr_to_str(parse_expr(self.y_gamma_expr)) if self.y_gamma_expr else "trace",
        ])
        return ProblemData(
            lam=self.lam, lam_omega=self.lam_omega, lam_gamma=self.lam_gamma,
            alpha=self.alpha, beta=self.beta, u_a=self.u_a,
            y_omega=y_omega, y_gamma=y_gamma, signature=signature)

    def reference_config(self):
        return ReferenceConfig(n_ref=self.n_ref, p_ref=self.p_ref, tol_ref=self.tol_ref)

    # -- file form -------------------------------------------------------------

    def to_file(self, path_or_fh):
        cp = configparser.ConfigParser()
        cp["problem"] = {
            "example": str(self.example),
            "lam": repr(self.lam),
            "lam_omega": repr(self.lam_omega),
            "lam_gamma": repr(self.lam_gamma),
            "alpha": repr(self.alpha),
            "beta": repr(self.beta),
            "u_a": repr(self.u_a),
            "y_omega": self.y_omega_expr,
        }
        if self.y_gamma_expr is not None:
            cp["problem"]["y_gamma"] = self.y_gamma_expr
        cp["mesh"] = {"kind": self.mesh.kind, "n": str(self.mesh.n),
                      "split": self.mesh.split}
        cp["discretization"] = {"degree": str(self.degree)}
        cp["optimizer"] = {"tol": repr(self.tol), "max_iter": str(self.max_iter),
                           "relaxation": repr(self.relaxation)}
        cp["reference"] = {"n_ref": str(self.n_ref), "p_ref": str(self.p_ref),
                           "tol_ref": repr(self.tol_ref)}
        if hasattr(path_or_fh, "write"):
            cp.write(path_or_fh)
        else:
            with open(path_or_fh, "w") as fh:
                cp.write(fh)

    @classmethod
    def from_file(cls, path_or_fh):
        cp = configparser.ConfigParser()
        try:
            if hasattr(path_or_fh, "read"):
                cp.read_file(path_or_fh)
            else:
                with open(path_or_fh) as fh:
                    cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = cls()
        try:
            prob = cp["problem"] if cp.has_section("problem") else {}
            cfg.example = int(prob.get("example", "0"))
            if cfg.example:
                # presets force the coefficient set and targets
                cfg.apply_preset(cfg.example)
            else:
                for key in ("lam", "lam_omega", "lam_gamma", "alpha", "beta", "u_a"):
                    if key in prob:
                        setattr(cfg, key, float(prob[key]))
                if "y_omega" in prob:
                    cfg.y_omega_expr = prob["y_omega"]
                if "y_gamma" in prob:
                    cfg.y_gamma_expr = prob["y_gamma"]
            if cp.has_section("mesh"):
                sec = cp["mesh"]
                cfg.mesh = MeshConfig(kind=sec.get("kind", cfg.mesh.kind),
                                      n=int(sec.get("n", cfg.mesh.n)),
                                      split=sec.get("split", cfg.mesh.split))
            if cp.has_section("discretization"):
                cfg.degree = int(cp["discretization"].get("degree", cfg.degree))
            if cp.has_section("optimizer"):
                sec = cp["optimizer"]
                cfg.tol = float(sec.get("tol", cfg.tol))
                cfg.max_iter = int(sec.get("max_iter", cfg.max_iter))
                cfg.relaxation = float(sec.get("relaxation", cfg.relaxation))
            if cp.has_section("reference"):
                sec = cp["reference"]
                cfg.n_ref = int(sec.get("n_ref", cfg.n_ref))
                cfg.p_ref = int(sec.get("p_ref", cfg.p_ref))
                cfg.tol_ref = float(sec.get("tol_ref", cfg.tol_ref))
        except ValueError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        return cfg.validate()

    def canonical_text(self):
        buf = io.StringIO()
        self.to_file(buf)
        return buf.getvalue()

    def __eq__(self, other):
        return isinstance(other, RunConfig) and asdict(self) == asdict(other)


def example_preset(example):
    """ProblemData for a built-in example preset."""
    cfg = RunConfig(example=example)
    return cfg.problem_data()
