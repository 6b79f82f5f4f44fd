from dataclasses import asdict, dataclass, fields

from utils.errors import ConfigError


@dataclass(frozen=True)
class IpmOptions:
    """Interior-point solver settings"""
    feastol: float = 1e-6
    gradtol: float = 1e-6
    comptol: float = 1e-6
    costtol: float = 1e-6
    max_iterations: int = 150
    sigma: float = 0.1
    xi: float = 0.99995
    gamma0: float = 1.0
    z0: float = 1.0
    cost_mult: float = 1e-4
    alpha_min: float = 1e-8
    step_control: bool = False
    max_reductions: int = 5
    z_floor: float = 1e-8

    def __post_init__(self):
        for name in ("feastol", "gradtol", "comptol", "costtol", "gamma0", "z0", "cost_mult", "z_floor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"ipm.{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.xi < 1:
            raise ConfigError(f"ipm.xi must lie in (0, 1), got {self.xi}")
        if not 0 < self.sigma < 1:
            raise ConfigError(f"ipm.sigma must lie in (0, 1), got {self.sigma}")
        if self.max_iterations < 0:
            raise ConfigError("ipm.max_iterations cannot be negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict):
        """Create options from a dictionary, rejecting unknown keys"""
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown ipm option(s): {', '.join(sorted(unknown))}")
        return cls(**data)
