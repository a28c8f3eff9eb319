from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the driven ensemble.

    Parameters
    ----------
    n_atoms : int
        Number of two-level emitters ``N``.
    gamma_c : float
        Collective decay rate.
    gamma_s : float
        Individual (single-atom) decay rate.
    omega : float
        Rabi amplitude of the resonant drive (taken real).

    The mean-field constants ``gamma``, ``Gamma`` and ``omega_c`` are
    properties so they always follow the primitives.
    """

    n_atoms: int
    gamma_c: float
    gamma_s: float = 1.0
    omega: float = 0.0

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        for name in ("gamma_c", "gamma_s", "omega"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))

    @property
    def gamma(self) -> float:
        return self.gamma_s + self.gamma_c

    @property
    def Gamma(self) -> float:
        return (self.n_atoms - 1) * self.gamma_c

    @property
    def omega_c(self) -> float:
        return self.Gamma / 4.0

    @property
    def omega_ratio(self) -> float:
        return self.omega / self.omega_c if self.omega_c > 0 else float("inf")

    @property
    def rate_unit(self) -> float:
        """Rate used to make times dimensionless (gamma_s, or gamma_c if gamma_s = 0)."""
        return self.gamma_s if self.gamma_s > 0 else self.gamma_c

    def with_omega(self, omega: float) -> "ModelParams":
        return replace(self, omega=float(omega))

    def with_omega_ratio(self, ratio: float) -> "ModelParams":
        return replace(self, omega=float(ratio) * self.omega_c)

    @classmethod
    def from_ratio(cls, n_atoms: int, gamma_c: float, omega_ratio: float, gamma_s: float = 1.0):
        """Build parameters with the drive given in units of ``omega_c``."""
        p = cls(n_atoms, gamma_c, gamma_s, 0.0)
        return p.with_omega_ratio(omega_ratio)

    def as_dict(self) -> dict:
        return {
            "n_atoms": self.n_atoms,
            "gamma_c": self.gamma_c,
            "gamma_s": self.gamma_s,
            "omega": self.omega,
            "gamma": self.gamma,
            "Gamma": self.Gamma,
            "omega_c": self.omega_c,
        }


@dataclass(frozen=True)
class MeanFieldParams:
    """Composite mean-field constants, decoupled from any atom number.

    Useful when only ``Gamma / gamma`` matters, e.g. the large-``Gamma`` limit.
    """

    gamma: float
    Gamma: float
    omega: float = 0.0

    @property
    def omega_c(self) -> float:
        return self.Gamma / 4.0

    def with_omega(self, omega: float) -> "MeanFieldParams":
        return replace(self, omega=float(omega))

    def with_omega_ratio(self, ratio: float) -> "MeanFieldParams":
        return replace(self, omega=float(ratio) * self.omega_c)
