"""
Clayton generator ψ(t) = (1 + t)^(-1/ϑ), ϑ > 0.

A lower-tail-dependent family next to Gumbel.
"""
import numpy as np

from .. import archimedean


class Clayton(archimedean.ArchimedeanGenerator):
    """Clayton family."""
    generator_id = "clayton"
    default_parameter = 1.0

    def _validate_parameter(self, parameter: float) -> None:
        if not (np.isfinite(parameter) and parameter > 0.0):
            raise ValueError(f"Clayton parameter must satisfy theta > 0, got {parameter!r}.")

    def psi(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.power(1.0 + t, -1.0 / self.parameter)

    def psi_inverse(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.power(u, -self.parameter) - 1.0

    def psi_prime(self, t):
        t = np.asarray(t, dtype=np.float64)
        inv = 1.0 / self.parameter
        return -inv * np.power(1.0 + t, -inv - 1.0)

    def psi_double_prime(self, t):
        t = np.asarray(t, dtype=np.float64)
        inv = 1.0 / self.parameter
        return inv * (inv + 1.0) * np.power(1.0 + t, -inv - 2.0)
