"""
Gumbel generator ψ(t) = exp(-t^(1/ϑ)), ϑ >= 1.
"""
import numpy as np

from .. import archimedean

_TINY = np.finfo(np.float64).tiny


class Gumbel(archimedean.ArchimedeanGenerator):
    """Gumbel family; ϑ = 1 is the product copula.

    ψ′(t) = -exp(-t^(1/ϑ)) / (ϑ t^((ϑ-1)/ϑ)) < 0 and
    ψ″(t) = exp(-t^(1/ϑ)) (t^(1/ϑ) + ϑ - 1) / (ϑ² t^((2ϑ-1)/ϑ)) > 0.
    """
    generator_id = "gumbel"
    default_parameter = 2.0

    def _validate_parameter(self, parameter: float) -> None:
        if not (np.isfinite(parameter) and parameter >= 1.0):
            raise ValueError(f"Gumbel parameter must satisfy theta >= 1, got {parameter!r}.")

    @property
    def is_independence(self) -> bool:
        return self.parameter == 1.0

    def psi(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.exp(-np.power(t, 1.0 / self.parameter))

    def psi_inverse(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.power(-np.log(u), self.parameter)

    def psi_prime(self, t):
        t = np.maximum(np.asarray(t, dtype=np.float64), _TINY)
        vartheta = self.parameter
        return -np.exp(-np.power(t, 1.0 / vartheta)) * np.power(t, 1.0 / vartheta - 1.0) / vartheta

    def psi_double_prime(self, t):
        t = np.maximum(np.asarray(t, dtype=np.float64), _TINY)
        vartheta = self.parameter
        s = np.power(t, 1.0 / vartheta)
        return np.exp(-s) * np.power(t, 1.0 / vartheta - 2.0) * (s + vartheta - 1.0) / vartheta**2
