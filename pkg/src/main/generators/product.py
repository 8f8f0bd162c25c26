"""
Independence generator ψ(t) = exp(-t); its copula is C(u1, u2) = u1 u2.
"""
import numpy as np

from .. import archimedean


class Product(archimedean.ArchimedeanGenerator):
    """Product (independence) generator. The parameter is ignored."""
    generator_id = "product"
    default_parameter = 1.0
    is_independence = True

    def _validate_parameter(self, parameter: float) -> None:
        if not np.isfinite(parameter):
            raise ValueError(f"Product generator parameter must be finite, got {parameter!r}.")

    def psi(self, t):
        return np.exp(-np.asarray(t, dtype=np.float64))

    def psi_inverse(self, u):
        return -np.log(np.asarray(u, dtype=np.float64))

    def psi_prime(self, t):
        return -np.exp(-np.asarray(t, dtype=np.float64))

    def psi_double_prime(self, t):
        return np.exp(-np.asarray(t, dtype=np.float64))
