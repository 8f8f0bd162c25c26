from .. import archimedean
from . import gumbel as _gumbel
from . import clayton as _clayton
from . import product as _product

GENERATOR_CLASSES = [
    _gumbel.Gumbel,
    _clayton.Clayton,
    _product.Product,
]


def get_generator_class(generator_id: str) -> type[archimedean.ArchimedeanGenerator]:
    """Looks up a generator family by its id ("gumbel", "clayton", "product").

    Raises:
        ValueError: If no registered family has this id.
    """
    for cls in GENERATOR_CLASSES:
        if cls.generator_id == generator_id:
            return cls
    known = ", ".join(cls.generator_id for cls in GENERATOR_CLASSES)
    raise ValueError(f"Unknown generator '{generator_id}'. Known generators: {known}.")


def make_generator(generator_id: str, parameter: float | None = None) -> archimedean.ArchimedeanGenerator:
    """Instantiates a registered generator, using the family default parameter when omitted."""
    cls = get_generator_class(generator_id)
    if parameter is None:
        return cls(cls.default_parameter)
    return cls(parameter)
