# In src/main/__init__.py
from . import problem
from . import dist
from . import es_core
