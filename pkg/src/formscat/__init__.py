"""formscat: sesquilinear-form toolkit for Helmholtz/Robin inverse-medium problems.

Core layers
-----------
mesh        structured interval / rectangle simplicial meshes
assembly    P1 forms of the Robin scattering problem, field I/O
linsolve    sparse/dense complex LU, generalized Rayleigh extremes
formcore    space pairs, operator bundle, well-posedness certificates
pts         parameter-to-state maps, derivatives and adjoints
tcc         empirical tangential-cone certification
inversion   Landweber reconstruction with discrepancy stopping
randinst    random instance generator backing the oracle suite
service     FastAPI wrapper; cli is a thin client over it
"""

__version__ = "0.1.0"
