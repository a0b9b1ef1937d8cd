"""hoferlab: a numerical laboratory for Hofer geometry of Hamiltonian isotopies.

Subpackages
-----------
core       symplectic kernel (domains, J and omega, flows, brackets)
hofer      Hofer length, extremum sets, geodesic and criticality checks
linflow    linearized flows, monodromy, closed-trajectory detection
secondvar  second-variation quadratic form, index/nullity, conjugate values
shortening constructive length-reduction procedures
sphere     rotation maps of h(z) profiles, swept area, Calabi, certificates
expr       small Hamiltonian expression language
cli        scenario runner
"""

__version__ = "0.1.0"
