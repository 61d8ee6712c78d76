"""Compile a few PDEs and look at the graphs the model consumes.

Run: python demos/dag_tour.py
"""
from collections import Counter

from graphpde import dsl
from graphpde.dag import canonical_digest, compile_pde, export_dot, structural_features, validate

ADVECTION = "dt(u) + c*dx(u) = 0\nic u = g\nperiodic"

dag = compile_pde(dsl.parse(ADVECTION))
print("advection nodes:", dict(Counter(nd.label for nd in dag.nodes)))
print("edges:", len(dag.edges), "violations:", validate(dag))

# renaming variables and reordering terms does not change the canonical graph
other = compile_pde(dsl.parse("beta*dx(v) + dt(v) = 0\nic v = v0\nperiodic"))
print("same digest after renaming:", canonical_digest(dag) == canonical_digest(other))

# integer powers are expanded by repeated squaring: u^11 = u^8 * u^2 * u
pw = compile_pde(dsl.parse("dt(u) + u^11 = 0\nic u = g\nperiodic"))
print("u^11 uses", sum(nd.type == "Square" for nd in pw.nodes), "Square and",
      sum(nd.type == "Mul" for nd in pw.nodes), "Mul node(s)")

# shortest-path lengths feed the attention bias
sf = structural_features(dag)
uf = dag.variables["u"]
eq = next(i for i, nd in enumerate(dag.nodes) if nd.type == "EqZero")
print("path length UF -> EqZero:", sf.phi[uf, eq])

# a Burgers-type equation with Dirichlet/Neumann boundaries
burgers = """dt(u) + dx(a*u^2 - k*dx(u)) = 0
ic u = g
bc left: u = gL
bc right: dx(u) = gR"""
print(export_dot(compile_pde(dsl.parse(burgers)), aux=False))
