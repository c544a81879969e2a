"""When is the estimate identifiable?  Diagnostics on two designs.

The solver's answer is only unique when the samples overlap enough to
chain every stratum to every other one.  This script checks a healthy
three-stratum design, then a broken one where no observation ties the
two regions together, and shows how a single observation flips the
verdict.
"""

import numpy as np

from debias import (
    Observation,
    assumption_report,
    evaluate_bias_matrix,
    laplacian_connectivity,
    norm_ball,
    norm_shell,
    overlap_graph,
    solve,
    support_connectivity,
    whole_space,
)


def obs(values):
    return [Observation(np.array([v])) for v in values]


# --- a healthy design: three nested norm strata ---------------------------
functions = (norm_ball(1.0), norm_ball(1.5), whole_space())
samples = [
    obs([0.2, 0.5, 0.9]),
    obs([0.3, 1.2, 1.4]),
    obs([0.1, 1.3, 2.5]),
]
pooled = evaluate_bias_matrix(samples, functions)

report = assumption_report(pooled)
print("healthy design:")
print("  support cover ok:    ", report.support_cover_ok)
print("  strongly connected:  ", report.strongly_connected)
print("  overlap components:  ", report.laplacian_zero_multiplicity)

# the overlap graph depends on the evidence threshold kappa: demand more
# shared mass and the graph eventually falls apart
for kappa in (1e-3, 0.7, 0.95):
    g = overlap_graph(pooled, kappa=kappa)
    _, n_comp = laplacian_connectivity(g)
    print("  kappa=%-5g -> %d component(s)" % (kappa, n_comp))

# --- a broken design: ball and far shell, nothing in between --------------
print()
print("broken design (points inside radius 1 vs points beyond radius 2):")
functions = (norm_ball(1.0), norm_shell(2.0))
samples = [obs([0.2, 0.7]), obs([2.5, 3.0])]
pooled = evaluate_bias_matrix(samples, functions)

digraph, strong = support_connectivity(pooled)
print("  support digraph adjacency:")
print(digraph.adjacency)
print("  strongly connected:", strong)

# the solver still runs, but flags the answer as non-unique: nothing in
# the data links the two regions, so their relative mass is arbitrary
result = solve(pooled)
print("  solver converged:", result.converged, " non_unique:", result.non_unique)

# repair: make the strata overlap (shell from 0.5 outward) and give the
# shell sample one point both mechanisms could have kept
print()
print("after widening the shell to radius 0.5 and adding the point 0.7:")
functions = (norm_ball(1.0), norm_shell(0.5))
samples = [obs([0.2, 0.7]), obs([0.7, 3.0])]
pooled = evaluate_bias_matrix(samples, functions)
digraph, strong = support_connectivity(pooled)
print("  strongly connected:", strong)
result = solve(pooled)
print("  solver converged:", result.converged, " non_unique:", result.non_unique)
print("  W:", result.W_hat)
