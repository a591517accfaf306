"""Terminal-phase strike engagement simulation and weapon-target assignment.

Modules:
    scenario    episode sampling and named cases
    dynamics    PN guidance, drag model, RK4 integration
    engagement  batched episode simulation, threats, observations
    solvers     assignment objective, exact and heuristic solvers
    network     convolutional policy/value networks with analytic gradients
    ppo         single-step PPO training
    bench       Monte Carlo evaluation, comparison, scalability, oracle check
    plotting    SVG learning-curve and engagement plots
    cli         ``strike-wta`` command line entry point
"""

__version__ = "0.1.0"
