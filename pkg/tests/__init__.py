"""
LQR Scenario Bench Test Suite

Test organization:
- test_core/: Exceptions, error reports and logging
- test_utils/: Matrix kernel and random streams
- test_models/: Domain types and configs
- test_solvers/: LQR formulations, stabilizing methods and the scenario approach
- test_providers/: Leslie models and samplers
- test_services/: Experiments and exports
- test_middleware/: Exception to exit code mapping
- test_app.py: CLI end to end
"""
