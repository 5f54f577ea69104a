"""
Services layer for the numerical work.

This package contains the solvers and study logic, separated from the
command line:
- netmodel: Network data model, validation, JSON files, admittance matrix
- pflow: Newton-Raphson AC power flow, loss sensitivities, shift factors
- lpsolve: Bounded-variable revised simplex with dual values
- opf: Sequential LP dispatch and LMP decomposition
- scenario: Profiles, synthetic year, capacity tables, fixture network
- runner: Parallel scenario runs and run-directory files
- stats: Voltage-level and temporal LMP statistics
- charts: SVG line and bar charts
"""
