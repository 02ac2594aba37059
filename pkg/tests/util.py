from gptmacro.simulator import build_data_matrix, scenario_measurements
from gptmacro.tomography import reconstruct


def realized_of(scenario, n=None, seed=0, k_max=None):
    """Realized GPT reconstructed from the scenario's default prepare-measure data."""
    _, fm = build_data_matrix(scenario, scenario.preparations, scenario_measurements(scenario), n_per_cell=n, seed=seed)
    return reconstruct(fm, k_max=k_max)
