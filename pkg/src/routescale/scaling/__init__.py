from .fit import (
    FIXTURES,
    LAWS,
    LawSummary,
    PowerLawFit,
    ScalingPoint,
    compute_frontier,
    exponent_from_doubling,
    fit_power_law,
    fit_power_law_cov,
    fit_series,
    fixture_path,
    group_series,
    load_fixture,
    predict_gap,
    read_points,
    summarize,
    write_fits,
    write_plot_data,
)
