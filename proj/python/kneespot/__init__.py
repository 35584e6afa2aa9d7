"""Battery knee-onset detection and state-of-health estimation.

The package wraps the C++ core: DTW cycle synchronization, matrix-profile
anomaly detection with a control-limit knee-onset detector, fleet
categorization by knee/EOL mixture, and per-category SOH regressors.
"""

from kneespot._core import (
    BatteryData,
    Category,
    CategoryMap,
    CycleProfile,
    DetectionOutcome,
    DetectorConfig,
    DischargeCycle,
    DownsampleMode,
    Error,
    EstimateRow,
    EstimationOutcome,
    FleetModelFile,
    FleetPoint,
    GmmComponent,
    GmmModel,
    KneeDetector,
    LineFit,
    ModelStore,
    Normalization,
    ProfilePair,
    RegressorConfig,
    RunManifest,
    SOHSeries,
    SohModel,
    SynchronizedCycle,
    SynthBattery,
    SynthSpec,
    Verdict,
    VerdictSpan,
    VoltageSample,
    WarpingPath,
    __version__,
    build_series,
    categorize_components,
    category_name,
    classify_battery,
    classify_by_eol,
    component_posterior,
    compute_profile,
    compute_profile_fast,
    cycle_downsample,
    detect_battery,
    detect_fleet,
    dtw_align,
    emit_csv,
    estimate_battery,
    estimate_fleet,
    fit_gmm,
    fit_line,
    generate_battery,
    gradient_check,
    ingest,
    knee_marginal_posterior,
    label_eol,
    label_knee,
    load_fleet_model,
    load_soh_model,
    parameter_count,
    predict,
    r_squared,
    read_fleet_table,
    rmse,
    save_fleet_model,
    save_soh_model,
    synchronize_cycle,
    train,
    validate_cycle,
    write_fleet_table,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
