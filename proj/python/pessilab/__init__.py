"""Reward-uncertainty estimation and pessimistic policy optimization in a
synthetic embedding world with a known gold reward."""

from ._pessilab import (
    CandidatePool,
    EnsembleHeads,
    PessilabError,
    PessimisticAdjustment,
    PrecisionState,
    PreferenceDataset,
    PreferenceTriple,
    RewardHead,
    SyntheticWorld,
    TrainConfig,
    WorldConfig,
    adjusted_reward,
    bt_loss,
    build_precision,
    ci_uncertainty,
    correlation_report,
    ensemble_reward,
    fit_bt,
    fit_ensemble,
    gen_preferences,
    gen_world,
    gold_reward,
    inner_min_value,
    lambda_star,
    load_world,
    oracle_inner_min,
    pessimism_gap,
    pessimistic_adjustment,
    predict,
    run_cli,
    samplewise_adjusted_reward,
    save_world,
    train,
)

__all__ = [
    "CandidatePool",
    "EnsembleHeads",
    "PessilabError",
    "PessimisticAdjustment",
    "PrecisionState",
    "PreferenceDataset",
    "PreferenceTriple",
    "RewardHead",
    "SyntheticWorld",
    "TrainConfig",
    "WorldConfig",
    "adjusted_reward",
    "bt_loss",
    "build_precision",
    "ci_uncertainty",
    "correlation_report",
    "ensemble_reward",
    "fit_bt",
    "fit_ensemble",
    "gen_preferences",
    "gen_world",
    "gold_reward",
    "inner_min_value",
    "lambda_star",
    "load_world",
    "oracle_inner_min",
    "pessimism_gap",
    "pessimistic_adjustment",
    "predict",
    "run_cli",
    "samplewise_adjusted_reward",
    "save_world",
    "train",
]
