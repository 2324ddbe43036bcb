//! Mobility-law features: distance law, visitation law and the
//! returner/explorer dichotomy.

mod user;
mod visitation;

pub use user::{
    mean_hop_distance, radius_of_gyration, read_features_csv, returner_explorer, user_features,
    write_features_csv, HopDistance, Profile, UserLawFeatures,
};
pub use visitation::{
    fit_gamma, fit_gamma_with_counts, r_min_from_vocabulary, visit_counts, GammaFit,
    SavedLawModel, TopLocations, VisitationLawModel, DEFAULT_GAMMA, FALLBACK_R_MIN_KM,
    MIN_FIT_TUPLES,
};
