#pragma once

// Small fits of every model kind shared by the serialization and server tests.

#include "fdaw/fosr.hpp"
#include "fdaw/fpca.hpp"
#include "fdaw/mfpca.hpp"
#include "fdaw/simulate.hpp"
#include "fdaw/tvfpca.hpp"

namespace fdaw::fixture {

inline const FunctionalDataset& fpca_data() {
  static const FunctionalDataset ds = [] {
    SimConfig cfg = default_config(Scenario::fpca);
    cfg.n_subjects = 60;
    cfg.grid_size = 30;
    auto out = simulate(Scenario::fpca, cfg, 31).first;
    out.observed(4, 7) = false;  // one missing cell exercises NaN serialization
    out.values(4, 7) = 0;
    return out;
  }();
  return ds;
}

inline const FpcaFit& fpca() {
  static const FpcaFit fit = fit_fpca(fpca_data());
  return fit;
}

inline const FunctionalDataset& mfpca_data() {
  static const FunctionalDataset ds = [] {
    SimConfig cfg = default_config(Scenario::mfpca);
    cfg.n_subjects = 30;
    cfg.grid_size = 30;
    cfg.min_visits = 2;
    cfg.max_visits = 4;
    cfg.visit_shifts = {0.0, 0.5, 1.0, 1.5};
    return simulate(Scenario::mfpca, cfg, 32).first;
  }();
  return ds;
}

inline const MfpcaFit& mfpca() {
  static const MfpcaFit fit = [] {
    MfpcaOptions opts;
    opts.twoway = true;
    return fit_mfpca(mfpca_data(), opts);
  }();
  return fit;
}

inline const FunctionalDataset& tvfpca_data() {
  static const FunctionalDataset ds = [] {
    SimConfig cfg = default_config(Scenario::tvfpca);
    cfg.n_subjects = 25;
    cfg.grid_size = 25;
    return simulate(Scenario::tvfpca, cfg, 33).first;
  }();
  return ds;
}

inline const TvFpcaFit& tvfpca() {
  static const TvFpcaFit fit = fit_tvfpca(tvfpca_data());
  return fit;
}

inline const FunctionalDataset& fosr_data() {
  static const FunctionalDataset ds = [] {
    SimConfig cfg = default_config(Scenario::fosr);
    cfg.n_subjects = 60;
    cfg.grid_size = 30;
    auto out = simulate(Scenario::fosr, cfg, 34).first;
    Covariate age;
    age.name = "age";
    for (Eigen::Index i = 0; i < out.n_curves(); ++i) age.numeric.push_back(30.0 + static_cast<double>((i * 7) % 23));
    out.covariates.push_back(age);
    return out;
  }();
  return ds;
}

inline const FosrFit& fosr() {
  static const FosrFit fit = fit_fosr(fosr_data(), {"group", "age"});
  return fit;
}

}  // namespace fdaw::fixture
