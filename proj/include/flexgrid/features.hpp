#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "flexgrid/types.hpp"

namespace flexgrid {

/// Raw Q-network input for a state: cyclic time of day, then the temperature
/// block [T_out, T_room(t-k) .. T_room(t)]. Length k+4. The user setpoint is
/// deliberately not part of the encoding.
inline Eigen::VectorXd encode_features(const HouseholdState& state) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  const Eigen::Index k1 = state.room_temp_history.size();
  Eigen::VectorXd f(2 + 1 + k1);
  const double phase = two_pi * state.minute_of_day / double(kMinutesPerDay);
  f(0) = std::sin(phase);
  f(1) = std::cos(phase);
  f(2) = state.outdoor_temp;
  f.tail(k1) = state.room_temp_history;
  return f;
}

/// Temperature standardization, one pooled mean/std over every temperature
/// entry of a training window. Frozen per window so advantage comparisons stay
/// consistent within a day; the cyclic time features are already unit-scaled
/// and pass through untouched.
struct FeatureScaler {
  double mean = 0.0;
  double std = 1.0;

  static FeatureScaler fit(const Eigen::MatrixXd& raw_features) {
    FeatureScaler s;
    if (raw_features.rows() == 0 || raw_features.cols() <= 2) return s;
    const auto block = raw_features.rightCols(raw_features.cols() - 2);
    s.mean = block.mean();
    const double var = (block.array() - s.mean).square().mean();
    s.std = var > 1e-12 ? std::sqrt(var) : 1.0;
    return s;
  }

  void apply_in_place(Eigen::Ref<Eigen::MatrixXd> features) const {
    if (features.cols() <= 2) return;
    auto block = features.rightCols(features.cols() - 2);
    block = (block.array() - mean) / std;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& raw) const {
    Eigen::VectorXd out = raw;
    if (out.size() > 2)
      out.tail(out.size() - 2) = (out.tail(out.size() - 2).array() - mean) / std;
    return out;
  }
};

}  // namespace flexgrid
