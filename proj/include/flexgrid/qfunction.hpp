#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flexgrid/experience.hpp"
#include "flexgrid/features.hpp"
#include "flexgrid/regressor.hpp"
#include "flexgrid/setpoints.hpp"
#include "flexgrid/types.hpp"

namespace flexgrid {

struct TrainMeta {
  int first_day = 0;
  int last_day = 0;
  int iterations = 0;
  std::vector<double> train_rmse;  // one entry per iteration
};

/// Per-household state-action value model: one regressor head per action plus
/// the frozen temperature scaler of its training window. Value is Q at the
/// thermostat action, so the advantage of that action is zero by construction.
class QFunction {
 public:
  QFunction() = default;
  QFunction(QFunction&&) = default;
  QFunction& operator=(QFunction&&) = default;

  bool trained() const { return head_off_ != nullptr && head_on_ != nullptr; }

  double q(const HouseholdState& state, Action u) const;
  double value(const HouseholdState& state, double setpoint) const;
  double advantage(const HouseholdState& state, double setpoint, Action u) const;

  const TrainMeta& meta() const { return meta_; }
  TrainMeta& meta() { return meta_; }
  const FeatureScaler& scaler() const { return scaler_; }

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static QFunction load(std::istream& in);
  static QFunction load_file(const std::string& path);

 private:
  std::unique_ptr<Regressor> head_off_;
  std::unique_ptr<Regressor> head_on_;
  FeatureScaler scaler_;
  TrainMeta meta_;

  friend QFunction fqi_fit(std::span<const Transition>, const SetpointSchedule&,
                           const struct FqiOptions&);
};

struct FqiOptions {
  int iterations = 20;
  RegressorConfig regressor;
  std::uint64_t seed = 0;
  /// Optional per-iteration probe (convergence tests); receives the freshly
  /// fitted heads and the window scaler.
  std::function<void(int iteration, const Regressor& head_off, const Regressor& head_on,
                     const FeatureScaler& scaler)>
      on_iteration;
};

/// Fitted Q-iteration under the thermostat policy, undiscounted with episodic
/// day boundaries: targets are g + Q_prev(x', pi_b(x')), zero bootstrap on the
/// first iteration and on terminal transitions.
QFunction fqi_fit(std::span<const Transition> data, const SetpointSchedule& setpoints,
                  const FqiOptions& opts);
QFunction fqi_fit(const ExperienceBuffer& buffer, const SetpointSchedule& setpoints,
                  const FqiOptions& opts);

}  // namespace flexgrid
