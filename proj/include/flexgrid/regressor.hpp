#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace flexgrid {

/// Supervised regressors used for the Q heads. Implementations must be fully
/// deterministic given their seed: identical (X, y, seed) produces an
/// identical model and identical predictions on any platform.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) = 0;
  virtual double predict(const Eigen::VectorXd& x) const = 0;
  virtual bool trained() const = 0;
  virtual void save(std::ostream& out) const = 0;

  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict(X.row(i).transpose());
    return out;
  }
};

struct ExtraTreesOptions {
  int n_trees = 50;
  int min_leaf = 5;
  std::uint64_t seed = 0;
};

/// Ensemble of extremely randomized trees: every internal node draws one
/// uniform random cut per non-constant feature and keeps the cut with the
/// largest variance reduction. Predictions average the leaf means.
class ExtraTreesRegressor final : public Regressor {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    float threshold = 0.0f;
    std::int32_t left = -1;
    std::int32_t right = -1;
    float value = 0.0f;
  };

  explicit ExtraTreesRegressor(ExtraTreesOptions opts = {});

  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
  double predict(const Eigen::VectorXd& x) const override;
  bool trained() const override { return !trees_.empty(); }
  void save(std::ostream& out) const override;

  static std::unique_ptr<ExtraTreesRegressor> load(std::istream& in);
  const ExtraTreesOptions& options() const { return opts_; }
  std::size_t tree_count() const { return trees_.size(); }

 private:
  ExtraTreesOptions opts_;
  std::vector<std::vector<Node>> trees_;
};

struct MlpOptions {
  int hidden = 64;
  int epochs = 300;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

/// Two hidden layer ReLU network trained full batch with Adam. Targets are
/// normalized internally; callers pass raw regression targets.
class MlpRegressor final : public Regressor {
 public:
  explicit MlpRegressor(MlpOptions opts = {});

  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
  double predict(const Eigen::VectorXd& x) const override;
  bool trained() const override { return trained_; }
  void save(std::ostream& out) const override;

  static std::unique_ptr<MlpRegressor> load(std::istream& in);

 private:
  MlpOptions opts_;
  bool trained_ = false;
  double y_mean_ = 0.0, y_std_ = 1.0;
  Eigen::MatrixXd w1_, w2_;
  Eigen::VectorXd b1_, b2_, w3_;
  double b3_ = 0.0;
};

struct RegressorConfig {
  std::string kind = "extra_trees";  // extra_trees | mlp
  int n_trees = 50;
  int min_leaf = 5;
  int hidden = 64;
  int epochs = 300;
  double learning_rate = 1e-3;
};

std::unique_ptr<Regressor> make_regressor(const RegressorConfig& cfg, std::uint64_t seed);
std::unique_ptr<Regressor> load_regressor(std::istream& in);

}  // namespace flexgrid
