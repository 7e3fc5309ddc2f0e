#include "flexgrid/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flexgrid/binio.hpp"
#include "flexgrid/errors.hpp"
#include "flexgrid/rng.hpp"

namespace flexgrid {

namespace {

using Node = ExtraTreesRegressor::Node;

/// Builds one tree over row indices. Partitioning is done manually (stable,
/// two buffers) so the resulting structure never depends on library internals.
struct TreeBuilder {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  int min_leaf;
  Rng& rng;
  std::vector<Node> nodes;
  std::vector<int> idx;
  std::vector<int> scratch;

  TreeBuilder(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in, int leaf, Rng& r)
      : X(x_in), y(y_in), min_leaf(leaf), rng(r) {
    idx.resize(std::size_t(X.rows()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
    scratch.resize(idx.size());
  }

  int build(int lo, int hi) {
    const int n = hi - lo;
    double sum = 0.0, sum2 = 0.0;
    for (int i = lo; i < hi; ++i) {
      const double v = y(idx[std::size_t(i)]);
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / n;
    const double sse = std::max(0.0, sum2 - sum * sum / n);

    const int node_id = int(nodes.size());
    nodes.emplace_back();
    nodes[std::size_t(node_id)].value = float(mean);
    if (n < 2 * min_leaf || sse <= 1e-12) return node_id;

    int best_feature = -1;
    double best_threshold = 0.0, best_score = -1.0;
    const Eigen::Index d = X.cols();
    for (Eigen::Index f = 0; f < d; ++f) {
      double mn = std::numeric_limits<double>::infinity();
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = lo; i < hi; ++i) {
        const double v = X(idx[std::size_t(i)], f);
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      if (!(mx > mn)) continue;
      // Nodes store float32 thresholds; rounding the draw here keeps the
      // partition, the min_leaf checks and eval_tree on the same cut. Cuts
      // rounded onto the interval edge leave one side empty and are rejected
      // by the min_leaf check below.
      const double cut = double(float(rng.uniform(mn, mx)));
      int n_left = 0;
      double sum_left = 0.0, sum2_left = 0.0;
      for (int i = lo; i < hi; ++i) {
        const double xv = X(idx[std::size_t(i)], f);
        if (xv <= cut) {
          const double v = y(idx[std::size_t(i)]);
          ++n_left;
          sum_left += v;
          sum2_left += v * v;
        }
      }
      const int n_right = n - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const double sse_left = std::max(0.0, sum2_left - sum_left * sum_left / n_left);
      const double sum_right = sum - sum_left;
      const double sum2_right = sum2 - sum2_left;
      const double sse_right = std::max(0.0, sum2_right - sum_right * sum_right / n_right);
      const double score = sse - sse_left - sse_right;
      if (score > best_score) {
        best_score = score;
        best_feature = int(f);
        best_threshold = cut;
      }
    }
    if (best_feature < 0) return node_id;

    int n_left = 0;
    for (int i = lo; i < hi; ++i)
      if (X(idx[std::size_t(i)], best_feature) <= best_threshold)
        scratch[std::size_t(n_left++)] = idx[std::size_t(i)];
    int pos = n_left;
    for (int i = lo; i < hi; ++i)
      if (!(X(idx[std::size_t(i)], best_feature) <= best_threshold))
        scratch[std::size_t(pos++)] = idx[std::size_t(i)];
    std::copy(scratch.begin(), scratch.begin() + n, idx.begin() + lo);

    nodes[std::size_t(node_id)].feature = best_feature;
    nodes[std::size_t(node_id)].threshold = float(best_threshold);
    const int left = build(lo, lo + n_left);
    nodes[std::size_t(node_id)].left = left;
    const int right = build(lo + n_left, hi);
    nodes[std::size_t(node_id)].right = right;
    return node_id;
  }
};

double eval_tree(const std::vector<Node>& nodes, const Eigen::VectorXd& x) {
  int i = 0;
  while (nodes[std::size_t(i)].feature >= 0) {
    const Node& nd = nodes[std::size_t(i)];
    i = x(nd.feature) <= double(nd.threshold) ? nd.left : nd.right;
  }
  return double(nodes[std::size_t(i)].value);
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  binio::write_pod<std::int32_t>(out, std::int32_t(m.rows()));
  binio::write_pod<std::int32_t>(out, std::int32_t(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) binio::write_pod<float>(out, float(m(r, c)));
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  const auto rows = binio::read_pod<std::int32_t>(in);
  const auto cols = binio::read_pod<std::int32_t>(in);
  if (rows < 0 || cols < 0 || double(rows) * cols > 5e7)
    throw ConfigError("matrix dimensions implausible in model stream");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = double(binio::read_pod<float>(in));
  return m;
}

}  // namespace

ExtraTreesRegressor::ExtraTreesRegressor(ExtraTreesOptions opts) : opts_(opts) {
  if (opts_.n_trees < 1) throw TrainingError("extra trees: n_trees must be >= 1");
  if (opts_.min_leaf < 1) throw TrainingError("extra trees: min_leaf must be >= 1");
}

void ExtraTreesRegressor::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw TrainingError("extra trees: X rows and y length differ");
  if (X.rows() == 0) throw TrainingError("extra trees: empty training set");
  if (!X.allFinite() || !y.allFinite())
    throw TrainingError("extra trees: non-finite training data");
  trees_.clear();
  trees_.reserve(std::size_t(opts_.n_trees));
  for (int t = 0; t < opts_.n_trees; ++t) {
    Rng rng(substream_seed(opts_.seed, "tree", std::uint64_t(t)));
    TreeBuilder builder(X, y, opts_.min_leaf, rng);
    builder.nodes.reserve(std::size_t(2 * X.rows()));
    builder.build(0, int(X.rows()));
    trees_.push_back(std::move(builder.nodes));
  }
}

double ExtraTreesRegressor::predict(const Eigen::VectorXd& x) const {
  if (trees_.empty()) throw TrainingError("extra trees: predict called before fit");
  double acc = 0.0;
  for (const auto& tree : trees_) acc += eval_tree(tree, x);
  return acc / double(trees_.size());
}

void ExtraTreesRegressor::save(std::ostream& out) const {
  binio::write_pod<char>(out, 'T');
  binio::write_pod<std::int32_t>(out, opts_.n_trees);
  binio::write_pod<std::int32_t>(out, opts_.min_leaf);
  binio::write_pod<std::uint64_t>(out, opts_.seed);
  binio::write_pod<std::uint32_t>(out, std::uint32_t(trees_.size()));
  for (const auto& tree : trees_) {
    binio::write_pod<std::uint32_t>(out, std::uint32_t(tree.size()));
    for (const Node& nd : tree) {
      binio::write_pod<std::int32_t>(out, nd.feature);
      binio::write_pod<float>(out, nd.threshold);
      binio::write_pod<std::int32_t>(out, nd.left);
      binio::write_pod<std::int32_t>(out, nd.right);
      binio::write_pod<float>(out, nd.value);
    }
  }
}

std::unique_ptr<ExtraTreesRegressor> ExtraTreesRegressor::load(std::istream& in) {
  ExtraTreesOptions opts;
  opts.n_trees = binio::read_pod<std::int32_t>(in);
  opts.min_leaf = binio::read_pod<std::int32_t>(in);
  opts.seed = binio::read_pod<std::uint64_t>(in);
  auto model = std::make_unique<ExtraTreesRegressor>(opts);
  const auto n_trees = binio::read_pod<std::uint32_t>(in);
  if (n_trees > (1u << 16)) throw ConfigError("tree count implausible in model stream");
  model->trees_.resize(n_trees);
  for (auto& tree : model->trees_) {
    const auto n_nodes = binio::read_pod<std::uint32_t>(in);
    if (n_nodes == 0 || n_nodes > (1u << 24))
      throw ConfigError("node count implausible in model stream");
    tree.resize(n_nodes);
    for (Node& nd : tree) {
      nd.feature = binio::read_pod<std::int32_t>(in);
      nd.threshold = binio::read_pod<float>(in);
      nd.left = binio::read_pod<std::int32_t>(in);
      nd.right = binio::read_pod<std::int32_t>(in);
      nd.value = binio::read_pod<float>(in);
    }
  }
  return model;
}

MlpRegressor::MlpRegressor(MlpOptions opts) : opts_(opts) {
  if (opts_.hidden < 1 || opts_.epochs < 1 || opts_.learning_rate <= 0.0)
    throw TrainingError("mlp: invalid options");
}

void MlpRegressor::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw TrainingError("mlp: X rows and y length differ");
  if (X.rows() == 0) throw TrainingError("mlp: empty training set");
  if (!X.allFinite() || !y.allFinite()) throw TrainingError("mlp: non-finite training data");

  const Eigen::Index n = X.rows(), d = X.cols(), h = opts_.hidden;
  y_mean_ = y.mean();
  const double var = (y.array() - y_mean_).square().mean();
  y_std_ = var > 1e-12 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd z = (y.array() - y_mean_) / y_std_;

  Rng rng(substream_seed(opts_.seed, "mlp"));
  auto init = [&](Eigen::Index rows, Eigen::Index cols, double fan_in) {
    Eigen::MatrixXd m(rows, cols);
    const double scale = std::sqrt(2.0 / fan_in);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.gaussian() * scale;
    return m;
  };
  w1_ = init(h, d, double(d));
  w2_ = init(h, h, double(h));
  w3_ = init(h, 1, double(h)).col(0);
  b1_ = Eigen::VectorXd::Zero(h);
  b2_ = Eigen::VectorXd::Zero(h);
  b3_ = 0.0;

  struct Adam {
    Eigen::MatrixXd m, v;
    explicit Adam(Eigen::Index rows, Eigen::Index cols)
        : m(Eigen::MatrixXd::Zero(rows, cols)), v(Eigen::MatrixXd::Zero(rows, cols)) {}
    void step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, double lr, double bias1,
              double bias2) {
      m = 0.9 * m + 0.1 * grad;
      v = 0.999 * v.array().matrix() + 0.001 * grad.array().square().matrix();
      param.array() -=
          lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + 1e-8);
    }
  };
  Adam a_w1(h, d), a_w2(h, h), a_w3(h, 1), a_b1(h, 1), a_b2(h, 1), a_b3(1, 1);
  Eigen::MatrixXd b3m(1, 1);
  b3m(0, 0) = b3_;

  for (int epoch = 1; epoch <= opts_.epochs; ++epoch) {
    const Eigen::MatrixXd pre1 = (X * w1_.transpose()).rowwise() + b1_.transpose();
    const Eigen::MatrixXd h1 = pre1.array().max(0.0);
    const Eigen::MatrixXd pre2 = (h1 * w2_.transpose()).rowwise() + b2_.transpose();
    const Eigen::MatrixXd h2 = pre2.array().max(0.0);
    const Eigen::VectorXd pred = (h2 * w3_).array() + b3m(0, 0);

    const Eigen::VectorXd dpred = (pred - z) / double(n);
    const Eigen::MatrixXd g_w3 = (h2.transpose() * dpred);
    const double g_b3 = dpred.sum();
    Eigen::MatrixXd dh2 = dpred * w3_.transpose();
    dh2 = (pre2.array() > 0.0).select(dh2, 0.0);
    const Eigen::MatrixXd g_w2 = dh2.transpose() * h1;
    const Eigen::VectorXd g_b2 = dh2.colwise().sum().transpose();
    Eigen::MatrixXd dh1 = dh2 * w2_;
    dh1 = (pre1.array() > 0.0).select(dh1, 0.0);
    const Eigen::MatrixXd g_w1 = dh1.transpose() * X;
    const Eigen::VectorXd g_b1 = dh1.colwise().sum().transpose();

    const double bias1 = 1.0 - std::pow(0.9, epoch);
    const double bias2 = 1.0 - std::pow(0.999, epoch);
    const double lr = opts_.learning_rate;
    a_w1.step(w1_, g_w1, lr, bias1, bias2);
    a_w2.step(w2_, g_w2, lr, bias1, bias2);
    Eigen::MatrixXd w3m = w3_, b1m = b1_, b2m = b2_;
    a_w3.step(w3m, g_w3, lr, bias1, bias2);
    a_b1.step(b1m, g_b1, lr, bias1, bias2);
    a_b2.step(b2m, g_b2, lr, bias1, bias2);
    Eigen::MatrixXd g_b3m(1, 1);
    g_b3m(0, 0) = g_b3;
    a_b3.step(b3m, g_b3m, lr, bias1, bias2);
    w3_ = w3m.col(0);
    b1_ = b1m.col(0);
    b2_ = b2m.col(0);
  }
  b3_ = b3m(0, 0);
  trained_ = true;
}

double MlpRegressor::predict(const Eigen::VectorXd& x) const {
  if (!trained_) throw TrainingError("mlp: predict called before fit");
  const Eigen::VectorXd h1 = ((w1_ * x) + b1_).array().max(0.0);
  const Eigen::VectorXd h2 = ((w2_ * h1) + b2_).array().max(0.0);
  return (w3_.dot(h2) + b3_) * y_std_ + y_mean_;
}

void MlpRegressor::save(std::ostream& out) const {
  binio::write_pod<char>(out, 'M');
  binio::write_pod<std::int32_t>(out, opts_.hidden);
  binio::write_pod<std::int32_t>(out, opts_.epochs);
  binio::write_pod<double>(out, opts_.learning_rate);
  binio::write_pod<std::uint64_t>(out, opts_.seed);
  binio::write_pod<double>(out, y_mean_);
  binio::write_pod<double>(out, y_std_);
  binio::write_pod<double>(out, b3_);
  write_matrix(out, w1_);
  write_matrix(out, w2_);
  write_matrix(out, w3_);
  write_matrix(out, b1_);
  write_matrix(out, b2_);
}

std::unique_ptr<MlpRegressor> MlpRegressor::load(std::istream& in) {
  MlpOptions opts;
  opts.hidden = binio::read_pod<std::int32_t>(in);
  opts.epochs = binio::read_pod<std::int32_t>(in);
  opts.learning_rate = binio::read_pod<double>(in);
  opts.seed = binio::read_pod<std::uint64_t>(in);
  auto model = std::make_unique<MlpRegressor>(opts);
  model->y_mean_ = binio::read_pod<double>(in);
  model->y_std_ = binio::read_pod<double>(in);
  model->b3_ = binio::read_pod<double>(in);
  model->w1_ = read_matrix(in);
  model->w2_ = read_matrix(in);
  model->w3_ = read_matrix(in).col(0);
  model->b1_ = read_matrix(in).col(0);
  model->b2_ = read_matrix(in).col(0);
  model->trained_ = true;
  return model;
}

std::unique_ptr<Regressor> make_regressor(const RegressorConfig& cfg, std::uint64_t seed) {
  if (cfg.kind == "extra_trees") {
    ExtraTreesOptions opts;
    opts.n_trees = cfg.n_trees;
    opts.min_leaf = cfg.min_leaf;
    opts.seed = seed;
    return std::make_unique<ExtraTreesRegressor>(opts);
  }
  if (cfg.kind == "mlp") {
    MlpOptions opts;
    opts.hidden = cfg.hidden;
    opts.epochs = cfg.epochs;
    opts.learning_rate = cfg.learning_rate;
    opts.seed = seed;
    return std::make_unique<MlpRegressor>(opts);
  }
  throw ConfigError("unknown regressor kind: " + cfg.kind);
}

std::unique_ptr<Regressor> load_regressor(std::istream& in) {
  const char tag = binio::read_pod<char>(in);
  if (tag == 'T') return ExtraTreesRegressor::load(in);
  if (tag == 'M') return MlpRegressor::load(in);
  throw ConfigError("unknown regressor tag in model stream");
}

}  // namespace flexgrid
