#include "flexgrid/qfunction.hpp"

#include <cmath>
#include <fstream>

#include "flexgrid/bau.hpp"
#include "flexgrid/binio.hpp"
#include "flexgrid/errors.hpp"
#include "flexgrid/rng.hpp"

namespace flexgrid {

namespace {
constexpr char kMagic[4] = {'F', 'G', 'Q', 'F'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

double QFunction::q(const HouseholdState& state, Action u) const {
  if (!trained()) throw ContractViolation("qfunction: evaluation before training");
  const Eigen::VectorXd x = scaler_.apply(encode_features(state));
  return (u == Action::On ? *head_on_ : *head_off_).predict(x);
}

double QFunction::value(const HouseholdState& state, double setpoint) const {
  return q(state, bau_policy(state, setpoint));
}

double QFunction::advantage(const HouseholdState& state, double setpoint, Action u) const {
  if (!trained()) throw ContractViolation("qfunction: evaluation before training");
  const Action bau = bau_policy(state, setpoint);
  if (u == bau) return 0.0;
  const Eigen::VectorXd x = scaler_.apply(encode_features(state));
  const double q_dev = (u == Action::On ? *head_on_ : *head_off_).predict(x);
  const double q_bau = (bau == Action::On ? *head_on_ : *head_off_).predict(x);
  return q_dev - q_bau;
}

void QFunction::save(std::ostream& out) const {
  if (!trained()) throw ContractViolation("qfunction: cannot save an untrained model");
  out.write(kMagic, 4);
  binio::write_pod<std::uint32_t>(out, kVersion);
  binio::write_pod<std::int32_t>(out, meta_.first_day);
  binio::write_pod<std::int32_t>(out, meta_.last_day);
  binio::write_pod<std::int32_t>(out, meta_.iterations);
  binio::write_pod<std::uint32_t>(out, std::uint32_t(meta_.train_rmse.size()));
  for (double r : meta_.train_rmse) binio::write_pod<double>(out, r);
  binio::write_pod<double>(out, scaler_.mean);
  binio::write_pod<double>(out, scaler_.std);
  head_off_->save(out);
  head_on_->save(out);
}

void QFunction::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open model file for writing: " + path);
  save(out);
}

QFunction QFunction::load(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw ConfigError("not a model file (bad magic)");
  if (binio::read_pod<std::uint32_t>(in) != kVersion)
    throw ConfigError("unsupported model file version");
  QFunction q;
  q.meta_.first_day = binio::read_pod<std::int32_t>(in);
  q.meta_.last_day = binio::read_pod<std::int32_t>(in);
  q.meta_.iterations = binio::read_pod<std::int32_t>(in);
  const auto n_rmse = binio::read_pod<std::uint32_t>(in);
  if (n_rmse > (1u << 16)) throw ConfigError("model file rmse count implausible");
  q.meta_.train_rmse.resize(n_rmse);
  for (auto& r : q.meta_.train_rmse) r = binio::read_pod<double>(in);
  q.scaler_.mean = binio::read_pod<double>(in);
  q.scaler_.std = binio::read_pod<double>(in);
  q.head_off_ = load_regressor(in);
  q.head_on_ = load_regressor(in);
  return q;
}

QFunction QFunction::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model file for reading: " + path);
  return load(in);
}

QFunction fqi_fit(std::span<const Transition> data, const SetpointSchedule& setpoints,
                  const FqiOptions& opts) {
  if (data.empty()) throw TrainingError("fqi: empty experience window");
  if (opts.iterations < 1) throw TrainingError("fqi: iterations must be >= 1");

  const Eigen::Index n = Eigen::Index(data.size());
  const Eigen::Index hist = data[0].state.room_temp_history.size();
  const Eigen::Index d = 3 + hist;

  Eigen::MatrixXd x_raw(n, d), xn_raw(n, d);
  Eigen::VectorXd g(n);
  std::vector<char> terminal(static_cast<std::size_t>(n));
  std::vector<char> is_on(static_cast<std::size_t>(n));
  std::vector<char> next_bau_on(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = data[std::size_t(i)];
    if (t.state.room_temp_history.size() != hist ||
        t.next_state.room_temp_history.size() != hist)
      throw TrainingError("fqi: inconsistent history length in window");
    if (t.cost < 0.0) throw TrainingError("fqi: negative transition cost");
    x_raw.row(i) = encode_features(t.state).transpose();
    xn_raw.row(i) = encode_features(t.next_state).transpose();
    g(i) = t.cost;
    terminal[std::size_t(i)] = t.terminal ? 1 : 0;
    is_on[std::size_t(i)] = t.action == Action::On ? 1 : 0;
    const double sp_next = setpoints.at(t.next_state.minute_of_day);
    next_bau_on[std::size_t(i)] =
        bau_policy(t.next_state.room_temp(), sp_next) == Action::On ? 1 : 0;
  }

  const FeatureScaler scaler = FeatureScaler::fit(x_raw);
  scaler.apply_in_place(x_raw);
  scaler.apply_in_place(xn_raw);

  std::vector<Eigen::Index> idx_off, idx_on;
  for (Eigen::Index i = 0; i < n; ++i)
    (is_on[std::size_t(i)] ? idx_on : idx_off).push_back(i);
  if (idx_off.empty() || idx_on.empty())
    throw TrainingError("fqi: window lacks samples for one of the two actions");

  auto gather = [&](const std::vector<Eigen::Index>& rows, const Eigen::MatrixXd& src) {
    Eigen::MatrixXd out(Eigen::Index(rows.size()), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(Eigen::Index(r)) = src.row(rows[r]);
    return out;
  };
  const Eigen::MatrixXd x_off = gather(idx_off, x_raw);
  const Eigen::MatrixXd x_on = gather(idx_on, x_raw);

  std::unique_ptr<Regressor> prev_off, prev_on;
  TrainMeta meta;
  for (int it = 1; it <= opts.iterations; ++it) {
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double bootstrap = 0.0;
      if (it > 1 && !terminal[std::size_t(i)]) {
        const Regressor& head = next_bau_on[std::size_t(i)] ? *prev_on : *prev_off;
        bootstrap = head.predict(xn_raw.row(i).transpose());
      }
      y(i) = g(i) + bootstrap;
    }
    Eigen::VectorXd y_off(Eigen::Index(idx_off.size())), y_on(Eigen::Index(idx_on.size()));
    for (std::size_t r = 0; r < idx_off.size(); ++r) y_off(Eigen::Index(r)) = y(idx_off[r]);
    for (std::size_t r = 0; r < idx_on.size(); ++r) y_on(Eigen::Index(r)) = y(idx_on[r]);

    auto head_off =
        make_regressor(opts.regressor, substream_seed(opts.seed, "head_off", std::uint64_t(it)));
    auto head_on =
        make_regressor(opts.regressor, substream_seed(opts.seed, "head_on", std::uint64_t(it)));
    head_off->fit(x_off, y_off);
    head_on->fit(x_on, y_on);

    const Eigen::VectorXd p_off = head_off->predict_batch(x_off);
    const Eigen::VectorXd p_on = head_on->predict_batch(x_on);
    const double sse = (p_off - y_off).squaredNorm() + (p_on - y_on).squaredNorm();
    meta.train_rmse.push_back(std::sqrt(sse / double(n)));

    prev_off = std::move(head_off);
    prev_on = std::move(head_on);
    if (opts.on_iteration) opts.on_iteration(it, *prev_off, *prev_on, scaler);
  }

  QFunction out;
  out.head_off_ = std::move(prev_off);
  out.head_on_ = std::move(prev_on);
  out.scaler_ = scaler;
  meta.iterations = opts.iterations;
  out.meta_ = meta;
  return out;
}

QFunction fqi_fit(const ExperienceBuffer& buffer, const SetpointSchedule& setpoints,
                  const FqiOptions& opts) {
  const std::vector<Transition> data = buffer.flatten();
  return fqi_fit(std::span<const Transition>(data), setpoints, opts);
}

}  // namespace flexgrid
