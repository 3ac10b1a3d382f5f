#include "tqpo/io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tqpo {

std::string format_double(double x) { return fmt::format("{}", x); }

std::string metrics_csv_row(const EpochMetrics& m) {
  return fmt::format("{},{},{},{},{},{},{},{},{}", m.epoch, format_double(m.avg_return),
                     format_double(m.avg_cost), format_double(m.cost_quantile),
                     format_double(m.safety_probability), format_double(m.lambda),
                     format_double(m.q_tracker), format_double(m.eta_used),
                     format_double(m.F_q_at_d));
}

std::string metrics_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["avg_return"] = m.avg_return;
  j["avg_cost"] = m.avg_cost;
  j["cost_quantile"] = m.cost_quantile;
  j["safety_probability"] = m.safety_probability;
  j["lambda"] = m.lambda;
  j["q_tracker"] = m.q_tracker;
  j["eta_used"] = m.eta_used;
  j["F_q_at_d"] = m.F_q_at_d;
  return j.dump();
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double parse_field(const std::string& s, int line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(fmt::format("metrics line {}: bad number '{}'", line, s));
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<EpochMetrics> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw ConfigError("metrics file has an unexpected header");
  }
  std::vector<EpochMetrics> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw ConfigError(fmt::format("metrics line {}: expected 9 fields", lineno));
    EpochMetrics m;
    m.epoch = static_cast<int>(parse_field(f[0], lineno));
    m.avg_return = parse_field(f[1], lineno);
    m.avg_cost = parse_field(f[2], lineno);
    m.cost_quantile = parse_field(f[3], lineno);
    m.safety_probability = parse_field(f[4], lineno);
    m.lambda = parse_field(f[5], lineno);
    m.q_tracker = parse_field(f[6], lineno);
    m.eta_used = parse_field(f[7], lineno);
    m.F_q_at_d = parse_field(f[8], lineno);
    out.push_back(m);
  }
  return out;
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  return parse_metrics_csv(slurp(path));
}

std::vector<EpochMetrics> read_metrics_jsonl(const std::filesystem::path& path) {
  std::istringstream is(slurp(path));
  std::string line;
  std::vector<EpochMetrics> out;
  try {
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      EpochMetrics m;
      m.epoch = j.at("epoch").get<int>();
      m.avg_return = j.at("avg_return").get<double>();
      m.avg_cost = j.at("avg_cost").get<double>();
      m.cost_quantile = j.at("cost_quantile").get<double>();
      m.safety_probability = j.at("safety_probability").get<double>();
      m.lambda = j.at("lambda").get<double>();
      m.q_tracker = j.at("q_tracker").get<double>();
      m.eta_used = j.at("eta_used").get<double>();
      m.F_q_at_d = j.at("F_q_at_d").get<double>();
      out.push_back(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed metrics record: ") + e.what());
  }
  return out;
}

RunSummary summarize(const std::vector<EpochMetrics>& metrics, int window) {
  RunSummary s;
  s.epochs = static_cast<int>(metrics.size());
  s.window = std::min(window, s.epochs);
  if (s.window == 0) return s;
  for (auto it = metrics.end() - s.window; it != metrics.end(); ++it) {
    s.final_return += it->avg_return;
    s.final_safety_probability += it->safety_probability;
    s.final_avg_cost += it->avg_cost;
    s.final_cost_quantile += it->cost_quantile;
    s.final_lambda += it->lambda;
  }
  const double n = s.window;
  s.final_return /= n;
  s.final_safety_probability /= n;
  s.final_avg_cost /= n;
  s.final_cost_quantile /= n;
  s.final_lambda /= n;
  return s;
}

std::string summary_to_json(const RunSummary& s, const RunConfig& config) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(config.algorithm_variant);
  j["epsilon"] = config.epsilon;
  j["threshold_d"] = config.threshold_d;
  j["seed"] = config.seed;
  j["epochs"] = s.epochs;
  j["window"] = s.window;
  j["final_return"] = s.final_return;
  j["final_safety_probability"] = s.final_safety_probability;
  j["final_avg_cost"] = s.final_avg_cost;
  j["final_cost_quantile"] = s.final_cost_quantile;
  j["final_lambda"] = s.final_lambda;
  return j.dump(2) + "\n";
}

RunSummary summary_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RunSummary s;
    s.epochs = j.at("epochs").get<int>();
    s.window = j.at("window").get<int>();
    s.final_return = j.at("final_return").get<double>();
    s.final_safety_probability = j.at("final_safety_probability").get<double>();
    s.final_avg_cost = j.at("final_avg_cost").get<double>();
    s.final_cost_quantile = j.at("final_cost_quantile").get<double>();
    s.final_lambda = j.at("final_lambda").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed summary: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'T', 'Q', 'P', 'O', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw ConfigError("checkpoint is truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_arch(std::ostream& out, const MlpArchitecture& a) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(a.input_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(a.hidden.size()));
  for (int h : a.hidden) put<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(a.output_dim));
  put<std::uint8_t>(out, a.bias ? 1 : 0);
}

MlpArchitecture get_arch(std::istream& in) {
  MlpArchitecture a;
  a.input_dim = static_cast<int>(get<std::uint32_t>(in));
  const auto n_hidden = get<std::uint32_t>(in);
  if (n_hidden > 64) throw ConfigError("checkpoint architecture is implausible");
  for (std::uint32_t i = 0; i < n_hidden; ++i) a.hidden.push_back(static_cast<int>(get<std::uint32_t>(in)));
  a.output_dim = static_cast<int>(get<std::uint32_t>(in));
  a.bias = get<std::uint8_t>(in) != 0;
  return a;
}

void put_vector(std::ostream& out, const Vector& v) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(out, v(i));
}

Vector get_vector(std::istream& in, Eigen::Index expected) {
  const auto n = get<std::uint64_t>(in);
  if (n != static_cast<std::uint64_t>(expected)) {
    throw ConfigError("checkpoint parameter count does not match its architecture");
  }
  Vector v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v(i) = get<double>(in);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainerState& s) {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int32_t>(out, s.epoch);

  put<std::uint8_t>(out, s.policy.head == HeadKind::gaussian ? 1 : 0);
  put_arch(out, s.policy.arch);
  put_vector(out, s.policy.theta);

  put_arch(out, s.value.arch);
  put_vector(out, s.value.phi);

  put<double>(out, s.tracker.q_current);
  put<double>(out, s.tracker.level);
  put<std::uint64_t>(out, s.tracker.update_count);
  put<std::uint8_t>(out, s.tracker_initialized ? 1 : 0);

  put<double>(out, s.multiplier.lambda);
  put<double>(out, s.multiplier.delta);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(s.multiplier.mode));
  put<double>(out, s.multiplier.fixed_eta_plus);
  put<double>(out, s.multiplier.fixed_eta_minus);
  put<double>(out, s.multiplier.last_eta);

  put<std::uint64_t>(out, s.rng.key());
  put<std::uint64_t>(out, s.rng.counter());
  put<std::uint64_t>(out, s.stats_rng.key());
  put<std::uint64_t>(out, s.stats_rng.counter());
}

TrainerState read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ConfigError("not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
  TrainerState s;
  s.epoch = get<std::int32_t>(in);

  const auto head = get<std::uint8_t>(in);
  if (head > 1) throw ConfigError("checkpoint has an unknown policy head");
  s.policy.head = head == 1 ? HeadKind::gaussian : HeadKind::categorical;
  s.policy.arch = get_arch(in);
  s.policy.theta = get_vector(in, s.policy.expected_size());

  s.value.arch = get_arch(in);
  s.value.phi = get_vector(in, s.value.arch.param_count());

  s.tracker.q_current = get<double>(in);
  s.tracker.level = get<double>(in);
  s.tracker.update_count = get<std::uint64_t>(in);
  s.tracker_initialized = get<std::uint8_t>(in) != 0;

  s.multiplier.lambda = get<double>(in);
  s.multiplier.delta = get<double>(in);
  const auto mode = get<std::uint8_t>(in);
  if (mode > 2) throw ConfigError("checkpoint has an unknown tilt mode");
  s.multiplier.mode = static_cast<TiltMode>(mode);
  s.multiplier.fixed_eta_plus = get<double>(in);
  s.multiplier.fixed_eta_minus = get<double>(in);
  s.multiplier.last_eta = get<double>(in);

  const auto k1 = get<std::uint64_t>(in);
  const auto c1 = get<std::uint64_t>(in);
  const auto k2 = get<std::uint64_t>(in);
  const auto c2 = get<std::uint64_t>(in);
  s.rng = CounterRng::from_state(k1, c1);
  s.stats_rng = CounterRng::from_state(k2, c2);
  if (in.peek() != std::char_traits<char>::eof()) throw ConfigError("checkpoint has trailing bytes");
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  write_checkpoint(out, state);
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace tqpo
