#include "tqpo/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace tqpo {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) {
    // Commas are accepted as separators as well.
    std::size_t start = 0;
    while (start <= w.size()) {
      const auto comma = w.find(',', start);
      const auto piece = w.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!piece.empty()) out.push_back(piece);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

double to_double(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + raw + "'");
  }
  return v;
}

long long to_integer(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + raw + "'");
  }
  return v;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" + raw + "'");
  }
  return v;
}

int to_int(const std::string& key, const std::string& raw) {
  return static_cast<int>(to_integer(key, raw));
}

bool to_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + raw + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  for (const auto& w : split_words(raw)) out.push_back(to_double(key, w));
  return out;
}

std::vector<int> to_ints(const std::string& key, const std::string& raw) {
  std::vector<int> out;
  for (const auto& w : split_words(raw)) out.push_back(to_int(key, w));
  return out;
}

pt::ptree read_ini_text(const std::string& text) {
  std::istringstream is(text);
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("INI parse error: ") + e.what());
  }
  return tree;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;
using SectionSchema = std::map<std::string, Setter>;

/// Applies every key of every section through the schema; anything not in the
/// schema is an error.
void apply_schema(const pt::ptree& tree, const std::map<std::string, SectionSchema>& schema) {
  for (const auto& [section, body] : tree) {
    const auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError("unknown section [" + section + "]");
    if (!body.data().empty() && body.empty()) {
      throw ConfigError("key '" + section + "' appears outside any section");
    }
    for (const auto& [key, node] : body) {
      const auto kit = it->second.find(key);
      if (kit == it->second.end()) {
        throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
      }
      kit->second(section + "." + key, node.data());
    }
  }
}

SectionSchema schedule_schema(ScheduleSpec& s) {
  return {
      {"base", [&s](auto& k, auto& v) { s.base = to_double(k, v); }},
      {"decay_exponent", [&s](auto& k, auto& v) { s.decay_exponent = to_double(k, v); }},
      {"floor", [&s](auto& k, auto& v) { s.floor = to_double(k, v); }},
  };
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  const pt::ptree tree = read_ini_text(text);
  RunConfig c;
  std::optional<double> fixed_up;
  std::optional<double> fixed_down;

  std::map<std::string, SectionSchema> schema;
  schema["run"] = {
      {"epsilon", [&](auto& k, auto& v) { c.epsilon = to_double(k, v); }},
      {"threshold_d", [&](auto& k, auto& v) { c.threshold_d = to_double(k, v); }},
      {"gamma", [&](auto& k, auto& v) { c.gamma = to_double(k, v); }},
      {"gamma_cost", [&](auto& k, auto& v) { c.gamma_cost = to_double(k, v); }},
      {"clip_ratio", [&](auto& k, auto& v) { c.clip_ratio = to_double(k, v); }},
      {"delta_smooth", [&](auto& k, auto& v) { c.delta_smooth = to_double(k, v); }},
      {"horizon", [&](auto& k, auto& v) { c.horizon = to_int(k, v); }},
      {"batch_episodes", [&](auto& k, auto& v) { c.batch_episodes = to_int(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.epochs = to_int(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = to_unsigned(k, v); }},
      {"variant", [&](auto&, auto& v) { c.algorithm_variant = variant_from_string(trim(v)); }},
      {"fixed_eta_plus", [&](auto& k, auto& v) { fixed_up = to_double(k, v); }},
      {"fixed_eta_minus", [&](auto& k, auto& v) { fixed_down = to_double(k, v); }},
      {"minibatch_passes", [&](auto& k, auto& v) { c.minibatch_passes = to_int(k, v); }},
      {"normalize_advantages", [&](auto& k, auto& v) { c.normalize_advantages = to_bool(k, v); }},
      {"bootstrap_replicates", [&](auto& k, auto& v) { c.bootstrap_replicates = to_int(k, v); }},
      {"penalty_form", [&](auto&, auto& v) { c.penalty_form = penalty_form_from_string(trim(v)); }},
      {"indicator_scope",
       [&](auto&, auto& v) { c.indicator_scope = indicator_scope_from_string(trim(v)); }},
      {"checkpoint_every", [&](auto& k, auto& v) { c.checkpoint_every = to_int(k, v); }},
      {"max_numeric_retries", [&](auto& k, auto& v) { c.max_numeric_retries = to_int(k, v); }},
  };
  schema["policy"] = {
      {"hidden", [&](auto& k, auto& v) { c.policy_hidden = to_ints(k, v); }},
      {"bias", [&](auto& k, auto& v) { c.policy_bias = to_bool(k, v); }},
      {"init_log_std", [&](auto& k, auto& v) { c.policy_init_log_std = to_double(k, v); }},
  };
  schema["value"] = {
      {"hidden", [&](auto& k, auto& v) { c.value_hidden = to_ints(k, v); }},
      {"learning_rate", [&](auto& k, auto& v) { c.value_learning_rate = to_double(k, v); }},
      {"iterations", [&](auto& k, auto& v) { c.value_iterations = to_int(k, v); }},
  };
  schema["schedule.alpha"] = schedule_schema(c.schedule_alpha);
  schema["schedule.beta"] = schedule_schema(c.schedule_beta);
  schema["schedule.eta"] = schedule_schema(c.schedule_eta);
  schema["env"] = {
      {"preset", [&](auto&, auto& v) { c.env.preset = trim(v); }},
      {"file",
       [&](auto&, auto& v) {
         std::filesystem::path p = trim(v);
         if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
         c.env.file = p.lexically_normal().string();
       }},
  };

  apply_schema(tree, schema);
  if (fixed_up || fixed_down) {
    if (!(fixed_up && fixed_down)) {
      throw ConfigError("fixed_eta_plus and fixed_eta_minus must be given together");
    }
    c.fixed_tilt_rates = std::pair{*fixed_up, *fixed_down};
  }
  require_valid(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path), std::filesystem::absolute(path).parent_path());
}

std::string run_config_to_ini(const RunConfig& c) {
  std::string out;
  auto line = [&out](std::string_view key, const auto& value) {
    out += fmt::format("{} = {}\n", key, value);
  };
  out += "[run]\n";
  line("epsilon", c.epsilon);
  line("threshold_d", c.threshold_d);
  line("gamma", c.gamma);
  if (c.gamma_cost) line("gamma_cost", *c.gamma_cost);
  line("clip_ratio", c.clip_ratio);
  line("delta_smooth", c.delta_smooth);
  line("horizon", c.horizon);
  line("batch_episodes", c.batch_episodes);
  line("epochs", c.epochs);
  line("seed", c.seed);
  line("variant", to_string(c.algorithm_variant));
  if (c.fixed_tilt_rates) {
    line("fixed_eta_plus", c.fixed_tilt_rates->first);
    line("fixed_eta_minus", c.fixed_tilt_rates->second);
  }
  line("minibatch_passes", c.minibatch_passes);
  line("normalize_advantages", c.normalize_advantages ? "true" : "false");
  line("bootstrap_replicates", c.bootstrap_replicates);
  line("penalty_form", to_string(c.penalty_form));
  line("indicator_scope", to_string(c.indicator_scope));
  line("checkpoint_every", c.checkpoint_every);
  line("max_numeric_retries", c.max_numeric_retries);
  out += "\n[policy]\n";
  line("hidden", fmt::format("{}", fmt::join(c.policy_hidden, " ")));
  line("bias", c.policy_bias ? "true" : "false");
  line("init_log_std", c.policy_init_log_std);
  out += "\n[value]\n";
  line("hidden", fmt::format("{}", fmt::join(c.value_hidden, " ")));
  line("learning_rate", c.value_learning_rate);
  line("iterations", c.value_iterations);
  const std::pair<const char*, const ScheduleSpec*> schedules[] = {
      {"alpha", &c.schedule_alpha}, {"beta", &c.schedule_beta}, {"eta", &c.schedule_eta}};
  for (const auto& [name, s] : schedules) {
    out += fmt::format("\n[schedule.{}]\n", name);
    line("base", s->base);
    line("decay_exponent", s->decay_exponent);
    line("floor", s->floor);
  }
  out += "\n[env]\n";
  if (!c.env.preset.empty()) line("preset", c.env.preset);
  if (!c.env.file.empty()) line("file", c.env.file);
  return out;
}

// ---------------------------------------------------------------------------
// Environment files

namespace {

Eigen::Vector2d to_point(const std::string& key, const std::string& raw) {
  const auto v = to_doubles(key, raw);
  if (v.size() != 2) throw ConfigError("key '" + key + "': expected two numbers");
  return {v[0], v[1]};
}

void check_version(const pt::ptree& tree) {
  const auto version = tree.get_optional<std::string>("format.version");
  if (!version) throw ConfigError("environment file lacks [format] version");
  if (to_int("format.version", *version) != kEnvFormatVersion) {
    throw ConfigError("unsupported environment format version " + *version);
  }
}

std::unique_ptr<Environment> parse_chain(const pt::ptree& tree, int horizon) {
  ChainCostMDP::Tables t;
  std::string name = "chain";
  bool time_feature = false;
  std::map<std::string, std::string> transitions;
  std::map<std::string, std::string> rewards;
  std::map<std::string, std::string> costs;

  std::map<std::string, SectionSchema> schema;
  schema["format"] = {{"version", [](auto&, auto&) {}}};
  schema["env"] = {
      {"type", [](auto&, auto&) {}},
      {"name", [&](auto&, auto& v) { name = trim(v); }},
      {"n_states", [&](auto& k, auto& v) { t.n_states = to_int(k, v); }},
      {"n_actions", [&](auto& k, auto& v) { t.n_actions = to_int(k, v); }},
      {"initial_state", [&](auto& k, auto& v) { t.initial_state = to_int(k, v); }},
      {"time_feature", [&](auto& k, auto& v) { time_feature = to_bool(k, v); }},
      {"horizon", [&](auto& k, auto& v) {
         if (horizon <= 0) horizon = to_int(k, v);
       }},
  };
  // Row keys are checked against the table sizes once those are known.
  for (const auto& [section, body] : tree) {
    if (section == "transitions" || section == "rewards" || section == "costs") {
      auto& into = section == "transitions" ? transitions : section == "rewards" ? rewards : costs;
      for (const auto& [key, node] : body) into[key] = node.data();
    }
  }
  pt::ptree known;
  for (const auto& [section, body] : tree) {
    if (section != "transitions" && section != "rewards" && section != "costs") {
      known.add_child(section, body);
    }
  }
  apply_schema(known, schema);
  if (horizon <= 0) throw ConfigError("chain environment needs a horizon");
  if (t.n_states < 1 || t.n_actions < 2) throw ConfigError("chain needs n_states >= 1, n_actions >= 2");

  t.reward = Matrix::Zero(t.n_states, t.n_actions);
  t.cost = Matrix::Zero(t.n_states, t.n_actions);
  std::set<std::string> used_t;
  std::set<std::string> used_r;
  std::set<std::string> used_c;
  for (int s = 0; s < t.n_states; ++s) {
    const std::string sk = "s" + std::to_string(s);
    for (int a = 0; a < t.n_actions; ++a) {
      const std::string key = sk + ".a" + std::to_string(a);
      const auto it = transitions.find(key);
      if (it == transitions.end()) throw ConfigError("missing transitions." + key);
      const auto row = to_doubles("transitions." + key, it->second);
      if (static_cast<int>(row.size()) != t.n_states) {
        throw ConfigError("transitions." + key + " must list n_states probabilities");
      }
      t.transition.push_back(Eigen::Map<const Vector>(row.data(), t.n_states));
      used_t.insert(key);
    }
    for (auto* table : {&rewards, &costs}) {
      const bool is_reward = table == &rewards;
      const std::string section = is_reward ? "rewards" : "costs";
      const auto it = table->find(sk);
      if (it == table->end()) throw ConfigError("missing " + section + "." + sk);
      const auto row = to_doubles(section + "." + sk, it->second);
      if (static_cast<int>(row.size()) != t.n_actions) {
        throw ConfigError(section + "." + sk + " must list n_actions values");
      }
      for (int a = 0; a < t.n_actions; ++a) {
        (is_reward ? t.reward : t.cost)(s, a) = row[static_cast<std::size_t>(a)];
      }
      (is_reward ? used_r : used_c).insert(sk);
    }
  }
  for (const auto& [k, v] : transitions) {
    if (!used_t.count(k)) throw ConfigError("unknown key '" + k + "' in section [transitions]");
  }
  for (const auto& [k, v] : rewards) {
    if (!used_r.count(k)) throw ConfigError("unknown key '" + k + "' in section [rewards]");
  }
  for (const auto& [k, v] : costs) {
    if (!used_c.count(k)) throw ConfigError("unknown key '" + k + "' in section [costs]");
  }
  return std::make_unique<ChainCostMDP>(std::move(t), horizon, time_feature, name);
}

std::unique_ptr<Environment> parse_hazard(const pt::ptree& tree, int horizon) {
  HazardNav2D::Layout layout;
  std::string name = "hazard";
  if (const auto preset = tree.get_optional<std::string>("env.preset")) {
    HazardNav2D base = HazardNav2D::preset(trim(*preset), 1);
    layout = base.layout();
    name = trim(*preset);
  }
  std::optional<std::vector<Hazard>> hazards;

  std::map<std::string, SectionSchema> schema;
  schema["format"] = {{"version", [](auto&, auto&) {}}};
  schema["env"] = {
      {"type", [](auto&, auto&) {}},
      {"preset", [](auto&, auto&) {}},
      {"name", [&](auto&, auto& v) { name = trim(v); }},
      {"horizon", [&](auto& k, auto& v) {
         if (horizon <= 0) horizon = to_int(k, v);
       }},
      {"arena_half_width", [&](auto& k, auto& v) { layout.arena_half_width = to_double(k, v); }},
      {"step_size", [&](auto& k, auto& v) { layout.step_size = to_double(k, v); }},
      {"goal_radius", [&](auto& k, auto& v) { layout.goal_radius = to_double(k, v); }},
      {"robot_start", [&](auto& k, auto& v) { layout.robot_start = to_point(k, v); }},
      {"goal_site_a", [&](auto& k, auto& v) { layout.goal_site_a = to_point(k, v); }},
      {"goal_site_b", [&](auto& k, auto& v) { layout.goal_site_b = to_point(k, v); }},
      {"goal_mode",
       [&](auto& k, auto& v) {
         const auto s = trim(v);
         if (s == "fixed_swap") layout.goal_mode = GoalMode::fixed_swap;
         else if (s == "random") layout.goal_mode = GoalMode::random;
         else throw ConfigError("key '" + k + "': expected fixed_swap or random");
       }},
      {"hazard_mode",
       [&](auto& k, auto& v) {
         const auto s = trim(v);
         if (s == "static") layout.hazard_mode = HazardMode::fixed;
         else if (s == "moving") layout.hazard_mode = HazardMode::moving;
         else throw ConfigError("key '" + k + "': expected static or moving");
       }},
  };
  pt::ptree known;
  for (const auto& [section, body] : tree) {
    if (section == "hazards") {
      hazards.emplace();
      for (const auto& [key, node] : body) {
        const auto v = to_doubles("hazards." + key, node.data());
        if (v.size() != 3 && v.size() != 5) {
          throw ConfigError("hazards." + key + ": expected 'cx cy radius [vx vy]'");
        }
        Hazard h;
        h.center = {v[0], v[1]};
        h.radius = v[2];
        if (v.size() == 5) h.velocity = {v[3], v[4]};
        hazards->push_back(h);
      }
    } else {
      known.add_child(section, body);
    }
  }
  apply_schema(known, schema);
  if (hazards) layout.hazards = *hazards;
  if (horizon <= 0) throw ConfigError("hazard environment needs a horizon");
  return std::make_unique<HazardNav2D>(std::move(layout), horizon, name);
}

}  // namespace

std::unique_ptr<Environment> parse_environment(const std::string& text, int horizon) {
  const pt::ptree tree = read_ini_text(text);
  check_version(tree);
  const auto type = tree.get_optional<std::string>("env.type");
  if (!type) throw ConfigError("environment file lacks env.type");
  if (trim(*type) == "chain") return parse_chain(tree, horizon);
  if (trim(*type) == "hazard") return parse_hazard(tree, horizon);
  throw ConfigError("unknown environment type '" + *type + "'");
}

std::unique_ptr<Environment> load_environment(const std::filesystem::path& path, int horizon) {
  return parse_environment(read_file(path), horizon);
}

std::unique_ptr<Environment> make_environment(const RunConfig& config) {
  if (!config.env.file.empty()) return load_environment(config.env.file, config.horizon);
  const auto& p = config.env.preset;
  if (p == "chain_default") {
    return std::make_unique<ChainCostMDP>(ChainCostMDP::default_chain(config.horizon));
  }
  return std::make_unique<HazardNav2D>(HazardNav2D::preset(p, config.horizon));
}

// ---------------------------------------------------------------------------
// Manifests

ExperimentManifest load_manifest(const std::filesystem::path& path) {
  const pt::ptree tree = read_ini_text(read_file(path));
  ExperimentManifest m;
  const auto base_dir = path.parent_path();
  auto resolve = [&base_dir](const std::string& v) {
    std::filesystem::path p = trim(v);
    if (p.is_relative()) p = base_dir / p;
    return p.lexically_normal();
  };
  std::map<std::string, SectionSchema> schema;
  schema["manifest"] = {
      {"base_config", [&](auto&, auto& v) { m.base_config = resolve(v); }},
      {"out", [&](auto&, auto& v) { m.output_dir = resolve(v); }},
      {"notes", [&](auto&, auto& v) { m.notes = trim(v); }},
  };
  SectionSchema axes;
  for (const char* axis : {"variant", "epsilon", "threshold_d", "seed"}) {
    axes[axis] = [&m, axis](auto& k, auto& v) {
      auto words = split_words(v);
      if (words.empty()) throw ConfigError("sweep axis '" + k + "' is empty");
      if (std::set<std::string>(words.begin(), words.end()).size() != words.size()) {
        throw ConfigError("sweep axis '" + k + "' repeats a value");
      }
      m.axes[axis] = std::move(words);
    };
  }
  schema["sweep"] = axes;
  apply_schema(tree, schema);
  if (m.base_config.empty()) throw ConfigError("manifest lacks manifest.base_config");
  if (m.output_dir.empty()) m.output_dir = base_dir / "sweep_out";
  return m;
}

std::vector<ExperimentManifest::Run> ExperimentManifest::expand() const {
  const RunConfig base = load_run_config(base_config);
  std::vector<Run> runs{{"", base}};
  for (const auto& [axis, values] : axes) {
    std::vector<Run> next;
    for (const auto& run : runs) {
      for (const auto& v : values) {
        Run r = run;
        const std::string key = "sweep." + axis;
        if (axis == "variant") r.config.algorithm_variant = variant_from_string(v);
        else if (axis == "epsilon") r.config.epsilon = to_double(key, v);
        else if (axis == "threshold_d") r.config.threshold_d = to_double(key, v);
        else if (axis == "seed") r.config.seed = to_unsigned(key, v);
        r.name += (r.name.empty() ? "" : "_") + axis + "-" + v;
        next.push_back(std::move(r));
      }
    }
    runs = std::move(next);
  }
  for (auto& r : runs) {
    if (r.name.empty()) r.name = "run";
    require_valid(r.config);
  }
  return runs;
}

}  // namespace tqpo
