#include "sequst/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace sequst {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSequst: return "sequst";
    case TrainMode::kSst: return "sst";
    case TrainMode::kSupervisedOnly: return "supervised_only";
  }
  return "unknown";
}

TrainMode parse_mode(std::string_view name) {
  if (name == "sequst") return TrainMode::kSequst;
  if (name == "sst") return TrainMode::kSst;
  if (name == "supervised_only") return TrainMode::kSupervisedOnly;
  throw ConfigError(fmt::format("mode: expected sequst, sst or supervised_only, got '{}'", name));
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  return v;
}

// libstdc++ 11 lacks floating-point from_chars.
double parse_real(std::string_view key, std::string_view text) {
  std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  }
  if (used != s.size()) throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view key, std::string_view text) {
  std::vector<std::uint64_t> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_number<std::uint64_t>(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError(fmt::format("{}: empty seed list", key));
  return out;
}

std::string real(double v) { return fmt::format("{}", v); }

template <typename T, typename U>
bool within(T v, std::initializer_list<U> allowed) {
  return std::any_of(allowed.begin(), allowed.end(), [&](U a) { return std::abs(static_cast<double>(v) - static_cast<double>(a)) < 1e-12; });
}

}  // namespace

void TrainingConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "mode") mode = parse_mode(value);
  else if (key == "head") {
    try {
      head = parse_head(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "embed_dim") embed_dim = parse_number<std::size_t>(key, value);
  else if (key == "hidden_dim") hidden_dim = parse_number<std::size_t>(key, value);
  else if (key == "dropout") dropout = parse_real(key, value);
  else if (key == "max_length") max_length = parse_number<std::size_t>(key, value);
  else if (key == "learning_rate") learning_rate = parse_real(key, value);
  else if (key == "warmup_rate") warmup_rate = parse_real(key, value);
  else if (key == "weight_decay") weight_decay = parse_real(key, value);
  else if (key == "grad_clip") grad_clip = parse_real(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "teacher_epochs") teacher_epochs = parse_number<int>(key, value);
  else if (key == "student_epochs") student_epochs = parse_number<int>(key, value);
  else if (key == "t_passes") t_passes = parse_number<std::size_t>(key, value);
  else if (key == "rho") rho = parse_real(key, value);
  else if (key == "selection_mode") {
    try {
      selection_mode = parse_selection_mode(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "tau") loss.tau = parse_real(key, value);
  else if (key == "lambda") loss.lambda = parse_real(key, value);
  else if (key == "k_perturb") loss.k_perturb = parse_number<int>(key, value);
  else if (key == "loss_kind") {
    try {
      loss.loss_kind = parse_loss_kind(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "stop_clean_gradient") loss.stop_clean_gradient = parse_bool(key, value);
  else if (key == "max_iterations") max_iterations = parse_number<int>(key, value);
  else if (key == "patience") patience = parse_number<int>(key, value);
  else if (key == "student_uses_labeled") student_uses_labeled = parse_bool(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "seeds") seeds = parse_seed_list(key, value);
  else if (key == "shots") shots = parse_number<int>(key, value);
  else throw ConfigError(fmt::format("unknown config key '{}'", key));
}

std::string TrainingConfig::to_text() const {
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) { out += fmt::format("{} = {}\n", k, v); };
  line("mode", to_string(mode));
  line("head", to_string(head));
  line("embed_dim", std::to_string(embed_dim));
  line("hidden_dim", std::to_string(hidden_dim));
  line("dropout", real(dropout));
  line("max_length", std::to_string(max_length));
  line("learning_rate", real(learning_rate));
  line("warmup_rate", real(warmup_rate));
  line("weight_decay", real(weight_decay));
  line("grad_clip", real(grad_clip));
  line("batch_size", std::to_string(batch_size));
  line("teacher_epochs", std::to_string(teacher_epochs));
  line("student_epochs", std::to_string(student_epochs));
  line("t_passes", std::to_string(t_passes));
  line("rho", real(rho));
  line("selection_mode", to_string(selection_mode));
  line("tau", real(loss.tau));
  line("lambda", real(loss.lambda));
  line("k_perturb", std::to_string(loss.k_perturb));
  line("loss_kind", to_string(loss.loss_kind));
  line("stop_clean_gradient", loss.stop_clean_gradient ? "true" : "false");
  line("max_iterations", std::to_string(max_iterations));
  line("patience", std::to_string(patience));
  line("student_uses_labeled", student_uses_labeled ? "true" : "false");
  line("seed", std::to_string(seed));
  line("seeds", fmt::format("{}", fmt::join(seeds, ",")));
  line("shots", std::to_string(shots));
  return out;
}

std::vector<std::string> TrainingConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  try {
    loss.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(fmt::format("dropout = {} violates 0 <= dropout < 1", dropout));
  if (embed_dim == 0) fail("embed_dim must be positive");
  if (hidden_dim == 0) fail("hidden_dim must be positive");
  if (max_length == 0) fail("max_length must be positive");
  if (!(learning_rate >= 0.0)) fail(fmt::format("learning_rate = {} violates learning_rate >= 0", learning_rate));
  if (!(warmup_rate >= 0.0 && warmup_rate <= 1.0)) fail(fmt::format("warmup_rate = {} not in [0, 1]", warmup_rate));
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be non-negative (0 disables clipping)");
  if (batch_size == 0) fail("batch_size must be positive");
  if (teacher_epochs < 0) fail("teacher_epochs must be non-negative");
  if (student_epochs < 0) fail("student_epochs must be non-negative");
  if (t_passes == 0) fail("t_passes = 0 violates t_passes >= 1");
  if (!(rho > 0.0 && rho <= 1.0)) fail(fmt::format("rho = {} violates 0 < rho <= 1", rho));
  if (max_iterations < 0) fail("max_iterations must be non-negative");
  if (patience < 1) fail("patience must be at least 1");
  if (seeds.empty()) fail("seeds must list at least one seed");
  if (shots < 1) fail(fmt::format("shots = {} violates shots >= 1", shots));

  std::vector<std::string> warnings;
  auto outside = [&](std::string_view name, const std::string& value, std::string_view space) {
    warnings.push_back(fmt::format("{} = {} is outside the search space {}", name, value, space));
  };
  if (!within(batch_size, {1, 4, 8, 16})) outside("batch_size", std::to_string(batch_size), "{1, 4, 8, 16}");
  if (!within(learning_rate, {1e-5, 2e-5, 5e-5, 1e-4, 2e-4})) {
    outside("learning_rate", real(learning_rate), "{1e-5, 2e-5, 5e-5, 1e-4, 2e-4}");
  }
  if (!within(dropout, {0.1, 0.3, 0.5})) outside("dropout", real(dropout), "{0.1, 0.3, 0.5}");
  if (!within(t_passes, {5, 10, 15, 20})) outside("t_passes", std::to_string(t_passes), "{5, 10, 15, 20}");
  if (!within(warmup_rate, {0.1})) outside("warmup_rate", real(warmup_rate), "{0.1}");
  if (!within(max_length, {64})) outside("max_length", std::to_string(max_length), "{64}");
  if (!within(loss.lambda, {0.25, 0.5, 0.75, 1.0})) outside("lambda", real(loss.lambda), "{0.25, 0.5, 0.75, 1.0}");
  if (!within(loss.k_perturb, {1, 2, 3, 4, 5})) outside("k_perturb", std::to_string(loss.k_perturb), "{1, ..., 5}");
  if (!within(loss.tau, {10})) outside("tau", real(loss.tau), "{10}");
  return warnings;
}

ModelConfig TrainingConfig::model_config() const {
  ModelConfig m;
  m.embed_dim = embed_dim;
  m.hidden_dim = hidden_dim;
  m.dropout = dropout;
  m.head = head;
  return m;
}

TrainingConfig parse_config(std::string_view text) {
  TrainingConfig cfg;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainingConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const TrainingConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace sequst
