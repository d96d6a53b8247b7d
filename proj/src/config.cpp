#include "alnp3/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "alnp3/bytes.hpp"

namespace alnp3::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  is.imbue(std::locale::classic());
  double out = 0.0;
  if (!(is >> out) || !is.eof()) bad_value(key, v, "a real number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string real_text(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << v;
  return os.str();
}

using Setter = std::function<void(train::TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  using train::Loss;
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["corpus"] = [](auto& c, auto&, auto& v) { c.corpus = v; };
    t["n_agents"] = [](auto& c, auto& k, auto& v) { c.n_agents = parse_uint(k, v); };
    t["learning_rate"] = [](auto& c, auto& k, auto& v) { c.learning_rate = parse_real(k, v); };
    t["steps"] = [](auto& c, auto& k, auto& v) { c.steps = parse_uint(k, v); };
    t["batch_scenes"] = [](auto& c, auto& k, auto& v) { c.batch_scenes = parse_uint(k, v); };
    t["seed"] = [](auto& c, auto& k, auto& v) { c.seed = parse_uint(k, v); };
    t["align_enabled"] = [](auto& c, auto& k, auto& v) { c.align_enabled = parse_bool(k, v); };
    t["tau"] = [](auto& c, auto& k, auto& v) { c.tau = parse_real(k, v); };
    for (std::size_t i = 0; i < train::kNumLosses; ++i) {
      const auto l = static_cast<Loss>(i);
      t[std::string("loss_weights.") + train::to_string(l)] = [l](auto& c, auto& k, auto& v) {
        c.loss_weights[l] = parse_real(k, v);
      };
    }
    return t;
  }();
  return table;
}

}  // namespace

train::TrainConfig parse_train_config(const std::string& text) {
  train::TrainConfig c;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    it->second(c, key, value);
  }
  if (!(c.learning_rate > 0.0)) throw ConfigError("config key 'learning_rate': must be positive");
  if (!(c.tau > 0.0)) throw ConfigError("config key 'tau': must be positive");
  if (c.batch_scenes == 0) throw ConfigError("config key 'batch_scenes': must be at least 1");
  if (c.n_agents == 0 || c.n_agents > 16) throw ConfigError("config key 'n_agents': must be in [1, 16]");
  return c;
}

train::TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config(bytes::read_text(path));
}

std::string format(const train::TrainConfig& c) {
  std::ostringstream os;
  os << "corpus = " << c.corpus << '\n'
     << "n_agents = " << c.n_agents << '\n'
     << "learning_rate = " << real_text(c.learning_rate) << '\n'
     << "steps = " << c.steps << '\n'
     << "batch_scenes = " << c.batch_scenes << '\n'
     << "seed = " << c.seed << '\n'
     << "align_enabled = " << (c.align_enabled ? "true" : "false") << '\n'
     << "tau = " << real_text(c.tau) << '\n';
  for (std::size_t i = 0; i < train::kNumLosses; ++i)
    os << "loss_weights." << train::to_string(static_cast<train::Loss>(i)) << " = " << real_text(c.loss_weights.w[i])
       << '\n';
  return os.str();
}

}  // namespace alnp3::config
