#include "nef/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace nef {

void RunConfig::validate() const {
  if (n_eigenfuncs < 1) throw ConfigError("config: K must be at least 1");
  if (!(alpha >= 0.0)) throw ConfigError("config: alpha must be non-negative");
  if (k < 1) throw ConfigError("config: k must be at least 1");
  if (k_tilde < 1) throw ConfigError("config: k_tilde must be at least 1");
  if (batch_images < 1) throw ConfigError("config: batch_images must be at least 1");
  if (epochs < 1) throw ConfigError("config: epochs must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (!(tau_end > 0.0)) throw ConfigError("config: tau_end must be positive");
  if (!(tau_start >= tau_end)) throw ConfigError("config: tau_start must be >= tau_end");
  if (width < 0) throw ConfigError("config: width must be non-negative");
  if (n_blocks < 0) throw ConfigError("config: n_blocks must be non-negative");
  if (n_clusters < 0) throw ConfigError("config: n_clusters must be non-negative");
  if (width_effective() < n_eigenfuncs)
    throw ConfigError("config: width " + std::to_string(width_effective()) +
                      " cannot host " + std::to_string(n_eigenfuncs) +
                      " orthonormal head columns; need width >= K");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + value +
                      "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    lineno += 1;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");

    if (key == "K") cfg.n_eigenfuncs = parse_int(key, value);
    else if (key == "beta") cfg.beta = parse_double(key, value);
    else if (key == "alpha") cfg.alpha = parse_double(key, value);
    else if (key == "k") cfg.k = parse_int(key, value);
    else if (key == "k_tilde") cfg.k_tilde = parse_int(key, value);
    else if (key == "batch_images") cfg.batch_images = parse_int(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "tau_start") cfg.tau_start = parse_double(key, value);
    else if (key == "tau_end") cfg.tau_end = parse_double(key, value);
    else if (key == "seed") cfg.seed = parse_uint(key, value);
    else if (key == "width") cfg.width = parse_int(key, value);
    else if (key == "n_blocks") cfg.n_blocks = parse_int(key, value);
    else if (key == "quantize") cfg.quantize = parse_bool(key, value);
    else if (key == "hard_gumbel") cfg.hard_gumbel = parse_bool(key, value);
    else if (key == "n_clusters") cfg.n_clusters = parse_int(key, value);
    else
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");

    if (key == "beta" && cfg.beta < 0.0)
      throw ConfigError("config: beta must be non-negative when given explicitly");
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "K = " << cfg.n_eigenfuncs << "\n";
  out << "beta = " << cfg.beta_effective() << "\n";
  out << "alpha = " << cfg.alpha << "\n";
  out << "k = " << cfg.k << "\n";
  out << "k_tilde = " << cfg.k_tilde << "\n";
  out << "batch_images = " << cfg.batch_images << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "lr = " << cfg.lr << "\n";
  out << "tau_start = " << cfg.tau_start << "\n";
  out << "tau_end = " << cfg.tau_end << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "width = " << cfg.width_effective() << "\n";
  out << "n_blocks = " << cfg.n_blocks << "\n";
  out << "quantize = " << (cfg.quantize ? "true" : "false") << "\n";
  out << "hard_gumbel = " << (cfg.hard_gumbel ? "true" : "false") << "\n";
  out << "n_clusters = " << cfg.clusters_effective() << "\n";
  return out.str();
}

}  // namespace nef
