#include "egocorr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "egocorr/error.hpp"

namespace egocorr {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* begin = value.data();
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

using Setter = std::function<void(PipelineConfig&, std::string_view key, std::string_view value)>;

template <typename T>
Setter setter(T PipelineConfig::*field) {
  return [field](PipelineConfig& c, std::string_view key, std::string_view value) {
    c.*field = parse_number<T>(key, value);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"process_width", setter(&PipelineConfig::process_width)},
      {"process_height", setter(&PipelineConfig::process_height)},
      {"sample_step_e_w", setter(&PipelineConfig::sample_step_e_w)},
      {"gftt_min_eigenvalue", setter(&PipelineConfig::gftt_min_eigenvalue)},
      {"resample_interval", setter(&PipelineConfig::resample_interval)},
      {"l_min", setter(&PipelineConfig::l_min)},
      {"l_max", setter(&PipelineConfig::l_max)},
      {"paa_pieces_k", setter(&PipelineConfig::paa_pieces_k)},
      {"top_percent_p", setter(&PipelineConfig::top_percent_p)},
      {"median_window", setter(&PipelineConfig::median_window)},
      {"ransac_threshold", setter(&PipelineConfig::ransac_threshold)},
      {"ransac_iterations", setter(&PipelineConfig::ransac_iterations)},
      {"mask_threshold", setter(&PipelineConfig::mask_threshold)},
  };
  return table;
}

void assign(PipelineConfig& config, std::string_view key, std::string_view value) {
  if (key == "radius_r") {
    // Derived; accepted only when it agrees with the sampling step.
    const int r = parse_number<int>(key, value);
    if (r != config.radius_r()) {
      throw ConfigError("radius_r is derived as 2 * sample_step_e_w and cannot be set to " +
                        std::string(value));
    }
    return;
  }
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  it->second(config, key, value);
}

}  // namespace

void validate(const PipelineConfig& c) {
  if (c.process_width < 8 || c.process_height < 8) {
    throw ConfigError("process size must be at least 8x8");
  }
  if (c.sample_step_e_w < 1) throw ConfigError("sample_step_e_w must be >= 1");
  if (!(c.gftt_min_eigenvalue >= 0.0)) throw ConfigError("gftt_min_eigenvalue must be >= 0");
  if (c.resample_interval < 1) throw ConfigError("resample_interval must be >= 1");
  if (c.l_min < 1) throw ConfigError("l_min must be >= 1");
  if (c.l_min > c.l_max) throw ConfigError("l_min > l_max");
  if (c.paa_pieces_k < 1) throw ConfigError("paa_pieces_k must be >= 1");
  if (!(c.top_percent_p > 0.0 && c.top_percent_p <= 100.0)) {
    throw ConfigError("top_percent_p must be in (0, 100]");
  }
  if (c.median_window < 1 || c.median_window % 2 == 0) {
    throw ConfigError("median_window must be odd and >= 1");
  }
  if (!(c.ransac_threshold > 0.0)) throw ConfigError("ransac_threshold must be > 0");
  if (c.ransac_iterations < 1) throw ConfigError("ransac_iterations must be >= 1");
  if (!(c.mask_threshold >= 0.0 && c.mask_threshold <= 1.0)) {
    throw ConfigError("mask_threshold must be in [0, 1]");
  }
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig config;
  // radius_r is checked against the final step, so it is applied last.
  std::string pending_radius;
  int pending_radius_line = 0;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    if (key == "radius_r") {
      pending_radius = std::string(value);
      pending_radius_line = line_no;
      continue;
    }
    try {
      assign(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!pending_radius.empty()) {
    try {
      assign(config, "radius_r", pending_radius);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(pending_radius_line) + ": " + e.what());
    }
  }
  validate(config);
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string format_config(const PipelineConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "process_width = " << c.process_width << '\n'
      << "process_height = " << c.process_height << '\n'
      << "sample_step_e_w = " << c.sample_step_e_w << '\n'
      << "gftt_min_eigenvalue = " << c.gftt_min_eigenvalue << '\n'
      << "resample_interval = " << c.resample_interval << '\n'
      << "l_min = " << c.l_min << '\n'
      << "l_max = " << c.l_max << '\n'
      << "paa_pieces_k = " << c.paa_pieces_k << '\n'
      << "top_percent_p = " << c.top_percent_p << '\n'
      << "median_window = " << c.median_window << '\n'
      << "ransac_threshold = " << c.ransac_threshold << '\n'
      << "ransac_iterations = " << c.ransac_iterations << '\n'
      << "mask_threshold = " << c.mask_threshold << '\n'
      << "# radius_r = " << c.radius_r() << " (derived)\n";
  return out.str();
}

void save_config(const PipelineConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << format_config(config);
}

void apply_override(PipelineConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  assign(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  validate(config);
}

}  // namespace egocorr
