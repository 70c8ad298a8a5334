// SPDX-License-Identifier: Apache-2.0
#include "s2st/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace s2st {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size()) throw std::invalid_argument("config: " + key + " expects a real, got '" + value + "'");
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + value + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void TranslationConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(n_st >= 0 && n_to >= 0, "iteration counts must be >= 0");
  require(ddim_steps >= 1, "ddim_steps must be >= 1");
  require(lr_st > 0.0 && lr_to > 0.0, "learning rates must be > 0");
  require(lambda_app_st >= 0.0 && lambda_str_st >= 0.0 && lambda_app_to >= 0.0 && lambda_str_to >= 0.0,
          "loss weights must be >= 0");
  require(omega >= 0.0, "omega must be >= 0");
  require(hist.bins > 0 && hist.hi > hist.lo && hist.bandwidth >= 0.0, "invalid histogram settings");
  require(to_early_stop >= 0.0, "to_early_stop must be >= 0");
  require(checkpoint_segment >= 1, "checkpoint_segment must be >= 1");
}

ConfigEntries parse_config_text(const std::string& text) {
  ConfigEntries entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) + " is not key=value");
    }
    entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return entries;
}

ConfigEntries read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

bool apply_config_entry(TranslationConfig& c, const std::string& key, const std::string& value) {
  if (key == "lambda_app_st") c.lambda_app_st = parse_double(key, value);
  else if (key == "lambda_str_st") c.lambda_str_st = parse_double(key, value);
  else if (key == "n_st") c.n_st = parse_int(key, value);
  else if (key == "lr_st") c.lr_st = parse_double(key, value);
  else if (key == "omega") c.omega = parse_double(key, value);
  else if (key == "ddim_steps") c.ddim_steps = parse_int(key, value);
  else if (key == "lambda_app_to") c.lambda_app_to = parse_double(key, value);
  else if (key == "lambda_str_to") c.lambda_str_to = parse_double(key, value);
  else if (key == "n_to") c.n_to = parse_int(key, value);
  else if (key == "lr_to") c.lr_to = parse_double(key, value);
  else if (key == "to_early_stop") c.to_early_stop = parse_double(key, value);
  else if (key == "hist_bins") c.hist.bins = parse_int(key, value);
  else if (key == "hist_lo") c.hist.lo = parse_double(key, value);
  else if (key == "hist_hi") c.hist.hi = parse_double(key, value);
  else if (key == "hist_bandwidth") c.hist.bandwidth = parse_double(key, value);
  else if (key == "checkpoint_segment") c.checkpoint_segment = parse_int(key, value);
  else if (key == "to_init") {
    if (value == "null-text") c.to_init = EmbeddingInit::null_text;
    else if (value == "previous-step") c.to_init = EmbeddingInit::previous_step;
    else throw std::invalid_argument("config: to_init must be null-text or previous-step");
  } else if (key == "backprop_memory") {
    if (value == "retain-all") c.memory = BackpropMemory::retain_all;
    else if (value == "checkpointed") c.memory = BackpropMemory::checkpointed;
    else throw std::invalid_argument("config: backprop_memory must be retain-all or checkpointed");
  } else {
    return false;
  }
  return true;
}

ConfigEntries to_entries(const TranslationConfig& c) {
  return {
      {"lambda_app_st", format_double(c.lambda_app_st)},
      {"lambda_str_st", format_double(c.lambda_str_st)},
      {"n_st", std::to_string(c.n_st)},
      {"lr_st", format_double(c.lr_st)},
      {"omega", format_double(c.omega)},
      {"ddim_steps", std::to_string(c.ddim_steps)},
      {"lambda_app_to", format_double(c.lambda_app_to)},
      {"lambda_str_to", format_double(c.lambda_str_to)},
      {"n_to", std::to_string(c.n_to)},
      {"lr_to", format_double(c.lr_to)},
      {"to_early_stop", format_double(c.to_early_stop)},
      {"hist_bins", std::to_string(c.hist.bins)},
      {"hist_lo", format_double(c.hist.lo)},
      {"hist_hi", format_double(c.hist.hi)},
      {"hist_bandwidth", format_double(c.hist.bandwidth)},
      {"checkpoint_segment", std::to_string(c.checkpoint_segment)},
      {"to_init", c.to_init == EmbeddingInit::null_text ? "null-text" : "previous-step"},
      {"backprop_memory", c.memory == BackpropMemory::retain_all ? "retain-all" : "checkpointed"},
  };
}

std::string format_entries(const ConfigEntries& entries) {
  std::string out;
  for (const auto& [key, value] : entries) out += key + "=" + value + "\n";
  return out;
}

}  // namespace s2st
