#include "gnr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gnr/metrics.hpp"

namespace gnr::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& v, const std::string& key) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("bad value '" + v + "' for " + key);
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(out)) throw ConfigError("non-finite value for " + key);
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad value '" + v + "' for " + key + " (expected true or false)");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string section, key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define GNR_INT(sec, name, expr)                                                       \
  Field {                                                                              \
    sec, name, [](const RunConfig& c) { return std::to_string(c.expr); },              \
        [](RunConfig& c, const std::string& v) { c.expr = parse_number<int>(v, name); } \
  }
#define GNR_U64(sec, name, expr)                                                                 \
  Field {                                                                                        \
    sec, name, [](const RunConfig& c) { return std::to_string(c.expr); },                        \
        [](RunConfig& c, const std::string& v) { c.expr = parse_number<std::uint64_t>(v, name); } \
  }
#define GNR_DOUBLE(sec, name, expr)                                                       \
  Field {                                                                                 \
    sec, name, [](const RunConfig& c) { return fmt(c.expr); },                            \
        [](RunConfig& c, const std::string& v) { c.expr = parse_number<double>(v, name); } \
  }
#define GNR_BOOL(sec, name, expr)                                                   \
  Field {                                                                           \
    sec, name, [](const RunConfig& c) { return std::string(c.expr ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& v) { c.expr = parse_bool(v, name); }    \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      GNR_INT("train", "batch_size", train.batch_size),
      GNR_INT("train", "total_iterations", train.total_iterations),
      GNR_DOUBLE("train", "learning_rate", train.learning_rate),
      GNR_DOUBLE("train", "beta1", train.beta1),
      GNR_DOUBLE("train", "beta2", train.beta2),
      GNR_DOUBLE("train", "r1_gamma", train.r1_gamma),
      GNR_U64("train", "seed", train.seed),
      GNR_INT("train", "checkpoint_every", train.checkpoint_every),
      GNR_INT("train", "sample_every", train.sample_every),
      GNR_INT("net", "resolution", train.net.resolution),
      GNR_INT("net", "base_channels", train.net.base_channels),
      GNR_INT("net", "max_channels", train.net.max_channels),
      GNR_INT("net", "depth", train.net.depth),
      GNR_INT("net", "style_dim", train.net.style_dim),
      GNR_INT("net", "disc_features", train.net.disc_features),
      GNR_DOUBLE("loss", "lambda_adv", train.weights.adv),
      GNR_DOUBLE("loss", "lambda_scon", train.weights.scon),
      GNR_DOUBLE("loss", "lambda_cyc", train.weights.cyc),
      GNR_INT("loss", "perceptual_levels", train.perceptual_levels),
      GNR_DOUBLE("loss", "mode_seeking_weight", train.mode_seeking_weight),
      GNR_BOOL("ablation", "no_stddev_branch", train.ablations.no_stddev_branch),
      GNR_BOOL("ablation", "mode_seeking", train.ablations.mode_seeking),
      Field{"data", "root", [](const RunConfig& c) { return c.data_root.string(); },
            [](RunConfig& c, const std::string& v) { c.data_root = v; }},
      GNR_INT("metrics", "m", metrics.m),
      GNR_INT("metrics", "n", metrics.n),
      GNR_INT("metrics", "k", metrics.k),
      GNR_INT("metrics", "fid_samples", metrics.fid_samples),
      Field{"metrics", "extractor_id", [](const RunConfig& c) { return c.metrics.extractor_id; },
            [](RunConfig& c, const std::string& v) { c.metrics.extractor_id = v; }},
      Field{"metrics", "batch_sizes",
            [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.metrics.batch_sizes.size(); ++i)
                out += (i ? ", " : "") + std::to_string(c.metrics.batch_sizes[i]);
              return out;
            },
            [](RunConfig& c, const std::string& v) {
              c.metrics.batch_sizes.clear();
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (item.empty()) throw ConfigError("empty entry in metrics.batch_sizes");
                c.metrics.batch_sizes.push_back(parse_number<int>(item, "batch_sizes"));
              }
            }},
      GNR_U64("metrics", "seed", metrics.seed),
      Field{"output", "dir", [](const RunConfig& c) { return c.output_dir.string(); },
            [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

#undef GNR_INT
#undef GNR_U64
#undef GNR_DOUBLE
#undef GNR_BOOL

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = "config line " + std::to_string(line_no) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields()) known |= f.section == section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* match = nullptr;
    for (const auto& f : fields())
      if (f.section == section && f.key == key) match = &f;
    if (!match) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) throw ConfigError(where + "duplicate key " + section + "." + key);
    try {
      match->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::to_text() const {
  std::string out, section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += f.key + " = " + f.get(*this) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  auto require = [](bool ok, const std::string& field) {
    if (!ok) throw ConfigError("invalid config field: " + field);
  };
  require(metrics.m >= 2, "metrics.m");
  require(metrics.n >= 1, "metrics.n");
  require(metrics.k >= 2, "metrics.k");
  require(metrics.fid_samples >= 2, "metrics.fid_samples");
  for (int b : metrics.batch_sizes) require(b >= 2, "metrics.batch_sizes");
  const auto ids = metrics::extractor_ids();
  require(std::find(ids.begin(), ids.end(), metrics.extractor_id) != ids.end(), "metrics.extractor_id");
  require(!output_dir.empty(), "output.dir");
}

bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_text() == b.to_text(); }

}  // namespace gnr::cli
