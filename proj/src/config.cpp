#include "ssmt/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ssmt/error.hpp"

namespace ssmt::config {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw Error(Errc::BadConfigValue, key + ": '" + text + "' is not an integer");
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) {
    throw Error(Errc::BadConfigValue, key + ": '" + text + "' is not a finite real");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error(Errc::BadConfigValue, key + ": '" + text + "' is not a boolean");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

// Parses and re-serializes a value so equal settings always snapshot equally.
std::string canonical(const KeyDef& def, const std::string& text) {
  const std::string t = trim(text);
  switch (def.type) {
    case KeyType::Int: return std::to_string(parse_int(def.name, t));
    case KeyType::Real: return format_real(parse_real(def.name, t));
    case KeyType::Bool: return parse_bool(def.name, t) ? "true" : "false";
    case KeyType::String:
      if (t.find('\n') != std::string::npos) throw Error(Errc::BadConfigValue, def.name + ": newline in value");
      return t;
    case KeyType::IntList: {
      std::vector<std::string> items;
      for (const auto& s : split_list(t)) items.push_back(std::to_string(parse_int(def.name, s)));
      return join(items);
    }
    case KeyType::RealList: {
      std::vector<std::string> items;
      for (const auto& s : split_list(t)) items.push_back(format_real(parse_real(def.name, s)));
      return join(items);
    }
    case KeyType::StringList: return join(split_list(t));
  }
  return t;
}

std::string type_name(KeyType t) {
  switch (t) {
    case KeyType::Int: return "int";
    case KeyType::Real: return "real";
    case KeyType::Bool: return "bool";
    case KeyType::String: return "string";
    case KeyType::IntList: return "int list";
    case KeyType::RealList: return "real list";
    case KeyType::StringList: return "string list";
  }
  return "?";
}

std::vector<KeyDef> build_registry() {
  using enum KeyType;
  std::vector<KeyDef> r = {
      {"data.grid_size", Int, "256", "side of the synthetic world grid, in cells"},
      {"data.tiles", Int, "10000", "number of tiles to sample"},
      {"data.tile_size", Int, "64", "tile side in pixels (4 * 2^k)"},
      {"data.bands", Int, "9", "spectral bands per tile: 9 (all) or 3 (RGB only)"},
      {"data.sampling", String, "uniform", "location sampling: uniform | around-labels"},
      {"data.labeled_fraction", Real, "0.05", "share of all tiles carrying a primary-task training label"},
      {"data.survey_sites", Int, "400", "number of survey sites where primary labels exist"},
      {"data.radius", Real, "6", "around-labels sampling radius, in cells"},
      {"data.min_separation", Real, "1", "minimum distance between train and val/test locations"},
      {"data.split_fractions", RealList, "0.7,0.2,0.1", "train,val,test fractions"},
      {"data.seed", Int, "1", "dataset generation seed"},
      {"tasks.enabled", StringList, "nightlights,population,road_distance,landcover,awi", "tasks with heads"},
      {"tasks.primary", String, "awi", "sparsely labeled regression target"},
      {"tasks.baseline", String, "nightlights", "target used as the correlation baseline"},
      {"gen.noise_dim", Int, "128", "generator noise dimension (standard normal prior)"},
      {"gen.base_channels", Int, "256", "channels of the 4x4 projection; halved each stage"},
      {"disc.arch", String, "resnet", "discriminator body: resnet | resnet50"},
      {"disc.widths", IntList, "32,32,64,64,128,128,256,256", "residual block widths (resnet arch)"},
      {"disc.leaky_slope", Real, "0.2", "negative slope of the body's leaky rectifiers"},
      {"init.scheme", String, "none", "first-layer expansion: none | same-init | random-init"},
      {"init.filters", String, "", "3-channel first-layer filter bank container (empty: use fresh init)"},
      {"train.batch_size", Int, "115", "examples per batch part"},
      {"train.lr0", Real, "0.01", "initial learning rate"},
      {"train.lr_decay", Real, "0.98", "per-epoch multiplicative learning-rate decay"},
      {"train.lr_drop_epoch", Int, "25", "epochs after which the learning rate is divided again"},
      {"train.lr_drop_factor", Real, "5", "extra learning-rate divisor after lr_drop_epoch"},
      {"train.weight_decay", Real, "0.00004", "decoupled weight decay on discriminator parameters"},
      {"train.critic_steps", Int, "5", "discriminator updates per generator update"},
      {"train.alpha", Real, "1", "scale of the WGAN loss in both totals"},
      {"train.lambda", Real, "10", "gradient penalty coefficient"},
      {"train.epochs", Int, "30", "training epochs"},
      {"train.steps_per_epoch", Int, "0", "discriminator updates per epoch (0: one pass over train tiles)"},
      {"train.seed", Int, "1", "training seed"},
      {"train.adam_beta1", Real, "0", "Adam first-moment decay"},
      {"train.adam_beta2", Real, "0.9", "Adam second-moment decay"},
      {"train.adam_eps", Real, "1e-08", "Adam epsilon"},
      {"train.mode", String, "semisupervised", "semisupervised | supervised (labeled primary subset only)"},
      {"train.use_unlabeled", Bool, "true", "include the unlabeled-real term of each task loss"},
      {"train.use_fake", Bool, "true", "include generated images (fake terms and generator updates)"},
      {"train.val_examples", Int, "512", "validation examples scored per epoch"},
      {"train.keep_checkpoints", Int, "0", "per-epoch checkpoints to keep (0: all)"},
      {"train.threads", Int, "1", "intra-op threads (1 keeps runs bit-reproducible)"},
      {"eval.outer_folds", Int, "5", "outer cross-validation folds"},
      {"eval.inner_folds", Int, "4", "inner folds for penalty selection"},
      {"eval.penalty_grid", RealList, "0.0001,0.001,0.01,0.1,1,10,100,1000,10000", "ridge penalties"},
      {"eval.splits", StringList, "val,test", "splits whose primary-labeled tiles are evaluated"},
      {"eval.standardize", Bool, "true", "standardize features inside each ridge fit"},
      {"eval.seed", Int, "1", "fold assignment seed"},
  };
  const std::map<std::string, std::array<std::string, 3>> task_defaults = {
      // bins, strategy, coverage
      {"nightlights", {"3", "equal-frequency", "1"}},
      {"population", {"5", "equal-frequency", "1"}},
      {"road_distance", {"5", "equal-frequency", "1"}},
      {"landcover", {"4", "equal-frequency", "1"}},
      {"awi", {"30", "equal-frequency", "1"}},
  };
  for (const auto& task : known_tasks()) {
    const auto& d = task_defaults.at(task);
    r.push_back({"task." + task + ".bins", Int, d[0], "real classes for " + task});
    r.push_back({"task." + task + ".strategy", String, d[1], "binning strategy for " + task});
    r.push_back({"task." + task + ".importance", Real, "1", "importance weight of " + task});
    r.push_back({"task." + task + ".coverage", Real, d[2],
                 "share of train tiles labeled for " + task + " (ignored for the primary task)"});
  }
  std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return r;
}

}  // namespace

std::string format_real(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), p);
}

const std::vector<std::string>& known_tasks() {
  static const std::vector<std::string> names{"nightlights", "population", "road_distance", "landcover", "awi"};
  return names;
}

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> r = build_registry();
  return r;
}

const KeyDef* find_key(const std::string& name) {
  const auto& r = registry();
  auto it = std::lower_bound(r.begin(), r.end(), name, [](const KeyDef& d, const std::string& n) { return d.name < n; });
  return (it != r.end() && it->name == name) ? &*it : nullptr;
}

RunConfig::RunConfig() {
  for (const auto& def : registry()) values_[def.name] = canonical(def, def.default_value);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* def = find_key(key);
  if (!def) throw Error(Errc::UnknownConfigKey, "unknown config key '" + key + "'");
  values_[key] = canonical(*def, value);
}

void RunConfig::merge_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::BadConfigValue, "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str());
}

const std::string& RunConfig::raw(const std::string& key, KeyType expected) const {
  const auto* def = find_key(key);
  if (!def) throw Error(Errc::UnknownConfigKey, "unknown config key '" + key + "'");
  if (def->type != expected) throw Error(Errc::InvalidArgument, key + " is a " + type_name(def->type));
  return values_.at(key);
}

std::int64_t RunConfig::get_int(const std::string& key) const { return parse_int(key, raw(key, KeyType::Int)); }
double RunConfig::get_real(const std::string& key) const { return parse_real(key, raw(key, KeyType::Real)); }
bool RunConfig::get_bool(const std::string& key) const { return parse_bool(key, raw(key, KeyType::Bool)); }
const std::string& RunConfig::get_string(const std::string& key) const { return raw(key, KeyType::String); }

std::vector<std::int64_t> RunConfig::get_ints(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& s : split_list(raw(key, KeyType::IntList))) out.push_back(parse_int(key, s));
  return out;
}

std::vector<double> RunConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split_list(raw(key, KeyType::RealList))) out.push_back(parse_real(key, s));
  return out;
}

std::vector<std::string> RunConfig::get_strings(const std::string& key) const {
  return split_list(raw(key, KeyType::StringList));
}

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : snapshot()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::hash_hex() const {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(hash()));
  return buf.data();
}

RunConfig RunConfig::from_snapshot(const std::string& text) {
  RunConfig c;
  c.merge_text(text);
  return c;
}

std::string help_text() {
  std::string out = "Config keys (type, default):\n";
  const RunConfig defaults;
  for (const auto& d : registry()) {
    const auto& v = defaults.values().at(d.name);
    out += "  " + d.name + " (" + type_name(d.type) + ", default: " + (v.empty() ? "\"\"" : v) + ")\n      " +
           d.help + "\n";
  }
  return out;
}

}  // namespace ssmt::config
