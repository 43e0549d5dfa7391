#include "ssmt/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "ssmt/container.hpp"
#include "ssmt/error.hpp"
#include "ssmt/random.hpp"

namespace ssmt::synth {

namespace {

// Stream tags for derive_seed; changing any of these changes the recipe.
enum StreamTag : std::uint64_t {
  kWorldStream = 1,
  kTargetStream = 2,
  kTileStream = 3,
  kTextureStream = 4,
  kSampleStream = 21,
  kSplitStream = 22,
  kLabelStream = 23,
};

// Reflectance of the surface materials per band:
// blue, green, red, nir, swir1, swir2, thermal1, thermal2, pan.
constexpr std::array<float, 9> kVegetation{0.05f, 0.09f, 0.06f, 0.48f, 0.26f, 0.13f, 0.30f, 0.29f, 0.16f};
constexpr std::array<float, 9> kSoil{0.16f, 0.21f, 0.27f, 0.32f, 0.38f, 0.32f, 0.44f, 0.43f, 0.26f};
constexpr std::array<float, 9> kBuilt{0.31f, 0.31f, 0.33f, 0.30f, 0.31f, 0.29f, 0.58f, 0.57f, 0.36f};
constexpr std::array<float, 9> kRoad{0.10f, 0.10f, 0.11f, 0.12f, 0.16f, 0.15f, 0.63f, 0.62f, 0.12f};

std::vector<double> normalize_unit(std::vector<double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo;
  const double span = std::max(*hi - *lo, 1e-12);
  for (auto& x : v) x = (x - a) / span;
  return v;
}

// Zero-mean, unit-variance sum of random plane waves.
std::vector<double> smooth_field(Rng& rng, int n, int waves, double min_wavelength, double max_wavelength) {
  std::vector<double> field(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  for (int w = 0; w < waves; ++w) {
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double wavelength = std::exp(rng.uniform(std::log(min_wavelength), std::log(max_wavelength)));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double kr = 2.0 * std::numbers::pi * std::cos(theta) / wavelength;
    const double kc = 2.0 * std::numbers::pi * std::sin(theta) / wavelength;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) field[static_cast<std::size_t>(r * n + c)] += std::cos(kr * r + kc * c + phase);
    }
  }
  const double mean = std::accumulate(field.begin(), field.end(), 0.0) / static_cast<double>(field.size());
  double var = 0.0;
  for (double x : field) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(field.size())) + 1e-12;
  for (auto& x : field) x = (x - mean) / sd;
  return field;
}

void draw_line(std::vector<std::uint8_t>& mask, int n, GridCoord a, GridCoord b) {
  int r0 = a.row, c0 = a.col;
  const int dr = std::abs(b.row - r0), dc = -std::abs(b.col - c0);
  const int sr = r0 < b.row ? 1 : -1, sc = c0 < b.col ? 1 : -1;
  int err = dr + dc;
  while (true) {
    mask[static_cast<std::size_t>(r0 * n + c0)] = 1;
    if (r0 == b.row && c0 == b.col) break;
    const int e2 = 2 * err;
    if (e2 >= dc) {
      err += dc;
      r0 += sr;
    }
    if (e2 <= dr) {
      err += dr;
      c0 += sc;
    }
  }
}

// Exact 1-D squared distance transform (lower envelope of parabolas).
void edt_1d(std::span<const double> f, std::span<double> out) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + q * q) - (f[static_cast<std::size_t>(p)] + p * p)) / (2.0 * q - 2.0 * p);
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(q)] = (q - p) * (q - p) + f[static_cast<std::size_t>(p)];
  }
}

std::vector<float> distance_transform(const std::vector<std::uint8_t>& mask, int n) {
  constexpr double kFar = 1e18;
  std::vector<double> sq(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) sq[i] = mask[i] ? 0.0 : kFar;
  std::vector<double> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) in[static_cast<std::size_t>(r)] = sq[static_cast<std::size_t>(r * n + c)];
    edt_1d(in, out);
    for (int r = 0; r < n; ++r) sq[static_cast<std::size_t>(r * n + c)] = out[static_cast<std::size_t>(r)];
  }
  for (int r = 0; r < n; ++r) {
    std::copy_n(sq.begin() + r * n, n, in.begin());
    edt_1d(in, out);
    std::copy_n(out.begin(), n, sq.begin() + r * n);
  }
  std::vector<float> dist(mask.size());
  for (std::size_t i = 0; i < sq.size(); ++i) dist[i] = static_cast<float>(std::sqrt(sq[i]));
  return dist;
}

// Smooth lattice value noise in [0, 1), keyed on world coordinates.
double value_noise(std::uint64_t key, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  auto lattice = [&](std::int64_t a, std::int64_t b) {
    return unit_from_bits(derive_seed(key, {static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b)}));
  };
  auto fade = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double tx = fade(x - fx), ty = fade(y - fy);
  const double top = lattice(ix, iy) * (1 - ty) + lattice(ix, iy + 1) * ty;
  const double bottom = lattice(ix + 1, iy) * (1 - ty) + lattice(ix + 1, iy + 1) * ty;
  return top * (1 - tx) + bottom * tx;
}

std::string fmt(double v) { return config::format_real(v); }

double parse_double(const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw Error(Errc::CorruptHeader, "bad number '" + s + "'");
  return v;
}

std::int64_t parse_i64(const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw Error(Errc::CorruptHeader, "bad integer '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const std::vector<std::string>& band_names(int bands) {
  static const std::vector<std::string> all{"blue", "green", "red", "nir", "swir1",
                                            "swir2", "thermal1", "thermal2", "pan"};
  static const std::vector<std::string> rgb{"blue", "green", "red"};
  if (bands == 9) return all;
  if (bands == 3) return rgb;
  throw Error(Errc::BadChannelCount, "bands must be 3 or 9, got " + std::to_string(bands));
}

double grid_distance(GridCoord a, GridCoord b) noexcept {
  return std::hypot(static_cast<double>(a.row - b.row), static_cast<double>(a.col - b.col));
}

// ---------------------------------------------------------------------------
// World

bool World::contains(GridCoord c) const noexcept {
  return c.row >= 0 && c.col >= 0 && c.row < size_ && c.col < size_;
}

std::size_t World::index(GridCoord c) const {
  if (!contains(c)) {
    throw Error(Errc::OutOfGrid, "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ") outside " +
                                     std::to_string(size_) + "x" + std::to_string(size_) + " grid");
  }
  return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(size_) + static_cast<std::size_t>(c.col);
}

float World::bilinear(const std::vector<float>& field, double r, double c) const {
  const double maxc = size_ - 1;
  r = std::clamp(r, 0.0, maxc);
  c = std::clamp(c, 0.0, maxc);
  const int r0 = std::min(static_cast<int>(r), size_ - 2), c0 = std::min(static_cast<int>(c), size_ - 2);
  const double tr = r - r0, tc = c - c0;
  auto at = [&](int rr, int cc) { return static_cast<double>(field[static_cast<std::size_t>(rr * size_ + cc)]); };
  const double v = at(r0, c0) * (1 - tr) * (1 - tc) + at(r0 + 1, c0) * tr * (1 - tc) + at(r0, c0 + 1) * (1 - tr) * tc +
                   at(r0 + 1, c0 + 1) * tr * tc;
  return static_cast<float>(v);
}

float World::sample_development(double r, double c) const { return bilinear(development_, r, c); }
float World::sample_settlement(double r, double c) const { return bilinear(settlement_, r, c); }
float World::sample_vegetation(double r, double c) const { return bilinear(vegetation_, r, c); }
float World::sample_road_distance(double r, double c) const { return bilinear(road_distance_, r, c); }

std::array<double, 4> World::latent(GridCoord c) const {
  const auto i = index(c);
  return {development_[i], settlement_[i], vegetation_[i], std::exp(-road_distance_[i] / 2.0)};
}

World generate_world(int grid_size, std::uint64_t seed, int survey_sites) {
  if (grid_size < 8) throw Error(Errc::InvalidArgument, "grid_size must be >= 8");
  if (survey_sites < 0) throw Error(Errc::InvalidArgument, "survey_sites must be >= 0");
  const int n = grid_size;
  const auto cells = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  Rng rng(derive_seed(seed, {kRecipeVersion, kWorldStream}));

  struct City {
    double r, c, amp, sigma;
  };
  const int n_cities = std::max(3, static_cast<int>(cells / 2048));
  std::vector<City> cities;
  for (int i = 0; i < n_cities; ++i) {
    cities.push_back({rng.uniform(0, n - 1), rng.uniform(0, n - 1), rng.uniform(0.3, 1.0),
                      rng.uniform(1.5, std::max(2.0, n / 20.0))});
  }
  const auto regional = smooth_field(rng, n, 6, n / 4.0, static_cast<double>(n));
  std::vector<double> dev(cells);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double v = 0.12 * regional[static_cast<std::size_t>(r * n + c)];
      for (const auto& city : cities) {
        const double d2 = (r - city.r) * (r - city.r) + (c - city.c) * (c - city.c);
        v += city.amp * std::exp(-d2 / (2 * city.sigma * city.sigma));
      }
      dev[static_cast<std::size_t>(r * n + c)] = v;
    }
  }
  dev = normalize_unit(std::move(dev));

  // Roads: minimum spanning tree over the cities plus a few extra links.
  std::vector<GridCoord> centres;
  for (const auto& city : cities) {
    centres.push_back({static_cast<int>(std::lround(city.r)), static_cast<int>(std::lround(city.c))});
  }
  std::vector<std::uint8_t> road(cells, 0);
  {
    std::vector<bool> in_tree(centres.size(), false);
    std::vector<double> best(centres.size(), std::numeric_limits<double>::infinity());
    std::vector<std::size_t> parent(centres.size(), 0);
    best[0] = 0;
    for (std::size_t iter = 0; iter < centres.size(); ++iter) {
      std::size_t u = centres.size();
      for (std::size_t i = 0; i < centres.size(); ++i) {
        if (!in_tree[i] && (u == centres.size() || best[i] < best[u])) u = i;
      }
      in_tree[u] = true;
      if (iter > 0) draw_line(road, n, centres[parent[u]], centres[u]);
      for (std::size_t i = 0; i < centres.size(); ++i) {
        const double d = grid_distance(centres[u], centres[i]);
        if (!in_tree[i] && d < best[i]) {
          best[i] = d;
          parent[i] = u;
        }
      }
    }
    for (int e = 0; e < n_cities / 4; ++e) {
      const auto a = rng.below(centres.size()), b = rng.below(centres.size());
      draw_line(road, n, centres[a], centres[b]);
    }
  }
  auto dist = distance_transform(road, n);

  const auto zs = smooth_field(rng, n, 8, n / 16.0, n / 4.0);
  const auto zv = smooth_field(rng, n, 8, n / 12.0, n / 3.0);
  std::vector<double> settle(cells);
  for (std::size_t i = 0; i < cells; ++i) settle[i] = 0.6 * dev[i] + 0.12 * zs[i] + 0.25 * std::exp(-dist[i] / 2.0);
  settle = normalize_unit(std::move(settle));

  World w;
  w.size_ = n;
  w.seed_ = seed;
  w.development_.assign(dev.begin(), dev.end());
  w.settlement_.assign(settle.begin(), settle.end());
  w.vegetation_.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    w.vegetation_[i] = static_cast<float>(std::clamp(0.65 + 0.18 * zv[i] - 0.55 * settle[i], 0.0, 1.0));
  }
  w.road_ = std::move(road);
  w.road_distance_ = std::move(dist);

  // Survey sites favour settled cells.
  const auto wanted = std::min<std::size_t>(static_cast<std::size_t>(survey_sites), cells);
  std::set<GridCoord> chosen;
  while (chosen.size() < wanted) {
    const GridCoord c{static_cast<int>(rng.below(static_cast<std::uint64_t>(n))),
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(n)))};
    const double accept = (0.05 + w.settlement(c)) / 1.05;
    if (rng.uniform() < accept && chosen.insert(c).second) w.survey_sites_.push_back(c);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Tiles and targets

MultispectralImage::MultispectralImage(int size, int bands)
    : size_(size), bands_(bands), pixels_(static_cast<std::size_t>(size) * static_cast<std::size_t>(size) *
                                              static_cast<std::size_t>(bands)) {}

double MultispectralImage::band_mean(int b) const {
  double sum = 0;
  for (int r = 0; r < size_; ++r) {
    for (int c = 0; c < size_; ++c) sum += at(r, c, b);
  }
  return sum / (static_cast<double>(size_) * size_);
}

MultispectralImage render_tile(const World& world, GridCoord location, int tile_size, int bands) {
  if (!world.contains(location)) {
    throw Error(Errc::OutOfGrid, "tile location (" + std::to_string(location.row) + "," +
                                     std::to_string(location.col) + ") outside grid");
  }
  if (tile_size < 16) throw Error(Errc::InvalidArgument, "tile_size must be >= 16");
  (void)band_names(bands);

  Rng rng(derive_seed(world.seed(), {kRecipeVersion, kTileStream, static_cast<std::uint64_t>(location.row),
                                     static_cast<std::uint64_t>(location.col)}));
  const double gain = rng.uniform(0.9, 1.1);
  std::array<double, 9> offset{};
  for (auto& o : offset) o = 0.01 * rng.normal();
  const auto built_key = derive_seed(world.seed(), {kRecipeVersion, kTextureStream, 0});
  const auto veg_key = derive_seed(world.seed(), {kRecipeVersion, kTextureStream, 1});

  MultispectralImage img(tile_size, bands);
  for (int i = 0; i < tile_size; ++i) {
    const double r = location.row + (i + 0.5) / tile_size - 0.5;
    for (int j = 0; j < tile_size; ++j) {
      const double c = location.col + (j + 0.5) / tile_size - 0.5;
      const double dev = world.sample_development(r, c);
      const double settle = world.sample_settlement(r, c);
      const double veg_field = world.sample_vegetation(r, c);
      const bool road = world.sample_road_distance(r, c) < 0.12;
      const double built = value_noise(built_key, r * 6.0, c * 6.0) < 0.15 + 0.75 * settle ? 1.0 : 0.0;
      const double veg = std::min(1.0 - built, veg_field * (1.0 - built) * (0.7 + 0.6 * value_noise(veg_key, r * 4.0, c * 4.0)));
      const double soil = std::max(0.0, 1.0 - built - veg);
      for (int b = 0; b < 9; ++b) {
        const auto ub = static_cast<std::size_t>(b);
        double refl = road ? kRoad[ub] : built * kBuilt[ub] + veg * kVegetation[ub] + soil * kSoil[ub];
        if (b == 6 || b == 7) refl += 0.2 * dev;
        refl = refl * gain + offset[ub] + 0.02 * rng.normal();
        if (b < bands) img.at(i, j, b) = static_cast<float>(std::clamp(2.0 * refl - 1.0, -1.0, 1.0));
      }
    }
  }
  return img;
}

std::map<std::string, double> derive_targets(const World& world, GridCoord location) {
  if (!world.contains(location)) throw Error(Errc::OutOfGrid, "target location outside grid");
  Rng rng(derive_seed(world.seed(), {kRecipeVersion, kTargetStream, static_cast<std::uint64_t>(location.row),
                                     static_cast<std::uint64_t>(location.col)}));
  const double dev = world.development(location);
  const double settle = world.settlement(location);
  const double veg = world.vegetation(location);
  const double dist = world.road_distance(location);
  std::array<double, 4> noise{};
  for (auto& z : noise) z = rng.normal();
  return {
      {"nightlights", std::exp(8.0 * dev + 0.3 * noise[0]) - 1.0},
      {"population", std::exp(3.0 * settle + 0.3 * noise[1])},
      {"road_distance", dist},
      {"landcover", veg + 0.05 * noise[2]},
      {"awi", 0.7 * dev + 0.3 * settle + 0.02 * noise[3]},
  };
}

// ---------------------------------------------------------------------------
// Sampling and splits

Sampling parse_sampling(const std::string& text) {
  if (text == "uniform") return Sampling::Uniform;
  if (text == "around-labels") return Sampling::AroundLabels;
  throw Error(Errc::BadConfigValue, "unknown sampling strategy '" + text + "'");
}

std::string to_string(Sampling s) { return s == Sampling::Uniform ? "uniform" : "around-labels"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw Error(Errc::BadConfigValue, "unknown split '" + text + "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<GridCoord> sample_locations(const World& world, int n, Sampling strategy,
                                        std::span<const GridCoord> label_sites, double radius,
                                        std::uint64_t seed) {
  if (n < 1) throw Error(Errc::InvalidArgument, "n must be >= 1");
  Rng rng(derive_seed(seed, {kSampleStream}));
  const auto side = static_cast<std::uint64_t>(world.size());
  std::vector<GridCoord> out;
  out.reserve(static_cast<std::size_t>(n));
  if (strategy == Sampling::Uniform) {
    for (int i = 0; i < n; ++i) out.push_back({static_cast<int>(rng.below(side)), static_cast<int>(rng.below(side))});
    return out;
  }
  if (label_sites.empty()) throw Error(Errc::EmptyLabelSites, "around-labels sampling needs label sites");
  if (!(radius >= 0.0)) throw Error(Errc::InvalidArgument, "radius must be >= 0");
  for (const auto& s : label_sites) {
    if (!world.contains(s)) throw Error(Errc::OutOfGrid, "label site outside grid");
  }
  const int reach = static_cast<int>(std::floor(radius));
  for (int i = 0; i < n; ++i) {
    const auto site = label_sites[rng.below(label_sites.size())];
    GridCoord pick = site;
    for (int attempt = 0; attempt < 64 && reach > 0; ++attempt) {
      const GridCoord cand{site.row + static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(reach) + 1)) - reach,
                           site.col + static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(reach) + 1)) - reach};
      if (world.contains(cand) && grid_distance(cand, site) <= radius) {
        pick = cand;
        break;
      }
    }
    out.push_back(pick);
  }
  return out;
}

namespace {

struct Group {
  GridCoord where;
  std::vector<std::size_t> refs;
};

// Greedy fill: each unit goes to the split with the largest relative deficit.
template <class Units, class SizeOf>
std::vector<int> assign_greedy(const Units& units, SizeOf size_of, std::array<double, 3> targets) {
  std::array<double, 3> have{};
  std::vector<int> out;
  out.reserve(units.size());
  for (const auto& u : units) {
    int best = -1;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < 3; ++s) {
      if (targets[static_cast<std::size_t>(s)] <= 0) continue;
      const double deficit = (targets[static_cast<std::size_t>(s)] - have[static_cast<std::size_t>(s)]) /
                             targets[static_cast<std::size_t>(s)];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    out.push_back(best);
    have[static_cast<std::size_t>(best)] += static_cast<double>(size_of(u));
  }
  return out;
}

}  // namespace

std::array<DatasetManifest, 3> make_splits(std::span<const GridCoord> locations, std::array<double, 3> fractions,
                                           double min_separation, std::uint64_t seed) {
  if (locations.empty()) throw Error(Errc::EmptyInput, "no locations to split");
  const double total_fraction = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total_fraction - 1.0) > 1e-9 || *std::min_element(fractions.begin(), fractions.end()) < 0) {
    throw Error(Errc::InvalidArgument, "split fractions must be >= 0 and sum to 1");
  }
  if (!(min_separation >= 0.0)) throw Error(Errc::InvalidArgument, "min_separation must be >= 0");

  std::map<GridCoord, std::vector<std::size_t>> by_cell;
  for (std::size_t i = 0; i < locations.size(); ++i) by_cell[locations[i]].push_back(i);
  std::vector<Group> groups;
  for (auto& [where, refs] : by_cell) groups.push_back({where, std::move(refs)});

  Rng rng(derive_seed(seed, {kSplitStream}));
  const auto n_total = static_cast<double>(locations.size());
  std::vector<int> group_split(groups.size(), 0);

  auto finish = [&](const std::vector<bool>& keep) {
    std::array<DatasetManifest, 3> out;
    for (int s = 0; s < 3; ++s) {
      out[static_cast<std::size_t>(s)].split = static_cast<Split>(s);
      out[static_cast<std::size_t>(s)].seed = seed;
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (!keep[g]) continue;
      auto& refs = out[static_cast<std::size_t>(group_split[g])].example_refs;
      refs.insert(refs.end(), groups[g].refs.begin(), groups[g].refs.end());
    }
    for (auto& m : out) std::sort(m.example_refs.begin(), m.example_refs.end());
    return out;
  };

  // Distinct cells are at least one cell apart, so small separations need no buffer.
  if (min_separation <= 1.0) {
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    std::vector<const Group*> ordered;
    for (auto g : order) ordered.push_back(&groups[g]);
    const auto assigned = assign_greedy(ordered, [](const Group* g) { return g->refs.size(); },
                                        {fractions[0] * n_total, fractions[1] * n_total, fractions[2] * n_total});
    for (std::size_t k = 0; k < order.size(); ++k) group_split[order[k]] = assigned[k];
    return finish(std::vector<bool>(groups.size(), true));
  }

  // Spatial blocks; train groups inside the separation buffer of a val/test
  // group are dropped, and the train target is inflated until the kept
  // proportions land within tolerance.
  const int block = std::max(8, static_cast<int>(std::ceil(4.0 * min_separation)));
  std::map<GridCoord, std::vector<std::size_t>> blocks;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    blocks[{groups[g].where.row / block, groups[g].where.col / block}].push_back(g);
  }
  std::vector<const std::vector<std::size_t>*> block_order;
  for (const auto& [key, members] : blocks) block_order.push_back(&members);
  rng.shuffle(block_order.begin(), block_order.end());
  auto block_size = [&](const std::vector<std::size_t>* members) {
    std::size_t s = 0;
    for (auto g : *members) s += groups[g].refs.size();
    return s;
  };

  const int reach = static_cast<int>(std::ceil(min_separation));
  double train_target = fractions[0];
  for (int attempt = 0; attempt < 16; ++attempt) {
    const double rest = fractions[1] + fractions[2];
    const double scale = rest > 0 ? (1.0 - train_target) / rest : 0.0;
    const auto assigned = assign_greedy(block_order, block_size,
                                        {train_target * n_total, fractions[1] * scale * n_total,
                                         fractions[2] * scale * n_total});
    for (std::size_t b = 0; b < block_order.size(); ++b) {
      for (auto g : *block_order[b]) group_split[g] = assigned[b];
    }
    std::set<GridCoord> held_out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (group_split[g] != 0) held_out.insert(groups[g].where);
    }
    std::vector<bool> keep(groups.size(), true);
    std::array<double, 3> kept{};
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (group_split[g] == 0) {
        const auto w = groups[g].where;
        for (int dr = -reach; dr <= reach && keep[g]; ++dr) {
          for (int dc = -reach; dc <= reach; ++dc) {
            const GridCoord other{w.row + dr, w.col + dc};
            if (grid_distance(w, other) < min_separation && held_out.count(other)) {
              keep[g] = false;
              break;
            }
          }
        }
      }
      if (keep[g]) kept[static_cast<std::size_t>(group_split[g])] += static_cast<double>(groups[g].refs.size());
    }
    const double kept_total = kept[0] + kept[1] + kept[2];
    bool ok = kept_total > 0;
    for (std::size_t s = 0; s < 3 && ok; ++s) {
      if (fractions[s] > 0 && kept[s] == 0) ok = false;
      if (std::abs(kept[s] / kept_total - fractions[s]) > 0.02) ok = false;
    }
    if (ok) return finish(keep);
    if (kept_total == 0) break;
    train_target = std::clamp(train_target + (fractions[0] - kept[0] / kept_total), 0.0, 0.999);
  }
  throw Error(Errc::InfeasibleSeparation,
              "cannot separate splits by " + fmt(min_separation) + " cells within the 2% size tolerance");
}

// ---------------------------------------------------------------------------
// Labels

std::vector<TaskConfig> task_configs(const config::RunConfig& cfg) {
  std::vector<TaskConfig> out;
  for (const auto& name : cfg.get_strings("tasks.enabled")) {
    if (std::find(config::known_tasks().begin(), config::known_tasks().end(), name) == config::known_tasks().end()) {
      throw Error(Errc::BadConfigValue, "unknown task '" + name + "'");
    }
    TaskConfig t;
    t.name = name;
    t.bins = static_cast<int>(cfg.get_int("task." + name + ".bins"));
    t.strategy = tasks::parse_bin_strategy(cfg.get_string("task." + name + ".strategy"));
    t.importance = cfg.get_real("task." + name + ".importance");
    t.coverage = cfg.get_real("task." + name + ".coverage");
    if (t.coverage < 0 || t.coverage > 1) throw Error(Errc::BadConfigValue, "coverage for " + name + " outside [0,1]");
    out.push_back(t);
  }
  return out;
}

bool Example::labeled(const std::string& task) const {
  auto it = labels.find(task);
  return it != labels.end() && it->second.has_value();
}

LabeledSet assign_labels(const World& world, std::span<const GridCoord> locations,
                         std::span<DatasetManifest> manifests, double labeled_fraction,
                         std::span<const TaskConfig> task_cfgs, const std::string& primary_task,
                         std::uint64_t seed) {
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw Error(Errc::InvalidArgument, "labeled_fraction must be in (0, 1]");
  }
  if (manifests.size() != 3) throw Error(Errc::InvalidArgument, "expected train/val/test manifests");
  if (std::none_of(task_cfgs.begin(), task_cfgs.end(), [&](const auto& t) { return t.name == primary_task; })) {
    throw Error(Errc::InvalidArgument, "primary task '" + primary_task + "' is not enabled");
  }

  LabeledSet set;
  std::size_t n_total = 0;
  for (auto& m : manifests) {
    m.labeled_fraction = labeled_fraction;
    n_total += m.example_refs.size();
  }
  for (int s = 0; s < 3; ++s) {
    for (auto ref : manifests[static_cast<std::size_t>(s)].example_refs) {
      Example e;
      e.id = static_cast<std::int64_t>(set.examples.size());
      e.location = locations[ref];
      e.split = static_cast<Split>(s);
      set.examples.push_back(std::move(e));
    }
  }
  const std::size_t n_train = manifests[0].example_refs.size();

  // Which train examples are labeled, per task.
  std::map<std::string, std::vector<bool>> train_labeled;
  Rng rng(derive_seed(seed, {kLabelStream}));
  {
    const auto wanted = static_cast<std::size_t>(std::floor(static_cast<double>(n_total) * labeled_fraction + 1e-9));
    const auto n_primary = std::min(wanted, n_train);
    const auto& sites = world.survey_sites();
    std::vector<std::pair<double, std::uint64_t>> key(n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : sites) best = std::min(best, grid_distance(s, set.examples[i].location));
      key[i] = {best, rng.bits()};
    }
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return key[a] < key[b]; });
    auto& mask = train_labeled[primary_task];
    mask.assign(n_train, false);
    for (std::size_t k = 0; k < n_primary; ++k) mask[order[k]] = true;
  }
  for (const auto& t : task_cfgs) {
    if (t.name == primary_task) continue;
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(n_train) * t.coverage + 1e-9));
    auto& mask = train_labeled[t.name];
    mask.assign(n_train, false);
    for (std::size_t k = 0; k < count; ++k) mask[order[k]] = true;
  }

  for (std::size_t i = 0; i < set.examples.size(); ++i) {
    auto& e = set.examples[i];
    const auto targets = derive_targets(world, e.location);
    for (const auto& t : task_cfgs) {
      const bool has = e.split != Split::Train || train_labeled[t.name][i];
      e.continuous[t.name] = has ? std::optional<double>(targets.at(t.name)) : std::nullopt;
      e.labels[t.name] = std::nullopt;
      e.weight[t.name] = 0.0;
    }
  }

  std::map<std::string, std::vector<std::int64_t>> counts;
  for (const auto& t : task_cfgs) {
    std::vector<double> values;
    for (std::size_t i = 0; i < n_train; ++i) {
      if (const auto& v = set.examples[i].continuous[t.name]) values.push_back(*v);
    }
    tasks::TaskSpec spec{t.name, tasks::build_bins(values, t.bins, t.strategy), t.importance};
    auto& cls = counts[t.name];
    cls.assign(static_cast<std::size_t>(spec.num_classes()), 0);
    for (auto& e : set.examples) {
      if (const auto& v = e.continuous[t.name]) {
        const int label = tasks::assign_bin(*v, spec.binning);
        e.labels[t.name] = label;
        if (e.split == Split::Train) ++cls[static_cast<std::size_t>(label)];
      }
    }
    set.tasks.push_back(std::move(spec));
  }
  set.weights = tasks::compute_weights(set.tasks, counts);
  for (auto& e : set.examples) {
    for (const auto& t : set.tasks) {
      if (const auto& label = e.labels[t.name]) e.weight[t.name] = set.weights.weight(t.name, *label);
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Dataset

std::size_t Dataset::tile_floats() const noexcept {
  return static_cast<std::size_t>(info.tile_size) * static_cast<std::size_t>(info.tile_size) *
         static_cast<std::size_t>(info.bands);
}

std::span<const float> Dataset::tile(std::size_t i) const {
  return std::span<const float>(tiles).subspan(i * tile_floats(), tile_floats());
}

std::vector<std::size_t> Dataset::split_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].split == s) out.push_back(i);
  }
  return out;
}

const tasks::TaskSpec& Dataset::task(const std::string& name) const {
  for (const auto& t : tasks) {
    if (t.name == name) return t;
  }
  throw Error(Errc::InvalidArgument, "dataset has no task '" + name + "'");
}

Dataset generate_dataset(const config::RunConfig& cfg) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("data.seed"));
  const int tile_size = static_cast<int>(cfg.get_int("data.tile_size"));
  const int bands = static_cast<int>(cfg.get_int("data.bands"));
  (void)band_names(bands);
  const auto fr = cfg.get_reals("data.split_fractions");
  if (fr.size() != 3) throw Error(Errc::BadConfigValue, "data.split_fractions needs three values");

  const auto world = generate_world(static_cast<int>(cfg.get_int("data.grid_size")), seed,
                                    static_cast<int>(cfg.get_int("data.survey_sites")));
  const auto sampling = parse_sampling(cfg.get_string("data.sampling"));
  const auto locations = sample_locations(world, static_cast<int>(cfg.get_int("data.tiles")), sampling,
                                          world.survey_sites(), cfg.get_real("data.radius"), seed);
  auto manifests = make_splits(locations, {fr[0], fr[1], fr[2]}, cfg.get_real("data.min_separation"), seed);
  for (auto& m : manifests) m.sampling = sampling;
  const auto task_cfgs = task_configs(cfg);
  auto labeled = assign_labels(world, locations, manifests, cfg.get_real("data.labeled_fraction"), task_cfgs,
                               cfg.get_string("tasks.primary"), seed);

  Dataset ds;
  ds.info = {static_cast<int>(world.size()),
             tile_size,
             bands,
             sampling,
             cfg.get_real("data.labeled_fraction"),
             seed,
             cfg.get_string("tasks.primary"),
             cfg.get_string("tasks.baseline"),
             cfg.snapshot()};
  ds.tasks = std::move(labeled.tasks);
  ds.examples = std::move(labeled.examples);
  ds.tiles.reserve(ds.examples.size() * ds.tile_floats());
  for (const auto& e : ds.examples) {
    const auto img = render_tile(world, e.location, tile_size, bands);
    ds.tiles.insert(ds.tiles.end(), img.pixels().begin(), img.pixels().end());
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write manifest in '" + dir.string() + "'");
    out << "id,row,col,split,task,label,continuous,weight\n";
    for (const auto& e : dataset.examples) {
      for (const auto& t : dataset.tasks) {
        const auto& label = e.labels.at(t.name);
        const auto& value = e.continuous.at(t.name);
        out << e.id << ',' << e.location.row << ',' << e.location.col << ',' << to_string(e.split) << ',' << t.name
            << ',' << (label ? std::to_string(*label) : "") << ',' << (value ? fmt(*value) : "") << ','
            << fmt(e.weight.at(t.name)) << '\n';
      }
    }
    if (!out) throw Error(Errc::Io, "manifest write failed");
  }

  io::Container c;
  const auto& info = dataset.info;
  c.meta = {{"kind", "dataset"},
            {"recipe_version", std::to_string(kRecipeVersion)},
            {"grid_size", std::to_string(info.grid_size)},
            {"tile_size", std::to_string(info.tile_size)},
            {"bands", std::to_string(info.bands)},
            {"band_names", join(band_names(info.bands))},
            {"sampling", to_string(info.sampling)},
            {"labeled_fraction", fmt(info.labeled_fraction)},
            {"seed", std::to_string(info.seed)},
            {"primary_task", info.primary_task},
            {"baseline_task", info.baseline_task}};
  std::vector<std::string> names;
  for (const auto& t : dataset.tasks) {
    names.push_back(t.name);
    c.meta["task." + t.name + ".importance"] = fmt(t.importance);
    c.tensors.push_back(io::TensorEntry::make<double>("bins/" + t.name, io::DType::F64,
                                                      {static_cast<std::int64_t>(t.binning.edges().size())},
                                                      t.binning.edges()));
  }
  c.meta["tasks"] = join(names);
  const auto n = static_cast<std::int64_t>(dataset.examples.size());
  if (dataset.tiles.size() != dataset.examples.size() * dataset.tile_floats()) {
    throw Error(Errc::ShapeMismatch, "tile buffer does not match example count");
  }
  c.tensors.push_back(io::TensorEntry::make<float>("tiles", io::DType::F32,
                                                   {n, info.tile_size, info.tile_size, info.bands}, dataset.tiles));
  io::write_container(c, dir / "tiles.bin");

  std::ofstream snap(dir / "config.snapshot", std::ios::binary | std::ios::trunc);
  snap << info.config_snapshot;
  if (!snap) throw Error(Errc::Io, "cannot write config snapshot");
}

Dataset read_dataset(const std::filesystem::path& dir, std::optional<int> expected_bands) {
  const auto c = io::read_container(dir / "tiles.bin");
  if (c.meta.count("kind") == 0 || c.meta_at("kind") != "dataset") {
    throw Error(Errc::CorruptHeader, "'" + dir.string() + "' is not a dataset container");
  }
  if (parse_i64(c.meta_at("recipe_version")) != kRecipeVersion) {
    throw Error(Errc::VersionMismatch, "dataset recipe version " + c.meta_at("recipe_version"));
  }
  Dataset ds;
  auto& info = ds.info;
  info.grid_size = static_cast<int>(parse_i64(c.meta_at("grid_size")));
  info.tile_size = static_cast<int>(parse_i64(c.meta_at("tile_size")));
  info.bands = static_cast<int>(parse_i64(c.meta_at("bands")));
  info.sampling = parse_sampling(c.meta_at("sampling"));
  info.labeled_fraction = parse_double(c.meta_at("labeled_fraction"));
  info.seed = static_cast<std::uint64_t>(parse_i64(c.meta_at("seed")));
  info.primary_task = c.meta_at("primary_task");
  info.baseline_task = c.meta_at("baseline_task");
  info.config_snapshot = read_file(dir / "config.snapshot");
  if (expected_bands && *expected_bands != info.bands) {
    throw Error(Errc::ShapeMismatch, "dataset has " + std::to_string(info.bands) + " bands, expected " +
                                         std::to_string(*expected_bands));
  }

  std::vector<std::string> task_names;
  {
    std::istringstream in(c.meta_at("tasks"));
    std::string name;
    while (std::getline(in, name, ',')) task_names.push_back(name);
  }
  for (const auto& name : task_names) {
    const auto& edges = c.at("bins/" + name);
    if (edges.dtype != io::DType::F64) throw Error(Errc::CorruptHeader, "bin edges must be f64");
    const auto span = edges.as<double>();
    ds.tasks.push_back({name, tasks::BinningScheme(std::vector<double>(span.begin(), span.end())),
                        parse_double(c.meta_at("task." + name + ".importance"))});
  }

  const auto& tiles = c.at("tiles");
  if (tiles.dtype != io::DType::F32 || tiles.shape.size() != 4 || tiles.shape[1] != info.tile_size ||
      tiles.shape[2] != info.tile_size || tiles.shape[3] != info.bands) {
    throw Error(Errc::ShapeMismatch, "tile tensor shape does not match the dataset header");
  }
  const auto span = tiles.as<float>();
  ds.tiles.assign(span.begin(), span.end());
  const auto n = static_cast<std::size_t>(tiles.shape[0]);

  std::ifstream in(dir / "manifest.csv", std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read manifest in '" + dir.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != "id,row,col,split,task,label,continuous,weight") throw Error(Errc::CorruptHeader, "bad manifest header");
  ds.examples.resize(n);
  std::vector<std::size_t> seen(n, 0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw Error(Errc::CorruptHeader, "manifest row has " + std::to_string(f.size()) + " fields");
    const auto id = parse_i64(f[0]);
    if (id < 0 || static_cast<std::size_t>(id) >= n) throw Error(Errc::ShapeMismatch, "manifest id out of range");
    auto& e = ds.examples[static_cast<std::size_t>(id)];
    e.id = id;
    e.location = {static_cast<int>(parse_i64(f[1])), static_cast<int>(parse_i64(f[2]))};
    e.split = parse_split(f[3]);
    if (std::find(task_names.begin(), task_names.end(), f[4]) == task_names.end()) {
      throw Error(Errc::CorruptHeader, "manifest names unknown task '" + f[4] + "'");
    }
    e.labels[f[4]] = f[5].empty() ? std::nullopt : std::optional<int>(static_cast<int>(parse_i64(f[5])));
    e.continuous[f[4]] = f[6].empty() ? std::nullopt : std::optional<double>(parse_double(f[6]));
    e.weight[f[4]] = parse_double(f[7]);
    ++seen[static_cast<std::size_t>(id)];
  }
  for (auto s : seen) {
    if (s != task_names.size()) throw Error(Errc::ShapeMismatch, "manifest rows do not cover every tile and task");
  }
  return ds;
}

std::string dataset_hash(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* name : {"manifest.csv", "tiles.bin", "config.snapshot"}) {
    for (unsigned char ch : read_file(dir / name)) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace ssmt::synth
